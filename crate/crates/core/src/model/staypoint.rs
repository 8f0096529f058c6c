use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::activity::ActivityType;
use super::geo::LatLon;
use super::time::Instant;
use crate::error::{Error, Result};

/// Opaque agent identifier; cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub Arc<str>);

impl AgentId {
    pub fn new(id: &str) -> Self {
        AgentId(Arc::from(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId::new(s)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An inferred activity together with its confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub activity: ActivityType,
    pub confidence: f64,
}

/// One stationary episode of an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Staypoint {
    pub agent: AgentId,
    pub location: LatLon,
    pub t_start: Instant,
    pub t_end: Instant,
    pub inference: Option<Inference>,
}

impl Staypoint {
    pub fn new(agent: AgentId, location: LatLon, t_start: Instant, t_end: Instant) -> Result<Self> {
        if t_end <= t_start {
            return Err(Error::InvalidStaypoint(format!(
                "t_end {t_end} must exceed t_start {t_start}"
            )));
        }
        if !location.is_valid() {
            return Err(Error::InvalidStaypoint(format!(
                "coordinates out of range: {}, {}",
                location.lat, location.lon
            )));
        }
        Ok(Staypoint {
            agent,
            location,
            t_start,
            t_end,
            inference: None,
        })
    }

    /// Stay duration in seconds.
    pub fn duration(&self) -> i64 {
        self.t_end - self.t_start
    }

    pub fn label(&self) -> Option<ActivityType> {
        self.inference.map(|i| i.activity)
    }

    pub fn confidence(&self) -> Option<f64> {
        self.inference.map(|i| i.confidence)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_intervals_and_coords() {
        let a = AgentId::new("a");
        assert!(Staypoint::new(a.clone(), LatLon::new(0.0, 0.0), 10, 10).is_err());
        assert!(Staypoint::new(a.clone(), LatLon::new(95.0, 0.0), 0, 10).is_err());
        assert!(Staypoint::new(a.clone(), LatLon::new(0.0, -181.0), 0, 10).is_err());
        let s = Staypoint::new(a, LatLon::new(1.0, 2.0), 100, 1300).unwrap();
        assert_eq!(s.duration(), 1200);
        assert!(s.label().is_none() && s.confidence().is_none());
    }
}

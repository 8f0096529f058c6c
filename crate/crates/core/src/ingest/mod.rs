//! Input formats (pings, POIs, reference statistics) and the synthetic corpus generator.

mod enrichment;
mod pings;
mod pois;
mod reference_io;
mod staypoint_io;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::model::{AgentId, Instant, LatLon, ProbVector};

pub use enrichment::EnrichmentTable;
pub use pings::{load_pings, write_pings, AgentPingReader, LoadReport, PingCorpus, PingWriter};
pub use pois::{load_pois, write_pois, PoiLoad};
pub use reference_io::{format_reference, load_reference, parse_reference, write_reference};
pub use staypoint_io::{load_staypoints, StaypointReader, StaypointWriter, LABELED_HEADER, STAYPOINT_HEADER};

/// A single GPS fix of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawPing {
    pub timestamp: Instant,
    pub location: LatLon,
    pub accuracy_m: Option<f64>,
}

/// Time-sorted pings of a single agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPings {
    pub agent: AgentId,
    pub pings: Vec<RawPing>,
}

/// A point of interest with its activity-type distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Poi {
    pub poi_id: String,
    pub location: LatLon,
    pub category: String,
    pub activity_dist: ProbVector,
    pub name: Option<String>,
}

//! Staypoint extraction from ping streams and per-agent clustering of staypoints into
//! candidate recurrent locations.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ingest::RawPing;
use crate::model::{
    haversine, local_day, meters_to_chord2, AgentId, LatLon, Staypoint, UnitVec,
};
use crate::spatial::{dbscan, singletons_for_noise};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    /// Maximum distance of a ping from the running centroid, metres.
    pub d_max_m: f64,
    /// Minimum stay duration, seconds.
    pub t_min_s: i64,
    /// A gap between consecutive pings longer than this ends the episode, seconds.
    pub gap_max_s: i64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            d_max_m: 200.0,
            t_min_s: 300,
            gap_max_s: 3600,
        }
    }
}

/// Greedy distance/duration segmentation with a running-centroid membership test.
///
/// An episode grows while each next ping lies within `d_max_m` of the mean of the pings
/// collected so far and arrives within `gap_max_s` of its predecessor. Episodes lasting at
/// least `t_min_s` become staypoints located at the mean of their pings.
pub fn extract_staypoints(agent: &AgentId, pings: &[RawPing], cfg: &ExtractionConfig) -> Vec<Staypoint> {
    let mut out = Vec::new();
    let n = pings.len();
    let mut i = 0;
    while i < n {
        let (mut sum_lat, mut sum_lon) = (pings[i].location.lat, pings[i].location.lon);
        let mut count = 1.0;
        let mut j = i + 1;
        while j < n {
            if pings[j].timestamp - pings[j - 1].timestamp > cfg.gap_max_s {
                break;
            }
            let centroid = LatLon::new(sum_lat / count, sum_lon / count);
            if haversine(centroid, pings[j].location) > cfg.d_max_m {
                break;
            }
            sum_lat += pings[j].location.lat;
            sum_lon += pings[j].location.lon;
            count += 1.0;
            j += 1;
        }
        let (t_start, t_end) = (pings[i].timestamp, pings[j - 1].timestamp);
        if t_end - t_start >= cfg.t_min_s && t_end > t_start {
            out.push(Staypoint {
                agent: agent.clone(),
                location: LatLon::new(sum_lat / count, sum_lon / count),
                t_start,
                t_end,
                inference: None,
            });
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

/// A cluster of one agent's staypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLocation {
    pub location_id: usize,
    /// Duration-weighted mean of member locations.
    pub centroid: LatLon,
    /// Indices into the agent's staypoint slice, ascending.
    pub member_staypoints: Vec<usize>,
    /// Local calendar days (days since epoch) on which a member stay started.
    pub visit_days: BTreeSet<i64>,
    /// Largest member distance to the centroid, metres.
    pub radius_m: f64,
}

impl CandidateLocation {
    /// Visited on at least two distinct days, so eligible for mandatory bidding.
    pub fn is_candidate(&self) -> bool {
        self.visit_days.len() >= 2
    }
}

/// Density-based clustering of one agent's staypoints (haversine metric). Every staypoint
/// lands in exactly one cluster; sparse points become singletons.
pub fn cluster_agent_staypoints(
    staypoints: &[Staypoint],
    eps_agent_m: f64,
    min_pts: usize,
    tz_offset_min: i32,
) -> Vec<CandidateLocation> {
    let units: Vec<UnitVec> = staypoints.iter().map(|s| s.location.to_unit()).collect();
    cluster_with_units(staypoints, &units, eps_agent_m, min_pts, tz_offset_min)
}

pub(crate) fn cluster_with_units(
    staypoints: &[Staypoint],
    units: &[UnitVec],
    eps_agent_m: f64,
    min_pts: usize,
    tz_offset_min: i32,
) -> Vec<CandidateLocation> {
    let n = staypoints.len();
    let limit = meters_to_chord2(eps_agent_m);
    let mut labels = dbscan(n, min_pts, |i, out| {
        out.clear();
        out.extend((0..n).filter(|&j| units[i].chord2(&units[j]) <= limit));
    });
    let k = singletons_for_noise(&mut labels);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, l) in labels.iter().enumerate() {
        members[l.expect("noise replaced")].push(i);
    }
    members
        .into_iter()
        .enumerate()
        .map(|(location_id, member_staypoints)| {
            let (mut w, mut lat, mut lon) = (0.0, 0.0, 0.0);
            for &m in &member_staypoints {
                let d = staypoints[m].duration().max(1) as f64;
                w += d;
                lat += d * staypoints[m].location.lat;
                lon += d * staypoints[m].location.lon;
            }
            let centroid = LatLon::new(lat / w, lon / w);
            let radius_m = member_staypoints
                .iter()
                .map(|&m| haversine(centroid, staypoints[m].location))
                .fold(0.0, f64::max);
            let visit_days = member_staypoints
                .iter()
                .map(|&m| local_day(staypoints[m].t_start, tz_offset_min))
                .collect();
            CandidateLocation {
                location_id,
                centroid,
                member_staypoints,
                visit_days,
                radius_m,
            }
        })
        .collect()
}

/// Move every clustered staypoint onto its cluster centroid.
pub fn snap_to_clusters(staypoints: &mut [Staypoint], clusters: &[CandidateLocation]) {
    for c in clusters {
        for &m in &c.member_staypoints {
            staypoints[m].location = c.centroid;
        }
    }
}

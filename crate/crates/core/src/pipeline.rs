//! End-to-end labeling: staypoint extraction, per-agent clustering, anchor bidding, and
//! non-mandatory scoring, plus the monotone confidence transforms used in calibration.
//!
//! Work is split so that calibration can reuse everything that does not depend on the
//! parameters being tuned: [`PreparedAgent`] holds extracted staypoints and their
//! time-of-day integrals, and an [`Engine`] binds one parameter set to a zone index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AgentPings, Poi};
use crate::mandatory::{label_mandatory, run_bidding, BidTable, MandatoryAssignment, MandatoryParams, StayEvidence};
use crate::metrics::{EvalReport, ReportAccumulator};
use crate::model::{
    bin_of, slot_of, ActivityType, AgentId, Histogram96, Inference, LatLon, ReferenceStats,
    Staypoint, UnitVec, NUM_NON_MANDATORY,
};
use crate::nonmandatory::{corrected_duration_priors, score, ScoringParams};
use crate::staypoints::{cluster_with_units, extract_staypoints, CandidateLocation, ExtractionConfig};
use crate::zones::{build_zones, SpatialEvidence, ZoneIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZoneParams {
    pub eps_poi_m: f64,
    pub min_pts: usize,
    /// Kernel bandwidth, metres.
    pub sigma_m: f64,
    /// Search radius, metres.
    pub radius_m: f64,
}

impl Default for ZoneParams {
    fn default() -> Self {
        ZoneParams {
            eps_poi_m: 100.0,
            min_pts: 3,
            sigma_m: 150.0,
            radius_m: 500.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterParams {
    pub eps_agent_m: f64,
    pub min_pts: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            eps_agent_m: 100.0,
            min_pts: 1,
        }
    }
}

/// Strictly monotone confidence transforms; both leave every label unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfidenceParams {
    /// Scale applied to the mandatory bid margin before clamping to `[0, 1]`.
    pub gamma_m: f64,
    /// Exponent applied to non-mandatory scores before normalizing.
    pub gamma_n: f64,
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        ConfidenceParams {
            gamma_m: 1.0,
            gamma_n: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineParams {
    pub extraction: ExtractionConfig,
    pub zones: ZoneParams,
    pub clustering: ClusterParams,
    pub mandatory: MandatoryParams,
    pub scoring: ScoringParams,
    pub confidence: ConfidenceParams,
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        let e = &self.extraction;
        if !(e.d_max_m > 0.0) || e.t_min_s < 0 || e.gap_max_s <= 0 {
            return Err(Error::Config("extraction thresholds must be positive".into()));
        }
        let z = &self.zones;
        if !(z.eps_poi_m > 0.0 && z.sigma_m > 0.0 && z.radius_m > 0.0) || z.min_pts == 0 {
            return Err(Error::Config("zone parameters must be positive".into()));
        }
        if !(self.clustering.eps_agent_m > 0.0) || self.clustering.min_pts == 0 {
            return Err(Error::Config("clustering parameters must be positive".into()));
        }
        let m = &self.mandatory;
        if m.tau.iter().any(|t| !(*t > 0.0)) || !(m.theta_exist_factor >= 0.0) {
            return Err(Error::Config("daily caps must be positive and theta_exist non-negative".into()));
        }
        let c = &self.confidence;
        if !(c.gamma_m > 0.0 && c.gamma_n > 0.0) {
            return Err(Error::Config("confidence transforms need positive gamma".into()));
        }
        self.scoring.validate()
    }
}

/// What a label was derived from, kept so confidences can be re-derived without
/// re-running inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evidence {
    /// Normalized bid margin of the anchor the staypoint belongs to.
    Mandatory { margin: f64 },
    /// Posterior over the non-mandatory purposes.
    NonMandatory { posterior: [f64; NUM_NON_MANDATORY] },
}

impl Evidence {
    pub fn confidence(&self, c: &ConfidenceParams) -> f64 {
        match self {
            Evidence::Mandatory { margin } => (c.gamma_m * margin).clamp(0.0, 1.0),
            Evidence::NonMandatory { posterior } => tempered_max(posterior, c.gamma_n),
        }
    }
}

/// `max_k p_k^γ / Σ_k p_k^γ`, evaluated relative to the maximum for stability.
fn tempered_max(p: &[f64; NUM_NON_MANDATORY], gamma: f64) -> f64 {
    let max = p.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return 1.0 / NUM_NON_MANDATORY as f64;
    }
    if gamma == 1.0 {
        return max;
    }
    let z: f64 = p.iter().map(|&x| (x / max).powf(gamma)).sum();
    1.0 / z
}

/// Staypoints of one agent with their parameter-independent features.
#[derive(Debug, Clone)]
pub struct PreparedAgent {
    pub agent: AgentId,
    pub staypoints: Vec<Staypoint>,
    units: Vec<UnitVec>,
    evidence: Vec<StayEvidence>,
}

impl PreparedAgent {
    pub fn from_pings(pings: &AgentPings, extraction: &ExtractionConfig, reference: &ReferenceStats) -> Self {
        let staypoints = extract_staypoints(&pings.agent, &pings.pings, extraction);
        Self::from_staypoints(pings.agent.clone(), staypoints, reference)
    }

    pub fn from_staypoints(agent: AgentId, staypoints: Vec<Staypoint>, reference: &ReferenceStats) -> Self {
        PreparedAgent {
            agent,
            units: staypoints.iter().map(|s| s.location.to_unit()).collect(),
            evidence: staypoints.iter().map(|s| StayEvidence::of(s, reference)).collect(),
            staypoints,
        }
    }

    pub fn len(&self) -> usize {
        self.staypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.staypoints.is_empty()
    }
}

/// Clusters and bids of one agent.
#[derive(Debug, Clone)]
pub struct AgentBids {
    pub clusters: Vec<CandidateLocation>,
    pub table: BidTable,
    /// Spatial evidence at each cluster centroid, indexed by location id.
    pub spatial: Vec<SpatialEvidence>,
}

/// Labeled staypoints of one agent.
#[derive(Debug, Clone)]
pub struct AgentResult {
    pub agent: AgentId,
    /// Snapped to cluster centroids and labeled.
    pub staypoints: Vec<Staypoint>,
    pub evidence: Vec<Evidence>,
    /// Spatial query at the staypoint's location fell back to uniform.
    pub flagged: Vec<bool>,
    pub assignment: MandatoryAssignment,
    /// Anchor bidding found no Home evidence; everything was scored as non-mandatory.
    pub no_home_evidence: bool,
    pub home_location: Option<LatLon>,
    pub second_anchor: Option<(ActivityType, LatLon)>,
}

impl AgentResult {
    pub fn accumulate(&self, acc: &mut ReportAccumulator, tz_offset_min: i32) {
        for (s, &flagged) in self.staypoints.iter().zip(&self.flagged) {
            let inf = s.inference.expect("pipeline labels every staypoint");
            acc.add(inf.activity, inf.confidence, s.t_start, s.duration(), tz_offset_min, flagged);
        }
    }
}

/// One parameter set bound to a zone index and the prepared priors.
#[derive(Debug, Clone)]
pub struct Engine {
    params: PipelineParams,
    reference: ReferenceStats,
    index: ZoneIndex,
    start: Vec<Histogram96>,
    duration: Vec<Histogram96>,
}

impl Engine {
    pub fn new(reference: &ReferenceStats, pois: &[Poi], params: &PipelineParams) -> Result<Self> {
        let z = &params.zones;
        let zones = build_zones(pois, z.eps_poi_m, z.min_pts);
        Self::with_index(reference, ZoneIndex::new(zones, z.sigma_m, z.radius_m)?, params)
    }

    pub fn with_index(reference: &ReferenceStats, index: ZoneIndex, params: &PipelineParams) -> Result<Self> {
        params.validate()?;
        Ok(Engine {
            start: crate::model::ActivityType::ALL
                .iter()
                .map(|&a| *reference.start_prior(a))
                .collect(),
            duration: corrected_duration_priors(reference, &params.scoring.correction),
            params: params.clone(),
            reference: reference.clone(),
            index,
        })
    }

    /// Same zones, different parameters; zone parameters in `params` are ignored.
    pub fn with_params(&self, params: &PipelineParams) -> Result<Self> {
        let mut p = params.clone();
        p.zones = self.params.zones;
        Self::with_index(&self.reference, self.index.clone(), &p)
    }

    pub fn params(&self) -> &PipelineParams {
        &self.params
    }

    pub fn index(&self) -> &ZoneIndex {
        &self.index
    }

    pub fn reference(&self) -> &ReferenceStats {
        &self.reference
    }

    pub fn bid(&self, agent: &PreparedAgent) -> AgentBids {
        let c = &self.params.clustering;
        let clusters = cluster_with_units(
            &agent.staypoints,
            &agent.units,
            c.eps_agent_m,
            c.min_pts,
            self.reference.tz_offset_min(),
        );
        let spatial: Vec<SpatialEvidence> = clusters
            .iter()
            .map(|c| self.index.spatial_likelihood(&c.centroid))
            .collect();
        let table = BidTable::build(
            &clusters,
            &agent.evidence,
            |c| spatial[c.location_id].dist,
            self.params.mandatory.tau,
        );
        AgentBids {
            clusters,
            table,
            spatial,
        }
    }

    pub fn label(&self, agent: &PreparedAgent, bids: &AgentBids, theta_exist: f64) -> AgentResult {
        let tz = self.reference.tz_offset_min();
        let mut staypoints = agent.staypoints.clone();
        let mut location_of = vec![0usize; staypoints.len()];
        for c in &bids.clusters {
            for &m in &c.member_staypoints {
                staypoints[m].location = c.centroid;
                location_of[m] = c.location_id;
            }
        }
        let (assignment, no_home_evidence) =
            match run_bidding(&bids.table, theta_exist, self.params.mandatory.per_activity_bidding) {
                Ok(a) => (a, false),
                Err(_) => (MandatoryAssignment::default(), true),
            };
        label_mandatory(&mut staypoints, &bids.clusters, &assignment);

        let conf = &self.params.confidence;
        let mut evidence = Vec::with_capacity(staypoints.len());
        let mut flagged = Vec::with_capacity(staypoints.len());
        for (i, s) in staypoints.iter_mut().enumerate() {
            let spatial = &bids.spatial[location_of[i]];
            flagged.push(spatial.flagged);
            let ev = match s.inference {
                Some(inf) => Evidence::Mandatory { margin: inf.confidence },
                None => {
                    let out = score(
                        &spatial.dist,
                        slot_of(s.t_start, tz).index(),
                        bin_of(s.duration()).index(),
                        &self.start,
                        &self.duration,
                        &self.params.scoring,
                    );
                    s.inference = Some(Inference {
                        activity: out.label,
                        confidence: out.confidence,
                    });
                    Evidence::NonMandatory { posterior: out.posterior }
                }
            };
            if let Some(inf) = s.inference.as_mut() {
                inf.confidence = ev.confidence(conf);
            }
            evidence.push(ev);
        }
        let centroid = |id: usize| bids.clusters[id].centroid;
        AgentResult {
            agent: agent.agent.clone(),
            staypoints,
            evidence,
            flagged,
            home_location: assignment.home.map(|h| centroid(h.location_id)),
            second_anchor: assignment.mandatory2.map(|m| (m.activity, centroid(m.location_id))),
            assignment,
            no_home_evidence,
        }
    }
}

/// Existence threshold: `factor` times the median of the positive winning Home bids.
pub fn theta_exist(top_home_bids: impl IntoIterator<Item = f64>, factor: f64) -> f64 {
    let mut v: Vec<f64> = top_home_bids.into_iter().filter(|b| *b > 0.0).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    factor * median
}

#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub agents: Vec<AgentResult>,
    pub theta_exist: f64,
}

impl LabeledCorpus {
    pub fn staypoint_count(&self) -> usize {
        self.agents.iter().map(|a| a.staypoints.len()).sum()
    }

    pub fn staypoints(&self) -> impl Iterator<Item = &Staypoint> {
        self.agents.iter().flat_map(|a| &a.staypoints)
    }

    pub fn accumulate(&self, tz_offset_min: i32) -> ReportAccumulator {
        let mut acc = ReportAccumulator::new();
        for a in &self.agents {
            a.accumulate(&mut acc, tz_offset_min);
        }
        acc
    }

    pub fn report(&self, reference: &ReferenceStats) -> EvalReport {
        self.accumulate(reference.tz_offset_min()).report(reference)
    }

    /// Report as if confidences had been recomputed with `c`, without modifying the corpus.
    pub fn report_with_confidence(&self, reference: &ReferenceStats, c: &ConfidenceParams) -> EvalReport {
        let tz = reference.tz_offset_min();
        let mut acc = ReportAccumulator::new();
        for a in &self.agents {
            for ((s, ev), &flagged) in a.staypoints.iter().zip(&a.evidence).zip(&a.flagged) {
                let label = s.label().expect("pipeline labels every staypoint");
                acc.add(label, ev.confidence(c), s.t_start, s.duration(), tz, flagged);
            }
        }
        acc.report(reference)
    }

    /// Recompute every confidence from stored evidence; labels are untouched.
    pub fn set_confidence(&mut self, c: &ConfidenceParams) {
        for a in &mut self.agents {
            for (s, ev) in a.staypoints.iter_mut().zip(&a.evidence) {
                if let Some(inf) = s.inference.as_mut() {
                    inf.confidence = ev.confidence(c);
                }
            }
        }
    }

    /// Label counts per activity, in activity-code order.
    pub fn label_histogram(&self) -> [usize; 15] {
        let mut h = [0; 15];
        for s in self.staypoints() {
            if let Some(a) = s.label() {
                h[a.index()] += 1;
            }
        }
        h
    }
}

/// Bids of every agent plus the existence threshold they imply.
pub fn bid_all(engine: &Engine, agents: &[PreparedAgent]) -> (Vec<AgentBids>, f64) {
    let bids: Vec<AgentBids> = agents.par_iter().map(|a| engine.bid(a)).collect();
    let theta = theta_exist(
        bids.iter().filter_map(|b| b.table.top_home_bid()),
        engine.params().mandatory.theta_exist_factor,
    );
    (bids, theta)
}

/// Label with bids computed earlier; `bids` must come from an engine with the same
/// zone, clustering and anchor parameters.
pub fn label_with_bids(engine: &Engine, agents: &[PreparedAgent], bids: &[AgentBids], theta: f64) -> LabeledCorpus {
    let results = agents
        .par_iter()
        .zip(bids.par_iter())
        .map(|(a, b)| engine.label(a, b, theta))
        .collect();
    LabeledCorpus {
        agents: results,
        theta_exist: theta,
    }
}

/// Label prepared agents with one engine: bid for everyone, derive the existence threshold
/// from the population's Home bids, then label.
pub fn label_prepared(engine: &Engine, agents: &[PreparedAgent]) -> LabeledCorpus {
    let (bids, theta) = bid_all(engine, agents);
    label_with_bids(engine, agents, &bids, theta)
}

/// Extract and prepare every agent of a fallible ping source, stopping at the first error.
pub fn try_prepare_all<I>(source: I, extraction: &ExtractionConfig, reference: &ReferenceStats) -> Result<Vec<PreparedAgent>>
where
    I: IntoIterator<Item = Result<AgentPings>>,
{
    source
        .into_iter()
        .map(|p| p.map(|p| PreparedAgent::from_pings(&p, extraction, reference)))
        .collect()
}

/// Extract and prepare every agent of a ping source.
pub fn prepare_all<I>(source: I, extraction: &ExtractionConfig, reference: &ReferenceStats) -> Vec<PreparedAgent>
where
    I: IntoIterator<Item = AgentPings>,
{
    source
        .into_iter()
        .map(|p| PreparedAgent::from_pings(&p, extraction, reference))
        .collect()
}

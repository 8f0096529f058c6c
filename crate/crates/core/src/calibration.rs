//! Three-phase calibration. Each phase runs NSGA-II over its own gene subset with the
//! genes of earlier phases frozen, then fixes a single knee-point configuration.
//!
//! Phase 1 aligns activity frequencies and start times through the spatial and anchor
//! genes, phase 2 aligns start times and durations through the scoring genes, and phase 3
//! raises high-confidence ratios through the confidence transforms with labels frozen.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Poi;
use crate::metrics::EvalReport;
use crate::model::ReferenceStats;
use crate::nsga::{evolve, knee_among, GeneBounds, NsgaConfig};
use crate::pipeline::{bid_all, label_prepared, label_with_bids, Engine, PipelineParams, PreparedAgent};

/// A tunable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gene {
    SigmaM,
    RadiusM,
    EpsPoiM,
    EpsAgentM,
    TauHome,
    TauWork,
    TauSchool,
    ThetaExist,
    Epsilon,
    AlphaShort,
    AlphaMedium,
    AlphaLong,
    Delta,
    CutoffBin,
    GammaM,
    GammaN,
}

impl Gene {
    pub fn get(self, p: &PipelineParams) -> f64 {
        use Gene::*;
        match self {
            SigmaM => p.zones.sigma_m,
            RadiusM => p.zones.radius_m,
            EpsPoiM => p.zones.eps_poi_m,
            EpsAgentM => p.clustering.eps_agent_m,
            TauHome => p.mandatory.tau[0],
            TauWork => p.mandatory.tau[1],
            TauSchool => p.mandatory.tau[2],
            ThetaExist => p.mandatory.theta_exist_factor,
            Epsilon => p.scoring.epsilon,
            AlphaShort => p.scoring.alpha[0],
            AlphaMedium => p.scoring.alpha[1],
            AlphaLong => p.scoring.alpha[2],
            Delta => p.scoring.correction.delta,
            CutoffBin => p.scoring.correction.cutoff_bin as f64,
            GammaM => p.confidence.gamma_m,
            GammaN => p.confidence.gamma_n,
        }
    }

    pub fn set(self, p: &mut PipelineParams, v: f64) {
        use Gene::*;
        match self {
            SigmaM => p.zones.sigma_m = v,
            RadiusM => p.zones.radius_m = v,
            EpsPoiM => p.zones.eps_poi_m = v,
            EpsAgentM => p.clustering.eps_agent_m = v,
            TauHome => p.mandatory.tau[0] = v,
            TauWork => p.mandatory.tau[1] = v,
            TauSchool => p.mandatory.tau[2] = v,
            ThetaExist => p.mandatory.theta_exist_factor = v,
            Epsilon => p.scoring.epsilon = v,
            AlphaShort => p.scoring.alpha[0] = v,
            AlphaMedium => p.scoring.alpha[1] = v,
            AlphaLong => p.scoring.alpha[2] = v,
            Delta => p.scoring.correction.delta = v,
            CutoffBin => p.scoring.correction.cutoff_bin = v.round().max(0.0) as usize,
            GammaM => p.confidence.gamma_m = v,
            GammaN => p.confidence.gamma_n = v,
        }
    }

    pub fn default_bounds(self) -> GeneBounds {
        use Gene::*;
        match self {
            SigmaM => GeneBounds::new(25.0, 2500.0),
            RadiusM => GeneBounds::new(100.0, 3000.0),
            EpsPoiM | EpsAgentM => GeneBounds::new(20.0, 300.0),
            TauHome | TauWork | TauSchool => GeneBounds::new(0.05, 1.0),
            ThetaExist => GeneBounds::new(0.0, 0.5),
            Epsilon => GeneBounds::new(1e-6, 1e-2),
            AlphaShort | AlphaMedium | AlphaLong => GeneBounds::new(0.05, 1.0),
            Delta => GeneBounds::new(0.0, 0.3),
            CutoffBin => GeneBounds::integer(1.0, 12.0),
            GammaM | GammaN => GeneBounds::new(0.5, 5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneRange {
    pub gene: Gene,
    pub lo: f64,
    pub hi: f64,
}

impl GeneRange {
    pub fn of(gene: Gene) -> Self {
        let b = gene.default_bounds();
        GeneRange { gene, lo: b.lo, hi: b.hi }
    }

    fn bounds(&self) -> GeneBounds {
        GeneBounds {
            lo: self.lo,
            hi: self.hi,
            integer: self.gene.default_bounds().integer,
        }
    }
}

/// Calibrated quantity; HCR metrics are maximized, JSD metrics minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    JsdFreq,
    JsdStart,
    JsdDur,
    HcrMandatory,
    HcrNonmandatory,
}

impl Metric {
    pub fn value(self, r: &EvalReport) -> f64 {
        match self {
            Metric::JsdFreq => r.jsd_freq,
            Metric::JsdStart => r.jsd_start,
            Metric::JsdDur => r.jsd_dur,
            Metric::HcrMandatory => r.hcr_mandatory,
            Metric::HcrNonmandatory => r.hcr_nonmandatory,
        }
    }

    /// Value under the minimization convention.
    pub fn objective(self, r: &EvalReport) -> f64 {
        match self {
            Metric::HcrMandatory | Metric::HcrNonmandatory => -self.value(r),
            _ => self.value(r),
        }
    }

    /// How much worse `after` is than `before` (negative when it improved).
    pub fn regression(self, before: &EvalReport, after: &EvalReport) -> f64 {
        self.objective(after) - self.objective(before)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Spatial = 1,
    Integration = 2,
    Confidence = 3,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Spatial, Phase::Integration, Phase::Confidence];

    pub fn objectives(self) -> [Metric; 2] {
        match self {
            Phase::Spatial => [Metric::JsdFreq, Metric::JsdStart],
            Phase::Integration => [Metric::JsdStart, Metric::JsdDur],
            Phase::Confidence => [Metric::HcrMandatory, Metric::HcrNonmandatory],
        }
    }

    /// Headline metrics of the phases before this one.
    pub fn frozen_metrics(self) -> Vec<Metric> {
        let mut out: Vec<Metric> = Vec::new();
        for p in Phase::ALL.iter().take_while(|p| **p != self) {
            for m in p.objectives() {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        out
    }

    pub fn default_genes(self) -> Vec<GeneRange> {
        use Gene::*;
        let genes: &[Gene] = match self {
            Phase::Spatial => &[SigmaM, RadiusM, EpsPoiM, EpsAgentM, TauHome, TauWork, TauSchool, ThetaExist],
            Phase::Integration => &[Epsilon, AlphaShort, AlphaMedium, AlphaLong, Delta, CutoffBin],
            Phase::Confidence => &[GammaM, GammaN],
        };
        genes.iter().map(|&g| GeneRange::of(g)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub nsga: NsgaConfig,
    /// Agents evaluated per candidate; all agents when the corpus is smaller.
    pub sample_agents: usize,
    /// Allowed worsening of an earlier phase's headline metric, absolute.
    pub regression_tolerance: f64,
    pub phase1: Vec<GeneRange>,
    pub phase2: Vec<GeneRange>,
    pub phase3: Vec<GeneRange>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            nsga: NsgaConfig::default(),
            sample_agents: 20_000,
            regression_tolerance: 0.01,
            phase1: Phase::Spatial.default_genes(),
            phase2: Phase::Integration.default_genes(),
            phase3: Phase::Confidence.default_genes(),
        }
    }
}

impl CalibrationConfig {
    pub fn genes(&self, phase: Phase) -> &[GeneRange] {
        match phase {
            Phase::Spatial => &self.phase1,
            Phase::Integration => &self.phase2,
            Phase::Confidence => &self.phase3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.nsga.validate()?;
        for p in Phase::ALL {
            for g in self.genes(p) {
                g.bounds().validate()?;
                let allowed = p.default_genes().iter().any(|d| d.gene == g.gene);
                if !allowed && p == Phase::Confidence {
                    return Err(Error::Config(format!(
                        "{:?} cannot be calibrated with labels frozen",
                        g.gene
                    )));
                }
            }
        }
        if self.phase3.iter().any(|g| g.lo <= 0.0) {
            return Err(Error::Config("confidence transforms need positive bounds".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRegression {
    pub metric: Metric,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontPoint {
    pub genes: Vec<f64>,
    pub objectives: Vec<f64>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub phase: Phase,
    pub objectives: [Metric; 2],
    pub genes: Vec<GeneRange>,
    pub front: Vec<FrontPoint>,
    /// Index of the selected point in `front`.
    pub knee: usize,
    pub selected: BTreeMap<Gene, f64>,
    /// Report of the configuration entering this phase.
    pub before: EvalReport,
    /// Report of the selected configuration.
    pub report: EvalReport,
    pub warnings: Vec<PhaseRegression>,
    pub evaluations: usize,
    pub cache_hits: usize,
    pub best_per_generation: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTrace {
    pub seed: u64,
    pub sample_agents: usize,
    pub initial: EvalReport,
    pub phases: Vec<PhaseTrace>,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub params: PipelineParams,
    pub trace: CalibrationTrace,
}

/// Deterministic subsample of at most `k` agents, in corpus order.
pub fn subsample(agents: &[PreparedAgent], k: usize, seed: u64) -> Vec<PreparedAgent> {
    if agents.len() <= k {
        return agents.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, agents.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| agents[i].clone()).collect()
}

fn apply(base: &PipelineParams, genes: &[GeneRange], values: &[f64]) -> PipelineParams {
    let mut p = base.clone();
    for (g, &v) in genes.iter().zip(values) {
        g.gene.set(&mut p, v);
    }
    // independent alpha genes are folded into a non-decreasing schedule
    let a = &mut p.scoring.alpha;
    a[1] = a[1].max(a[0]);
    a[2] = a[2].max(a[1]);
    p
}

/// Worst attainable report; used when a candidate cannot be evaluated.
fn failed_report() -> EvalReport {
    EvalReport {
        jsd_freq: 1.0,
        jsd_start: 1.0,
        jsd_dur: 1.0,
        hcr_mandatory: 0.0,
        hcr_nonmandatory: 0.0,
        hcr_mandatory_empty: true,
        hcr_nonmandatory_empty: true,
        staypoint_count: 0,
        flagged_query_fraction: 1.0,
    }
}

fn key(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

/// Calibrate all three phases in order starting from `start`.
pub fn calibrate(
    agents: &[PreparedAgent],
    pois: &[Poi],
    reference: &ReferenceStats,
    start: &PipelineParams,
    cfg: &CalibrationConfig,
    seed: u64,
) -> Result<Calibration> {
    cfg.validate()?;
    start.validate()?;
    let sample = subsample(agents, cfg.sample_agents, seed);
    let initial = label_prepared(&Engine::new(reference, pois, start)?, &sample).report(reference);
    log::info!("calibration on {} agents; initial {:?}", sample.len(), initial);

    let mut params = start.clone();
    let mut before = initial;
    let mut phases = Vec::new();
    for phase in Phase::ALL {
        let trace = run_phase(phase, &sample, pois, reference, &params, before, cfg, seed)?;
        for (g, v) in &trace.selected {
            g.set(&mut params, *v);
        }
        for w in &trace.warnings {
            log::warn!(
                "phase {} regressed {:?}: {:.4} -> {:.4}",
                phase as u8,
                w.metric,
                w.before,
                w.after
            );
        }
        before = trace.report;
        phases.push(trace);
    }
    Ok(Calibration {
        params,
        trace: CalibrationTrace {
            seed,
            sample_agents: sample.len(),
            initial,
            phases,
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn run_phase(
    phase: Phase,
    sample: &[PreparedAgent],
    pois: &[Poi],
    reference: &ReferenceStats,
    base: &PipelineParams,
    before: EvalReport,
    cfg: &CalibrationConfig,
    seed: u64,
) -> Result<PhaseTrace> {
    let genes = cfg.genes(phase).to_vec();
    let bounds: Vec<GeneBounds> = genes.iter().map(GeneRange::bounds).collect();
    let objectives = phase.objectives();
    let reports: Mutex<HashMap<Vec<u64>, EvalReport>> = Mutex::new(HashMap::new());

    let base_engine = Engine::new(reference, pois, base)?;
    let report_of: Box<dyn Fn(&PipelineParams) -> Result<EvalReport> + Sync> = match phase {
        Phase::Spatial => Box::new(|p: &PipelineParams| {
            Ok(label_prepared(&Engine::new(reference, pois, p)?, sample).report(reference))
        }),
        Phase::Integration => {
            let (bids, theta) = bid_all(&base_engine, sample);
            let engine = &base_engine;
            Box::new(move |p: &PipelineParams| {
                Ok(label_with_bids(&engine.with_params(p)?, sample, &bids, theta).report(reference))
            })
        }
        Phase::Confidence => {
            let labeled = label_prepared(&base_engine, sample);
            Box::new(move |p: &PipelineParams| Ok(labeled.report_with_confidence(reference, &p.confidence)))
        }
    };

    let eval = |values: &[f64]| -> Vec<f64> {
        let p = apply(base, &genes, values);
        let r = report_of(&p).unwrap_or_else(|e| {
            log::warn!("candidate {values:?} failed: {e}");
            failed_report()
        });
        reports.lock().unwrap().insert(key(values), r);
        objectives.iter().map(|m| m.objective(&r)).collect()
    };
    let incoming: Vec<f64> = genes.iter().map(|g| g.gene.get(base)).collect();
    let phase_seed = seed ^ (phase as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // without a generation budget the phase only re-evaluates the incoming configuration
    let (front_genes, evaluations, cache_hits, best_per_generation) = if cfg.nsga.generations == 0 {
        let objs = eval(&incoming);
        (vec![incoming], 1, 0, vec![objs])
    } else {
        let evo = evolve(&bounds, &cfg.nsga, phase_seed, &[incoming], eval)?;
        let genes = evo.front.into_iter().map(|i| i.genes).collect();
        (genes, evo.evaluations, evo.cache_hits, evo.best_per_generation)
    };
    let reports = reports.into_inner().unwrap();

    let front: Vec<FrontPoint> = front_genes
        .into_iter()
        .map(|genes| {
            let report = reports[&key(&genes)];
            FrontPoint {
                objectives: objectives.iter().map(|m| m.objective(&report)).collect(),
                genes,
                report,
            }
        })
        .collect();
    let frozen = phase.frozen_metrics();
    let admissible: Vec<usize> = (0..front.len())
        .filter(|&i| {
            frozen
                .iter()
                .all(|m| m.regression(&before, &front[i].report) <= cfg.regression_tolerance)
        })
        .collect();
    let objs: Vec<Vec<f64>> = front.iter().map(|f| f.objectives.clone()).collect();
    let all: Vec<usize> = (0..front.len()).collect();
    let knee = knee_among(&objs, if admissible.is_empty() { &all } else { &admissible });
    let report = front[knee].report;
    let warnings = frozen
        .iter()
        .filter(|m| m.regression(&before, &report) > cfg.regression_tolerance)
        .map(|&m| PhaseRegression {
            metric: m,
            before: m.value(&before),
            after: m.value(&report),
        })
        .collect();
    let chosen = apply(base, &genes, &front[knee].genes);
    let selected = genes.iter().map(|g| (g.gene, g.gene.get(&chosen))).collect();
    log::info!(
        "phase {}: {} evaluations, {} cache hits, front of {}, selected {:?}",
        phase as u8,
        evaluations,
        cache_hits,
        front.len(),
        selected
    );
    Ok(PhaseTrace {
        phase,
        objectives,
        genes,
        front,
        knee,
        selected,
        before,
        report,
        warnings,
        evaluations,
        cache_hits,
        best_per_generation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synthetic::{generate_synthetic, SyntheticConfig};
    use crate::pipeline::prepare_all;

    #[test]
    fn genes_roundtrip_through_params() {
        let mut p = PipelineParams::default();
        for (i, g) in Phase::ALL.iter().flat_map(|p| p.default_genes()).enumerate() {
            let v = if g.gene == Gene::CutoffBin { 7.0 } else { 0.1 + i as f64 * 0.01 };
            g.gene.set(&mut p, v);
            assert_eq!(g.gene.get(&p), v, "{:?}", g.gene);
        }
    }

    #[test]
    fn frozen_metrics_accumulate() {
        assert!(Phase::Spatial.frozen_metrics().is_empty());
        assert_eq!(Phase::Integration.frozen_metrics(), vec![Metric::JsdFreq, Metric::JsdStart]);
        assert_eq!(
            Phase::Confidence.frozen_metrics(),
            vec![Metric::JsdFreq, Metric::JsdStart, Metric::JsdDur]
        );
    }

    #[test]
    fn config_rejects_label_changing_genes_in_phase3() {
        let mut cfg = CalibrationConfig::default();
        cfg.phase3.push(GeneRange::of(Gene::SigmaM));
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    fn world() -> (ReferenceStats, Vec<PreparedAgent>, Vec<Poi>) {
        let r = ReferenceStats::builtin();
        let cfg = SyntheticConfig {
            agents: 30,
            days: 7,
            ..Default::default()
        };
        let w = generate_synthetic(&cfg, &r, 3).unwrap();
        let prepared = prepare_all(w.pings(), &PipelineParams::default().extraction, &r);
        (r, prepared, w.pois().to_vec())
    }

    #[test]
    fn zero_budget_keeps_start_and_reports_it() {
        let (r, agents, pois) = world();
        let mut cfg = CalibrationConfig::default();
        cfg.nsga.generations = 0;
        cfg.nsga.population = 4;
        let start = PipelineParams::default();
        let out = calibrate(&agents, &pois, &r, &start, &cfg, 11).unwrap();
        assert_eq!(out.trace.phases.len(), 3);
        let expected = label_prepared(&Engine::new(&r, &pois, &start).unwrap(), &agents).report(&r);
        assert_eq!(out.trace.initial, expected);
        assert_eq!(out.params, start);
        for p in &out.trace.phases {
            assert!(p.warnings.is_empty());
            assert_eq!(p.report, expected);
            assert_eq!(p.evaluations, 1);
        }
    }

    #[test]
    fn phase3_leaves_labels_unchanged() {
        let (r, agents, pois) = world();
        let mut cfg = CalibrationConfig::default();
        cfg.nsga.population = 8;
        cfg.nsga.generations = 3;
        cfg.phase1.clear();
        cfg.phase2.clear();
        let start = PipelineParams::default();
        let out = calibrate(&agents, &pois, &r, &start, &cfg, 2).unwrap();
        let before = label_prepared(&Engine::new(&r, &pois, &start).unwrap(), &agents);
        let after = label_prepared(&Engine::new(&r, &pois, &out.params).unwrap(), &agents);
        assert_eq!(before.label_histogram(), after.label_histogram());
        let p3 = &out.trace.phases[2];
        assert!(p3.report.hcr_mandatory >= p3.before.hcr_mandatory);
        assert!(p3.report.hcr_nonmandatory >= p3.before.hcr_nonmandatory);
        assert_eq!(
            (p3.report.jsd_freq, p3.report.jsd_start, p3.report.jsd_dur),
            (p3.before.jsd_freq, p3.before.jsd_start, p3.before.jsd_dur)
        );
    }
}

//! Label stability under positional noise and POI loss.
//!
//! A perturbed corpus is pushed through the full pipeline again, its staypoints are joined
//! to the original ones on `(agent, t_start, t_end)`, and the share of unchanged labels is
//! reported overall, per confidence stratum of the original run, and per original activity.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AgentPings, Poi};
use crate::model::{ActivityType, ReferenceStats, Staypoint, NUM_ACTIVITIES};
use crate::pipeline::{label_prepared, try_prepare_all, Engine, LabeledCorpus, PipelineParams};

/// Displace every ping by an independent isotropic Gaussian of `sigma_m` metres per axis.
/// Timestamps are untouched.
pub fn perturb_pings(pings: &AgentPings, sigma_m: f64, rng: &mut impl Rng) -> AgentPings {
    let mut out = pings.clone();
    if sigma_m > 0.0 {
        let normal = Normal::new(0.0, sigma_m).expect("finite positive sigma");
        for p in &mut out.pings {
            let (e, n) = (normal.sample(rng), normal.sample(rng));
            p.location = p.location.offset(e, n);
        }
    }
    out
}

/// Per-agent generator: agent `index` of a corpus gets its own stream of `seed`.
pub fn agent_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Keep a uniformly random subset of `⌈(1 − rate)·n⌉` POIs, in input order.
pub fn delete_pois(pois: &[Poi], rate: f64, seed: u64) -> Result<Vec<Poi>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("deletion rate must lie in [0, 1), got {rate}")));
    }
    let n = pois.len();
    // guard against 0.9 * 1000 = 900.0000000000001 style rounding before the ceiling
    let keep = (((1.0 - rate) * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let keep = keep.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, keep).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pois[i].clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityStability {
    pub activity: ActivityType,
    pub matched: usize,
    pub stable: usize,
    pub stability: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub confidence: f64,
    /// Fraction of original staypoints with confidence at or below `confidence`.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub original: usize,
    pub matched: usize,
    pub match_rate: f64,
    pub stability_all: Option<f64>,
    pub high_count: usize,
    pub stability_high: Option<f64>,
    pub low_count: usize,
    pub stability_low: Option<f64>,
    pub per_activity: Vec<ActivityStability>,
    /// Per-activity stabilities weighted by each activity's share of matched staypoints.
    pub weighted_avg: Option<f64>,
    pub confidence_cdf: Vec<CdfPoint>,
}

impl StabilityReport {
    pub fn activity(&self, a: ActivityType) -> &ActivityStability {
        &self.per_activity[a.index()]
    }

    /// `stability_high − stability_low`, when both strata are populated.
    pub fn gap(&self) -> Option<f64> {
        Some(self.stability_high? - self.stability_low?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrataConfig {
    /// Original confidence at or above this is high.
    pub high: f64,
    /// Original confidence below this is low.
    pub low: f64,
    /// Allowed difference of start and end times when joining, seconds.
    pub time_tolerance_s: i64,
}

impl Default for StrataConfig {
    fn default() -> Self {
        StrataConfig {
            high: 0.5,
            low: 0.3,
            time_tolerance_s: 0,
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Join perturbed staypoints onto the originals and count unchanged labels.
///
/// With a zero tolerance the join is exact on `(agent, t_start, t_end)`; otherwise an
/// original matches the perturbed staypoint of the same agent whose start and end both lie
/// within the tolerance, preferring the smallest total offset, then the earliest start, then input order.
pub fn match_and_score<'a>(
    original: impl IntoIterator<Item = &'a Staypoint>,
    perturbed: impl IntoIterator<Item = &'a Staypoint>,
    strata: &StrataConfig,
) -> Result<StabilityReport> {
    let tol = strata.time_tolerance_s.max(0);
    let mut by_agent: HashMap<&str, Vec<(i64, i64, ActivityType)>> = HashMap::new();
    for s in perturbed {
        let label = s.label().ok_or(Error::IncompleteInference(0))?;
        by_agent.entry(s.agent.as_str()).or_default().push((s.t_start, s.t_end, label));
    }
    for v in by_agent.values_mut() {
        v.sort_by_key(|&(a, b, _)| (a, b));
    }

    let mut original_count = 0;
    let mut matched = 0;
    let mut stable = 0;
    let (mut high, mut high_stable, mut low, mut low_stable) = (0, 0, 0, 0);
    let mut per = [(0usize, 0usize); NUM_ACTIVITIES];
    let mut confidences = Vec::new();
    for s in original {
        let inf = s.inference.ok_or(Error::IncompleteInference(original_count))?;
        original_count += 1;
        confidences.push(inf.confidence);
        let Some(cands) = by_agent.get(s.agent.as_str()) else {
            continue;
        };
        let first = cands.partition_point(|&(a, _, _)| a < s.t_start - tol);
        let mut best: Option<(i64, ActivityType)> = None;
        for &(a, b, label) in cands[first..].iter().take_while(|&&(a, _, _)| a <= s.t_start + tol) {
            let off = (a - s.t_start).abs() + (b - s.t_end).abs();
            if (b - s.t_end).abs() <= tol && best.is_none_or(|(o, _)| off < o) {
                best = Some((off, label));
            }
        }
        let Some((_, label)) = best else {
            continue;
        };
        let same = label == inf.activity;
        matched += 1;
        stable += same as usize;
        let slot = &mut per[inf.activity.index()];
        slot.0 += 1;
        slot.1 += same as usize;
        if inf.confidence >= strata.high {
            high += 1;
            high_stable += same as usize;
        } else if inf.confidence < strata.low {
            low += 1;
            low_stable += same as usize;
        }
    }
    if original_count == 0 {
        return Err(Error::EmptyCorpus);
    }

    let per_activity: Vec<ActivityStability> = ActivityType::ALL
        .iter()
        .map(|&a| {
            let (m, st) = per[a.index()];
            ActivityStability {
                activity: a,
                matched: m,
                stable: st,
                stability: ratio(st, m),
            }
        })
        .collect();
    let weighted_avg = (matched > 0).then(|| {
        per_activity
            .iter()
            .filter_map(|p| Some(p.matched as f64 / matched as f64 * p.stability?))
            .sum()
    });
    confidences.sort_by(f64::total_cmp);
    let confidence_cdf = (0..=20)
        .map(|k| {
            let c = k as f64 / 20.0;
            let below = confidences.partition_point(|&x| x <= c);
            CdfPoint {
                confidence: c,
                fraction: below as f64 / original_count as f64,
            }
        })
        .collect();
    Ok(StabilityReport {
        original: original_count,
        matched,
        match_rate: matched as f64 / original_count as f64,
        stability_all: ratio(stable, matched),
        high_count: high,
        stability_high: ratio(high_stable, high),
        low_count: low,
        stability_low: ratio(low_stable, low),
        per_activity,
        weighted_avg,
        confidence_cdf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Noise { sigma_m: f64 },
    PoiDeletion { rate: f64 },
}

impl Perturbation {
    /// File-name label: `noise_<metres>` or `poi_<percent>`.
    pub fn label(&self) -> String {
        match self {
            Perturbation::Noise { sigma_m } => format!("noise_{sigma_m}"),
            Perturbation::PoiDeletion { rate } => format!("poi_{}", (rate * 100.0).round()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    pub noise_levels_m: Vec<f64>,
    pub poi_deletion_rates: Vec<f64>,
    pub strata: StrataConfig,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            noise_levels_m: vec![5.0, 10.0, 20.0],
            poi_deletion_rates: vec![0.05, 0.10],
            strata: StrataConfig::default(),
        }
    }
}

impl RobustnessConfig {
    pub fn perturbations(&self) -> Vec<Perturbation> {
        let noise = self.noise_levels_m.iter().map(|&sigma_m| Perturbation::Noise { sigma_m });
        let poi = self.poi_deletion_rates.iter().map(|&rate| Perturbation::PoiDeletion { rate });
        noise.chain(poi).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_levels_m.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("noise levels must be finite and non-negative".into()));
        }
        if self.poi_deletion_rates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::Config("deletion rates must lie in [0, 1)".into()));
        }
        if !(self.strata.low <= self.strata.high) {
            return Err(Error::Config("low stratum bound exceeds high bound".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub perturbation: Perturbation,
    pub seed: u64,
    pub report: StabilityReport,
}

/// Run one perturbation against an already labeled original corpus.
///
/// `source` opens the original pings afresh and must yield them in the same order each time.
#[allow(clippy::too_many_arguments)]
pub fn run_perturbation<S, I>(
    source: &S,
    pois: &[Poi],
    reference: &ReferenceStats,
    params: &PipelineParams,
    original: &LabeledCorpus,
    perturbation: Perturbation,
    strata: &StrataConfig,
    seed: u64,
) -> Result<StabilityRun>
where
    S: Fn() -> Result<I>,
    I: Iterator<Item = Result<AgentPings>>,
{
    let perturbed = match perturbation {
        Perturbation::Noise { sigma_m } => {
            let noisy = source()?
                .enumerate()
                .map(|(i, p)| p.map(|p| perturb_pings(&p, sigma_m, &mut agent_rng(seed, i))));
            let prepared = try_prepare_all(noisy, &params.extraction, reference)?;
            label_prepared(&Engine::new(reference, pois, params)?, &prepared)
        }
        Perturbation::PoiDeletion { rate } => {
            let kept = delete_pois(pois, rate, seed)?;
            let prepared = try_prepare_all(source()?, &params.extraction, reference)?;
            label_prepared(&Engine::new(reference, &kept, params)?, &prepared)
        }
    };
    let report = match_and_score(original.staypoints(), perturbed.staypoints(), strata)?;
    log::info!(
        "{}: match {:.4}, stability {:?} (high {:?}, low {:?})",
        perturbation.label(),
        report.match_rate,
        report.stability_all,
        report.stability_high,
        report.stability_low
    );
    Ok(StabilityRun {
        perturbation,
        seed,
        report,
    })
}

/// Label the original corpus once, then run every configured perturbation.
pub fn run_robustness<S, I>(
    source: S,
    pois: &[Poi],
    reference: &ReferenceStats,
    params: &PipelineParams,
    cfg: &RobustnessConfig,
    seed: u64,
) -> Result<Vec<StabilityRun>>
where
    S: Fn() -> Result<I>,
    I: Iterator<Item = Result<AgentPings>>,
{
    cfg.validate()?;
    let prepared = try_prepare_all(source()?, &params.extraction, reference)?;
    let original = label_prepared(&Engine::new(reference, pois, params)?, &prepared);
    drop(prepared);
    cfg.perturbations()
        .into_iter()
        .enumerate()
        .map(|(k, p)| {
            let run_seed = seed.wrapping_add(k as u64 + 1);
            run_perturbation(&source, pois, reference, params, &original, p, &cfg.strata, run_seed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RawPing;
    use crate::model::{haversine, AgentId, Inference, LatLon, ProbVector};
    use proptest::prelude::{any, prop_assert_eq, proptest, ProptestConfig};

    fn sp(agent: &str, t0: i64, t1: i64, a: ActivityType, c: f64) -> Staypoint {
        let mut s = Staypoint::new(AgentId::new(agent), LatLon::new(34.0, -118.2), t0, t1).unwrap();
        s.inference = Some(Inference { activity: a, confidence: c });
        s
    }

    #[test]
    fn zero_sigma_is_identity() {
        let pings = AgentPings {
            agent: AgentId::new("a"),
            pings: (0..10)
                .map(|i| RawPing {
                    timestamp: i * 60,
                    location: LatLon::new(34.0 + i as f64 * 1e-4, -118.2),
                    accuracy_m: None,
                })
                .collect(),
        };
        assert_eq!(perturb_pings(&pings, 0.0, &mut agent_rng(1, 0)), pings);
        let moved = perturb_pings(&pings, 10.0, &mut agent_rng(1, 0));
        assert!(moved.pings.iter().zip(&pings.pings).all(|(a, b)| a.timestamp == b.timestamp));
        assert_eq!(moved, perturb_pings(&pings, 10.0, &mut agent_rng(1, 0)));
    }

    #[test]
    fn mean_displacement_is_rayleigh_mean() {
        let origin = LatLon::new(34.05, -118.25);
        let pings = AgentPings {
            agent: AgentId::new("a"),
            pings: (0..100_000)
                .map(|i| RawPing {
                    timestamp: i,
                    location: origin,
                    accuracy_m: None,
                })
                .collect(),
        };
        let moved = perturb_pings(&pings, 10.0, &mut agent_rng(7, 0));
        let mean: f64 = moved.pings.iter().map(|p| haversine(origin, p.location)).sum::<f64>() / 1e5;
        let expected = 10.0 * (std::f64::consts::PI / 2.0).sqrt();
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    fn pois(n: usize) -> Vec<Poi> {
        (0..n)
            .map(|i| Poi {
                poi_id: format!("p{i}"),
                location: LatLon::new(34.0, -118.0 + i as f64 * 1e-4),
                category: "cafe".into(),
                activity_dist: ProbVector::unit(ActivityType::MealsOut),
                name: None,
            })
            .collect()
    }

    #[test]
    fn deletion_counts_and_subset() {
        let all = pois(1000);
        assert_eq!(delete_pois(&all, 0.0, 3).unwrap(), all);
        let kept = delete_pois(&all, 0.10, 3).unwrap();
        assert_eq!(kept.len(), 900);
        assert!(kept.iter().all(|p| all.contains(p)));
        assert_eq!(delete_pois(&all, 0.05, 3).unwrap().len(), 950);
        assert_eq!(delete_pois(&pois(7), 0.10, 3).unwrap().len(), 7);
        assert_eq!(kept, delete_pois(&all, 0.10, 3).unwrap());
        assert!(delete_pois(&all, 1.0, 3).is_err());
    }

    #[test]
    fn identity_run_is_fully_stable() {
        let v = vec![
            sp("a", 0, 600, ActivityType::Home, 0.9),
            sp("a", 900, 1500, ActivityType::MealsOut, 0.2),
            sp("b", 0, 900, ActivityType::Work, 0.4),
        ];
        let r = match_and_score(&v, &v, &StrataConfig::default()).unwrap();
        assert_eq!(r.match_rate, 1.0);
        assert_eq!(r.stability_all, Some(1.0));
        assert_eq!(r.stability_high, Some(1.0));
        assert_eq!(r.stability_low, Some(1.0));
        assert_eq!(r.weighted_avg, Some(1.0));
        assert_eq!((r.high_count, r.low_count), (1, 1));
    }

    #[test]
    fn one_flip_of_two() {
        let a = vec![sp("a", 0, 600, ActivityType::Home, 0.9), sp("a", 900, 1500, ActivityType::Errands, 0.9)];
        let b = vec![sp("a", 0, 600, ActivityType::Home, 0.9), sp("a", 900, 1500, ActivityType::ShopGoods, 0.9)];
        let r = match_and_score(&a, &b, &StrataConfig::default()).unwrap();
        assert_eq!(r.stability_all, Some(0.5));
        assert_eq!(r.activity(ActivityType::Errands).stability, Some(0.0));
    }

    #[test]
    fn empty_original_is_an_error() {
        assert!(matches!(
            match_and_score(&[], &[], &StrataConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn tolerance_allows_shifted_boundaries() {
        let a = vec![sp("a", 0, 600, ActivityType::Home, 0.9)];
        let b = vec![sp("a", 30, 590, ActivityType::Home, 0.9)];
        let exact = match_and_score(&a, &b, &StrataConfig::default()).unwrap();
        assert_eq!(exact.matched, 0);
        let loose = StrataConfig {
            time_tolerance_s: 60,
            ..Default::default()
        };
        assert_eq!(match_and_score(&a, &b, &loose).unwrap().matched, 1);
    }

    /// Pairwise join oracle: every (original, perturbed) pair compared directly.
    fn brute_force(orig: &[Staypoint], pert: &[Staypoint], s: &StrataConfig) -> (usize, usize, usize, usize, usize, usize, Vec<(usize, usize)>) {
        let (mut m, mut st, mut h, mut hs, mut l, mut ls) = (0, 0, 0, 0, 0, 0);
        let mut per = vec![(0, 0); 15];
        for o in orig {
            let hit = pert
                .iter()
                .find(|p| p.agent == o.agent && p.t_start == o.t_start && p.t_end == o.t_end);
            if let Some(p) = hit {
                let same = (p.label() == o.label()) as usize;
                m += 1;
                st += same;
                per[o.label().unwrap().index()].0 += 1;
                per[o.label().unwrap().index()].1 += same;
                let c = o.confidence().unwrap();
                if c >= s.high {
                    h += 1;
                    hs += same;
                } else if c < s.low {
                    l += 1;
                    ls += same;
                }
            }
        }
        (m, st, h, hs, l, ls, per)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn join_matches_pairwise_oracle(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut orig = Vec::new();
            let mut pert = Vec::new();
            for i in 0..1000 {
                let agent = format!("a{}", rng.random_range(0..20));
                let t0 = i as i64 * 1000;
                let t1 = t0 + rng.random_range(300..900);
                let a = ActivityType::ALL[rng.random_range(0..15)];
                let c: f64 = rng.random();
                orig.push(sp(&agent, t0, t1, a, c));
                if rng.random::<f64>() < 0.9 {
                    let b = if rng.random::<f64>() < 0.8 { a } else { ActivityType::ALL[rng.random_range(0..15)] };
                    let shift = if rng.random::<f64>() < 0.95 { 0 } else { 1 };
                    pert.push(sp(&agent, t0, t1 + shift, b, rng.random()));
                }
            }
            let s = StrataConfig::default();
            let r = match_and_score(&orig, &pert, &s).unwrap();
            let (m, st, h, hs, l, ls, per) = brute_force(&orig, &pert, &s);
            prop_assert_eq!(r.matched, m);
            prop_assert_eq!(r.stability_all, ratio(st, m));
            prop_assert_eq!((r.high_count, r.stability_high), (h, ratio(hs, h)));
            prop_assert_eq!((r.low_count, r.stability_low), (l, ratio(ls, l)));
            for a in ActivityType::ALL {
                let x = r.activity(a);
                prop_assert_eq!((x.matched, x.stable), per[a.index()]);
            }
        }
    }
}

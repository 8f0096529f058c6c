//! Distributional alignment (Jensen–Shannon divergence) and inference reliability (HCR).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    bin_of, slot_of, ActivityClass, ActivityType, ReferenceStats, Staypoint, DURATION_BINS,
    NUM_ACTIVITIES, SLOTS_PER_DAY,
};

/// Confidence threshold for the high-confidence ratio.
pub const HCR_THRESHOLD: f64 = 0.5;

/// Base-2 Jensen–Shannon divergence, bounded in `[0, 1]`. Inputs are renormalized.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Schema(format!(
            "histogram length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let sp = checked_total(p)?;
    let sq = checked_total(q)?;
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let (pi, qi) = (pi / sp, qi / sq);
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            acc += pi * (pi / m).log2();
        }
        if qi > 0.0 {
            acc += qi * (qi / m).log2();
        }
    }
    Ok((0.5 * acc).clamp(0.0, 1.0))
}

fn checked_total(h: &[f64]) -> Result<f64> {
    if h.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    let s: f64 = h.iter().sum();
    if s <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemporalDimension {
    Start,
    Duration,
}

/// Share-weighted mean of per-activity JSDs against the reference histograms.
///
/// Activities with zero reference share (or an absent reference histogram) are skipped and
/// the weights renormalized over the rest. An activity that was never inferred scores 1.
pub fn weighted_temporal_jsd<H: AsRef<[f64]>>(
    inferred: &[H],
    reference: &ReferenceStats,
    dimension: TemporalDimension,
) -> f64 {
    let mut weighted = 0.0;
    let mut weight_total = 0.0;
    for a in ActivityType::ALL {
        let share = reference.share(a);
        let ref_hist = match dimension {
            TemporalDimension::Start => reference.start_prior(a),
            TemporalDimension::Duration => reference.duration_prior(a),
        };
        if share <= 0.0 || ref_hist.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        let hist = inferred[a.index()].as_ref();
        let j = if hist.iter().sum::<f64>() <= 0.0 {
            1.0
        } else {
            jsd(hist, &ref_hist[..]).expect("equal lengths, non-empty")
        };
        weighted += share * j;
        weight_total += share;
    }
    if weight_total > 0.0 {
        weighted / weight_total
    } else {
        0.0
    }
}

/// High-confidence ratio with an explicit flag for an empty population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hcr {
    pub ratio: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassFilter {
    All,
    Only(ActivityClass),
}

impl ClassFilter {
    fn accepts(self, a: ActivityType) -> bool {
        match self {
            ClassFilter::All => true,
            ClassFilter::Only(c) => a.class() == c,
        }
    }
}

/// Fraction of labeled staypoints (after class filtering) with confidence `>= threshold`.
pub fn hcr(staypoints: &[Staypoint], threshold: f64, filter: ClassFilter) -> Hcr {
    let (mut n, mut high) = (0usize, 0usize);
    for inf in staypoints.iter().filter_map(|s| s.inference) {
        if filter.accepts(inf.activity) {
            n += 1;
            if inf.confidence >= threshold {
                high += 1;
            }
        }
    }
    if n == 0 {
        Hcr {
            ratio: 0.0,
            empty: true,
        }
    } else {
        Hcr {
            ratio: high as f64 / n as f64,
            empty: false,
        }
    }
}

/// Objective space of calibration: three JSD components plus HCR per activity class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub jsd_freq: f64,
    pub jsd_start: f64,
    pub jsd_dur: f64,
    pub hcr_mandatory: f64,
    pub hcr_nonmandatory: f64,
    pub hcr_mandatory_empty: bool,
    pub hcr_nonmandatory_empty: bool,
    pub staypoint_count: usize,
    pub flagged_query_fraction: f64,
}

/// Inferred label, start-slot and duration-bin histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    pub frequency: Vec<f64>,
    pub start: Vec<Vec<f64>>,
    pub duration: Vec<Vec<f64>>,
}

impl Default for Histograms {
    fn default() -> Self {
        Histograms {
            frequency: vec![0.0; NUM_ACTIVITIES],
            start: vec![vec![0.0; SLOTS_PER_DAY]; NUM_ACTIVITIES],
            duration: vec![vec![0.0; DURATION_BINS]; NUM_ACTIVITIES],
        }
    }
}

/// Mergeable partial aggregate of a labeled corpus. Merging is associative and commutative,
/// so workers can accumulate disjoint shards independently.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportAccumulator {
    pub histograms: Histograms,
    pub mandatory_total: usize,
    pub mandatory_high: usize,
    pub nonmandatory_total: usize,
    pub nonmandatory_high: usize,
    pub flagged: usize,
    pub total: usize,
}

impl ReportAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        activity: ActivityType,
        confidence: f64,
        t_start: i64,
        duration_s: i64,
        tz_offset_min: i32,
        flagged: bool,
    ) {
        let i = activity.index();
        self.histograms.frequency[i] += 1.0;
        self.histograms.start[i][slot_of(t_start, tz_offset_min).index()] += 1.0;
        self.histograms.duration[i][bin_of(duration_s).index()] += 1.0;
        let high = confidence >= HCR_THRESHOLD;
        if activity.is_mandatory() {
            self.mandatory_total += 1;
            self.mandatory_high += high as usize;
        } else {
            self.nonmandatory_total += 1;
            self.nonmandatory_high += high as usize;
        }
        self.flagged += flagged as usize;
        self.total += 1;
    }

    pub fn add_staypoint(&mut self, s: &Staypoint, tz_offset_min: i32, flagged: bool) -> Result<()> {
        let inf = s.inference.ok_or(Error::IncompleteInference(self.total))?;
        self.add(
            inf.activity,
            inf.confidence,
            s.t_start,
            s.duration(),
            tz_offset_min,
            flagged,
        );
        Ok(())
    }

    pub fn merge(&mut self, other: &ReportAccumulator) {
        let h = &mut self.histograms;
        for (a, b) in h.frequency.iter_mut().zip(&other.histograms.frequency) {
            *a += b;
        }
        for (ra, rb) in h.start.iter_mut().zip(&other.histograms.start) {
            ra.iter_mut().zip(rb).for_each(|(a, b)| *a += b);
        }
        for (ra, rb) in h.duration.iter_mut().zip(&other.histograms.duration) {
            ra.iter_mut().zip(rb).for_each(|(a, b)| *a += b);
        }
        self.mandatory_total += other.mandatory_total;
        self.mandatory_high += other.mandatory_high;
        self.nonmandatory_total += other.nonmandatory_total;
        self.nonmandatory_high += other.nonmandatory_high;
        self.flagged += other.flagged;
        self.total += other.total;
    }

    pub fn report(&self, reference: &ReferenceStats) -> EvalReport {
        let jsd_freq = if self.total == 0 {
            1.0
        } else {
            jsd(&self.histograms.frequency, reference.shares().values()).unwrap_or(1.0)
        };
        let ratio = |high: usize, total: usize| {
            if total == 0 {
                0.0
            } else {
                high as f64 / total as f64
            }
        };
        EvalReport {
            jsd_freq,
            jsd_start: weighted_temporal_jsd(
                &self.histograms.start,
                reference,
                TemporalDimension::Start,
            ),
            jsd_dur: weighted_temporal_jsd(
                &self.histograms.duration,
                reference,
                TemporalDimension::Duration,
            ),
            hcr_mandatory: ratio(self.mandatory_high, self.mandatory_total),
            hcr_nonmandatory: ratio(self.nonmandatory_high, self.nonmandatory_total),
            hcr_mandatory_empty: self.mandatory_total == 0,
            hcr_nonmandatory_empty: self.nonmandatory_total == 0,
            staypoint_count: self.total,
            flagged_query_fraction: ratio(self.flagged, self.total),
        }
    }
}

/// Aggregate a fully labeled corpus into an [`EvalReport`].
pub fn build_report(staypoints: &[Staypoint], reference: &ReferenceStats) -> Result<EvalReport> {
    let mut acc = ReportAccumulator::new();
    for (i, s) in staypoints.iter().enumerate() {
        if s.inference.is_none() {
            return Err(Error::IncompleteInference(i));
        }
        acc.add_staypoint(s, reference.tz_offset_min(), false)?;
    }
    Ok(acc.report(reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentId, Inference, LatLon, ProbVector};
    use proptest::prelude::*;

    /// Independent evaluation through natural logs, converted to bits at the end.
    fn jsd_oracle(p: &[f64], q: &[f64]) -> f64 {
        let kl = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .filter(|(x, _)| **x > 0.0)
                .map(|(x, y)| x * (x.ln() - y.ln()))
                .sum()
        };
        let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
        (0.5 * kl(p, &m) + 0.5 * kl(q, &m)) / std::f64::consts::LN_2
    }

    #[test]
    fn jsd_examples() {
        assert_eq!(jsd(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        // 0.5*[0.5 log2(0.5/0.375) + 0.5 log2(0.5/0.625)] + 0.5*[0.25 log2(0.25/0.375) + 0.75 log2(0.75/0.625)]
        let expected = 0.048_794_940_695_398_533; // 40-digit mpmath evaluation
        let got = jsd(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got}");
        assert!((got - jsd_oracle(&[0.5, 0.5], &[0.25, 0.75])).abs() < 1e-12);
    }

    #[test]
    fn jsd_length_mismatch() {
        assert!(matches!(jsd(&[1.0], &[0.5, 0.5]), Err(Error::Schema(_))));
    }

    #[test]
    fn hcr_examples() {
        let mk = |c: f64| Staypoint {
            agent: AgentId::new("a"),
            location: LatLon::new(0.0, 0.0),
            t_start: 0,
            t_end: 60,
            inference: Some(Inference {
                activity: ActivityType::MealsOut,
                confidence: c,
            }),
        };
        let all_one: Vec<_> = (0..4).map(|_| mk(1.0)).collect();
        assert_eq!(hcr(&all_one, 0.5, ClassFilter::All).ratio, 1.0);

        let mixed = vec![mk(0.6), mk(0.4), mk(0.5)];
        let h = hcr(&mixed, 0.5, ClassFilter::All);
        assert!((h.ratio - 2.0 / 3.0).abs() < 1e-15);

        let h = hcr(&mixed, 0.5, ClassFilter::Only(ActivityClass::Mandatory));
        assert_eq!(h, Hcr { ratio: 0.0, empty: true });
    }

    fn uniform_reference(shares: ProbVector) -> ReferenceStats {
        ReferenceStats::new(shares, vec![[1.0; 96]; 15], vec![[1.0; 96]; 15], 0).unwrap()
    }

    #[test]
    fn weighted_temporal_examples() {
        let reference = ReferenceStats::builtin();
        let exact: Vec<[f64; 96]> = ActivityType::ALL
            .iter()
            .map(|a| *reference.start_prior(*a))
            .collect();
        assert!(weighted_temporal_jsd(&exact, &reference, TemporalDimension::Start) < 1e-12);

        // single-activity world collapses to the plain divergence
        let only_work = uniform_reference(ProbVector::unit(ActivityType::Work));
        let mut inferred = vec![[0.0; 96]; 15];
        inferred[1][10] = 3.0;
        inferred[1][20] = 1.0;
        let plain = jsd(&inferred[1], only_work.start_prior(ActivityType::Work)).unwrap();
        let w = weighted_temporal_jsd(&inferred, &only_work, TemporalDimension::Start);
        assert!((w - plain).abs() < 1e-15);

        // two activities, 0.75 / 0.25
        let mut shares = ProbVector::zeros();
        shares[ActivityType::Home] = 0.75;
        shares[ActivityType::Work] = 0.25;
        let two = uniform_reference(shares);
        let mut inferred = vec![[0.0; 96]; 15];
        inferred[0][0] = 1.0;
        inferred[1] = [1.0; 96];
        inferred[1][5] = 5.0;
        let j1 = jsd_oracle(
            &{
                let mut h = [0.0; 96];
                h[0] = 1.0;
                h
            },
            &[1.0 / 96.0; 96],
        );
        let total: f64 = inferred[1].iter().sum();
        let p2: Vec<f64> = inferred[1].iter().map(|x| x / total).collect();
        let j2 = jsd_oracle(&p2, &[1.0 / 96.0; 96]);
        let w = weighted_temporal_jsd(&inferred, &two, TemporalDimension::Start);
        assert!((w - (0.75 * j1 + 0.25 * j2)).abs() < 1e-12);

        // never-inferred activity counts as maximally divergent
        let mut only_home = vec![[0.0; 96]; 15];
        only_home[0] = [1.0; 96];
        let w = weighted_temporal_jsd(&only_home, &two, TemporalDimension::Start);
        assert!((w - 0.25).abs() < 1e-12);
    }

    #[test]
    fn report_all_home_reduces_to_frequency_jsd() {
        let reference = ReferenceStats::builtin();
        let sps: Vec<_> = (0..10)
            .map(|i| Staypoint {
                agent: AgentId::new("a"),
                location: LatLon::new(0.0, 0.0),
                t_start: i * 3600,
                t_end: i * 3600 + 1800,
                inference: Some(Inference {
                    activity: ActivityType::Home,
                    confidence: 0.9,
                }),
            })
            .collect();
        let r = build_report(&sps, &reference).unwrap();
        let expected = jsd(ProbVector::unit(ActivityType::Home).values(), reference.shares().values())
            .unwrap();
        assert!((r.jsd_freq - expected).abs() < 1e-15);
        assert_eq!(r.hcr_mandatory, 1.0);
        assert!(r.hcr_nonmandatory_empty);

        let mut missing = sps.clone();
        missing[3].inference = None;
        assert!(matches!(
            build_report(&missing, &reference),
            Err(Error::IncompleteInference(3))
        ));
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, n).prop_filter_map("non-zero", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-9).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn jsd_symmetric_bounded(p in simplex(12), q in simplex(12)) {
            let a = jsd(&p, &q).unwrap();
            let b = jsd(&q, &p).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
            prop_assert!(jsd(&p, &p).unwrap().abs() < 1e-12);
            prop_assert!((a - jsd_oracle(&p, &q)).abs() < 1e-9);
        }

        #[test]
        fn accumulator_merge_is_order_free(
            rows in proptest::collection::vec((1u8..=15, 0.0f64..1.0, 0i64..200_000, 60i64..100_000), 1..60),
            split in 0usize..60,
        ) {
            let reference = ReferenceStats::builtin();
            let add_all = |acc: &mut ReportAccumulator, rs: &[(u8, f64, i64, i64)]| {
                for &(c, conf, t, d) in rs {
                    acc.add(ActivityType::from_code(c).unwrap(), conf, t, d, -480, false);
                }
            };
            let mut whole = ReportAccumulator::new();
            add_all(&mut whole, &rows);
            let k = split.min(rows.len());
            let (mut left, mut right) = (ReportAccumulator::new(), ReportAccumulator::new());
            add_all(&mut left, &rows[..k]);
            add_all(&mut right, &rows[k..]);
            right.merge(&left);
            prop_assert_eq!(whole.report(&reference), right.report(&reference));
        }
    }
}

//! Multiplicative scoring of the 12 non-mandatory purposes from spatial, time-of-day and
//! duration evidence, with posterior-max confidence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    bin_of, slot_of, ActivityType, Histogram96, ProbVector, ReferenceStats, Staypoint,
    NUM_NON_MANDATORY,
};

/// Shift of duration-prior mass toward short bins for purposes that are typically brief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DurationCorrection {
    /// Probability mass moved below the cutoff, in `[0, 0.3]`.
    pub delta: f64,
    /// First duration bin counted as long.
    pub cutoff_bin: usize,
    pub brief_activities: Vec<ActivityType>,
}

impl Default for DurationCorrection {
    fn default() -> Self {
        use ActivityType::*;
        DurationCorrection {
            delta: 0.15,
            cutoff_bin: 4,
            brief_activities: vec![MealsOut, Errands, PickupDrop, ShopGoods],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringParams {
    pub epsilon: f64,
    /// Duration exponents for bins 0-3 (under an hour), 4-7, and 8 upwards.
    pub alpha: [f64; 3],
    pub correction: DurationCorrection,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams {
            epsilon: 1e-4,
            alpha: [0.3, 0.7, 1.0],
            correction: DurationCorrection::default(),
        }
    }
}

impl ScoringParams {
    pub fn alpha_for(&self, bin: usize) -> f64 {
        match bin {
            0..=3 => self.alpha[0],
            4..=7 => self.alpha[1],
            _ => self.alpha[2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Config("alpha values must lie in [0, 1]".into()));
        }
        if self.alpha.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("alpha must be non-decreasing with duration".into()));
        }
        let c = &self.correction;
        if !(0.0..=0.3).contains(&c.delta) {
            return Err(Error::Config(format!("duration correction delta {} outside [0, 0.3]", c.delta)));
        }
        if c.cutoff_bin >= 96 {
            return Err(Error::Config("duration correction cutoff must be below 96".into()));
        }
        if c.brief_activities.iter().any(|a| a.is_mandatory()) {
            return Err(Error::Config("brief activities must be non-mandatory".into()));
        }
        Ok(())
    }
}

/// Move up to `delta` of mass from bins `>= cutoff` to bins `< cutoff`, proportionally on
/// both sides, and renormalize. The order of bins within each side is preserved.
pub fn correct_duration_prior(hist: &[f64], delta: f64, cutoff: usize) -> Vec<f64> {
    let cutoff = cutoff.min(hist.len());
    let (low, high) = hist.split_at(cutoff);
    let low_mass: f64 = low.iter().sum();
    let high_mass: f64 = high.iter().sum();
    let shift = delta.max(0.0).min(high_mass);
    if cutoff == 0 || shift <= 0.0 {
        return hist.to_vec();
    }
    let mut out = Vec::with_capacity(hist.len());
    if low_mass > 0.0 {
        let k = (low_mass + shift) / low_mass;
        out.extend(low.iter().map(|x| x * k));
    } else {
        out.extend(std::iter::repeat_n(shift / cutoff as f64, cutoff));
    }
    let k = (high_mass - shift) / high_mass;
    out.extend(high.iter().map(|x| x * k));
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|x| *x /= total);
    }
    out
}

/// Duration priors of every activity with the correction applied to the brief set.
pub fn corrected_duration_priors(reference: &ReferenceStats, c: &DurationCorrection) -> Vec<Histogram96> {
    ActivityType::ALL
        .iter()
        .map(|&a| {
            let h = reference.duration_prior(a);
            if c.brief_activities.contains(&a) {
                correct_duration_prior(h, c.delta, c.cutoff_bin)
                    .try_into()
                    .expect("96 bins")
            } else {
                *h
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonMandatoryScore {
    pub label: ActivityType,
    pub confidence: f64,
    /// Over [`ActivityType::NON_MANDATORY`] in order.
    pub posterior: [f64; NUM_NON_MANDATORY],
}

/// Score one staypoint given its spatial likelihood, start slot and duration bin.
///
/// `start_priors` and `duration_priors` are indexed by activity index (15 rows).
pub fn score(
    p_space: &ProbVector,
    slot: usize,
    bin: usize,
    start_priors: &[Histogram96],
    duration_priors: &[Histogram96],
    params: &ScoringParams,
) -> NonMandatoryScore {
    let eps = params.epsilon;
    let alpha = params.alpha_for(bin);
    let mut s = [0.0; NUM_NON_MANDATORY];
    for (k, a) in ActivityType::NON_MANDATORY.iter().enumerate() {
        let i = a.index();
        s[k] = (p_space[*a] + eps) * (start_priors[i][slot] + eps) * (duration_priors[i][bin] + eps).powf(alpha);
    }
    from_scores(&s)
}

/// Normalize raw scores into a posterior; ties in the label go to the lowest code.
pub fn from_scores(s: &[f64; NUM_NON_MANDATORY]) -> NonMandatoryScore {
    let z: f64 = s.iter().sum();
    let posterior = if z > 0.0 && z.is_finite() {
        s.map(|x| x / z)
    } else {
        [1.0 / NUM_NON_MANDATORY as f64; NUM_NON_MANDATORY]
    };
    let mut best = 0;
    for k in 1..NUM_NON_MANDATORY {
        if posterior[k] > posterior[best] {
            best = k;
        }
    }
    NonMandatoryScore {
        label: ActivityType::NON_MANDATORY[best],
        confidence: posterior[best],
        posterior,
    }
}

/// Convenience wrapper that bins the staypoint and applies the duration correction.
pub fn score_staypoint(
    s: &Staypoint,
    p_space: &ProbVector,
    reference: &ReferenceStats,
    params: &ScoringParams,
) -> NonMandatoryScore {
    let start: Vec<Histogram96> = ActivityType::ALL.iter().map(|&a| *reference.start_prior(a)).collect();
    let duration = corrected_duration_priors(reference, &params.correction);
    score(
        p_space,
        slot_of(s.t_start, reference.tz_offset_min()).index(),
        bin_of(s.duration()).index(),
        &start,
        &duration,
        params,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform_rows() -> Vec<Histogram96> {
        vec![[1.0 / 96.0; 96]; 15]
    }

    #[test]
    fn zero_delta_is_identity() {
        let h = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(correct_duration_prior(&h, 0.0, 2), h.to_vec());
    }

    #[test]
    fn two_bin_toy_prior() {
        let out = correct_duration_prior(&[0.2, 0.8], 0.1, 1);
        assert!((out[0] - 0.3).abs() < 1e-12 && (out[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn shift_limited_to_available_mass() {
        let out = correct_duration_prior(&[0.95, 0.05], 0.3, 1);
        assert!((out[0] - 1.0).abs() < 1e-12 && out[1].abs() < 1e-12);
    }

    #[test]
    fn non_brief_activities_unchanged() {
        let r = ReferenceStats::builtin();
        let c = DurationCorrection::default();
        let d = corrected_duration_priors(&r, &c);
        assert_eq!(&d[ActivityType::Leisure.index()], r.duration_prior(ActivityType::Leisure));
        assert_ne!(&d[ActivityType::Errands.index()], r.duration_prior(ActivityType::Errands));
    }

    #[test]
    fn uniform_factors_give_uniform_posterior() {
        let rows = uniform_rows();
        let s = score(&ProbVector::uniform(), 40, 3, &rows, &rows, &ScoringParams::default());
        assert_eq!(s.label, ActivityType::Caregiving);
        assert!((s.confidence - 1.0 / 12.0).abs() < 1e-12);
        assert!(s.posterior.iter().all(|p| (p - 1.0 / 12.0).abs() < 1e-12));
    }

    #[test]
    fn spatial_dominance() {
        let rows = uniform_rows();
        let params = ScoringParams {
            epsilon: 1e-12,
            ..Default::default()
        };
        let s = score(&ProbVector::unit(ActivityType::MealsOut), 40, 3, &rows, &rows, &params);
        assert_eq!(s.label, ActivityType::MealsOut);
        assert!(s.confidence > 1.0 - 1e-9);
    }

    #[test]
    fn three_type_toy_matches_direct_evaluation() {
        use ActivityType::*;
        // Only three purposes receive non-zero evidence; everything else sits at the floor.
        let mut p_space = ProbVector::zeros();
        p_space[ShopGoods] = 0.5;
        p_space[MealsOut] = 0.3;
        p_space[Leisure] = 0.2;
        let mut start = vec![[0.0; 96]; 15];
        let mut dur = vec![[0.0; 96]; 15];
        let (slot, bin) = (50, 5);
        for (a, t, d) in [(ShopGoods, 0.02, 0.10), (MealsOut, 0.05, 0.20), (Leisure, 0.01, 0.05)] {
            start[a.index()][slot] = t;
            dur[a.index()][bin] = d;
        }
        let params = ScoringParams {
            epsilon: 0.001,
            ..Default::default()
        };
        let out = score(&p_space, slot, bin, &start, &dur, &params);

        // by hand: (P_space+e)(P_tod+e)(P_dur+e)^0.7
        let e: f64 = 0.001;
        let f = |ps: f64, t: f64, d: f64| (ps + e) * (t + e) * (d + e).powf(0.7);
        let shop = f(0.5, 0.02, 0.10);
        let meals = f(0.3, 0.05, 0.20);
        let leisure = f(0.2, 0.01, 0.05);
        let floor = f(0.0, 0.0, 0.0);
        let z = shop + meals + leisure + 9.0 * floor;
        assert_eq!(out.label, MealsOut);
        let k = |a: ActivityType| a.non_mandatory_index().unwrap();
        assert!((out.posterior[k(ShopGoods)] - shop / z).abs() < 1e-12);
        assert!((out.posterior[k(MealsOut)] - meals / z).abs() < 1e-12);
        assert!((out.posterior[k(Leisure)] - leisure / z).abs() < 1e-12);
        assert!((out.confidence - meals / z).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_ignores_duration() {
        let r = ReferenceStats::builtin();
        let start: Vec<Histogram96> = ActivityType::ALL.iter().map(|&a| *r.start_prior(a)).collect();
        let dur: Vec<Histogram96> = r.duration_priors().to_vec();
        let params = ScoringParams {
            alpha: [0.0, 0.7, 1.0],
            ..Default::default()
        };
        let mut p = ProbVector::uniform();
        p[ActivityType::Exercise] += 0.2;
        let p = p.normalize().unwrap();
        let a = score(&p, 30, 2, &start, &dur, &params);
        let b = score(&p, 30, 2, &start, &uniform_rows(), &params);
        assert_eq!(a, b);
    }

    #[test]
    fn floor_keeps_posterior_finite() {
        let zero = vec![[0.0; 96]; 15];
        let s = score(&ProbVector::zeros(), 10, 10, &zero, &zero, &ScoringParams::default());
        assert!((s.posterior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.confidence.is_finite());
    }

    #[test]
    fn non_finite_scores_fall_back_to_uniform() {
        let mut s = [1.0; 12];
        s[3] = f64::INFINITY;
        let out = from_scores(&s);
        assert_eq!(out.label, ActivityType::Caregiving);
        assert!((out.confidence - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(ScoringParams::default().validate().is_ok());
        let bad = ScoringParams {
            alpha: [0.8, 0.5, 1.0],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ScoringParams {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    fn hist() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 2..40).prop_filter("non-zero", |v| v.iter().sum::<f64>() > 1e-6)
    }

    proptest! {
        #[test]
        fn posterior_normalized_and_confident(ps in prop::collection::vec(0.0f64..1.0, 15), slot in 0usize..96, bin in 0usize..96, seed in 0u64..1000) {
            let r = ReferenceStats::builtin();
            let start: Vec<Histogram96> = ActivityType::ALL.iter().map(|&a| *r.start_prior(a)).collect();
            let p = ProbVector::from_slice(&ps).unwrap();
            let params = ScoringParams { epsilon: 1e-4 * (1 + seed) as f64, ..Default::default() };
            let s = score(&p, slot, bin, &start, r.duration_priors(), &params);
            prop_assert!((s.posterior.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(s.confidence >= 1.0 / 12.0 - 1e-12);
            prop_assert_eq!(s.confidence, s.posterior.iter().cloned().fold(0.0, f64::max));
        }

        #[test]
        fn common_factor_leaves_posterior_unchanged(raw in prop::collection::vec(1e-6f64..1.0, 12), lambda in 1e-3f64..1e3) {
            let s: [f64; 12] = raw.clone().try_into().unwrap();
            let scaled = s.map(|x| x * lambda);
            let (a, b) = (from_scores(&s), from_scores(&scaled));
            prop_assert_eq!(a.label, b.label);
            for (x, y) in a.posterior.iter().zip(&b.posterior) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn correction_preserves_order_within_sides(h in hist(), delta in 0.0f64..0.3, cut in 0usize..40) {
            let total: f64 = h.iter().sum();
            let h: Vec<f64> = h.iter().map(|x| x / total).collect();
            let out = correct_duration_prior(&h, delta, cut);
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let c = cut.min(h.len());
            for side in [0..c, c..h.len()] {
                for i in side.clone() {
                    for j in side.clone() {
                        if h[i] < h[j] {
                            prop_assert!(out[i] <= out[j]);
                        }
                    }
                }
            }
            // mass below the cutoff never decreases
            let below = |v: &[f64]| v[..c].iter().sum::<f64>();
            prop_assert!(below(&out) >= below(&h) - 1e-12);
        }
    }
}

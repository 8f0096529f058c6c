use super::activity::{ActivityType, NUM_ACTIVITIES};
use super::prob::{ProbVector, PROB_TOLERANCE};
use super::time::{DURATION_BINS, SLOTS_PER_DAY};
use crate::error::{Error, Result};

pub type Histogram96 = [f64; 96];

/// Survey-derived reference distributions: activity shares, per-activity start-time and
/// duration histograms, and the fixed UTC offset of the study region.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStats {
    shares: ProbVector,
    start: Vec<Histogram96>,
    duration: Vec<Histogram96>,
    tz_offset_min: i32,
    empty_start: Vec<ActivityType>,
    empty_duration: Vec<ActivityType>,
}

fn normalize_rows(
    rows: Vec<Histogram96>,
    what: &str,
) -> Result<(Vec<Histogram96>, Vec<ActivityType>)> {
    if rows.len() != NUM_ACTIVITIES {
        return Err(Error::Schema(format!(
            "{what}: expected {NUM_ACTIVITIES} activity rows, got {}",
            rows.len()
        )));
    }
    let mut empty = Vec::new();
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        let activity = ActivityType::ALL[i];
        if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Schema(format!(
                "{what}: row for {activity} has negative or non-finite entries"
            )));
        }
        let total: f64 = row.iter().sum();
        if total <= PROB_TOLERANCE {
            empty.push(activity);
            out.push([0.0; 96]);
        } else {
            let mut h = row;
            h.iter_mut().for_each(|x| *x /= total);
            out.push(h);
        }
    }
    Ok((out, empty))
}

impl ReferenceStats {
    /// Build from raw (possibly unnormalized) rows. All-zero rows are kept as zero and flagged.
    pub fn new(
        shares: ProbVector,
        start: Vec<Histogram96>,
        duration: Vec<Histogram96>,
        tz_offset_min: i32,
    ) -> Result<Self> {
        let shares = shares.normalize().map_err(|_| {
            Error::Schema("activity shares are all zero or invalid".to_string())
        })?;
        let (start, empty_start) = normalize_rows(start, "START")?;
        let (duration, empty_duration) = normalize_rows(duration, "DURATION")?;
        for a in empty_start.iter().chain(&empty_duration) {
            log::warn!("reference histogram for {a} is empty; activity treated as absent");
        }
        Ok(ReferenceStats {
            shares,
            start,
            duration,
            tz_offset_min,
            empty_start,
            empty_duration,
        })
    }

    pub fn shares(&self) -> &ProbVector {
        &self.shares
    }

    pub fn share(&self, a: ActivityType) -> f64 {
        self.shares[a]
    }

    /// `P(start slot | activity)`.
    pub fn start_prior(&self, a: ActivityType) -> &Histogram96 {
        &self.start[a.index()]
    }

    /// `P(duration bin | activity)`.
    pub fn duration_prior(&self, a: ActivityType) -> &Histogram96 {
        &self.duration[a.index()]
    }

    pub fn duration_priors(&self) -> &[Histogram96] {
        &self.duration
    }

    pub fn tz_offset_min(&self) -> i32 {
        self.tz_offset_min
    }

    /// Activities whose start or duration histogram was empty on load.
    pub fn absent_activities(&self) -> Vec<ActivityType> {
        let mut v: Vec<_> = self
            .empty_start
            .iter()
            .chain(&self.empty_duration)
            .copied()
            .collect();
        v.sort();
        v.dedup();
        v
    }

    /// Replace the duration histograms (used by the duration prior correction).
    pub fn with_duration_priors(&self, duration: Vec<Histogram96>) -> Result<Self> {
        let (duration, empty_duration) = normalize_rows(duration, "DURATION")?;
        Ok(ReferenceStats {
            duration,
            empty_duration,
            ..self.clone()
        })
    }

    /// Built-in weekday priors for a single metropolitan region (UTC-8). The shapes follow
    /// typical household-survey patterns: morning commute peaks, lunch and dinner peaks,
    /// long work and home episodes, short errands and drop-offs.
    pub fn builtin() -> Self {
        use ActivityType::*;
        let mut shares = ProbVector::zeros();
        for (a, s) in [
            (Home, 0.34),
            (Work, 0.11),
            (School, 0.03),
            (Caregiving, 0.02),
            (ShopGoods, 0.10),
            (ShopServices, 0.03),
            (MealsOut, 0.08),
            (Errands, 0.05),
            (Leisure, 0.05),
            (Exercise, 0.03),
            (Social, 0.05),
            (Healthcare, 0.02),
            (Worship, 0.01),
            (Other, 0.03),
            (PickupDrop, 0.05),
        ] {
            shares[a] = s;
        }

        let start_shapes: [&[(f64, f64, f64)]; NUM_ACTIVITIES] = [
            &[(17.5, 2.0, 0.5), (12.5, 1.5, 0.15), (21.5, 1.5, 0.25), (9.5, 1.5, 0.1)],
            &[(7.75, 1.0, 0.75), (13.0, 1.0, 0.15), (18.0, 3.0, 0.1)],
            &[(7.75, 0.5, 0.85), (12.5, 1.5, 0.15)],
            &[(8.0, 1.5, 0.4), (15.0, 2.0, 0.6)],
            &[(11.0, 2.0, 0.4), (17.0, 2.5, 0.6)],
            &[(10.5, 2.0, 0.6), (15.0, 2.0, 0.4)],
            &[(12.25, 0.75, 0.45), (18.75, 1.0, 0.45), (8.0, 1.0, 0.1)],
            &[(10.0, 2.0, 0.5), (15.0, 2.0, 0.5)],
            &[(14.0, 3.0, 0.5), (19.5, 1.5, 0.5)],
            &[(7.0, 1.5, 0.45), (18.0, 1.5, 0.55)],
            &[(13.0, 3.0, 0.4), (19.5, 1.5, 0.6)],
            &[(10.0, 1.5, 0.6), (14.5, 1.5, 0.4)],
            &[(10.0, 1.5, 0.7), (18.5, 1.0, 0.3)],
            &[(12.0, 4.0, 1.0)],
            &[(7.75, 0.5, 0.5), (15.25, 0.75, 0.5)],
        ];
        let duration_shapes: [&[(f64, f64, f64)]; NUM_ACTIVITIES] = [
            &[(180.0, 0.8, 0.5), (660.0, 0.3, 0.5)],
            &[(480.0, 0.25, 0.8), (240.0, 0.5, 0.2)],
            &[(390.0, 0.2, 1.0)],
            &[(60.0, 0.8, 1.0)],
            &[(25.0, 0.7, 1.0)],
            &[(45.0, 0.7, 1.0)],
            &[(50.0, 0.5, 1.0)],
            &[(15.0, 0.7, 1.0)],
            &[(120.0, 0.7, 1.0)],
            &[(75.0, 0.5, 1.0)],
            &[(120.0, 0.8, 1.0)],
            &[(60.0, 0.6, 1.0)],
            &[(90.0, 0.4, 1.0)],
            &[(30.0, 1.0, 1.0)],
            &[(8.0, 0.6, 1.0)],
        ];
        let start = start_shapes.iter().map(|s| time_of_day_profile(s)).collect();
        let duration = duration_shapes.iter().map(|s| lognormal_profile(s)).collect();
        ReferenceStats::new(shares, start, duration, -480).expect("builtin priors are valid")
    }
}

/// Circular mixture of Gaussian bumps `(mean hour, sd hours, weight)` over 96 slots,
/// with a small floor so that every slot has support.
pub(crate) fn time_of_day_profile(bumps: &[(f64, f64, f64)]) -> Histogram96 {
    let mut h = [0.0; SLOTS_PER_DAY];
    for (slot, v) in h.iter_mut().enumerate() {
        let hour = (slot as f64 + 0.5) / 4.0;
        let mut x = 1e-3;
        for &(mean, sd, w) in bumps {
            let mut d = (hour - mean).abs();
            d = d.min(24.0 - d);
            x += w * (-0.5 * (d / sd).powi(2)).exp() / sd;
        }
        *v = x;
    }
    let total: f64 = h.iter().sum();
    h.iter_mut().for_each(|x| *x /= total);
    h
}

/// Mixture of log-normals `(median minutes, sigma, weight)` integrated over 15-minute
/// duration bins; mass beyond the last bin edge lands in the last bin.
pub(crate) fn lognormal_profile(parts: &[(f64, f64, f64)]) -> Histogram96 {
    let density = |minutes: f64| -> f64 {
        parts
            .iter()
            .map(|&(median, sigma, w)| {
                let z = (minutes.ln() - median.ln()) / sigma;
                w * (-0.5 * z * z).exp() / (minutes * sigma)
            })
            .sum()
    };
    let mut h = [0.0; DURATION_BINS];
    for (bin, v) in h.iter_mut().enumerate() {
        let upper = if bin + 1 == DURATION_BINS { 48 * 60 } else { (bin + 1) * 15 };
        let lower = bin * 15;
        // midpoint rule, 30-second steps
        let steps = (upper - lower) * 2;
        *v = (0..steps)
            .map(|k| density(lower as f64 + (k as f64 + 0.5) * 0.5) * 0.5)
            .sum::<f64>()
            + 1e-6;
    }
    let total: f64 = h.iter().sum();
    h.iter_mut().for_each(|x| *x /= total);
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_rows() -> Vec<Histogram96> {
        vec![[1.0 / 96.0; 96]; 15]
    }

    #[test]
    fn builtin_is_normalized() {
        let r = ReferenceStats::builtin();
        assert!(r.shares().is_normalized());
        for a in ActivityType::ALL {
            let s: f64 = r.start_prior(a).iter().sum();
            let d: f64 = r.duration_prior(a).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!((d - 1.0).abs() < 1e-9);
        }
        assert!(r.absent_activities().is_empty());
        // lunch peak for meals out
        let meals = r.start_prior(ActivityType::MealsOut);
        assert!(meals[49] > meals[12] * 5.0);
    }

    #[test]
    fn rows_renormalized_and_empty_flagged() {
        let mut start = vec![[4.0 / 96.0; 96]; 15];
        start[13] = [0.0; 96];
        let r = ReferenceStats::new(ProbVector::uniform(), start, uniform_rows(), 0).unwrap();
        assert!((r.start_prior(ActivityType::Home).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(r.absent_activities(), vec![ActivityType::Other]);
    }

    #[test]
    fn missing_rows_are_schema_errors() {
        let start = vec![[1.0; 96]; 14];
        assert!(matches!(
            ReferenceStats::new(ProbVector::uniform(), start, uniform_rows(), 0),
            Err(Error::Schema(_))
        ));
    }
}

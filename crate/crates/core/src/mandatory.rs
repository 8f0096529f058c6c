//! Home and Work/School anchor identification by bidding over an agent's recurrent
//! locations, with margin-based confidence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    is_weekend, local_day, to_local, ActivityType, Histogram96, Inference, Instant, ProbVector,
    ReferenceStats, Staypoint, DAY_SECONDS, SLOTS_PER_DAY, SLOT_SECONDS,
};
use crate::staypoints::CandidateLocation;

/// Home, Work, School in that order.
pub const MANDATORY: [ActivityType; 3] = ActivityType::MANDATORY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MandatoryParams {
    /// Daily caps on time evidence for Home, Work, School, as fractions of a day's prior mass.
    pub tau: [f64; 3],
    /// Existence threshold as a fraction of the median winning Home bid across agents.
    pub theta_exist_factor: f64,
    /// Let Work and School bid separately and take the stronger, instead of bidding on
    /// Work and choosing the type by spatial evidence.
    pub per_activity_bidding: bool,
}

impl Default for MandatoryParams {
    fn default() -> Self {
        MandatoryParams {
            tau: [1.0, 0.6, 0.5],
            theta_exist_factor: 0.05,
            per_activity_bidding: false,
        }
    }
}

/// `∫ P_ref(t) dt` over `[t_start, t_end]`: the slot masses weighted by the fraction of
/// each 15-minute slot the stay overlaps.
pub fn stay_integral(prior: &Histogram96, t_start: Instant, t_end: Instant, tz_offset_min: i32) -> f64 {
    if t_end <= t_start {
        return 0.0;
    }
    let (start, end) = (to_local(t_start, tz_offset_min), to_local(t_end, tz_offset_min));
    let day_mass: f64 = prior.iter().sum();
    let mut total = 0.0;
    let mut t = start;
    while t < end {
        let slot_start = t.div_euclid(SLOT_SECONDS) * SLOT_SECONDS;
        // whole days at once when aligned to midnight
        if t.rem_euclid(DAY_SECONDS) == 0 && end - t >= DAY_SECONDS {
            let days = (end - t) / DAY_SECONDS;
            total += days as f64 * day_mass;
            t += days * DAY_SECONDS;
            continue;
        }
        let slot_end = (slot_start + SLOT_SECONDS).min(end);
        let slot = (slot_start.rem_euclid(DAY_SECONDS) / SLOT_SECONDS) as usize % SLOTS_PER_DAY;
        total += prior[slot] * (slot_end - t) as f64 / SLOT_SECONDS as f64;
        t = slot_end;
    }
    total
}

/// Raw (uncapped) time evidence of one staypoint for each mandatory activity, attributed
/// to the local day on which the stay starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StayEvidence {
    pub day: i64,
    pub raw: [f64; 3],
}

impl StayEvidence {
    pub fn of(s: &Staypoint, reference: &ReferenceStats) -> Self {
        let tz = reference.tz_offset_min();
        let raw = MANDATORY.map(|a| stay_integral(reference.start_prior(a), s.t_start, s.t_end, tz));
        StayEvidence {
            day: local_day(s.t_start, tz),
            raw,
        }
    }
}

/// `P_time(a|ℓ)` for Home, Work, School: per-day sums capped at `τ_a`, then summed over
/// days. Work and School get nothing on weekend days.
pub fn time_evidence<'a>(stays: impl IntoIterator<Item = &'a StayEvidence>, tau: [f64; 3]) -> [f64; 3] {
    let mut per_day: BTreeMap<i64, [f64; 3]> = BTreeMap::new();
    for e in stays {
        let d = per_day.entry(e.day).or_default();
        for k in 0..3 {
            d[k] += e.raw[k];
        }
    }
    let mut out = [0.0; 3];
    for (day, sums) in per_day {
        let weekend = is_weekend(day);
        for k in 0..3 {
            if k > 0 && weekend {
                continue;
            }
            out[k] += sums[k].min(tau[k]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bid {
    pub location_id: usize,
    pub p_time: [f64; 3],
    pub w_stab: f64,
    pub p_space: [f64; 3],
    pub score: [f64; 3],
}

impl Bid {
    pub fn new(location_id: usize, p_time: [f64; 3], days: usize, p_space: &ProbVector) -> Self {
        let w_stab = (1.0 + days as f64).log2();
        let p_space = MANDATORY.map(|a| p_space[a]);
        let score = [0, 1, 2].map(|k| p_time[k] * w_stab * p_space[k]);
        Bid {
            location_id,
            p_time,
            w_stab,
            p_space,
            score,
        }
    }

    pub fn get(&self, a: ActivityType) -> f64 {
        self.score[a.index()]
    }
}

/// Bids of every candidate location, ordered by location id.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BidTable {
    pub bids: Vec<Bid>,
}

impl BidTable {
    /// Bids for the candidate locations (≥ 2 visit days) among `clusters`.
    pub fn build(
        clusters: &[CandidateLocation],
        evidence: &[StayEvidence],
        p_space: impl Fn(&CandidateLocation) -> ProbVector,
        tau: [f64; 3],
    ) -> Self {
        let mut bids: Vec<Bid> = clusters
            .iter()
            .filter(|c| c.is_candidate())
            .map(|c| {
                let p_time = time_evidence(c.member_staypoints.iter().map(|&m| &evidence[m]), tau);
                Bid::new(c.location_id, p_time, c.visit_days.len(), &p_space(c))
            })
            .collect();
        bids.sort_by_key(|b| b.location_id);
        BidTable { bids }
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty()
    }

    /// Winning Home bid, if any candidate exists.
    pub fn top_home_bid(&self) -> Option<f64> {
        argmax(self.bids.iter(), ActivityType::Home).map(|b| b.get(ActivityType::Home))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomeAnchor {
    pub location_id: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondAnchor {
    pub location_id: usize,
    pub activity: ActivityType,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MandatoryAssignment {
    pub home: Option<HomeAnchor>,
    pub mandatory2: Option<SecondAnchor>,
}

/// Highest bid for `a`; ties go to the lowest location id.
fn argmax<'a>(bids: impl Iterator<Item = &'a Bid>, a: ActivityType) -> Option<&'a Bid> {
    bids.fold(None, |best: Option<&Bid>, b| match best {
        Some(x) if x.get(a) > b.get(a) || (x.get(a) == b.get(a) && x.location_id < b.location_id) => Some(x),
        _ => Some(b),
    })
}

fn margin(best: f64, runner_up: Option<f64>) -> f64 {
    match runner_up {
        None => 1.0,
        Some(_) if best <= 0.0 => 0.0,
        Some(r) => ((best - r) / best).clamp(0.0, 1.0),
    }
}

/// Select the home anchor and an optional Work/School anchor from a bid table.
///
/// An empty table yields an empty assignment; a table whose Home bids are all zero is
/// [`Error::NoHomeEvidence`].
pub fn run_bidding(table: &BidTable, theta_exist: f64, per_activity_bidding: bool) -> Result<MandatoryAssignment> {
    use ActivityType::{Home, School, Work};
    let Some(home) = argmax(table.bids.iter(), Home) else {
        return Ok(MandatoryAssignment::default());
    };
    if !(home.get(Home) > 0.0) {
        return Err(Error::NoHomeEvidence);
    }
    let others = || table.bids.iter().filter(|b| b.location_id != home.location_id);
    let home_anchor = HomeAnchor {
        location_id: home.location_id,
        confidence: margin(home.get(Home), argmax(others(), Home).map(|b| b.get(Home))),
    };

    let chosen = if per_activity_bidding {
        let w = argmax(others(), Work);
        let s = argmax(others(), School);
        match (w, s) {
            (Some(w), Some(s)) if s.get(School) > w.get(Work) => Some((s, School)),
            (Some(w), _) => Some((w, Work)),
            _ => None,
        }
        .filter(|(b, a)| b.get(*a) >= theta_exist)
    } else {
        argmax(others(), Work).filter(|b| b.get(Work) >= theta_exist).map(|b| {
            let a = if b.p_space[School.index()] > b.p_space[Work.index()] { School } else { Work };
            (b, a)
        })
    };
    let mandatory2 = chosen.map(|(b, a)| {
        let rest = others().filter(|x| x.location_id != b.location_id);
        SecondAnchor {
            location_id: b.location_id,
            activity: a,
            confidence: margin(b.get(a), argmax(rest, a).map(|x| x.get(a))),
        }
    });
    Ok(MandatoryAssignment {
        home: Some(home_anchor),
        mandatory2,
    })
}

/// Label every member of the anchor clusters; other staypoints are left untouched.
pub fn label_mandatory(
    staypoints: &mut [Staypoint],
    clusters: &[CandidateLocation],
    assignment: &MandatoryAssignment,
) {
    let mut apply = |location_id: usize, activity: ActivityType, confidence: f64| {
        if let Some(c) = clusters.iter().find(|c| c.location_id == location_id) {
            for &m in &c.member_staypoints {
                staypoints[m].inference = Some(Inference { activity, confidence });
            }
        }
    };
    if let Some(h) = assignment.home {
        apply(h.location_id, ActivityType::Home, h.confidence);
    }
    if let Some(m) = assignment.mandatory2 {
        apply(m.location_id, m.activity, m.confidence);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Poi;
    use crate::model::{AgentId, LatLon};
    use crate::staypoints::cluster_agent_staypoints;
    use crate::zones::{build_zones, ZoneIndex};
    use proptest::prelude::*;

    const TZ: i32 = -480;
    // 2024-01-01, a Monday
    const MONDAY: i64 = 19_723;

    fn local(day: i64, hour: f64) -> Instant {
        day * DAY_SECONDS + (hour * 3600.0) as i64 - TZ as i64 * 60
    }

    fn uniform_prior() -> Histogram96 {
        [1.0 / 96.0; 96]
    }

    #[test]
    fn full_day_uniform_integral_is_one() {
        let p = uniform_prior();
        let v = stay_integral(&p, local(MONDAY, 0.0), local(MONDAY + 1, 0.0), TZ);
        assert!((v - 1.0).abs() < 1e-12);
        // unaligned 24 h window too
        let v = stay_integral(&p, local(MONDAY, 7.1), local(MONDAY + 1, 7.1), TZ);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integral_matches_minute_sum() {
        let r = ReferenceStats::builtin();
        let prior = r.start_prior(ActivityType::Work);
        let (a, b) = (local(MONDAY, 6.37), local(MONDAY + 2, 3.9));
        let mut slow = 0.0;
        let mut t = a;
        while t < b {
            let slot = (crate::model::to_local(t, TZ).rem_euclid(DAY_SECONDS) / 900) as usize;
            slow += prior[slot] / 900.0;
            t += 1;
        }
        assert!((stay_integral(prior, a, b, TZ) - slow).abs() < 1e-9);
    }

    fn ev(day: i64, raw: f64) -> StayEvidence {
        StayEvidence { day, raw: [raw; 3] }
    }

    #[test]
    fn repeated_days_add_up() {
        let stays = [ev(MONDAY, 1.0), ev(MONDAY + 1, 1.0), ev(MONDAY + 2, 1.0)];
        let t = time_evidence(&stays, [f64::INFINITY; 3]);
        assert!((t[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn daily_cap_applies_to_sum() {
        let stays = [ev(MONDAY, 0.4), ev(MONDAY, 0.5)];
        let t = time_evidence(&stays, [0.6; 3]);
        assert!((t[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn weekends_carry_no_work_evidence() {
        let saturday = MONDAY + 5;
        let t = time_evidence(&[ev(saturday, 0.5), ev(saturday + 1, 0.5)], [1.0; 3]);
        assert_eq!(t[1], 0.0);
        assert_eq!(t[2], 0.0);
        assert!((t[0] - 1.0).abs() < 1e-12);
    }

    fn bid(id: usize, home: f64, work: f64, p_space_school: f64) -> Bid {
        Bid {
            location_id: id,
            p_time: [1.0; 3],
            w_stab: 1.0,
            p_space: [home, work, p_space_school],
            score: [home, work, p_space_school],
        }
    }

    #[test]
    fn single_candidate_has_full_confidence() {
        let t = BidTable { bids: vec![bid(0, 2.0, 0.0, 0.0)] };
        let a = run_bidding(&t, 0.1, false).unwrap();
        assert_eq!(a.home, Some(HomeAnchor { location_id: 0, confidence: 1.0 }));
        assert!(a.mandatory2.is_none());
    }

    #[test]
    fn equal_home_bids_tie_to_lowest_id_with_zero_confidence() {
        let t = BidTable { bids: vec![bid(3, 2.0, 0.0, 0.0), bid(1, 2.0, 0.0, 0.0)] };
        let a = run_bidding(&t, 10.0, false).unwrap();
        assert_eq!(a.home, Some(HomeAnchor { location_id: 1, confidence: 0.0 }));
    }

    #[test]
    fn zero_home_bids_are_an_error() {
        let t = BidTable { bids: vec![bid(0, 0.0, 1.0, 0.0), bid(1, 0.0, 1.0, 0.0)] };
        assert!(matches!(run_bidding(&t, 0.0, false), Err(Error::NoHomeEvidence)));
        assert_eq!(run_bidding(&BidTable::default(), 0.0, false).unwrap(), MandatoryAssignment::default());
    }

    #[test]
    fn existence_threshold_gates_second_anchor() {
        let t = BidTable { bids: vec![bid(0, 5.0, 0.1, 0.0), bid(1, 1.0, 2.0, 0.0)] };
        assert!(run_bidding(&t, 2.5, false).unwrap().mandatory2.is_none());
        let m = run_bidding(&t, 1.5, false).unwrap().mandatory2.unwrap();
        assert_eq!((m.location_id, m.activity, m.confidence), (1, ActivityType::Work, 1.0));
    }

    #[test]
    fn school_chosen_by_spatial_evidence() {
        let mut b = bid(1, 1.0, 2.0, 3.0);
        b.p_space = [0.1, 0.2, 0.6];
        let t = BidTable { bids: vec![bid(0, 5.0, 0.0, 0.0), b] };
        let m = run_bidding(&t, 0.5, false).unwrap().mandatory2.unwrap();
        assert_eq!(m.activity, ActivityType::School);
    }

    #[test]
    fn label_mandatory_partitions() {
        let a = AgentId::new("a");
        let mut sps: Vec<Staypoint> = (0..7)
            .map(|k| Staypoint::new(a.clone(), LatLon::new(34.0, -118.0), k * 10_000, k * 10_000 + 600).unwrap())
            .collect();
        let cluster = |id: usize, m: Vec<usize>| CandidateLocation {
            location_id: id,
            centroid: LatLon::new(34.0, -118.0),
            member_staypoints: m,
            visit_days: [1, 2].into(),
            radius_m: 0.0,
        };
        let clusters = vec![cluster(0, vec![0, 1, 2, 3, 4]), cluster(1, vec![5, 6])];
        label_mandatory(&mut sps, &clusters, &MandatoryAssignment::default());
        assert!(sps.iter().all(|s| s.inference.is_none()));
        let asg = MandatoryAssignment {
            home: Some(HomeAnchor { location_id: 0, confidence: 0.7 }),
            mandatory2: None,
        };
        label_mandatory(&mut sps, &clusters, &asg);
        assert!(sps[..5].iter().all(|s| s.label() == Some(ActivityType::Home) && s.confidence() == Some(0.7)));
        assert!(sps[5..].iter().all(|s| s.inference.is_none()));
    }

    /// Three-location week: home nightly, office on weekdays, café twice.
    fn three_location_agent() -> (Vec<Staypoint>, Vec<Poi>, LatLon, LatLon) {
        let home = LatLon::new(34.05, -118.25);
        let work = home.offset(4000.0, 1000.0);
        let cafe = home.offset(-2500.0, 3000.0);
        let agent = AgentId::new("u");
        let mut sps = Vec::new();
        for d in 0..7 {
            let day = MONDAY + d;
            sps.push(Staypoint::new(agent.clone(), home, local(day, 0.0), local(day, 8.0)).unwrap());
            if d < 5 {
                sps.push(Staypoint::new(agent.clone(), work, local(day, 9.0), local(day, 17.0)).unwrap());
            }
            if d == 2 || d == 5 {
                sps.push(Staypoint::new(agent.clone(), cafe, local(day, 18.0), local(day, 19.0)).unwrap());
            }
        }
        let table = crate::ingest::EnrichmentTable::builtin();
        let mk = |loc: LatLon, cat: &str| -> Vec<Poi> {
            (0..3)
                .map(|k| Poi {
                    poi_id: format!("{cat}{k}"),
                    location: loc.offset(k as f64 * 5.0, 0.0),
                    category: cat.into(),
                    activity_dist: *table.get(cat).unwrap(),
                    name: None,
                })
                .collect()
        };
        let mut pois = mk(home, "house");
        pois.extend(mk(work, "office"));
        pois.extend(mk(cafe, "cafe"));
        (sps, pois, home, work)
    }

    /// Direct evaluation of the bid formula with minute-resolution integrals, then an
    /// exhaustive search over (home location, second location, type) triples.
    fn oracle(
        sps: &[Staypoint],
        clusters: &[CandidateLocation],
        idx: &ZoneIndex,
        r: &ReferenceStats,
        tau: [f64; 3],
        theta: f64,
    ) -> (usize, Option<(usize, ActivityType)>) {
        let cands: Vec<&CandidateLocation> = clusters.iter().filter(|c| c.visit_days.len() >= 2).collect();
        let b = |c: &CandidateLocation, a: ActivityType| -> f64 {
            let mut days: BTreeMap<i64, f64> = BTreeMap::new();
            for &m in &c.member_staypoints {
                let s = &sps[m];
                let day = local_day(s.t_start, TZ);
                let mut sum = 0.0;
                let mut t = s.t_start;
                while t < s.t_end {
                    let slot = (to_local(t, TZ).rem_euclid(DAY_SECONDS) / 900) as usize;
                    sum += r.start_prior(a)[slot] * 60.0 / 900.0;
                    t += 60;
                }
                *days.entry(day).or_default() += sum;
            }
            let pt: f64 = days
                .iter()
                .filter(|(d, _)| a == ActivityType::Home || !is_weekend(**d))
                .map(|(_, v)| v.min(tau[a.index()]))
                .sum();
            pt * (1.0 + c.visit_days.len() as f64).log2() * idx.spatial_likelihood(&c.centroid).dist[a]
        };
        let mut best: Option<(f64, f64, usize, Option<(usize, ActivityType)>)> = None;
        for h in &cands {
            for second in std::iter::once(None).chain(cands.iter().filter(|c| c.location_id != h.location_id).map(Some)) {
                let bh = b(h, ActivityType::Home);
                let (bw, pick) = match second {
                    None => (f64::NEG_INFINITY, None),
                    Some(c) => {
                        let sp = idx.spatial_likelihood(&c.centroid).dist;
                        let a = if sp[ActivityType::School] > sp[ActivityType::Work] { ActivityType::School } else { ActivityType::Work };
                        let w = b(c, ActivityType::Work);
                        (w, (w >= theta).then_some((c.location_id, a)))
                    }
                };
                let key = (bh, bw);
                if best.as_ref().is_none_or(|x| key.0 > x.0 || (key.0 == x.0 && key.1 > x.1)) {
                    best = Some((bh, bw, h.location_id, pick));
                }
            }
        }
        let (_, _, h, m) = best.unwrap();
        (h, m)
    }

    #[test]
    fn three_location_agent_matches_exhaustive_oracle() {
        let r = ReferenceStats::builtin();
        let (mut sps, pois, home, work) = three_location_agent();
        let clusters = cluster_agent_staypoints(&sps, 100.0, 1, TZ);
        crate::staypoints::snap_to_clusters(&mut sps, &clusters);
        let idx = ZoneIndex::new(build_zones(&pois, 100.0, 3), 150.0, 500.0).unwrap();
        let params = MandatoryParams::default();
        let evidence: Vec<StayEvidence> = sps.iter().map(|s| StayEvidence::of(s, &r)).collect();
        let table = BidTable::build(&clusters, &evidence, |c| idx.spatial_likelihood(&c.centroid).dist, params.tau);
        let theta = 0.05 * table.top_home_bid().unwrap();
        let asg = run_bidding(&table, theta, false).unwrap();

        let (oh, om) = oracle(&sps, &clusters, &idx, &r, params.tau, theta);
        let h = asg.home.unwrap();
        assert_eq!(h.location_id, oh);
        let m = asg.mandatory2.unwrap();
        assert_eq!(Some((m.location_id, m.activity)), om);

        let loc = |id: usize| clusters.iter().find(|c| c.location_id == id).unwrap().centroid;
        assert!(crate::model::haversine(loc(h.location_id), home) < 1.0);
        assert!(crate::model::haversine(loc(m.location_id), work) < 1.0);
        assert_eq!(m.activity, ActivityType::Work);
        assert!(h.confidence > 0.5 && m.confidence > 0.5);
    }

    fn bids_strategy() -> impl Strategy<Value = Vec<Bid>> {
        prop::collection::vec((0.0f64..10.0, 0.0f64..10.0, 0.0f64..1.0, 0.0f64..1.0), 1..8).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (h, w, ps, pw))| Bid {
                    location_id: i,
                    p_time: [h, w, w],
                    w_stab: 1.0,
                    p_space: [1.0, pw, ps],
                    score: [h, w * pw, w * ps],
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn home_selection_is_scale_invariant(bids in bids_strategy(), lambda in 0.01f64..100.0) {
            let t = BidTable { bids: bids.clone() };
            let scaled = BidTable {
                bids: bids.iter().map(|b| Bid { score: [b.score[0] * lambda, b.score[1], b.score[2]], ..*b }).collect(),
            };
            match (run_bidding(&t, 0.5, false), run_bidding(&scaled, 0.5, false)) {
                (Ok(a), Ok(b)) => {
                    let (ha, hb) = (a.home.unwrap(), b.home.unwrap());
                    prop_assert_eq!(ha.location_id, hb.location_id);
                    prop_assert!((ha.confidence - hb.confidence).abs() < 1e-9);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "scaling changed evidence existence"),
            }
        }

        #[test]
        fn confidences_stay_in_unit_interval(bids in bids_strategy(), theta in 0.0f64..5.0, prose in any::<bool>()) {
            if let Ok(a) = run_bidding(&BidTable { bids }, theta, prose) {
                for c in a.home.map(|h| h.confidence).into_iter().chain(a.mandatory2.map(|m| m.confidence)) {
                    prop_assert!((0.0..=1.0).contains(&c));
                }
                if let (Some(h), Some(m)) = (a.home, a.mandatory2) {
                    prop_assert_ne!(h.location_id, m.location_id);
                }
            }
        }

        #[test]
        fn smaller_cap_never_raises_evidence(raws in prop::collection::vec((0i64..10, 0.0f64..1.0), 0..20), tau in 0.0f64..1.0, cut in 0.0f64..1.0) {
            let stays: Vec<StayEvidence> = raws.iter().map(|&(d, r)| ev(MONDAY + d, r)).collect();
            let hi = time_evidence(&stays, [tau; 3]);
            let lo = time_evidence(&stays, [tau * cut; 3]);
            for k in 0..3 {
                prop_assert!(lo[k] <= hi[k] + 1e-12);
            }
        }

        #[test]
        fn weekend_visits_never_raise_work_evidence(raws in prop::collection::vec((0i64..14, 0.0f64..1.0), 0..20), extra in prop::collection::vec((0i64..2, 0.0f64..1.0), 1..6)) {
            let mut stays: Vec<StayEvidence> = raws.iter().map(|&(d, r)| ev(MONDAY + d, r)).collect();
            let before = time_evidence(&stays, [0.6; 3]);
            // Saturdays and Sundays of the first week
            stays.extend(extra.iter().map(|&(d, r)| ev(MONDAY + 5 + d, r)));
            let after = time_evidence(&stays, [0.6; 3]);
            prop_assert!(after[1] <= before[1] + 1e-12);
            prop_assert!(after[2] <= before[2] + 1e-12);
        }
    }
}

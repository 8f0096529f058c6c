//! Seeded synthetic metro region with known ground truth.
//!
//! The region is a jittered lattice of sites. Each site is residential, an office, a
//! school, or a single-category commercial cluster of 3-5 POIs. Agents live at a
//! residential site, optionally commute on weekdays to an office or school, and make
//! non-mandatory trips to commercial sites whose dominant activity is the true purpose.
//! Visit start times and durations are drawn from the reference priors.
//!
//! Plans (sites, visits, ground truth) are materialized; pings are regenerated per agent
//! on demand from a per-agent RNG stream, so corpora far larger than memory can be
//! streamed and regenerated identically.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AgentPings, EnrichmentTable, PingCorpus, Poi, RawPing};
use crate::model::{
    haversine, is_weekend, ActivityType, AgentId, Instant, LatLon, LocalFrame, ReferenceStats,
    DAY_SECONDS, SLOT_SECONDS,
};

/// 2024-01-01, a Monday.
pub const DEFAULT_FIRST_DAY: i64 = 19_723;

const MIN_STAY_S: i64 = 360;
const MIN_HOME_STAY_S: f64 = 1200.0;
const MIN_SEPARATION_M: f64 = 500.0;
const MIN_ANCHOR_DISTANCE_M: f64 = 1000.0;
const MIN_DIRECT_SPEED: f64 = 3.0;
/// Travel pings closer than this to either endpoint are suppressed so stay boundaries
/// are exactly the arrival and departure instants.
const TRAVEL_PING_CLEARANCE_M: f64 = 300.0;
const PLACEMENT_ATTEMPTS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn is_empty(&self) -> bool {
        !(self.min_lat < self.max_lat && self.min_lon < self.max_lon)
    }

    pub fn center(&self) -> LatLon {
        LatLon::new(
            (self.min_lat + self.max_lat) / 2.0,
            (self.min_lon + self.max_lon) / 2.0,
        )
    }
}

impl Default for BoundingBox {
    /// Roughly 16 km x 16 km around downtown Los Angeles.
    fn default() -> Self {
        BoundingBox {
            min_lat: 33.978,
            min_lon: -118.337,
            max_lat: 34.122,
            max_lon: -118.163,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub agents: usize,
    pub days: u32,
    /// Local calendar day (days since 1970-01-01) of the first simulated day.
    pub first_day: i64,
    pub bbox: BoundingBox,
    /// Standard deviation of the isotropic GPS noise added to every ping, metres.
    pub gps_noise_m: f64,
    pub site_spacing_m: f64,
    pub worker_fraction: f64,
    pub student_fraction: f64,
    /// Mean number of non-mandatory trips per day.
    pub trips_per_day: f64,
    pub max_trips_per_day: u32,
    pub min_ping_interval_s: i64,
    pub max_ping_interval_s: i64,
    pub travel_speed_mps: f64,
    /// Agents never leave home.
    pub home_only: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            agents: 100,
            days: 14,
            first_day: DEFAULT_FIRST_DAY,
            bbox: BoundingBox::default(),
            gps_noise_m: 10.0,
            site_spacing_m: 350.0,
            worker_fraction: 0.6,
            student_fraction: 0.15,
            trips_per_day: 1.5,
            max_trips_per_day: 4,
            min_ping_interval_s: 60,
            max_ping_interval_s: 300,
            travel_speed_mps: 8.0,
            home_only: false,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.bbox.is_empty() {
            return Err(Error::Config("synthetic bounding box is empty".into()));
        }
        let checks = [
            (self.agents > 0, "agents must be positive"),
            (self.days > 0, "days must be positive"),
            (self.gps_noise_m >= 0.0, "gps_noise_m must be non-negative"),
            (self.site_spacing_m >= 250.0, "site_spacing_m must be at least 250"),
            (
                (0.0..=1.0).contains(&self.worker_fraction)
                    && (0.0..=1.0).contains(&self.student_fraction)
                    && self.worker_fraction + self.student_fraction <= 1.0,
                "worker and student fractions must lie in [0, 1] and sum to at most 1",
            ),
            (self.trips_per_day >= 0.0, "trips_per_day must be non-negative"),
            (
                self.min_ping_interval_s > 0 && self.min_ping_interval_s <= self.max_ping_interval_s,
                "ping intervals must satisfy 0 < min <= max",
            ),
            (self.travel_speed_mps > MIN_DIRECT_SPEED, "travel_speed_mps must exceed 3"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteKind {
    Residential,
    Office,
    School,
    Commercial(ActivityType),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Site {
    pub center: LatLon,
    pub kind: SiteKind,
    pub category: String,
}

/// One planned stay of an agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueVisit {
    pub start: Instant,
    pub end: Instant,
    pub activity: ActivityType,
    pub location: LatLon,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentTruth {
    pub agent: AgentId,
    pub home: LatLon,
    /// Work or School anchor, visited on weekdays only.
    pub anchor: Option<(ActivityType, LatLon)>,
    /// Contiguous, time-ordered stays covering the whole horizon.
    pub visits: Vec<TrueVisit>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SyntheticGroundTruth {
    pub agents: Vec<AgentTruth>,
    #[serde(skip)]
    index: HashMap<AgentId, usize>,
}

impl SyntheticGroundTruth {
    pub fn agent(&self, id: &AgentId) -> Option<&AgentTruth> {
        self.index.get(id).map(|&i| &self.agents[i])
    }

    /// True activity of the visit overlapping `[t_start, t_end]` the most.
    pub fn label_for(&self, id: &AgentId, t_start: Instant, t_end: Instant) -> Option<ActivityType> {
        let truth = self.agent(id)?;
        let first = truth.visits.partition_point(|v| v.end < t_start);
        truth.visits[first..]
            .iter()
            .take_while(|v| v.start <= t_end)
            .map(|v| (v.end.min(t_end) - v.start.max(t_start), v.activity))
            .max_by_key(|&(overlap, a)| (overlap, std::cmp::Reverse(a)))
            .map(|(_, a)| a)
    }
}

/// Generated region, POIs, plans and ground truth; pings are produced per agent on demand.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    config: SyntheticConfig,
    seed: u64,
    frame: LocalFrame,
    sites: Vec<Site>,
    pois: Vec<Poi>,
    truth: SyntheticGroundTruth,
}

fn agent_rng(seed: u64, agent: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((agent as u64) << 2 | purpose);
    rng
}

const STREAM_PLAN: u64 = 0;
const STREAM_PINGS: u64 = 1;

fn sample_within<R: Rng>(rng: &mut R, hist: &WeightedIndex<f64>, unit: i64) -> i64 {
    hist.sample(rng) as i64 * unit + rng.random_range(0..unit)
}

fn disk_offset<R: Rng>(rng: &mut R, frame: &LocalFrame, p: LatLon, radius: f64) -> LatLon {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    frame.offset(p, r * theta.cos(), r * theta.sin())
}

pub fn generate_synthetic(
    config: &SyntheticConfig,
    reference: &ReferenceStats,
    seed: u64,
) -> Result<SyntheticWorld> {
    config.validate()?;
    let table = EnrichmentTable::builtin();
    let frame = LocalFrame::at_latitude(config.bbox.center().lat);
    let (sites, pois) = build_region(config, &table, &frame, seed);
    let planner = Planner::new(config, reference, &sites, frame)?;
    let agents: Vec<AgentTruth> = (0..config.agents)
        .map(|i| planner.plan_agent(i, &mut agent_rng(seed, i, STREAM_PLAN)))
        .collect();
    let index = agents.iter().enumerate().map(|(i, a)| (a.agent.clone(), i)).collect();
    Ok(SyntheticWorld {
        config: config.clone(),
        seed,
        frame,
        sites,
        pois,
        truth: SyntheticGroundTruth { agents, index },
    })
}

fn build_region(
    config: &SyntheticConfig,
    table: &EnrichmentTable,
    frame: &LocalFrame,
    seed: u64,
) -> (Vec<Site>, Vec<Poi>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let categories = |a: ActivityType| table.categories_for(a);
    let residential = ["house", "residential", "apartments"];
    let office = categories(ActivityType::Work);
    let school = categories(ActivityType::School);
    let commercial: Vec<(ActivityType, Vec<&str>)> = ActivityType::NON_MANDATORY
        .iter()
        .map(|&a| (a, categories(a)))
        .collect();

    let bb = config.bbox;
    let origin = LatLon::new(bb.min_lat, bb.min_lon);
    let (width, height) = frame.delta(origin, LatLon::new(bb.max_lat, bb.max_lon));
    let s = config.site_spacing_m;
    let jitter = 0.1 * s;
    let (nx, ny) = ((width / s).floor() as usize, (height / s).floor() as usize);

    let mut sites = Vec::with_capacity(nx * ny);
    let mut pois = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let east = (ix as f64 + 0.5) * s + rng.random_range(-jitter..jitter);
            let north = (iy as f64 + 0.5) * s + rng.random_range(-jitter..jitter);
            let center = frame.offset(origin, east, north);
            let u: f64 = rng.random();
            let (kind, pool): (SiteKind, &[&str]) = if u < 0.5 {
                (SiteKind::Residential, &residential)
            } else if u < 0.62 {
                (SiteKind::Office, &office)
            } else if u < 0.66 {
                (SiteKind::School, &school)
            } else {
                let (a, cats) = &commercial[rng.random_range(0..commercial.len())];
                (SiteKind::Commercial(*a), cats)
            };
            let category = pool[rng.random_range(0..pool.len())].to_string();
            let site_id = sites.len();
            for k in 0..rng.random_range(3..=5) {
                pois.push(Poi {
                    poi_id: format!("s{site_id}p{k}"),
                    location: disk_offset(&mut rng, frame, center, 30.0),
                    activity_dist: *table.get(&category).expect("category from table"),
                    category: category.clone(),
                    name: None,
                });
            }
            sites.push(Site {
                center,
                kind,
                category,
            });
        }
    }
    (sites, pois)
}

#[derive(Debug, Clone, Copy)]
struct Stop {
    start: Instant,
    end: Instant,
    activity: ActivityType,
    location: LatLon,
}

struct Planner<'a> {
    config: &'a SyntheticConfig,
    frame: LocalFrame,
    tz_offset_min: i32,
    sites: &'a [Site],
    residential: Vec<usize>,
    offices: Vec<usize>,
    schools: Vec<usize>,
    by_type: HashMap<ActivityType, Vec<usize>>,
    trip_types: WeightedIndex<f64>,
    start: Vec<WeightedIndex<f64>>,
    duration: Vec<WeightedIndex<f64>>,
}

impl<'a> Planner<'a> {
    fn new(
        config: &'a SyntheticConfig,
        reference: &ReferenceStats,
        sites: &'a [Site],
        frame: LocalFrame,
    ) -> Result<Self> {
        let of_kind = |pred: &dyn Fn(SiteKind) -> bool| -> Vec<usize> {
            sites.iter().enumerate().filter(|(_, s)| pred(s.kind)).map(|(i, _)| i).collect()
        };
        let residential = of_kind(&|k| k == SiteKind::Residential);
        let offices = of_kind(&|k| k == SiteKind::Office);
        let schools = of_kind(&|k| k == SiteKind::School);
        if residential.is_empty() {
            return Err(Error::Config("bounding box too small for a residential site".into()));
        }
        let mut by_type: HashMap<ActivityType, Vec<usize>> = HashMap::new();
        for (i, s) in sites.iter().enumerate() {
            if let SiteKind::Commercial(a) = s.kind {
                by_type.entry(a).or_default().push(i);
            }
        }
        // Only purposes with at least one site and prior mass can be sampled.
        let absent = reference.absent_activities();
        let weights: Vec<f64> = ActivityType::NON_MANDATORY
            .iter()
            .map(|a| {
                if by_type.contains_key(a) && !absent.contains(a) {
                    reference.share(*a)
                } else {
                    0.0
                }
            })
            .collect();
        let trip_types = WeightedIndex::new(&weights)
            .map_err(|_| Error::Config("no non-mandatory purpose has sites and prior mass".into()))?;
        let hist = |h: &[f64; 96]| {
            WeightedIndex::new(h.iter().map(|x| x.max(0.0) + 1e-12))
                .expect("histogram weights are finite and positive")
        };
        Ok(Planner {
            config,
            frame,
            tz_offset_min: reference.tz_offset_min(),
            sites,
            residential,
            offices,
            schools,
            by_type,
            trip_types,
            start: ActivityType::ALL.iter().map(|&a| hist(reference.start_prior(a))).collect(),
            duration: ActivityType::ALL
                .iter()
                .map(|&a| hist(reference.duration_prior(a)))
                .collect(),
        })
    }

    fn midnight_utc(&self, day: i64) -> Instant {
        day * DAY_SECONDS - i64::from(self.tz_offset_min) * 60
    }

    fn travel_s(&self, a: LatLon, b: LatLon) -> f64 {
        haversine(a, b) / self.config.travel_speed_mps
    }

    /// Whether an agent can get from `from` to `to` either directly at a plausible driving
    /// speed or through a home stay of at least twenty minutes.
    fn gap_ok(&self, from: &Stop, to: &Stop, home: LatLon) -> bool {
        let gap = (to.start - from.end) as f64;
        let via_home = self.travel_s(from.location, home) + self.travel_s(home, to.location) + MIN_HOME_STAY_S + 2.0;
        if gap >= via_home {
            return true;
        }
        let d = haversine(from.location, to.location);
        d >= MIN_SEPARATION_M
            && gap >= d / self.config.travel_speed_mps
            && gap <= d / MIN_DIRECT_SPEED
    }

    fn try_insert(&self, stops: &mut Vec<Stop>, cand: Stop, home: LatLon, bounds: (Stop, Stop)) -> bool {
        let i = stops.partition_point(|s| s.start < cand.start);
        let prev = if i == 0 { bounds.0 } else { stops[i - 1] };
        let next = stops.get(i).copied().unwrap_or(bounds.1);
        if prev.end > cand.start || cand.end > next.start {
            return false;
        }
        // The horizon starts and ends with a proper home stay.
        let ok_before = if i == 0 {
            (cand.start - prev.end) as f64 >= self.travel_s(home, cand.location) + MIN_HOME_STAY_S + 2.0
        } else {
            self.gap_ok(&prev, &cand, home)
        };
        let ok_after = if i == stops.len() {
            (next.start - cand.end) as f64 >= self.travel_s(cand.location, home) + MIN_HOME_STAY_S + 2.0
        } else {
            self.gap_ok(&cand, &next, home)
        };
        if !(ok_before && ok_after) {
            return false;
        }
        stops.insert(i, cand);
        true
    }

    fn sample_stay<R: Rng>(&self, rng: &mut R, a: ActivityType, midnight: Instant) -> (Instant, Instant) {
        let start = midnight + sample_within(rng, &self.start[a.index()], SLOT_SECONDS);
        let dur = sample_within(rng, &self.duration[a.index()], SLOT_SECONDS).max(MIN_STAY_S);
        (start, start + dur)
    }

    fn pick_site<R: Rng>(&self, rng: &mut R, pool: &[usize], avoid: &[LatLon], min_d: f64) -> Option<usize> {
        (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let s = pool[rng.random_range(0..pool.len())];
            let c = self.sites[s].center;
            avoid.iter().all(|&p| haversine(p, c) >= min_d).then_some(s)
        })
    }

    fn plan_agent<R: Rng>(&self, index: usize, rng: &mut R) -> AgentTruth {
        let cfg = self.config;
        let agent = AgentId::new(&format!("agent{index:05}"));
        let home_site = self.residential[rng.random_range(0..self.residential.len())];
        let home = disk_offset(rng, &self.frame, self.sites[home_site].center, 40.0);

        let role: f64 = rng.random();
        let anchor = if cfg.home_only {
            None
        } else if role < cfg.worker_fraction && !self.offices.is_empty() {
            self.pick_site(rng, &self.offices, &[home], MIN_ANCHOR_DISTANCE_M)
                .map(|s| (ActivityType::Work, s))
        } else if role < cfg.worker_fraction + cfg.student_fraction && !self.schools.is_empty() {
            self.pick_site(rng, &self.schools, &[home], MIN_ANCHOR_DISTANCE_M)
                .map(|s| (ActivityType::School, s))
        } else {
            None
        }
        .map(|(a, s)| (a, disk_offset(rng, &self.frame, self.sites[s].center, 40.0)));

        let horizon = (
            self.midnight_utc(cfg.first_day),
            self.midnight_utc(cfg.first_day + i64::from(cfg.days)),
        );
        let bounds = (
            Stop { start: horizon.0, end: horizon.0, activity: ActivityType::Home, location: home },
            Stop { start: horizon.1, end: horizon.1, activity: ActivityType::Home, location: home },
        );
        let mut stops: Vec<Stop> = Vec::new();
        let trips = Poisson::new(cfg.trips_per_day.max(1e-9)).expect("positive rate");
        if !cfg.home_only {
            for d in 0..i64::from(cfg.days) {
                let day = cfg.first_day + d;
                let midnight = self.midnight_utc(day);
                if let Some((a, loc)) = anchor {
                    if !is_weekend(day) {
                        for _ in 0..5 {
                            let (start, end) = self.sample_stay(rng, a, midnight);
                            let cand = Stop { start, end, activity: a, location: loc };
                            if self.try_insert(&mut stops, cand, home, bounds) {
                                break;
                            }
                        }
                    }
                }
                let n = (trips.sample(rng) as u32).min(cfg.max_trips_per_day);
                for _ in 0..n {
                    let a = ActivityType::NON_MANDATORY[self.trip_types.sample(rng)];
                    let pool = &self.by_type[&a];
                    let mut avoid = vec![home];
                    avoid.extend(anchor.map(|(_, l)| l));
                    for _ in 0..PLACEMENT_ATTEMPTS {
                        let Some(site) = self.pick_site(rng, pool, &avoid, MIN_SEPARATION_M) else {
                            break;
                        };
                        let location = disk_offset(rng, &self.frame, self.sites[site].center, 20.0);
                        let (start, end) = self.sample_stay(rng, a, midnight);
                        let cand = Stop { start, end, activity: a, location };
                        if self.try_insert(&mut stops, cand, home, bounds) {
                            break;
                        }
                    }
                }
            }
        }
        AgentTruth {
            agent,
            home,
            anchor,
            visits: self.fill_with_home(&stops, home, horizon),
        }
    }

    /// Insert home stays wherever the agent has time to go home, yielding a contiguous
    /// sequence of visits over the horizon.
    fn fill_with_home(&self, stops: &[Stop], home: LatLon, horizon: (Instant, Instant)) -> Vec<TrueVisit> {
        let visit = |s: &Stop| TrueVisit {
            start: s.start,
            end: s.end,
            activity: s.activity,
            location: s.location,
        };
        let home_stay = |start, end| TrueVisit {
            start,
            end,
            activity: ActivityType::Home,
            location: home,
        };
        let mut out = Vec::with_capacity(stops.len() * 2 + 1);
        let Some(first) = stops.first() else {
            return vec![home_stay(horizon.0, horizon.1)];
        };
        out.push(home_stay(horizon.0, first.start - self.travel_s(home, first.location).ceil() as i64));
        for pair in stops.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            out.push(visit(a));
            let arrive = a.end + self.travel_s(a.location, home).ceil() as i64;
            let leave = b.start - self.travel_s(home, b.location).ceil() as i64;
            if (leave - arrive) as f64 >= MIN_HOME_STAY_S {
                out.push(home_stay(arrive, leave));
            }
        }
        let last = stops.last().expect("non-empty");
        out.push(visit(last));
        out.push(home_stay(last.end + self.travel_s(last.location, home).ceil() as i64, horizon.1));
        out
    }
}

impl SyntheticWorld {
    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn truth(&self) -> &SyntheticGroundTruth {
        &self.truth
    }

    pub fn agent_count(&self) -> usize {
        self.truth.agents.len()
    }

    /// Frame used for metre-scale noise across the region.
    pub fn frame(&self) -> LocalFrame {
        self.frame
    }

    /// Pings of one agent, regenerated deterministically from its visit plan.
    pub fn agent_pings(&self, index: usize) -> AgentPings {
        let truth = &self.truth.agents[index];
        let cfg = &self.config;
        let mut rng = agent_rng(self.seed, index, STREAM_PINGS);
        let noise = Normal::new(0.0, cfg.gps_noise_m.max(0.0)).expect("finite sigma");
        let mut pings = Vec::new();
        let mut emit = |rng: &mut ChaCha8Rng, t: Instant, p: LatLon| {
            let (e, n) = (noise.sample(rng), noise.sample(rng));
            pings.push(RawPing {
                timestamp: t,
                location: self.frame.offset(p, e, n),
                accuracy_m: None,
            });
        };
        let interval = |rng: &mut ChaCha8Rng| rng.random_range(cfg.min_ping_interval_s..=cfg.max_ping_interval_s);
        for (k, v) in truth.visits.iter().enumerate() {
            let mut t = v.start;
            while t < v.end {
                emit(&mut rng, t, v.location);
                t += interval(&mut rng);
            }
            emit(&mut rng, v.end, v.location);

            let Some(next) = truth.visits.get(k + 1) else { break };
            let (east, north) = self.frame.delta(v.location, next.location);
            let length = east.hypot(north);
            let span = (next.start - v.end) as f64;
            let mut t = v.end + interval(&mut rng);
            while t < next.start {
                let f = (t - v.end) as f64 / span;
                let along = f * length;
                if along > TRAVEL_PING_CLEARANCE_M && length - along > TRAVEL_PING_CLEARANCE_M {
                    emit(&mut rng, t, self.frame.offset(v.location, f * east, f * north));
                }
                t += interval(&mut rng);
            }
        }
        AgentPings {
            agent: truth.agent.clone(),
            pings,
        }
    }

    pub fn pings(&self) -> impl Iterator<Item = AgentPings> + '_ {
        (0..self.agent_count()).map(|i| self.agent_pings(i))
    }

    /// Materialize every agent's pings; intended for small worlds.
    pub fn corpus(&self) -> PingCorpus {
        PingCorpus {
            agents: self.pings().collect(),
        }
    }
}

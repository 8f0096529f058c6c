//! Shared domain types: activity taxonomy, probability vectors, time binning,
//! geodesy and survey reference statistics.

mod activity;
mod geo;
mod prob;
mod reference;
mod staypoint;
mod time;

pub use activity::{ActivityClass, ActivityType, NUM_ACTIVITIES, NUM_NON_MANDATORY};
pub use geo::{
    chord2_to_meters, haversine, mean_location, LocalFrame, meters_to_chord2, LatLon, UnitVec,
    EARTH_RADIUS_M, METERS_PER_DEG,
};
pub use prob::{normalize_slice, ProbVector, PROB_TOLERANCE};
pub use reference::{Histogram96, ReferenceStats};
pub use staypoint::{AgentId, Inference, Staypoint};
pub use time::{
    bin_of, is_weekend, local_day, slot_of, to_local, weekday, DurationBin, Instant, TimeSlot,
    DAY_SECONDS, DURATION_BINS, SLOTS_PER_DAY, SLOT_SECONDS,
};

//! Time-of-day slots and duration bins, both 15 minutes wide.

use serde::{Deserialize, Serialize};

/// Seconds since the Unix epoch, UTC.
pub type Instant = i64;

pub const SLOT_SECONDS: i64 = 15 * 60;
pub const SLOTS_PER_DAY: usize = 96;
pub const DURATION_BINS: usize = 96;
pub const DAY_SECONDS: i64 = 86_400;

/// 15-minute time-of-day bin in local time, `0..96`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeSlot(pub u8);

/// 15-minute duration bin, `0..96`; the last bin absorbs everything from 23h45 upwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DurationBin(pub u8);

impl TimeSlot {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl DurationBin {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Local seconds since the epoch for a fixed UTC offset in minutes.
pub fn to_local(t: Instant, tz_offset_min: i32) -> i64 {
    t + tz_offset_min as i64 * 60
}

pub fn slot_of(t: Instant, tz_offset_min: i32) -> TimeSlot {
    let sec_of_day = to_local(t, tz_offset_min).rem_euclid(DAY_SECONDS);
    TimeSlot((sec_of_day / SLOT_SECONDS) as u8)
}

pub fn bin_of(duration_s: i64) -> DurationBin {
    let bin = duration_s.max(0) / SLOT_SECONDS;
    DurationBin(bin.min(DURATION_BINS as i64 - 1) as u8)
}

/// Local calendar day number (days since 1970-01-01 local).
pub fn local_day(t: Instant, tz_offset_min: i32) -> i64 {
    to_local(t, tz_offset_min).div_euclid(DAY_SECONDS)
}

/// Day of week for a local day number, 0 = Monday .. 6 = Sunday.
pub fn weekday(day: i64) -> u8 {
    // 1970-01-01 was a Thursday.
    (day + 3).rem_euclid(7) as u8
}

pub fn is_weekend(day: i64) -> bool {
    weekday(day) >= 5
}

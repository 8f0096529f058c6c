use std::fmt;

use serde::{Deserialize, Serialize};

/// Behavioural class of an activity type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivityClass {
    Mandatory,
    NonMandatory,
}

/// The 15-type activity taxonomy. Discriminants are the survey codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ActivityType {
    Home = 1,
    Work = 2,
    School = 3,
    Caregiving = 4,
    ShopGoods = 5,
    ShopServices = 6,
    MealsOut = 7,
    Errands = 8,
    Leisure = 9,
    Exercise = 10,
    Social = 11,
    Healthcare = 12,
    Worship = 13,
    Other = 14,
    PickupDrop = 15,
}

pub const NUM_ACTIVITIES: usize = 15;
pub const NUM_NON_MANDATORY: usize = 12;

impl ActivityType {
    pub const ALL: [ActivityType; NUM_ACTIVITIES] = [
        ActivityType::Home,
        ActivityType::Work,
        ActivityType::School,
        ActivityType::Caregiving,
        ActivityType::ShopGoods,
        ActivityType::ShopServices,
        ActivityType::MealsOut,
        ActivityType::Errands,
        ActivityType::Leisure,
        ActivityType::Exercise,
        ActivityType::Social,
        ActivityType::Healthcare,
        ActivityType::Worship,
        ActivityType::Other,
        ActivityType::PickupDrop,
    ];

    pub const MANDATORY: [ActivityType; 3] =
        [ActivityType::Home, ActivityType::Work, ActivityType::School];

    pub const NON_MANDATORY: [ActivityType; NUM_NON_MANDATORY] = [
        ActivityType::Caregiving,
        ActivityType::ShopGoods,
        ActivityType::ShopServices,
        ActivityType::MealsOut,
        ActivityType::Errands,
        ActivityType::Leisure,
        ActivityType::Exercise,
        ActivityType::Social,
        ActivityType::Healthcare,
        ActivityType::Worship,
        ActivityType::Other,
        ActivityType::PickupDrop,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based position in [`ActivityType::ALL`].
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_code(code: u8) -> Option<ActivityType> {
        match code {
            1..=15 => Some(Self::ALL[code as usize - 1]),
            _ => None,
        }
    }

    pub fn from_index(index: usize) -> Option<ActivityType> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityType::Home => "Home",
            ActivityType::Work => "Work",
            ActivityType::School => "School",
            ActivityType::Caregiving => "Caregiving",
            ActivityType::ShopGoods => "Shop Goods",
            ActivityType::ShopServices => "Shop Services",
            ActivityType::MealsOut => "Meals Out",
            ActivityType::Errands => "Errands",
            ActivityType::Leisure => "Leisure",
            ActivityType::Exercise => "Exercise",
            ActivityType::Social => "Social",
            ActivityType::Healthcare => "Healthcare",
            ActivityType::Worship => "Worship",
            ActivityType::Other => "Other",
            ActivityType::PickupDrop => "Pickup/Drop",
        }
    }

    pub fn class(self) -> ActivityClass {
        if self.code() <= 3 {
            ActivityClass::Mandatory
        } else {
            ActivityClass::NonMandatory
        }
    }

    pub fn is_mandatory(self) -> bool {
        self.class() == ActivityClass::Mandatory
    }

    /// Position within [`ActivityType::NON_MANDATORY`], if non-mandatory.
    pub fn non_mandatory_index(self) -> Option<usize> {
        (!self.is_mandatory()).then(|| self.index() - 3)
    }
}

impl fmt::Display for ActivityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

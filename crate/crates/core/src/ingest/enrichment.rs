use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ActivityType, ProbVector};

/// Category → activity distribution lookup standing in for per-POI semantic enrichment.
/// An external enrichment job can write the same table as CSV (`category,p1..p15`).
#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentTable {
    entries: BTreeMap<String, ProbVector>,
}

type CategoryWeights = (&'static str, &'static [(ActivityType, f64)]);

const BUILTIN: &[CategoryWeights] = {
    use ActivityType::*;
    &[
        ("house", &[(Home, 0.9), (Social, 0.05), (Caregiving, 0.05)]),
        ("residential", &[(Home, 0.85), (Social, 0.07), (Caregiving, 0.05), (Other, 0.03)]),
        ("apartments", &[(Home, 0.88), (Social, 0.07), (Other, 0.05)]),
        ("dormitory", &[(Home, 0.7), (School, 0.25), (Social, 0.05)]),
        ("office", &[(Work, 0.85), (Errands, 0.05), (Other, 0.05), (MealsOut, 0.05)]),
        ("company", &[(Work, 0.9), (Other, 0.1)]),
        ("industrial", &[(Work, 0.92), (Other, 0.08)]),
        ("government", &[(Work, 0.6), (Errands, 0.35), (Other, 0.05)]),
        ("coworking", &[(Work, 0.85), (MealsOut, 0.05), (Social, 0.1)]),
        ("warehouse", &[(Work, 0.9), (ShopGoods, 0.05), (Other, 0.05)]),
        ("school", &[(School, 0.6), (PickupDrop, 0.25), (Work, 0.1), (Caregiving, 0.05)]),
        ("university", &[(School, 0.75), (Work, 0.15), (Leisure, 0.05), (MealsOut, 0.05)]),
        ("college", &[(School, 0.75), (Work, 0.15), (Social, 0.1)]),
        ("kindergarten", &[(PickupDrop, 0.55), (Caregiving, 0.25), (School, 0.1), (Work, 0.1)]),
        ("childcare", &[(Caregiving, 0.55), (PickupDrop, 0.35), (Work, 0.1)]),
        ("nursing_home", &[(Caregiving, 0.7), (Healthcare, 0.15), (Work, 0.1), (Social, 0.05)]),
        ("social_facility", &[(Caregiving, 0.5), (Social, 0.3), (Work, 0.1), (Errands, 0.1)]),
        ("supermarket", &[(ShopGoods, 0.85), (Errands, 0.1), (Work, 0.05)]),
        ("convenience", &[(ShopGoods, 0.75), (Errands, 0.15), (MealsOut, 0.05), (Other, 0.05)]),
        ("mall", &[(ShopGoods, 0.6), (MealsOut, 0.15), (Leisure, 0.15), (ShopServices, 0.1)]),
        ("department_store", &[(ShopGoods, 0.85), (ShopServices, 0.1), (Work, 0.05)]),
        ("clothes", &[(ShopGoods, 0.85), (Leisure, 0.1), (Work, 0.05)]),
        ("hardware", &[(ShopGoods, 0.85), (Errands, 0.1), (Work, 0.05)]),
        ("electronics", &[(ShopGoods, 0.8), (ShopServices, 0.15), (Work, 0.05)]),
        ("hairdresser", &[(ShopServices, 0.85), (Errands, 0.1), (Work, 0.05)]),
        ("beauty", &[(ShopServices, 0.85), (Errands, 0.1), (Work, 0.05)]),
        ("laundry", &[(ShopServices, 0.7), (Errands, 0.25), (Work, 0.05)]),
        ("car_repair", &[(ShopServices, 0.75), (Errands, 0.2), (Work, 0.05)]),
        ("restaurant", &[(MealsOut, 0.8), (Social, 0.12), (Work, 0.05), (Leisure, 0.03)]),
        ("fast_food", &[(MealsOut, 0.85), (Errands, 0.05), (Work, 0.05), (Other, 0.05)]),
        ("cafe", &[(MealsOut, 0.7), (Social, 0.15), (Work, 0.1), (Leisure, 0.05)]),
        ("food_court", &[(MealsOut, 0.85), (ShopGoods, 0.1), (Work, 0.05)]),
        ("bar", &[(Social, 0.5), (MealsOut, 0.3), (Leisure, 0.15), (Work, 0.05)]),
        ("pub", &[(Social, 0.45), (MealsOut, 0.35), (Leisure, 0.15), (Work, 0.05)]),
        ("bank", &[(Errands, 0.8), (ShopServices, 0.15), (Work, 0.05)]),
        ("post_office", &[(Errands, 0.85), (Work, 0.1), (Other, 0.05)]),
        ("pharmacy", &[(Errands, 0.55), (Healthcare, 0.25), (ShopGoods, 0.15), (Work, 0.05)]),
        ("fuel", &[(Errands, 0.5), (Other, 0.35), (ShopGoods, 0.1), (Work, 0.05)]),
        ("cinema", &[(Leisure, 0.85), (Social, 0.1), (Work, 0.05)]),
        ("theatre", &[(Leisure, 0.8), (Social, 0.15), (Work, 0.05)]),
        ("museum", &[(Leisure, 0.85), (Social, 0.05), (Work, 0.05), (School, 0.05)]),
        ("park", &[(Leisure, 0.55), (Exercise, 0.3), (Social, 0.1), (PickupDrop, 0.05)]),
        ("library", &[(Leisure, 0.5), (School, 0.3), (Errands, 0.1), (Work, 0.1)]),
        ("gym", &[(Exercise, 0.9), (Social, 0.05), (Work, 0.05)]),
        ("fitness_centre", &[(Exercise, 0.9), (Social, 0.05), (Work, 0.05)]),
        ("sports_centre", &[(Exercise, 0.75), (Leisure, 0.15), (Social, 0.05), (Work, 0.05)]),
        ("swimming_pool", &[(Exercise, 0.8), (Leisure, 0.15), (Work, 0.05)]),
        ("community_centre", &[(Social, 0.6), (Leisure, 0.2), (Caregiving, 0.1), (Work, 0.1)]),
        ("events_venue", &[(Social, 0.65), (Leisure, 0.3), (Work, 0.05)]),
        ("nightclub", &[(Social, 0.6), (Leisure, 0.35), (Work, 0.05)]),
        ("hospital", &[(Healthcare, 0.75), (Caregiving, 0.1), (Work, 0.15)]),
        ("clinic", &[(Healthcare, 0.85), (Caregiving, 0.05), (Work, 0.1)]),
        ("doctors", &[(Healthcare, 0.9), (Work, 0.1)]),
        ("dentist", &[(Healthcare, 0.9), (Work, 0.1)]),
        ("place_of_worship", &[(Worship, 0.85), (Social, 0.1), (Work, 0.05)]),
        ("parking", &[(Other, 0.6), (PickupDrop, 0.2), (Errands, 0.1), (ShopGoods, 0.1)]),
        ("car_wash", &[(Other, 0.5), (ShopServices, 0.4), (Errands, 0.1)]),
        ("bus_station", &[(Other, 0.6), (PickupDrop, 0.3), (Work, 0.1)]),
    ]
};

impl EnrichmentTable {
    pub fn empty() -> Self {
        EnrichmentTable {
            entries: BTreeMap::new(),
        }
    }

    /// Shipped table of common OpenStreetMap amenity/shop/building categories.
    pub fn builtin() -> Self {
        let mut t = Self::empty();
        for (name, parts) in BUILTIN {
            let mut v = ProbVector::zeros();
            for &(a, w) in parts.iter() {
                v[a] += w;
            }
            t.insert(name, v).expect("builtin entries are valid");
        }
        t
    }

    pub fn insert(&mut self, category: &str, dist: ProbVector) -> Result<()> {
        let v = dist.normalize()?;
        self.entries.insert(category.trim().to_ascii_lowercase(), v);
        Ok(())
    }

    pub fn get(&self, category: &str) -> Option<&ProbVector> {
        self.entries.get(&category.trim().to_ascii_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn categories(&self) -> impl Iterator<Item = (&str, &ProbVector)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Categories whose dominant activity is `a`.
    pub fn categories_for(&self, a: ActivityType) -> Vec<&str> {
        self.categories()
            .filter(|(_, v)| v.argmax() == a)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(BufReader::new(file));
        let mut t = Self::empty();
        for rec in reader.records() {
            let rec = rec?;
            if rec.len() != 16 {
                return Err(Error::Schema(format!(
                    "{}: enrichment rows need category plus 15 weights",
                    path.display()
                )));
            }
            let weights: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
            t.insert(&rec[0], ProbVector::from_slice(&weights)?)?;
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_every_activity() {
        let t = EnrichmentTable::builtin();
        assert!(t.len() >= 50, "{}", t.len());
        for a in ActivityType::ALL {
            assert!(!t.categories_for(a).is_empty(), "no category for {a}");
        }
        for (_, v) in t.categories() {
            assert!(v.is_normalized());
        }
        assert_eq!(t.get("Restaurant").unwrap().argmax(), ActivityType::MealsOut);
    }
}

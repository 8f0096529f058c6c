//! POI semantic zones and the Gaussian-kernel spatial likelihood over them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Poi;
use crate::model::{haversine, mean_location, LatLon, ProbVector, NUM_ACTIVITIES};
use crate::spatial::{dbscan, singletons_for_noise, GridIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticZone {
    pub zone_id: usize,
    /// Unweighted mean of member POI locations.
    pub centroid: LatLon,
    /// Largest member distance to the centroid, metres; zero for singletons.
    pub radius_m: f64,
    /// Normalized sum of member activity distributions.
    pub dist: ProbVector,
    /// Indices into the POI slice the zones were built from, ascending.
    pub members: Vec<usize>,
}

impl SemanticZone {
    pub fn member_count(&self) -> usize {
        self.members.len()
    }
}

/// Cluster POIs with DBSCAN; noise POIs become singleton zones so every POI is covered.
pub fn build_zones(pois: &[Poi], eps_poi_m: f64, min_pts: usize) -> Vec<SemanticZone> {
    let locations: Vec<LatLon> = pois.iter().map(|p| p.location).collect();
    let grid = GridIndex::new(&locations, eps_poi_m);
    let mut hits = Vec::new();
    let mut labels = dbscan(pois.len(), min_pts, |i, out| {
        grid.within(&locations[i], eps_poi_m, &mut hits);
        out.clear();
        out.extend(hits.iter().map(|&(j, _)| j));
    });
    let k = singletons_for_noise(&mut labels);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, l) in labels.iter().enumerate() {
        members[l.expect("noise replaced")].push(i);
    }
    members
        .into_iter()
        .enumerate()
        .map(|(zone_id, members)| {
            let centroid =
                mean_location(members.iter().map(|&m| &pois[m].location)).expect("non-empty zone");
            let radius_m = if members.len() == 1 {
                0.0
            } else {
                members
                    .iter()
                    .map(|&m| haversine(centroid, pois[m].location))
                    .fold(0.0, f64::max)
            };
            let mut sum = ProbVector::zeros();
            for &m in &members {
                sum.add_scaled(&pois[m].activity_dist, 1.0);
            }
            SemanticZone {
                zone_id,
                centroid,
                radius_m,
                dist: sum.normalize().unwrap_or_else(|_| ProbVector::uniform()),
                members,
            }
        })
        .collect()
}

/// Result of a spatial likelihood query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialEvidence {
    pub dist: ProbVector,
    /// No zone within the search radius (or all kernel weights underflowed); `dist` is
    /// the uniform fallback.
    pub flagged: bool,
}

/// Grid-indexed zones with a Gaussian kernel of bandwidth `sigma_m` truncated at
/// `radius_m`.
#[derive(Debug, Clone)]
pub struct ZoneIndex {
    zones: Vec<SemanticZone>,
    grid: GridIndex,
    sigma_m: f64,
    radius_m: f64,
}

impl ZoneIndex {
    pub fn new(zones: Vec<SemanticZone>, sigma_m: f64, radius_m: f64) -> Result<Self> {
        if !(sigma_m > 0.0 && sigma_m.is_finite()) {
            return Err(Error::Config(format!("kernel bandwidth must be positive, got {sigma_m}")));
        }
        if !(radius_m > 0.0 && radius_m.is_finite()) {
            return Err(Error::Config(format!("search radius must be positive, got {radius_m}")));
        }
        let centroids: Vec<LatLon> = zones.iter().map(|z| z.centroid).collect();
        Ok(ZoneIndex {
            grid: GridIndex::new(&centroids, radius_m),
            zones,
            sigma_m,
            radius_m,
        })
    }

    pub fn zones(&self) -> &[SemanticZone] {
        &self.zones
    }

    pub fn sigma_m(&self) -> f64 {
        self.sigma_m
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    /// Zones whose centroid lies within the search radius, ascending by zone id, with
    /// distances in metres.
    pub fn neighbors(&self, l: &LatLon) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.grid.within(l, self.radius_m, &mut out);
        out
    }

    pub fn spatial_likelihood(&self, l: &LatLon) -> SpatialEvidence {
        let two_s2 = 2.0 * self.sigma_m * self.sigma_m;
        let mut acc = ProbVector::zeros();
        for (z, d) in self.neighbors(l) {
            acc.add_scaled(&self.zones[z].dist, (-d * d / two_s2).exp());
        }
        match acc.normalize() {
            Ok(dist) => SpatialEvidence { dist, flagged: false },
            Err(_) => SpatialEvidence {
                dist: ProbVector::uniform(),
                flagged: true,
            },
        }
    }
}

/// `zone_id,lat,lon,radius_m,member_count,p1..p15`.
pub fn write_zones(path: impl AsRef<Path>, zones: &[SemanticZone], provenance: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    if let Some(p) = provenance {
        writeln!(out, "# {p}").map_err(|e| Error::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> =
        ["zone_id", "lat", "lon", "radius_m", "member_count"].map(String::from).to_vec();
    header.extend((1..=NUM_ACTIVITIES).map(|k| format!("p{k}")));
    w.write_record(&header)?;
    for z in zones {
        let mut row = vec![
            z.zone_id.to_string(),
            z.centroid.lat.to_string(),
            z.centroid.lon.to_string(),
            z.radius_m.to_string(),
            z.member_count().to_string(),
        ];
        row.extend(z.dist.values().iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

//! Spatial plumbing shared by POI zoning and per-agent clustering: a uniform lat/lon grid
//! for radius queries and a density-based clustering routine with a canonical border rule.

use std::collections::HashMap;

use crate::model::{meters_to_chord2, LatLon, UnitVec, METERS_PER_DEG};

/// Uniform lat/lon grid whose cells are at least `cell_m` metres wide everywhere in the
/// indexed region, so a radius-`cell_m` query only needs the 3x3 block around its cell.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell_m: f64,
    cell_lat: f64,
    cell_lon: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    points: Vec<UnitVec>,
}

impl GridIndex {
    pub fn new(locations: &[LatLon], cell_m: f64) -> Self {
        let cell_m = cell_m.max(1e-3);
        let max_abs_lat = locations
            .iter()
            .map(|p| p.lat.abs())
            .fold(0.0_f64, f64::max)
            .min(89.0);
        let cell_lat = cell_m / METERS_PER_DEG;
        let cell_lon = cell_m / (METERS_PER_DEG * max_abs_lat.to_radians().cos());
        let mut index = GridIndex {
            cell_m,
            cell_lat,
            cell_lon,
            cells: HashMap::new(),
            points: locations.iter().map(LatLon::to_unit).collect(),
        };
        for (i, p) in locations.iter().enumerate() {
            let key = index.key(p);
            index.cells.entry(key).or_default().push(i);
        }
        index
    }

    fn key(&self, p: &LatLon) -> (i64, i64) {
        (
            (p.lat / self.cell_lat).floor() as i64,
            (p.lon / self.cell_lon).floor() as i64,
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn unit(&self, i: usize) -> &UnitVec {
        &self.points[i]
    }

    /// Indices within `radius_m` of `center`, in ascending index order, with their
    /// distances in metres.
    pub fn within(&self, center: &LatLon, radius_m: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let (ki, kj) = self.key(center);
        let u = center.to_unit();
        let limit = meters_to_chord2(radius_m);
        let span = ((radius_m / self.cell_m).ceil() as i64).max(1);
        for di in -span..=span {
            for dj in -span..=span {
                if let Some(members) = self.cells.get(&(ki + di, kj + dj)) {
                    for &m in members {
                        let c2 = u.chord2(&self.points[m]);
                        if c2 <= limit {
                            out.push((m, crate::model::chord2_to_meters(c2)));
                        }
                    }
                }
            }
        }
        out.sort_unstable_by_key(|&(i, _)| i);
    }
}

/// Density-based clustering (DBSCAN) over `n` points given a neighbourhood oracle that
/// returns every index within `eps` of point `i`, the point itself included.
///
/// Core points are those with at least `min_pts` neighbours; clusters are the connected
/// components of core points. A border point joins the cluster of its lowest-indexed core
/// neighbour. Clusters are numbered by their lowest core index. Noise maps to `None`.
pub fn dbscan<F>(n: usize, min_pts: usize, mut neighbors: F) -> Vec<Option<usize>>
where
    F: FnMut(usize, &mut Vec<usize>),
{
    let mut lists: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut buf = Vec::new();
    for i in 0..n {
        neighbors(i, &mut buf);
        lists.push(buf.clone());
    }
    let core: Vec<bool> = lists.iter().map(|l| l.len() >= min_pts.max(1)).collect();

    let mut uf = UnionFind::new(n);
    for i in 0..n {
        if core[i] {
            for &j in &lists[i] {
                if core[j] {
                    uf.union(i, j);
                }
            }
        }
    }

    let mut label = vec![None; n];
    let mut root_label: HashMap<usize, usize> = HashMap::new();
    let mut next = 0;
    for i in 0..n {
        if core[i] {
            let r = uf.find(i);
            let id = *root_label.entry(r).or_insert_with(|| {
                next += 1;
                next - 1
            });
            label[i] = Some(id);
        }
    }
    for i in 0..n {
        if !core[i] {
            label[i] = lists[i]
                .iter()
                .copied()
                .filter(|&j| core[j])
                .min()
                .and_then(|j| label[j]);
        }
    }
    label
}

/// Replace noise labels with fresh singleton clusters (numbered after the dense ones,
/// in index order) and return the total cluster count.
pub fn singletons_for_noise(labels: &mut [Option<usize>]) -> usize {
    let mut next = labels.iter().flatten().max().map_or(0, |m| m + 1);
    for l in labels.iter_mut() {
        if l.is_none() {
            *l = Some(next);
            next += 1;
        }
    }
    next
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root for stable traversal
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::haversine;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = LatLon::new(34.05, -118.25);
        let pts: Vec<LatLon> = (0..2000)
            .map(|_| base.offset(rng.random_range(-5000.0..5000.0), rng.random_range(-5000.0..5000.0)))
            .collect();
        let grid = GridIndex::new(&pts, 500.0);
        let mut out = Vec::new();
        for _ in 0..500 {
            let q = base.offset(rng.random_range(-5500.0..5500.0), rng.random_range(-5500.0..5500.0));
            grid.within(&q, 500.0, &mut out);
            let got: Vec<usize> = out.iter().map(|x| x.0).collect();
            let expected: Vec<usize> = (0..pts.len())
                .filter(|&i| haversine(q, pts[i]) <= 500.0)
                .collect();
            assert_eq!(got, expected);
            for &(i, d) in &out {
                assert!((d - haversine(q, pts[i])).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn dbscan_line() {
        // 0..4 chained at spacing 1, 10 isolated, 20..22 chained
        let xs: [f64; 8] = [0.0, 1.0, 2.0, 3.0, 10.0, 20.0, 21.0, 22.0];
        let labels = dbscan(xs.len(), 2, |i, out| {
            out.clear();
            out.extend((0..xs.len()).filter(|&j| (xs[i] - xs[j]).abs() <= 1.0));
        });
        assert_eq!(
            labels,
            vec![Some(0), Some(0), Some(0), Some(0), None, Some(1), Some(1), Some(1)]
        );
        let mut l = labels.clone();
        assert_eq!(singletons_for_noise(&mut l), 3);
        assert_eq!(l[4], Some(2));
    }

    #[test]
    fn border_point_goes_to_lowest_core() {
        // points: 0,1 core (min_pts 3 with 2), border 2 sits between two clusters
        let xs: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];
        let labels = dbscan(xs.len(), 3, |i, out| {
            out.clear();
            out.extend((0..xs.len()).filter(|&j| (xs[i] - xs[j]).abs() <= 0.5));
        });
        // cores: 1 (0,1,2), 2 (1,2,3), 3 (2,3,4) -> one component; 0 and 4 border
        assert_eq!(labels, vec![Some(0); 5]);
    }
}

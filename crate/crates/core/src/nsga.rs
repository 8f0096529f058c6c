//! Generational NSGA-II over bounded real (or integer) genes, minimizing every objective.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneBounds {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub integer: bool,
}

impl GeneBounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        GeneBounds { lo, hi, integer: false }
    }

    pub fn integer(lo: f64, hi: f64) -> Self {
        GeneBounds { lo, hi, integer: true }
    }

    pub fn clip(&self, v: f64) -> f64 {
        let v = if self.integer { v.round() } else { v };
        v.clamp(self.lo, self.hi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::Config(format!("bad gene bounds [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NsgaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// SBX distribution index.
    pub eta_crossover: f64,
    /// Polynomial mutation distribution index.
    pub eta_mutation: f64,
    /// Per-gene mutation probability; `1 / genes` when unset.
    pub mutation_prob: Option<f64>,
}

impl Default for NsgaConfig {
    fn default() -> Self {
        NsgaConfig {
            population: 40,
            generations: 30,
            crossover_prob: 0.9,
            eta_crossover: 15.0,
            eta_mutation: 20.0,
            mutation_prob: None,
        }
    }
}

impl NsgaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("population must hold at least two individuals".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob)
            || self.mutation_prob.is_some_and(|p| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::Config("operator probabilities must lie in [0, 1]".into()));
        }
        if !(self.eta_crossover >= 0.0 && self.eta_mutation >= 0.0) {
            return Err(Error::Config("distribution indices must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Individual {
    pub genes: Vec<f64>,
    pub objectives: Vec<f64>,
    pub rank: usize,
    pub crowding: f64,
}

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        strictly |= x < y;
    }
    strictly
}

/// Fast non-dominated sort. Fronts list indices in ascending order.
pub fn non_dominated_sort(objectives: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
    let m = objectives.first().map_or(0, Vec::len);
    for (i, o) in objectives.iter().enumerate() {
        if o.len() != m || o.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidObjective(i));
        }
    }
    let n = objectives.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominating: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&objectives[i], &objectives[j]) {
                dominating[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(&objectives[j], &objectives[i]) {
                dominating[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominating[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Ok(fronts)
}

/// Crowding distance of each member of `front`, in the order given.
pub fn crowding_distance(front: &[usize], objectives: &[Vec<f64>]) -> Vec<f64> {
    let n = front.len();
    let mut d = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = objectives[front[0]].len();
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        let val = |p: usize| objectives[front[p]][k];
        order.sort_by(|&a, &b| val(a).total_cmp(&val(b)).then(a.cmp(&b)));
        let (lo, hi) = (val(order[0]), val(order[n - 1]));
        d[order[0]] = f64::INFINITY;
        d[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if !(range > 0.0) || !range.is_finite() {
            continue;
        }
        for w in 1..n - 1 {
            d[order[w]] += (val(order[w + 1]) - val(order[w - 1])) / range;
        }
    }
    d
}

/// Knee of a front: after scaling each objective to `[0, 1]`, the point farthest from the
/// chord joining the two extreme points. Only the first two objectives are used. Ties go
/// to the lowest index; a degenerate chord selects the point with the smallest scaled sum.
pub fn knee_point(objectives: &[Vec<f64>]) -> usize {
    knee_among(objectives, &(0..objectives.len()).collect::<Vec<_>>())
}

/// [`knee_point`] restricted to `candidates` (which must be non-empty); returns an index
/// into `objectives`.
pub fn knee_among(objectives: &[Vec<f64>], candidates: &[usize]) -> usize {
    assert!(!candidates.is_empty(), "knee of an empty front");
    if candidates.len() == 1 {
        return candidates[0];
    }
    let m = objectives[candidates[0]].len().min(2);
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for &c in candidates {
        for k in 0..m {
            lo[k] = lo[k].min(objectives[c][k]);
            hi[k] = hi[k].max(objectives[c][k]);
        }
    }
    let scaled = |c: usize| -> Vec<f64> {
        (0..m)
            .map(|k| {
                let r = hi[k] - lo[k];
                if r > 0.0 && r.is_finite() {
                    (objectives[c][k] - lo[k]) / r
                } else {
                    0.0
                }
            })
            .collect()
    };
    let argbest = |score: &dyn Fn(usize) -> f64| {
        let mut best = candidates[0];
        for &c in &candidates[1..] {
            if score(c) > score(best) {
                best = c;
            }
        }
        best
    };
    if m < 2 {
        return argbest(&|c| -scaled(c).iter().sum::<f64>());
    }
    // extremes: best in f1 (ties broken by f2), best in f2 (ties broken by f1)
    let ext = |k: usize| {
        let o = 1 - k;
        let mut best = candidates[0];
        for &c in &candidates[1..] {
            let (a, b) = (scaled(c), scaled(best));
            if a[k] < b[k] || (a[k] == b[k] && a[o] < b[o]) {
                best = c;
            }
        }
        scaled(best)
    };
    let (a, b) = (ext(0), ext(1));
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = (dx * dx + dy * dy).sqrt();
    if !(len > 0.0) {
        return argbest(&|c| -scaled(c).iter().sum::<f64>());
    }
    argbest(&|c| {
        let p = scaled(c);
        (dy * (p[0] - a[0]) - dx * (p[1] - a[1])).abs() / len
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Evolution {
    /// Rank-0 individuals of the final population.
    pub front: Vec<Individual>,
    pub population: Vec<Individual>,
    /// Best value of each objective in the population after initialization and after
    /// every generation.
    pub best_per_generation: Vec<Vec<f64>>,
    pub evaluations: usize,
    pub cache_hits: usize,
}

fn cache_key(genes: &[f64]) -> Vec<u64> {
    genes.iter().map(|g| g.to_bits()).collect()
}

struct Evaluator<'a, F> {
    eval: &'a F,
    cache: HashMap<Vec<u64>, Vec<f64>>,
    evaluations: usize,
    cache_hits: usize,
}

impl<F> Evaluator<'_, F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn run(&mut self, genomes: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut pending: Vec<&Vec<f64>> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for g in genomes {
            let key = cache_key(g);
            if self.cache.contains_key(&key) {
                self.cache_hits += 1;
            } else if seen.insert(key) {
                pending.push(g);
            } else {
                self.cache_hits += 1;
            }
        }
        let fresh: Vec<Vec<f64>> = pending.par_iter().map(|g| (self.eval)(g)).collect();
        self.evaluations += fresh.len();
        for (g, o) in pending.into_iter().zip(fresh) {
            self.cache.insert(cache_key(g), o);
        }
        genomes.iter().map(|g| self.cache[&cache_key(g)].clone()).collect()
    }
}

/// Rank and crowding for every member of a population.
fn assign_rank(objectives: &[Vec<f64>]) -> Result<(Vec<usize>, Vec<f64>, Vec<Vec<usize>>)> {
    let fronts = non_dominated_sort(objectives)?;
    let mut rank = vec![0; objectives.len()];
    let mut crowd = vec![0.0; objectives.len()];
    for (r, f) in fronts.iter().enumerate() {
        for (&i, d) in f.iter().zip(crowding_distance(f, objectives)) {
            rank[i] = r;
            crowd[i] = d;
        }
    }
    Ok((rank, crowd, fronts))
}

fn sbx(rng: &mut ChaCha8Rng, p1: &[f64], p2: &[f64], bounds: &[GeneBounds], eta: f64) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    for i in 0..p1.len() {
        let b = bounds[i];
        if rng.random::<f64>() > 0.5 || (p1[i] - p2[i]).abs() <= 1e-14 || b.hi <= b.lo {
            continue;
        }
        let (y1, y2) = if p1[i] < p2[i] { (p1[i], p2[i]) } else { (p2[i], p1[i]) };
        let u: f64 = rng.random();
        let spread = |beta: f64| {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let bq1 = spread(1.0 + 2.0 * (y1 - b.lo) / (y2 - y1));
        let bq2 = spread(1.0 + 2.0 * (b.hi - y2) / (y2 - y1));
        let mut a = b.clip(0.5 * ((y1 + y2) - bq1 * (y2 - y1)));
        let mut z = b.clip(0.5 * ((y1 + y2) + bq2 * (y2 - y1)));
        if rng.random::<f64>() < 0.5 {
            std::mem::swap(&mut a, &mut z);
        }
        c1[i] = a;
        c2[i] = z;
    }
    (c1, c2)
}

fn polynomial_mutation(rng: &mut ChaCha8Rng, x: &mut [f64], bounds: &[GeneBounds], eta: f64, prob: f64) {
    for (v, b) in x.iter_mut().zip(bounds) {
        if rng.random::<f64>() >= prob || b.hi <= b.lo {
            continue;
        }
        let span = b.hi - b.lo;
        let d1 = (*v - b.lo) / span;
        let d2 = (b.hi - *v) / span;
        let u: f64 = rng.random();
        let pow = 1.0 / (eta + 1.0);
        let dq = if u < 0.5 {
            let val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
            val.powf(pow) - 1.0
        } else {
            let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - val.powf(pow)
        };
        *v = b.clip(*v + dq * span);
    }
}

fn tournament(rng: &mut ChaCha8Rng, rank: &[usize], crowd: &[f64]) -> usize {
    let n = rank.len();
    let a = rng.random_range(0..n);
    let b = rng.random_range(0..n);
    if rank[b] < rank[a] || (rank[b] == rank[a] && crowd[b] > crowd[a]) {
        b
    } else {
        a
    }
}

/// Run NSGA-II. `seeds` are placed (clipped) at the head of the initial population; the
/// rest is drawn uniformly within bounds. `eval` must be deterministic; its results are
/// cached per genome for the duration of the run.
pub fn evolve<F>(bounds: &[GeneBounds], cfg: &NsgaConfig, seed: u64, seeds: &[Vec<f64>], eval: F) -> Result<Evolution>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    cfg.validate()?;
    for b in bounds {
        b.validate()?;
    }
    let n = cfg.population;
    let genes = bounds.len();
    let pm = cfg.mutation_prob.unwrap_or(1.0 / genes.max(1) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluator = Evaluator {
        eval: &eval,
        cache: HashMap::new(),
        evaluations: 0,
        cache_hits: 0,
    };

    let mut pop: Vec<Vec<f64>> = seeds
        .iter()
        .take(n)
        .map(|s| s.iter().zip(bounds).map(|(v, b)| b.clip(*v)).collect())
        .collect();
    while pop.len() < n {
        pop.push(bounds.iter().map(|b| b.clip(rng.random_range(b.lo..=b.hi))).collect());
    }
    let mut objs = evaluator.run(&pop);
    let (mut rank, mut crowd, _) = assign_rank(&objs)?;
    let mut best = vec![best_of(&objs)];

    for _ in 0..cfg.generations {
        let mut offspring: Vec<Vec<f64>> = Vec::with_capacity(n);
        while offspring.len() < n {
            let p1 = &pop[tournament(&mut rng, &rank, &crowd)];
            let p2 = &pop[tournament(&mut rng, &rank, &crowd)];
            let (mut c1, mut c2) = if rng.random::<f64>() < cfg.crossover_prob {
                sbx(&mut rng, p1, p2, bounds, cfg.eta_crossover)
            } else {
                (p1.clone(), p2.clone())
            };
            polynomial_mutation(&mut rng, &mut c1, bounds, cfg.eta_mutation, pm);
            polynomial_mutation(&mut rng, &mut c2, bounds, cfg.eta_mutation, pm);
            offspring.push(c1);
            if offspring.len() < n {
                offspring.push(c2);
            }
        }
        let child_objs = evaluator.run(&offspring);
        pop.extend(offspring);
        objs.extend(child_objs);

        let (_, _, fronts) = assign_rank(&objs)?;
        let mut keep = Vec::with_capacity(n);
        for f in &fronts {
            if keep.len() + f.len() <= n {
                keep.extend_from_slice(f);
                continue;
            }
            let d = crowding_distance(f, &objs);
            let mut order: Vec<usize> = (0..f.len()).collect();
            order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(f[a].cmp(&f[b])));
            keep.extend(order.into_iter().take(n - keep.len()).map(|k| f[k]));
            break;
        }
        keep.sort_unstable();
        pop = keep.iter().map(|&i| std::mem::take(&mut pop[i])).collect();
        objs = keep.iter().map(|&i| std::mem::take(&mut objs[i])).collect();
        (rank, crowd, _) = assign_rank(&objs)?;
        best.push(best_of(&objs));
    }

    let population: Vec<Individual> = pop
        .into_iter()
        .zip(objs)
        .enumerate()
        .map(|(i, (genes, objectives))| Individual {
            genes,
            objectives,
            rank: rank[i],
            crowding: crowd[i],
        })
        .collect();
    Ok(Evolution {
        front: population.iter().filter(|p| p.rank == 0).cloned().collect(),
        population,
        best_per_generation: best,
        evaluations: evaluator.evaluations,
        cache_hits: evaluator.cache_hits,
    })
}

fn best_of(objs: &[Vec<f64>]) -> Vec<f64> {
    let m = objs.first().map_or(0, Vec::len);
    (0..m)
        .map(|k| objs.iter().map(|o| o[k]).fold(f64::INFINITY, f64::min))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_fronts(objs: &[Vec<f64>]) -> Vec<Vec<usize>> {
        let mut left: Vec<usize> = (0..objs.len()).collect();
        let mut fronts = Vec::new();
        while !left.is_empty() {
            let front: Vec<usize> = left
                .iter()
                .copied()
                .filter(|&i| {
                    !left.iter().any(|&j| {
                        let (a, b) = (&objs[j], &objs[i]);
                        a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
                    })
                })
                .collect();
            left.retain(|i| !front.contains(i));
            fronts.push(front);
        }
        fronts
    }

    #[test]
    fn trivial_sorts() {
        assert_eq!(non_dominated_sort(&[vec![1.0, 2.0]]).unwrap(), vec![vec![0]]);
        assert_eq!(
            non_dominated_sort(&[vec![2.0, 2.0], vec![1.0, 1.0]]).unwrap(),
            vec![vec![1], vec![0]]
        );
        assert!(matches!(
            non_dominated_sort(&[vec![1.0, 1.0], vec![f64::NAN, 0.0]]),
            Err(Error::InvalidObjective(1))
        ));
    }

    proptest! {
        #[test]
        fn sort_matches_brute_force(
            objs in prop::collection::vec(prop::collection::vec(0u8..6, 2..=3), 1..50)
        ) {
            let m = objs[0].len();
            let objs: Vec<Vec<f64>> = objs.into_iter()
                .map(|o| o.into_iter().cycle().take(m).map(f64::from).collect())
                .collect();
            prop_assert_eq!(non_dominated_sort(&objs).unwrap(), brute_force_fronts(&objs));
        }
    }

    #[test]
    fn crowding_marks_boundaries_infinite() {
        let objs = vec![vec![0.0, 4.0], vec![1.0, 2.0], vec![2.0, 1.0], vec![4.0, 0.0]];
        let d = crowding_distance(&[0, 1, 2, 3], &objs);
        assert!(d[0].is_infinite() && d[3].is_infinite());
        // interior: (2-0)/4 + (4-1)/4 and (4-1)/4 + (2-0)/4
        assert!((d[1] - 1.25).abs() < 1e-12);
        assert!((d[2] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn knee_on_simple_fronts() {
        assert_eq!(knee_point(&[vec![3.0, 3.0]]), 0);
        let objs = vec![vec![0.0, 1.0], vec![0.1, 0.1], vec![0.5, 0.45], vec![1.0, 0.0]];
        assert_eq!(knee_point(&objs), 1);
        assert_eq!(knee_among(&objs, &[0, 2, 3]), 2);
    }

    #[test]
    fn constant_objective_is_one_front() {
        let bounds = [GeneBounds::new(0.0, 1.0), GeneBounds::new(-1.0, 1.0)];
        let cfg = NsgaConfig {
            population: 12,
            generations: 3,
            ..Default::default()
        };
        let out = evolve(&bounds, &cfg, 5, &[], |_| vec![1.0, 1.0]).unwrap();
        assert!(out.population.iter().all(|p| p.rank == 0));
        assert_eq!(out.front.len(), 12);
    }

    #[test]
    fn zero_budget_returns_initial_front() {
        let bounds = [GeneBounds::new(0.0, 2.0)];
        let cfg = NsgaConfig {
            population: 8,
            generations: 0,
            ..Default::default()
        };
        let out = evolve(&bounds, &cfg, 1, &[vec![5.0]], |g| vec![g[0], -g[0]]).unwrap();
        assert_eq!(out.evaluations, 8);
        assert_eq!(out.population[0].genes, vec![2.0]);
        assert_eq!(out.front.len(), 8);
    }

    fn schaffer(g: &[f64]) -> Vec<f64> {
        vec![g[0] * g[0], (g[0] - 2.0) * (g[0] - 2.0)]
    }

    #[test]
    fn schaffer_front_spans_analytic_set() {
        let bounds = [GeneBounds::new(-10.0, 10.0)];
        let cfg = NsgaConfig {
            population: 40,
            generations: 50,
            ..Default::default()
        };
        let out = evolve(&bounds, &cfg, 42, &[], schaffer).unwrap();
        let xs: Vec<f64> = out.front.iter().map(|p| p.genes[0]).collect();
        assert!(xs.iter().all(|&x| (-0.05..=2.05).contains(&x)), "{xs:?}");
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= 0.05 && hi >= 1.95, "front spans [{lo}, {hi}]");
        // elitism: best value of each objective never worsens
        for w in out.best_per_generation.windows(2) {
            assert!(w[1][0] <= w[0][0] && w[1][1] <= w[0][1]);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let bounds = [GeneBounds::new(-10.0, 10.0), GeneBounds::integer(0.0, 9.0)];
        let cfg = NsgaConfig {
            population: 16,
            generations: 10,
            ..Default::default()
        };
        let f = |g: &[f64]| vec![g[0] * g[0] + g[1], (g[0] - 2.0).powi(2) + (9.0 - g[1])];
        let a = evolve(&bounds, &cfg, 9, &[], f).unwrap();
        let b = evolve(&bounds, &cfg, 9, &[], f).unwrap();
        assert_eq!(a.population, b.population);
        assert!(a.population.iter().all(|p| p.genes[1].fract() == 0.0));
        assert!(a.cache_hits > 0 || a.evaluations == 16 * 11);
    }
}

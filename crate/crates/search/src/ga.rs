//! Generational genetic search whose replacement step accepts worse
//! offspring with an annealing probability.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SearchConfig;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneKind {
    Real,
    Integer,
    Bit,
}

/// One position of a chromosome. Values live on the grid `lo + k·step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gene {
    pub name: String,
    pub kind: GeneKind,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Gene {
    pub fn real(name: impl Into<String>, lo: f64, hi: f64, step: f64) -> Self {
        Self {
            name: name.into(),
            kind: GeneKind::Real,
            lo,
            hi: hi.max(lo),
            step: step.max(f64::MIN_POSITIVE),
        }
    }

    pub fn integer(name: impl Into<String>, lo: i64, hi: i64) -> Self {
        Self {
            name: name.into(),
            kind: GeneKind::Integer,
            lo: lo as f64,
            hi: hi.max(lo) as f64,
            step: 1.0,
        }
    }

    pub fn bit(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: GeneKind::Bit,
            lo: 0.0,
            hi: 1.0,
            step: 1.0,
        }
    }

    /// Nearest grid value inside the box.
    pub fn snap(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return self.lo;
        }
        let k = ((x - self.lo) / self.step).round();
        (self.lo + k * self.step).clamp(self.lo, self.hi)
    }

    /// Largest grid value not above `x`, inside the box.
    pub fn snap_down(&self, x: f64) -> f64 {
        let k = ((x - self.lo) / self.step + 1e-9).floor();
        (self.lo + k * self.step).clamp(self.lo, self.hi)
    }

    /// Smallest grid value not below `x`, inside the box.
    pub fn snap_up(&self, x: f64) -> f64 {
        let k = ((x - self.lo) / self.step - 1e-9).ceil();
        (self.lo + k * self.step).clamp(self.lo, self.hi)
    }

    fn key(&self, x: f64) -> i64 {
        ((x - self.lo) / self.step).round() as i64
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self.kind {
            GeneKind::Bit => f64::from(rng.gen_bool(0.5) as u8),
            _ if self.hi <= self.lo => self.lo,
            _ => self.snap(rng.gen_range(self.lo..=self.hi)),
        }
    }
}

/// What the search needs from a sizing problem.
pub trait SearchProblem: Sync {
    fn genes(&self) -> &[Gene];
    /// Makes `x` feasible: box, grid and any coupling rows.
    fn repair(&self, x: &mut [f64]);
    /// Lower is better. Called only on repaired chromosomes.
    fn fitness(&self, x: &[f64]) -> f64;
}

/// Fitness memo keyed by the grid index of every gene, shared by workers.
#[derive(Debug, Default)]
pub struct FitnessCache {
    map: Mutex<HashMap<Vec<i64>, f64>>,
}

impl FitnessCache {
    pub fn key(genes: &[Gene], x: &[f64]) -> Vec<i64> {
        genes.iter().zip(x).map(|(g, &v)| g.key(v)).collect()
    }

    pub fn get(&self, key: &[i64]) -> Option<f64> {
        self.map.lock().unwrap().get(key).copied()
    }

    pub fn insert(&self, key: Vec<i64>, f: f64) {
        self.map.lock().unwrap().insert(key, f);
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub temperature: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    /// Row 0 is the initial population.
    pub history: Vec<GenerationStats>,
    /// Distinct chromosomes whose fitness was computed.
    pub evaluations: usize,
}

impl SearchOutcome {
    pub fn best_trace(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.best_so_far).collect()
    }
}

/// Writes the per-generation trace as CSV.
pub fn write_trace(history: &[GenerationStats], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for h in history {
        out.serialize(h)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Uniform random chromosomes, repaired.
pub fn random_population<P: SearchProblem>(problem: &P, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut x: Vec<f64> = problem.genes().iter().map(|g| g.sample(rng)).collect();
            problem.repair(&mut x);
            x
        })
        .collect()
}

fn evaluate<P: SearchProblem>(problem: &P, cache: &FitnessCache, pop: &[Vec<f64>]) -> Vec<f64> {
    let genes = problem.genes();
    let keys: Vec<Vec<i64>> = pop.iter().map(|x| FitnessCache::key(genes, x)).collect();
    let mut todo: Vec<usize> = Vec::new();
    for (i, k) in keys.iter().enumerate() {
        if cache.get(k).is_none() && !todo.iter().any(|&j| keys[j] == *k) {
            todo.push(i);
        }
    }
    let fresh: Vec<(usize, f64)> = todo.par_iter().map(|&i| (i, problem.fitness(&pop[i]))).collect();
    for (i, f) in fresh {
        let f = if f.is_nan() { f64::INFINITY } else { f };
        cache.insert(keys[i].clone(), f);
    }
    keys.iter().map(|k| cache.get(k).unwrap()).collect()
}

fn tournament(fit: &[f64], size: usize, rng: &mut impl Rng) -> usize {
    let mut best = rng.gen_range(0..fit.len());
    for _ in 1..size {
        let c = rng.gen_range(0..fit.len());
        if fit[c] < fit[best] {
            best = c;
        }
    }
    best
}

fn crossover(genes: &[Gene], a: &[f64], b: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    genes
        .iter()
        .zip(a.iter().zip(b))
        .map(|(g, (&x, &y))| match g.kind {
            GeneKind::Real => {
                let alpha: f64 = rng.gen();
                g.snap(x + alpha * (y - x))
            }
            _ => *[x, y].choose(rng).unwrap(),
        })
        .collect()
}

fn mutate(genes: &[Gene], x: &mut [f64], cfg: &SearchConfig, rng: &mut impl Rng) {
    for (g, v) in genes.iter().zip(x.iter_mut()) {
        if !rng.gen_bool(cfg.mutation_rate) {
            continue;
        }
        *v = match g.kind {
            GeneKind::Real => {
                let sd = cfg.mutation_scale * (g.hi - g.lo);
                let dv = if sd > 0.0 {
                    Normal::new(0.0, sd).unwrap().sample(rng)
                } else {
                    0.0
                };
                g.snap(*v + dv)
            }
            GeneKind::Integer => g.snap(*v + if rng.gen_bool(0.5) { 1.0 } else { -1.0 }),
            GeneKind::Bit => 1.0 - *v,
        };
    }
}

fn stats(generation: usize, fit: &[f64], temperature: f64, best_so_far: f64) -> GenerationStats {
    let best = fit.iter().copied().fold(f64::INFINITY, f64::min);
    GenerationStats {
        generation,
        best,
        mean: fit.iter().sum::<f64>() / fit.len() as f64,
        temperature,
        best_so_far,
    }
}

/// Runs the search from `init`, topped up with random individuals to the
/// configured population. Deterministic for a given seed: randomness is
/// drawn on the calling thread only and fitness is assumed pure.
pub fn ga_sa_search<P: SearchProblem>(
    problem: &P,
    init: Vec<Vec<f64>>,
    cfg: &SearchConfig,
    cache: &FitnessCache,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let genes = problem.genes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pop: Vec<Vec<f64>> = init
        .into_iter()
        .take(cfg.population)
        .map(|mut x| {
            problem.repair(&mut x);
            x
        })
        .collect();
    let missing = cfg.population - pop.len();
    pop.extend(random_population(problem, missing, &mut rng));

    let before = cache.len();
    let mut fit = evaluate(problem, cache, &pop);
    let mut best_idx = argmin(&fit);
    let mut best = pop[best_idx].clone();
    let mut best_fitness = fit[best_idx];
    let mut temperature = cfg.t0_fraction * best_fitness.abs();
    let mut history = vec![stats(0, &fit, temperature, best_fitness)];

    for generation in 1..=cfg.generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]));

        let mut next: Vec<Vec<f64>> = order[..cfg.elitism].iter().map(|&i| pop[i].clone()).collect();
        let mut parents = Vec::new();
        while next.len() < cfg.population {
            let a = tournament(&fit, cfg.tournament, &mut rng);
            let b = tournament(&fit, cfg.tournament, &mut rng);
            let mut child = if rng.gen_bool(cfg.crossover_rate) {
                crossover(genes, &pop[a], &pop[b], &mut rng)
            } else {
                pop[a].clone()
            };
            mutate(genes, &mut child, cfg, &mut rng);
            problem.repair(&mut child);
            next.push(child);
            parents.push(a);
        }
        let next_fit = evaluate(problem, cache, &next);

        // Annealing acceptance of each offspring against its first parent.
        let mut new_fit = next_fit[..cfg.elitism].to_vec();
        for (k, &a) in parents.iter().enumerate() {
            let slot = cfg.elitism + k;
            let delta = next_fit[slot] - fit[a];
            let accept = delta <= 0.0
                || (temperature > 0.0 && rng.gen::<f64>() < (-delta / temperature).exp());
            if accept {
                new_fit.push(next_fit[slot]);
            } else {
                next[slot] = pop[a].clone();
                new_fit.push(fit[a]);
            }
        }
        pop = next;
        fit = new_fit;

        best_idx = argmin(&fit);
        if fit[best_idx] < best_fitness {
            best_fitness = fit[best_idx];
            best = pop[best_idx].clone();
        }
        temperature *= cfg.cooling;
        history.push(stats(generation, &fit, temperature, best_fitness));
        log::debug!(
            "generation {generation}: best {:.4}, best so far {best_fitness:.4}, T {temperature:.4}",
            history.last().unwrap().best
        );
    }

    Ok(SearchOutcome {
        best,
        best_fitness,
        history,
        evaluations: cache.len() - before,
    })
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
}

//! Differential evolution (DE/rand/1/bin) over a box.
//!
//! Trial vectors are generated sequentially from one seeded RNG and only
//! their evaluation runs in parallel, so results do not depend on the number
//! of worker threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DEConfig {
    /// Population size.
    pub np: usize,
    /// Differential weight.
    pub f: f64,
    /// Crossover rate.
    pub cr: f64,
    pub max_generations: usize,
    /// Stop once std(objectives) <= tol * |mean(objectives)|.
    pub tol: f64,
    pub seed: u64,
    /// Number of objective evaluations run concurrently.
    pub width: usize,
}

impl Default for DEConfig {
    fn default() -> Self {
        DEConfig {
            np: 15,
            f: 0.8,
            cr: 0.9,
            max_generations: 100,
            tol: 0.01,
            seed: 0,
            width: 1,
        }
    }
}

impl DEConfig {
    pub fn validate(&self) -> Result<()> {
        if self.np < 4 {
            return Err(Error::validation("np", format!("need at least 4, got {}", self.np)));
        }
        if !(self.f > 0.0 && self.f <= 2.0) {
            return Err(Error::validation("f", format!("must be in (0, 2], got {}", self.f)));
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return Err(Error::validation("cr", format!("must be in [0, 1], got {}", self.cr)));
        }
        if self.max_generations < 1 {
            return Err(Error::validation("max_generations", "need at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::validation("tol", "must be nonnegative"));
        }
        if self.width < 1 {
            return Err(Error::validation("width", "need at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub generations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective after initialization and after each generation.
    pub trace: Vec<f64>,
}

/// Extras for [`differential_evolution_with`].
#[derive(Default)]
pub struct DeOptions<'a> {
    /// Vectors that replace the first random individuals (clipped to the box).
    pub init_points: Vec<Vec<f64>>,
    /// Receives `generation,eval_index,objective,x_1..x_d` for every evaluation.
    pub ledger: Option<&'a mut dyn Write>,
}

fn pool(width: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(width)
        .build()
        .map_err(|e| Error::Optimizer(format!("thread pool: {e}")))
}

fn evaluate_in<F>(f: &F, vectors: &[Vec<f64>], pool: Option<&rayon::ThreadPool>) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let clean = |x: &Vec<f64>| {
        let y = f(x);
        if y.is_nan() {
            f64::INFINITY
        } else {
            y
        }
    };
    match pool {
        Some(p) => p.install(|| vectors.par_iter().map(clean).collect()),
        None => vectors.iter().map(clean).collect(),
    }
}

/// Objective values in input order, using up to `width` threads.
pub fn evaluate_population<F>(f: &F, vectors: &[Vec<f64>], width: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if width <= 1 || vectors.len() <= 1 {
        return Ok(evaluate_in(f, vectors, None));
    }
    let p = pool(width)?;
    Ok(evaluate_in(f, vectors, Some(&p)))
}

pub fn differential_evolution<F>(f: &F, bounds: &[(f64, f64)], cfg: &DEConfig) -> Result<OptResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    differential_evolution_with(f, bounds, cfg, DeOptions::default())
}

fn write_ledger(
    ledger: &mut Option<&mut dyn Write>,
    generation: usize,
    first_index: usize,
    xs: &[Vec<f64>],
    fs: &[f64],
) -> Result<()> {
    if let Some(w) = ledger.as_deref_mut() {
        let io = |e| Error::io("optimizer ledger", e);
        for (k, (x, y)) in xs.iter().zip(fs).enumerate() {
            let mut line = format!("{generation},{},{y}", first_index + k);
            for v in x {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}").map_err(io)?;
        }
    }
    Ok(())
}

fn spread_converged(fs: &[f64], tol: f64) -> bool {
    let n = fs.len() as f64;
    let mean = fs.iter().sum::<f64>() / n;
    let var = fs.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    mean.is_finite() && var.sqrt() <= tol * mean.abs()
}

fn argmin(fs: &[f64]) -> usize {
    let mut best = 0;
    for (i, y) in fs.iter().enumerate() {
        if *y < fs[best] {
            best = i;
        }
    }
    best
}

pub fn differential_evolution_with<F>(
    f: &F,
    bounds: &[(f64, f64)],
    cfg: &DEConfig,
    mut opts: DeOptions<'_>,
) -> Result<OptResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let d = bounds.len();
    if d < 1 {
        return Err(Error::validation("bounds", "need at least one dimension"));
    }
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::validation(
                format!("bounds[{j}]"),
                format!("need finite lower < upper, got [{lo}, {hi}]"),
            ));
        }
    }
    if opts.init_points.iter().any(|p| p.len() != d) {
        return Err(Error::validation("init_points", format!("every point needs {d} coordinates")));
    }
    let np = cfg.np;
    let clip = |v: f64, j: usize| v.clamp(bounds[j].0, bounds[j].1);
    let workers = if cfg.width > 1 { Some(pool(cfg.width)?) } else { None };

    if let Some(w) = opts.ledger.as_deref_mut() {
        let mut header = String::from("generation,eval_index,objective");
        for j in 1..=d {
            header.push_str(&format!(",x_{j}"));
        }
        writeln!(w, "{header}").map_err(|e| Error::io("optimizer ledger", e))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect())
        .collect();
    for (slot, p) in pop.iter_mut().zip(&opts.init_points) {
        *slot = p.iter().enumerate().map(|(j, &v)| clip(v, j)).collect();
    }
    let mut fit = evaluate_in(f, &pop, workers.as_ref());
    write_ledger(&mut opts.ledger, 0, 0, &pop, &fit)?;
    let mut evaluations = np;
    let mut trace = vec![fit[argmin(&fit)]];
    let mut converged = false;
    let mut generations = 0;

    for g in 1..=cfg.max_generations {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut pick = |taken: &[usize]| loop {
                    let r = rng.random_range(0..np);
                    if !taken.contains(&r) {
                        return r;
                    }
                };
                let r1 = pick(&[i]);
                let r2 = pick(&[i, r1]);
                let r3 = pick(&[i, r1, r2]);
                let forced = rng.random_range(0..d);
                (0..d)
                    .map(|j| {
                        let cross = rng.random::<f64>() < cfg.cr;
                        if cross || j == forced {
                            clip(pop[r1][j] + cfg.f * (pop[r2][j] - pop[r3][j]), j)
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_fit = evaluate_in(f, &trials, workers.as_ref());
        write_ledger(&mut opts.ledger, g, evaluations, &trials, &trial_fit)?;
        evaluations += np;
        for (i, (x, y)) in trials.into_iter().zip(trial_fit).enumerate() {
            if y <= fit[i] {
                pop[i] = x;
                fit[i] = y;
            }
        }
        generations = g;
        trace.push(fit[argmin(&fit)]);
        if spread_converged(&fit, cfg.tol) {
            converged = true;
            break;
        }
    }

    let best = argmin(&fit);
    Ok(OptResult {
        best_x: pop[best].clone(),
        best_f: fit[best],
        generations,
        evaluations,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn rejects_bad_configuration() {
        let cfg = DEConfig {
            np: 3,
            ..Default::default()
        };
        assert!(differential_evolution(&sphere, &[(-1.0, 1.0)], &cfg).is_err());
        let cfg = DEConfig::default();
        assert!(differential_evolution(&sphere, &[], &cfg).is_err());
        assert!(differential_evolution(&sphere, &[(1.0, 1.0)], &cfg).is_err());
    }

    #[test]
    fn identical_population_never_moves() {
        let cfg = DEConfig {
            np: 6,
            max_generations: 5,
            tol: 0.0,
            ..Default::default()
        };
        let start = vec![0.3, -0.7];
        let opts = DeOptions {
            init_points: vec![start.clone(); 6],
            ledger: None,
        };
        let r = differential_evolution_with(&sphere, &[(-1.0, 1.0); 2], &cfg, opts).unwrap();
        assert_eq!(r.best_x, start);
        assert_eq!(r.evaluations, 6 * (1 + r.generations));
    }

    #[test]
    fn ledger_has_one_row_per_evaluation() {
        let cfg = DEConfig {
            np: 5,
            max_generations: 3,
            tol: 0.0,
            ..Default::default()
        };
        let mut buf = Vec::new();
        let opts = DeOptions {
            init_points: vec![],
            ledger: Some(&mut buf),
        };
        let r = differential_evolution_with(&sphere, &[(-1.0, 1.0); 3], &cfg, opts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "generation,eval_index,objective,x_1,x_2,x_3");
        assert_eq!(lines.len() - 1, r.evaluations);
    }

    #[test]
    fn empty_population_evaluates_to_nothing() {
        assert!(evaluate_population(&sphere, &[], 4).unwrap().is_empty());
    }
}

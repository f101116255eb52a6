//! Global-best particle swarm over non-negative modulus coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{IndexedSample, PairwiseBase};
use crate::metric::BaseMetric;
use crate::phi::{PhiAtom, PhiCombination};

/// Replacement for an all-zero coefficient vector: `(ZERO_NUDGE, 0, ..., 0)`.
pub const ZERO_NUDGE: f64 = 1.0e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwarmError {
    #[error("search dimension must be at least 1")]
    ZeroDimension,
    #[error("invalid swarm configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `K·Q` of the shifted index under the candidate modulus.
    #[default]
    KqBound,
    /// Held-out RMSE of the optimally blended McShane/Whitney extension.
    TestRmse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Every coordinate is searched in `[0, lambda_max]`.
    pub lambda_max: f64,
    pub seed: u64,
    pub objective: Objective,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 40,
            iterations: 200,
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            lambda_max: 10.0,
            seed: 0,
            objective: Objective::KqBound,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), SwarmError> {
        let bad = |msg: &str| Err(SwarmError::Config(msg.to_string()));
        if self.swarm_size < 2 {
            return bad("swarm_size must be at least 2");
        }
        if self.iterations < 1 {
            return bad("iterations must be at least 1");
        }
        if !(self.lambda_max.is_finite() && self.lambda_max > 0.0) {
            return bad("lambda_max must be positive and finite");
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
        ] {
            if !v.is_finite() {
                return Err(SwarmError::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmResult {
    pub best_lambda: Vec<f64>,
    #[serde(with = "crate::serde_inf")]
    pub best_objective: f64,
    /// Best-so-far objective after each iteration.
    #[serde(with = "crate::serde_inf::vec")]
    pub history: Vec<f64>,
}

/// Replaces an all-zero vector by `(ZERO_NUDGE, 0, ..., 0)`.
pub fn nudge_zero(lambda: &mut [f64]) {
    if lambda.iter().all(|&x| x == 0.0) {
        if let Some(first) = lambda.first_mut() {
            *first = ZERO_NUDGE;
        }
    }
}

// One independent stream per (iteration, particle), so the draws a particle
// sees do not depend on evaluation order or thread count.
fn stream(seed: u64, iteration: usize, particle: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 32) | particle as u64);
    rng
}

fn score<F>(objective: &F, position: &mut [f64]) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    nudge_zero(position);
    let v = objective(position);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `objective` over `[0, lambda_max]^dim`.
///
/// Particle 0 starts at `(1, 0, ..., 0)` (clamped to the box), so the result
/// is never worse than that point. Velocities are clamped to half the box
/// width and positions to the box. `NaN` objective values count as `+∞`.
pub fn pso_minimize<F>(
    objective: &F,
    dim: usize,
    cfg: &PsoConfig,
) -> Result<SwarmResult, SwarmError>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    if dim == 0 {
        return Err(SwarmError::ZeroDimension);
    }
    cfg.validate()?;
    let hi = cfg.lambda_max;
    let v_max = 0.5 * hi;
    let n = cfg.swarm_size;

    let mut positions: Vec<Vec<f64>> = (0..n)
        .map(|p| {
            if p == 0 {
                let mut seeded = vec![0.0; dim];
                seeded[0] = 1.0f64.min(hi);
                seeded
            } else {
                let mut rng = stream(cfg.seed, 0, p);
                (0..dim).map(|_| rng.random_range(0.0..=hi)).collect()
            }
        })
        .collect();
    let mut velocities = vec![vec![0.0; dim]; n];
    let mut values: Vec<f64> = positions
        .par_iter_mut()
        .map(|x| score(objective, x))
        .collect();

    let mut personal = positions.clone();
    let mut personal_values = values.clone();
    let mut g = argmin(&personal_values);
    let mut global = personal[g].clone();
    let mut global_value = personal_values[g];
    let mut history = Vec::with_capacity(cfg.iterations);

    for it in 1..=cfg.iterations {
        positions
            .par_iter_mut()
            .zip(velocities.par_iter_mut())
            .zip(personal.par_iter())
            .enumerate()
            .for_each(|(p, ((x, v), best))| {
                let mut rng = stream(cfg.seed, it, p);
                for d in 0..dim {
                    let r1: f64 = rng.random();
                    let r2: f64 = rng.random();
                    let vel = cfg.inertia * v[d]
                        + cfg.cognitive * r1 * (best[d] - x[d])
                        + cfg.social * r2 * (global[d] - x[d]);
                    v[d] = vel.clamp(-v_max, v_max);
                    x[d] = (x[d] + v[d]).clamp(0.0, hi);
                }
            });
        values = positions
            .par_iter_mut()
            .map(|x| score(objective, x))
            .collect();
        for p in 0..n {
            if values[p] < personal_values[p] {
                personal_values[p] = values[p];
                personal[p].clone_from(&positions[p]);
            }
        }
        g = argmin(&personal_values);
        if personal_values[g] < global_value {
            global_value = personal_values[g];
            global.clone_from(&personal[g]);
        }
        history.push(global_value);
    }

    Ok(SwarmResult {
        best_lambda: global,
        best_objective: global_value,
        history,
    })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// `λ ↦ K(λ)·Q(λ)` for a fixed sample and atom list. Pairwise base distances
/// are computed once up front.
pub struct KqObjective {
    atoms: Vec<PhiAtom>,
    pairs: PairwiseBase,
    values: Vec<f64>,
}

impl KqObjective {
    /// `sample` is expected to be shifted to minimum zero.
    pub fn new(sample: &IndexedSample, base: BaseMetric, atoms: &[PhiAtom]) -> Self {
        Self {
            atoms: atoms.to_vec(),
            pairs: PairwiseBase::new(sample.points(), base),
            values: sample.values().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.atoms.len()
    }

    pub fn evaluate(&self, lambda: &[f64]) -> f64 {
        let mut lambda = lambda.to_vec();
        nudge_zero(&mut lambda);
        let Ok(phi) = PhiCombination::new(self.atoms.clone(), lambda) else {
            return f64::INFINITY;
        };
        let (k, q) = self.pairs.constants(&phi, &self.values);
        if k.is_finite() && q.is_finite() {
            k.value * q.value
        } else {
            f64::INFINITY
        }
    }
}

/// Shorthand for [`KqObjective::new`] returning a plain closure.
pub fn objective_kq(
    sample: &IndexedSample,
    base: BaseMetric,
    atoms: &[PhiAtom],
) -> impl Fn(&[f64]) -> f64 + Sync {
    let obj = KqObjective::new(sample, base, atoms);
    move |lambda| obj.evaluate(lambda)
}

/// Runs the swarm and turns the best coefficients into a modulus. For the
/// `K·Q` objective the coefficients are rescaled to sum to one, since that
/// objective is constant along rays.
pub fn optimize_phi<F>(
    objective: &F,
    atoms: &[PhiAtom],
    cfg: &PsoConfig,
) -> Result<(PhiCombination, SwarmResult), SwarmError>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let mut result = pso_minimize(objective, atoms.len(), cfg)?;
    let phi = PhiCombination::new(atoms.to_vec(), result.best_lambda.clone())
        .map_err(|e| SwarmError::Config(e.to_string()))?;
    let phi = match cfg.objective {
        Objective::KqBound => phi.normalized(),
        Objective::TestRmse => phi,
    };
    result.best_lambda = phi.coefficients().to_vec();
    Ok((phi, result))
}

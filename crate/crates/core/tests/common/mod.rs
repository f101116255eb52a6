//! Brute-force oracles and random generators shared by the integration tests.
//! The oracles only use plain loops and std math, never the library's
//! distance or constant code.
#![allow(dead_code)]

use lipext::{BaseMetric, IndexedSample, PhiAtom, PhiCombination};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn atom_value(atom: PhiAtom, x: f64) -> f64 {
    match atom.name() {
        "identity" => x,
        "sqrt" => x.sqrt(),
        "log1p" => (1.0 + x).ln(),
        "arctan" => x.atan(),
        "rational" => x / (1.0 + x),
        "sqrt_log1p" => (1.0 + x.sqrt()).ln(),
        "sqrt_arctan" => x.sqrt().atan(),
        "sqrt_rational" => x.sqrt() / (1.0 + x.sqrt()),
        other => panic!("no oracle for atom {other}"),
    }
}

pub fn phi_value(phi: &PhiCombination, x: f64) -> f64 {
    phi.atoms()
        .iter()
        .zip(phi.coefficients())
        .map(|(&a, &c)| c * atom_value(a, x))
        .sum()
}

pub fn base_distance(base: BaseMetric, a: &[f64], b: &[f64]) -> f64 {
    let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    match base {
        BaseMetric::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        BaseMetric::Manhattan => diffs.sum(),
        BaseMetric::Chebyshev => diffs.fold(0.0, f64::max),
    }
}

pub fn d_phi(base: BaseMetric, phi: &PhiCombination, a: &[f64], b: &[f64]) -> f64 {
    phi_value(phi, base_distance(base, a, b))
}

/// `(K, Q, C)` by double loop over all ordered pairs.
pub fn constants_oracle(
    base: BaseMetric,
    phi: &PhiCombination,
    points: &[Vec<f64>],
    values: &[f64],
) -> (f64, f64, f64) {
    let mut k: f64 = 0.0;
    let mut q: f64 = 0.0;
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i == j {
                continue;
            }
            let d = d_phi(base, phi, &points[i], &points[j]);
            let di = (values[i] - values[j]).abs();
            let s = values[i].abs() + values[j].abs();
            if d > 0.0 {
                k = k.max(di / d);
            } else if di > 0.0 {
                k = f64::INFINITY;
            }
            if s > 0.0 {
                q = q.max(d / s);
            } else if d > 0.0 {
                q = f64::INFINITY;
            }
        }
    }
    let c = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (k, q, c)
}

pub fn whitney_oracle(
    base: BaseMetric,
    phi: &PhiCombination,
    k: f64,
    points: &[Vec<f64>],
    values: &[f64],
    x: &[f64],
) -> f64 {
    let mut best = f64::INFINITY;
    for (p, v) in points.iter().zip(values) {
        best = best.min(v + k * d_phi(base, phi, p, x));
    }
    best
}

pub fn mcshane_oracle(
    base: BaseMetric,
    phi: &PhiCombination,
    k: f64,
    points: &[Vec<f64>],
    values: &[f64],
    x: &[f64],
) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (p, v) in points.iter().zip(values) {
        best = best.max(v - k * d_phi(base, phi, p, x));
    }
    best
}

pub fn standard_oracle(
    base: BaseMetric,
    phi: &PhiCombination,
    k: f64,
    points: &[Vec<f64>],
    values: &[f64],
    x: &[f64],
) -> f64 {
    let mut a0 = 0;
    for i in 1..values.len() {
        if values[i] < values[a0] {
            a0 = i;
        }
    }
    values[a0] + k * d_phi(base, phi, &points[a0], x)
}

pub fn alpha_oracle(truth: &[f64], w: &[f64], m: &[f64]) -> f64 {
    let mut num = 0.0;
    for i in 0..truth.len() {
        num += (w[i] - truth[i]) * (w[i] - m[i]);
    }
    let mut den = 0.0;
    for i in 0..truth.len() {
        den += (w[i] - m[i]) * (w[i] - m[i]);
    }
    if den == 0.0 {
        0.5
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

pub fn blend_sse_oracle(truth: &[f64], w: &[f64], m: &[f64], alpha: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..truth.len() {
        let e = truth[i] - ((1.0 - alpha) * w[i] + alpha * m[i]);
        s += e * e;
    }
    s
}

pub fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

/// `n` points in the unit cube with index values in `[0, 100)`.
pub fn random_sample(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> IndexedSample {
    let points = (0..n).map(|_| random_point(rng, dim)).collect();
    let values = (0..n).map(|_| 100.0 * rng.random::<f64>()).collect();
    IndexedSample::new(points, values).unwrap()
}

/// A non-negative combination of a random non-empty subset of the atoms.
pub fn random_phi(rng: &mut ChaCha8Rng) -> PhiCombination {
    let mut atoms = Vec::new();
    let mut coefs = Vec::new();
    for a in PhiAtom::ALL {
        if rng.random_bool(0.5) {
            atoms.push(a);
            coefs.push(rng.random_range(0.01..5.0));
        }
    }
    if atoms.is_empty() {
        atoms.push(PhiAtom::ALL[rng.random_range(0..PhiAtom::ALL.len())]);
        coefs.push(rng.random_range(0.01..5.0));
    }
    PhiCombination::new(atoms, coefs).unwrap()
}

pub fn random_base(rng: &mut ChaCha8Rng) -> BaseMetric {
    BaseMetric::ALL[rng.random_range(0..BaseMetric::ALL.len())]
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

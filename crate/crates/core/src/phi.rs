//! Modulus functions for composition metrics.
//!
//! A modulus `φ: [0, ∞) → [0, ∞)` used to build `d_φ = φ ∘ d` has to vanish at
//! zero, be strictly increasing, subadditive and continuous. Every
//! [`PhiAtom`] has those properties, and so does any non-negative,
//! not-all-zero linear combination of atoms ([`PhiCombination`]).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper end of the probe interval used by [`validate_phi`].
pub const PROBE_X_MAX: f64 = 1.0e3;
/// Absolute slack allowed on the subadditivity check.
pub const PROBE_TOLERANCE: f64 = 1.0e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhiError {
    #[error("modulus evaluated at {0}, which is outside [0, inf)")]
    Domain(f64),
    #[error("{atoms} atoms but {coefficients} coefficients")]
    LengthMismatch { atoms: usize, coefficients: usize },
    #[error("a modulus needs at least one atom")]
    Empty,
    #[error("coefficient {index} is {value}; coefficients must be finite and non-negative")]
    BadCoefficient { index: usize, value: f64 },
    #[error("all coefficients are zero; the modulus would not be strictly increasing")]
    AllZero,
    #[error("unknown modulus atom `{0}`")]
    UnknownAtom(String),
}

/// Elementary modulus functions.
///
/// The `Sqrt*` variants are the plain maps precomposed with `√x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiAtom {
    Identity,
    Sqrt,
    Log1p,
    Arctan,
    Rational,
    SqrtLog1p,
    SqrtArctan,
    SqrtRational,
}

impl PhiAtom {
    pub const ALL: [PhiAtom; 8] = [
        PhiAtom::Identity,
        PhiAtom::Sqrt,
        PhiAtom::Log1p,
        PhiAtom::Arctan,
        PhiAtom::Rational,
        PhiAtom::SqrtLog1p,
        PhiAtom::SqrtArctan,
        PhiAtom::SqrtRational,
    ];

    /// `x, log(1+x), arctan x, x/(1+x)`.
    pub const PHI_BASIS: [PhiAtom; 4] = [
        PhiAtom::Identity,
        PhiAtom::Log1p,
        PhiAtom::Arctan,
        PhiAtom::Rational,
    ];

    /// The same four maps applied to `√x`.
    pub const PSI_BASIS: [PhiAtom; 4] = [
        PhiAtom::Sqrt,
        PhiAtom::SqrtLog1p,
        PhiAtom::SqrtArctan,
        PhiAtom::SqrtRational,
    ];

    /// Evaluates the atom. The caller guarantees `x >= 0`.
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            PhiAtom::Identity => x,
            PhiAtom::Sqrt => x.sqrt(),
            PhiAtom::Log1p => x.ln_1p(),
            PhiAtom::Arctan => x.atan(),
            PhiAtom::Rational => x / (1.0 + x),
            PhiAtom::SqrtLog1p => x.sqrt().ln_1p(),
            PhiAtom::SqrtArctan => x.sqrt().atan(),
            PhiAtom::SqrtRational => {
                let r = x.sqrt();
                r / (1.0 + r)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PhiAtom::Identity => "identity",
            PhiAtom::Sqrt => "sqrt",
            PhiAtom::Log1p => "log1p",
            PhiAtom::Arctan => "arctan",
            PhiAtom::Rational => "rational",
            PhiAtom::SqrtLog1p => "sqrt_log1p",
            PhiAtom::SqrtArctan => "sqrt_arctan",
            PhiAtom::SqrtRational => "sqrt_rational",
        }
    }
}

impl fmt::Display for PhiAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhiAtom {
    type Err = PhiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PhiAtom::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| PhiError::UnknownAtom(s.to_string()))
    }
}

/// `φ = Σ λⱼ φⱼ` with `λⱼ >= 0` and at least one `λⱼ > 0`.
///
/// Immutable once built; serialized as
/// `{"atoms": ["identity", ...], "coefficients": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPhi", into = "RawPhi")]
pub struct PhiCombination {
    atoms: Vec<PhiAtom>,
    coefficients: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPhi {
    atoms: Vec<PhiAtom>,
    coefficients: Vec<f64>,
}

impl TryFrom<RawPhi> for PhiCombination {
    type Error = PhiError;

    fn try_from(raw: RawPhi) -> Result<Self, Self::Error> {
        PhiCombination::new(raw.atoms, raw.coefficients)
    }
}

impl From<PhiCombination> for RawPhi {
    fn from(phi: PhiCombination) -> Self {
        RawPhi {
            atoms: phi.atoms,
            coefficients: phi.coefficients,
        }
    }
}

impl PhiCombination {
    pub fn new(atoms: Vec<PhiAtom>, coefficients: Vec<f64>) -> Result<Self, PhiError> {
        if atoms.len() != coefficients.len() {
            return Err(PhiError::LengthMismatch {
                atoms: atoms.len(),
                coefficients: coefficients.len(),
            });
        }
        if atoms.is_empty() {
            return Err(PhiError::Empty);
        }
        for (index, &value) in coefficients.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(PhiError::BadCoefficient { index, value });
            }
        }
        if coefficients.iter().all(|&c| c == 0.0) {
            return Err(PhiError::AllZero);
        }
        Ok(Self {
            atoms,
            coefficients,
        })
    }

    /// A single atom with unit weight.
    pub fn single(atom: PhiAtom) -> Self {
        Self {
            atoms: vec![atom],
            coefficients: vec![1.0],
        }
    }

    pub fn identity() -> Self {
        Self::single(PhiAtom::Identity)
    }

    pub fn atoms(&self) -> &[PhiAtom] {
        &self.atoms
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `φ(x)`; rejects negative or NaN arguments.
    pub fn eval(&self, x: f64) -> Result<f64, PhiError> {
        if x.is_nan() || x < 0.0 {
            return Err(PhiError::Domain(x));
        }
        Ok(self.apply(x))
    }

    /// `φ(x)` without the domain check. Used in the pairwise hot loops, where
    /// the argument is a base distance and therefore non-negative.
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, &c)| c != 0.0)
            .map(|(a, &c)| c * a.apply(x))
            .sum()
    }

    /// The combination with every coefficient multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self, PhiError> {
        Self::new(
            self.atoms.clone(),
            self.coefficients.iter().map(|c| c * factor).collect(),
        )
    }

    /// Rescales the coefficients to sum to one.
    pub fn normalized(&self) -> Self {
        let total: f64 = self.coefficients.iter().sum();
        Self {
            atoms: self.atoms.clone(),
            coefficients: self.coefficients.iter().map(|c| c / total).collect(),
        }
    }
}

impl fmt::Display for PhiCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (atom, c) in self.atoms.iter().zip(&self.coefficients) {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            write!(f, "{c}*{atom}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    /// `φ(0) != 0`
    Origin,
    /// `φ(x + y) > φ(x) + φ(y) + ε`
    Subadditivity,
    /// `x < y` but `φ(x) >= φ(y)`
    Monotonicity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub violation: Violation,
    pub x: f64,
    pub y: f64,
    /// Left and right side of the failed inequality.
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub probes: usize,
    pub counterexample: Option<Counterexample>,
}

// Checked before the random probes so that gross failures are reported with
// small, readable arguments.
const ANCHOR_PROBES: [(f64, f64); 5] = [
    (1.0, 1.0),
    (0.0, 1.0),
    (0.5, 0.5),
    (10.0, 10.0),
    (PROBE_X_MAX / 2.0, PROBE_X_MAX / 2.0),
];

/// Probes the modulus axioms of `phi` on seeded random pairs in
/// `[0, PROBE_X_MAX]²`.
pub fn validate_phi(phi: &PhiCombination, probe_count: usize, seed: u64) -> ValidationReport {
    validate_modulus(|x| phi.apply(x), probe_count, seed)
}

/// Same probe as [`validate_phi`] for an arbitrary function.
pub fn validate_modulus<F>(f: F, probe_count: usize, seed: u64) -> ValidationReport
where
    F: Fn(f64) -> f64,
{
    let at_zero = f(0.0);
    if at_zero != 0.0 {
        return ValidationReport {
            passed: false,
            probes: 0,
            counterexample: Some(Counterexample {
                violation: Violation::Origin,
                x: 0.0,
                y: 0.0,
                lhs: at_zero,
                rhs: 0.0,
            }),
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = (0..probe_count).map(|_| {
        (
            rng.random_range(0.0..=PROBE_X_MAX),
            rng.random_range(0.0..=PROBE_X_MAX),
        )
    });
    let mut probes = 0;
    for (x, y) in ANCHOR_PROBES.into_iter().chain(random) {
        probes += 1;
        if let Some(c) = check_pair(&f, x, y) {
            return ValidationReport {
                passed: false,
                probes,
                counterexample: Some(c),
            };
        }
    }
    ValidationReport {
        passed: true,
        probes,
        counterexample: None,
    }
}

fn check_pair<F: Fn(f64) -> f64>(f: &F, x: f64, y: f64) -> Option<Counterexample> {
    let (fx, fy) = (f(x), f(y));
    let joint = f(x + y);
    if joint > fx + fy + PROBE_TOLERANCE {
        return Some(Counterexample {
            violation: Violation::Subadditivity,
            x,
            y,
            lhs: joint,
            rhs: fx + fy,
        });
    }
    let ((lo, f_lo), (hi, f_hi)) = if x <= y {
        ((x, fx), (y, fy))
    } else {
        ((y, fy), (x, fx))
    };
    if lo < hi && f_lo >= f_hi {
        return Some(Counterexample {
            violation: Violation::Monotonicity,
            x: lo,
            y: hi,
            lhs: f_lo,
            rhs: f_hi,
        });
    }
    None
}

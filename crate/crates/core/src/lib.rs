//! Index extension by Lipschitz regression over composition metrics.
//!
//! Points live in a feature space with a base metric `d`; a modulus `φ`
//! (a non-negative combination of [`phi::PhiAtom`]s) gives the metric
//! `d_φ = φ ∘ d`. An index known on some points is extended to the rest with
//! McShane/Whitney formulas, their optimal convex blend, or a standard
//! index anchored at the minimum, and `φ` can be tuned by particle swarm.

pub mod cli;
pub mod config;
pub mod constants;
pub mod dataset;
pub mod extension;
pub mod linear;
pub mod metric;
pub mod model;
pub mod phi;
pub mod pipeline;
pub mod swarm;

pub use constants::{
    coherence_constant, constants_report, error_bound, katetov_shift, normalization_constant,
    ConstantsReport, IndexedSample, PairConstant,
};
pub use dataset::{Dataset, ScaleFit, Scaling};
pub use extension::{optimal_alpha, standard_index_fit, ExtensionKind, ExtensionModel};
pub use metric::{BaseMetric, CompositionMetric};
pub use phi::{validate_phi, PhiAtom, PhiCombination, ValidationReport};
pub use pipeline::{
    cross_validate, rank, rmse, split_indices, CvOptions, CvReport, Method, ModelSpec,
};
pub use swarm::{objective_kq, pso_minimize, Objective, PsoConfig, SwarmResult};

/// JSON has no infinity; non-finite floats are written as the strings
/// `"inf"`, `"-inf"` and `"nan"` and read back from either form.
pub(crate) mod serde_inf {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct FloatOrWord;

    impl Visitor<'_> for FloatOrWord {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
        }

        fn visit_f64<E>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(FloatOrWord)
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        #[derive(serde::Serialize, Deserialize)]
        struct Wrapped(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&Wrapped(*x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Wrapped>::deserialize(d)?
                .into_iter()
                .map(|w| w.0)
                .collect())
        }
    }
}

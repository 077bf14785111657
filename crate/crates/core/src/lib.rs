//! Fisher information and constrained Cramér-Rao bounds for blind FIR
//! multichannel estimation.
//!
//! Numerics are generic over `T: Real` (`f32` or `f64`); the `*64` aliases at
//! the crate root fix `T = f64`.

pub mod channel;
pub mod constraint;
pub mod error;
pub mod fim;
pub mod identifiability;
pub mod linalg;
pub mod scalar;
pub mod sim;

pub use channel::{Channel, ReducibleDecomposition, SymbolBurst};
pub use constraint::{ConstraintKind, ConstraintSet, CrbResult};
pub use error::{Error, Result};
pub use identifiability::{IdentifiabilityVerdict, IdentifiableUpTo};
pub use fim::{FimResult, GaussianModelConfig, Model, ParamLayout, SingularityReport};
pub use scalar::{Field, FieldScalar, Real, C};

pub type Channel64 = Channel<f64>;
pub type Channel32 = Channel<f32>;
pub type FimResult64 = FimResult<f64>;
pub type GaussianModelConfig64 = GaussianModelConfig<f64>;

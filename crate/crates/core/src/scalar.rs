//! Scalar abstraction shared by every module.
//!
//! All numerics are generic over a real floating-point type `T` (`f32` or
//! `f64`). Complex quantities are `Complex<T>`. Whether a quantity is
//! semantically real or complex is carried by [`Field`], never inferred from
//! the stored values.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

/// Real floating-point scalar the library is generic over.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + LowerExp + Debug + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the type.
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type C<T> = Complex<T>;

/// Semantic field of a quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    /// Number of real coordinates per scalar.
    pub fn real_dim(self) -> usize {
        match self {
            Field::Real => 1,
            Field::Complex => 2,
        }
    }
}

impl Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Field::Real => f.write_str("real"),
            Field::Complex => f.write_str("complex"),
        }
    }
}

impl std::str::FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "real" => Ok(Field::Real),
            "complex" => Ok(Field::Complex),
            other => Err(format!("unknown field `{other}` (expected real|complex)")),
        }
    }
}

#[inline]
pub(crate) fn cplx<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn creal<T: Real>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

/// Element type of a computation: `T` for real-field work, `Complex<T>`
/// for complex-field work. The field is a property of the type, so a
/// real computation can never silently become complex.
pub trait FieldScalar<T: Real>: nalgebra::ComplexField<RealField = T> + Copy + Send + Sync {
    const FIELD: Field;

    /// Converts from a complex value. Real scalars keep the real part only;
    /// callers validate that the imaginary part is zero where it matters.
    fn from_c(z: C<T>) -> Self;

    fn to_c(self) -> C<T>;

    fn from_re(x: T) -> Self {
        Self::from_c(creal(x))
    }
}

impl<T: Real> FieldScalar<T> for T {
    const FIELD: Field = Field::Real;

    fn from_c(z: C<T>) -> Self {
        z.re
    }

    fn to_c(self) -> C<T> {
        creal(self)
    }
}

impl<T: Real> FieldScalar<T> for C<T> {
    const FIELD: Field = Field::Complex;

    fn from_c(z: C<T>) -> Self {
        z
    }

    fn to_c(self) -> C<T> {
        self
    }
}

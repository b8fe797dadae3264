use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Floating point width used for model weights and forward evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn bits(self) -> u8 {
        match self {
            Precision::Single => 32,
            Precision::Double => 64,
        }
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        match bits {
            32 => Some(Precision::Single),
            64 => Some(Precision::Double),
            _ => None,
        }
    }

    /// Default KKT tolerance used by discovery at this precision.
    pub fn default_tol(self) -> f64 {
        match self {
            Precision::Single => 1e-4,
            Precision::Double => 1e-10,
        }
    }
}

impl TryFrom<u8> for Precision {
    type Error = String;

    fn try_from(bits: u8) -> Result<Self, Self::Error> {
        Precision::from_bits(bits)
            .ok_or_else(|| format!("unsupported precision {bits}, expected 32 or 64"))
    }
}

impl From<Precision> for u8 {
    fn from(p: Precision) -> u8 {
        p.bits()
    }
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-bit", self.bits())
    }
}

/// Scalar type the numeric kernels are generic over (`f32` or `f64`).
pub trait Real: Float + Sum + Default + Debug + Display + Send + Sync + 'static {
    const PRECISION: Precision;
    /// Veltkamp splitting constant `2^⌈p/2⌉ + 1`.
    const SPLITTER: f64;

    fn of(v: f64) -> Self;

    fn to_f64_lossless(self) -> f64;
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Double;
    const SPLITTER: f64 = 134_217_729.0;

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self
    }
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Single;
    const SPLITTER: f64 = 4097.0;

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self as f64
    }
}

pub(crate) fn cast_vec<S: Real, T: Real>(v: &[S]) -> Vec<T> {
    v.iter().map(|&a| T::of(a.to_f64_lossless())).collect()
}

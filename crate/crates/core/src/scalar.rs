//! Binary32 arithmetic contract and per-layer activation functions.
//!
//! All datapath values are `f32`. Rust never contracts `a * b + c` into a fused
//! multiply-add, so every operation below is rounded to binary32 with
//! round-to-nearest-even before its result is reused.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// One MAC step: `round32(round32(a * b) + acc)`.
///
/// Two roundings, never fused.
#[inline]
pub fn fp_mul_add(a: f32, b: f32, acc: f32) -> f32 {
    let product = a * b;
    product + acc
}

/// Activation applied to presynaptic states when they are consumed by the
/// layer below. Each layer carries exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ActivationKind {
    #[default]
    Identity,
    Relu,
    Tanh,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 3] = [Self::Identity, Self::Relu, Self::Tanh];

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Relu => "relu",
            Self::Tanh => "tanh",
        }
    }

    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        apply_activation(self, x)
    }

    #[inline]
    pub fn derivative(self, x: f32) -> f32 {
        activation_derivative(self, x)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Self::Identity),
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Reference tanh: platform binary64 tanh, rounded once to binary32.
#[inline]
pub fn tanh32(x: f32) -> f32 {
    (x as f64).tanh() as f32
}

/// `f(x)` for the given kind. NaN propagates through every kind.
#[inline]
pub fn apply_activation(kind: ActivationKind, x: f32) -> f32 {
    match kind {
        ActivationKind::Identity => x,
        ActivationKind::Relu => {
            if x > 0.0 || x.is_nan() {
                x
            } else {
                0.0
            }
        }
        ActivationKind::Tanh => tanh32(x),
    }
}

/// `f'(x)`. The relu derivative at exactly zero is zero.
#[inline]
pub fn activation_derivative(kind: ActivationKind, x: f32) -> f32 {
    match kind {
        ActivationKind::Identity => 1.0,
        ActivationKind::Relu => {
            if x > 0.0 {
                1.0
            } else if x.is_nan() {
                x
            } else {
                0.0
            }
        }
        ActivationKind::Tanh => {
            let t = tanh32(x);
            1.0 - t * t
        }
    }
}

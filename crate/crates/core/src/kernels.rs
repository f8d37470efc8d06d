//! Stationary covariance functions over the auxiliary inputs.
//!
//! Parameters are stored unconstrained; the positive lengthscale and
//! outputscale are recovered through [`constrain`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Lower bound added after the softplus so constrained parameters stay positive.
pub const POSITIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Matern32,
    Cauchy,
}

impl KernelKind {
    pub fn code(self) -> f64 {
        match self {
            KernelKind::Rbf => 0.0,
            KernelKind::Matern32 => 1.0,
            KernelKind::Cauchy => 2.0,
        }
    }

    pub fn from_code(code: f64) -> Option<Self> {
        match code as i64 {
            0 => Some(KernelKind::Rbf),
            1 => Some(KernelKind::Matern32),
            2 => Some(KernelKind::Cauchy),
            _ => None,
        }
    }
}

/// `softplus(raw) + 1e-6`.
pub fn constrain(raw: f64) -> f64 {
    softplus(raw) + POSITIVE_FLOOR
}

/// d constrain / d raw.
pub fn constrain_grad(raw: f64) -> f64 {
    sigmoid(raw)
}

/// Inverse of [`constrain`]; the value must exceed the floor.
pub fn unconstrain(value: f64) -> Result<f64> {
    let y = value - POSITIVE_FLOOR;
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::InvalidArgument(format!("positive parameter {value} must exceed {POSITIVE_FLOOR}")));
    }
    // log(exp(y) - 1), written to stay accurate at both ends.
    Ok(if y > 30.0 { y + (-(-y).exp()).ln_1p() } else { y.exp_m1().ln() })
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub raw_lengthscale: f64,
    pub raw_outputscale: f64,
}

/// Constrained initial values, as found in run configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub lengthscale: f64,
    pub outputscale: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, lengthscale: f64, outputscale: f64) -> Result<Self> {
        Ok(Self { kind, raw_lengthscale: unconstrain(lengthscale)?, raw_outputscale: unconstrain(outputscale)? })
    }

    pub fn from_config(c: &KernelConfig) -> Result<Self> {
        Self::new(c.kind, c.lengthscale, c.outputscale)
    }

    pub fn lengthscale(&self) -> f64 {
        constrain(self.raw_lengthscale)
    }

    pub fn outputscale(&self) -> f64 {
        constrain(self.raw_outputscale)
    }

    /// k(r) for Euclidean distance r.
    pub fn of_distance(&self, r: f64) -> f64 {
        kernel_value(self.kind, self.lengthscale(), self.outputscale(), r)
    }

    /// Gram matrix between the rows of `x1` and `x2`.
    pub fn eval(&self, x1: &Matrix, x2: &Matrix) -> Result<Matrix> {
        eval_kernel(self, x1, x2)
    }
}

pub fn kernel_value(kind: KernelKind, ls: f64, os: f64, r: f64) -> f64 {
    let u = r / ls;
    match kind {
        KernelKind::Rbf => os * (-0.5 * u * u).exp(),
        KernelKind::Matern32 => {
            let a = 3f64.sqrt() * u;
            os * (1.0 + a) * (-a).exp()
        }
        KernelKind::Cauchy => os / (1.0 + u * u),
    }
}

/// ∂k/∂ℓ at distance r (constrained lengthscale ℓ).
pub fn kernel_dlengthscale(kind: KernelKind, ls: f64, os: f64, r: f64) -> f64 {
    let u = r / ls;
    match kind {
        KernelKind::Rbf => os * (-0.5 * u * u).exp() * u * u / ls,
        KernelKind::Matern32 => {
            let a = 3f64.sqrt() * u;
            os * 3.0 * u * u * (-a).exp() / ls
        }
        KernelKind::Cauchy => {
            let d = 1.0 + u * u;
            os * 2.0 * u * u / (ls * d * d)
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn pairwise_distances(x1: &Matrix, x2: &Matrix) -> Result<Matrix> {
    if x1.cols() != x2.cols() {
        return Err(Error::DimensionMismatch(format!("inputs have {} and {} columns", x1.cols(), x2.cols())));
    }
    if !x1.is_finite() || !x2.is_finite() {
        return Err(Error::NonFinite("kernel inputs"));
    }
    Ok(Matrix::from_fn(x1.rows(), x2.rows(), |i, j| euclidean(x1.row(i), x2.row(j))))
}

pub fn eval_kernel(spec: &KernelSpec, x1: &Matrix, x2: &Matrix) -> Result<Matrix> {
    let (ls, os) = (spec.lengthscale(), spec.outputscale());
    Ok(pairwise_distances(x1, x2)?.map(|r| kernel_value(spec.kind, ls, os, r)))
}

/// Zero-mean prior made of `L` independent channels.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPrior {
    pub channels: Vec<KernelSpec>,
}

impl LatentPrior {
    pub fn new(channels: Vec<KernelSpec>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidArgument("latent prior needs at least one channel".into()));
        }
        Ok(Self { channels })
    }

    pub fn latent_dim(&self) -> usize {
        self.channels.len()
    }

    /// Prior mean, identically zero.
    pub fn mean(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

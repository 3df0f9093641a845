//! Baseline kernels on flattened path values.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::path::Ensemble;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StaticKind {
    /// `exp(-‖x-y‖² / γ²)`
    Rbf,
    /// `(1 + √3‖x-y‖/γ²) exp(-√3‖x-y‖/γ²)`
    Matern32,
}

impl StaticKind {
    pub fn eval(self, dist: f64, gamma: f64) -> f64 {
        let g2 = gamma * gamma;
        match self {
            StaticKind::Rbf => (-dist * dist / g2).exp(),
            StaticKind::Matern32 => {
                let z = 3f64.sqrt() * dist / g2;
                (1.0 + z) * (-z).exp()
            }
        }
    }
}

/// Gram matrix of `kind` between the row-flattened value matrices of `x`
/// and `y`. Times are not part of the feature vector.
pub fn static_kernel_gram(x: &Ensemble, y: &Ensemble, kind: StaticKind, gamma: f64) -> Result<DMatrix<f64>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    x.check_compatible(y)?;
    Ok(DMatrix::from_fn(x.len(), y.len(), |i, j| {
        let d2: f64 = x
            .path(i)
            .values()
            .iter()
            .zip(y.path(j).values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        kind.eval(d2.sqrt(), gamma)
    }))
}

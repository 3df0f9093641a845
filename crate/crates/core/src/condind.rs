//! Conditional embeddings and a Hilbert–Schmidt conditional-independence
//! criterion for path-valued variables.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{center, shifted_solve};
use crate::mmdtest::{check_test_args, permutation_p_value};
use crate::path::{Ensemble, Path};
use crate::rng::{permutation, replica};
use crate::sigkernel::{first_order_gram_terminal, sig_kernel, PdeSolver};
use crate::{Error, Result};

/// How a criterion value is turned into a decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum AlphaMode {
    /// Dependence is declared when the statistic is at least `alpha`.
    Threshold { alpha: f64 },
    /// Permutation p-value compared with `level`.
    Permutation { level: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiStatistic {
    pub h_value: f64,
    pub epsilon: f64,
    /// `None` in threshold mode.
    pub p_value: Option<f64>,
    /// True when conditional independence is rejected.
    pub reject: bool,
    pub mode: AlphaMode,
    pub permutations: usize,
    pub seed: u64,
}

/// Kernel settings for the criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiConfig {
    pub epsilon: f64,
    pub solver: PdeSolver,
    #[serde(default)]
    pub time_augment: Option<f64>,
    /// Use the product kernel of (Y, Z) in place of the Y kernel.
    #[serde(default)]
    pub product_kernel: bool,
}

impl Default for CiConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            solver: PdeSolver::default(),
            time_augment: None,
            product_kernel: false,
        }
    }
}

impl CiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.solver.refinement == 0 {
            return Err(Error::invalid("refinement must be at least 1"));
        }
        Ok(())
    }

    /// Full-horizon signature Gram matrix of one variable.
    pub fn gram(&self, x: &Ensemble) -> Result<DMatrix<f64>> {
        let x = match self.time_augment {
            Some(s) => x.time_augment(s)?,
            None => x.clone(),
        };
        first_order_gram_terminal(&x, &x, &self.solver)
    }
}

/// Coefficients `(K + mλI)^{-1} k` of the conditional embedding at `x_query`
/// in the span of the sample features.
pub fn conditional_kme_weights(x: &Ensemble, x_query: &Path, lambda: f64, solver: &PdeSolver) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    if x_query.times() != x.times() || x_query.dim() != x.dim() {
        return Err(Error::GridMismatch("query path does not share the ensemble grid".into()));
    }
    let k = first_order_gram_terminal(x, x, solver)?;
    let kq = DMatrix::from_iterator(
        x.len(),
        1,
        x.iter().map(|p| sig_kernel(p, x_query, solver)).collect::<Result<Vec<_>>>()?,
    );
    Ok(shifted_solve(&k, x.len() as f64 * lambda, &kq)?.iter().cloned().collect())
}

fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

fn residual_operator(kz_c: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    // R = K̃z (K̃z + εI)^{-2} K̃z = Aᵀ A with A = (K̃z + εI)^{-1} K̃z
    let a = shifted_solve(kz_c, epsilon, kz_c)?;
    Ok(a.transpose() * a)
}

fn criterion_centered(kx: &DMatrix<f64>, ky: &DMatrix<f64>, r: Option<&DMatrix<f64>>) -> f64 {
    let m = kx.nrows() as f64;
    let first = trace_of_product(kx, ky);
    let Some(r) = r else {
        return first / (m * m);
    };
    let rky = r * ky;
    let second = trace_of_product(kx, &rky);
    let third = trace_of_product(kx, &(rky * r));
    (first - 2.0 * second + third) / (m * m)
}

/// Criterion from raw (uncentered) Gram matrices. Without `kz` this is the
/// unconditional statistic `tr(K̃x K̃y) / m²`.
pub fn hsic_from_grams(kx: &DMatrix<f64>, ky: &DMatrix<f64>, kz: Option<&DMatrix<f64>>, epsilon: f64) -> Result<f64> {
    let m = kx.nrows();
    if kx.shape() != (m, m) || ky.shape() != (m, m) || kz.is_some_and(|k| k.shape() != (m, m)) {
        return Err(Error::invalid("Gram matrices must be square with equal sample counts"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let r = kz.map(|k| residual_operator(&center(k), epsilon)).transpose()?;
    Ok(criterion_centered(&center(kx), &center(ky), r.as_ref()))
}

fn same_m(x: &Ensemble, y: &Ensemble, z: Option<&Ensemble>) -> Result<()> {
    if x.len() != y.len() || z.is_some_and(|z| z.len() != x.len()) {
        return Err(Error::invalid("X, Y and Z must have the same number of samples"));
    }
    Ok(())
}

fn y_kernel(ky: DMatrix<f64>, kz: Option<&DMatrix<f64>>, product: bool) -> DMatrix<f64> {
    match (kz, product) {
        (Some(kz), true) => ky.component_mul(kz),
        _ => ky,
    }
}

/// The conditional criterion on signature Gram matrices of `x`, `y`, `z`.
pub fn hs_conditional_criterion(x: &Ensemble, y: &Ensemble, z: Option<&Ensemble>, cfg: &CiConfig) -> Result<f64> {
    cfg.validate()?;
    same_m(x, y, z)?;
    let kz = z.map(|z| cfg.gram(z)).transpose()?;
    let ky = y_kernel(cfg.gram(y)?, kz.as_ref(), cfg.product_kernel);
    hsic_from_grams(&cfg.gram(x)?, &ky, kz.as_ref(), cfg.epsilon)
}

/// Decision on Gram matrices. In permutation mode only the X labels are
/// shuffled; replica `r` uses the stream `(seed, r + 1)`.
pub fn ci_test_grams(
    kx: &DMatrix<f64>,
    ky: &DMatrix<f64>,
    kz: Option<&DMatrix<f64>>,
    epsilon: f64,
    permutations: usize,
    seed: u64,
    mode: AlphaMode,
) -> Result<CiStatistic> {
    let h_value = hsic_from_grams(kx, ky, kz, epsilon)?;
    if !h_value.is_finite() {
        return Err(Error::numeric("non-finite conditional criterion"));
    }
    let (p_value, reject, permutations) = match mode {
        AlphaMode::Threshold { alpha } => (None, h_value >= alpha, 0),
        AlphaMode::Permutation { level } => {
            check_test_args(level, permutations)?;
            let (kx_c, ky_c) = (center(kx), center(ky));
            let r = kz.map(|k| residual_operator(&center(k), epsilon)).transpose()?;
            let m = kx.nrows();
            let null: Vec<f64> = (0..permutations)
                .into_par_iter()
                .map(|b| {
                    let perm = permutation(&mut replica(seed, b), m);
                    let kp = DMatrix::from_fn(m, m, |i, j| kx_c[(perm[i], perm[j])]);
                    criterion_centered(&kp, &ky_c, r.as_ref())
                })
                .collect();
            let p = permutation_p_value(h_value, &null);
            (Some(p), p <= level, permutations)
        }
    };
    Ok(CiStatistic {
        h_value,
        epsilon,
        p_value,
        reject,
        mode,
        permutations,
        seed,
    })
}

/// Tests `X ⊥ Y | Z` (or `X ⊥ Y` without `z`).
pub fn ci_test(
    x: &Ensemble,
    y: &Ensemble,
    z: Option<&Ensemble>,
    cfg: &CiConfig,
    permutations: usize,
    seed: u64,
    mode: AlphaMode,
) -> Result<CiStatistic> {
    cfg.validate()?;
    same_m(x, y, z)?;
    let kz = z.map(|z| cfg.gram(z)).transpose()?;
    let ky = y_kernel(cfg.gram(y)?, kz.as_ref(), cfg.product_kernel);
    ci_test_grams(&cfg.gram(x)?, &ky, kz.as_ref(), cfg.epsilon, permutations, seed, mode)
}

//! Permutation two-sample test on MMD estimators of any order.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::higherorder::{lift_terminal, mmd_from_grams, HigherOrderConfig, Variant};
use crate::path::Ensemble;
use crate::rng::{permutation, replica};
use crate::sigkernel::{first_order_gram, first_order_gram_terminal, GramField};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub p_value: f64,
    pub null_samples: Vec<f64>,
    pub level: f64,
    pub reject: bool,
    pub order: usize,
    pub variant: Variant,
    pub permutations: usize,
    pub seed: u64,
}

impl TestReport {
    /// One null sample per line under a `null_statistic` header.
    pub fn null_csv(&self) -> String {
        let mut out = String::from("null_statistic\n");
        for v in &self.null_samples {
            out.push_str(&crate::json::fmt_f64(*v));
            out.push('\n');
        }
        out
    }
}

/// `(1 + #{null ≥ stat}) / (1 + B)`.
pub fn permutation_p_value(statistic: f64, null: &[f64]) -> f64 {
    let exceed = null.iter().filter(|&&v| v >= statistic).count();
    (1 + exceed) as f64 / (1 + null.len()) as f64
}

pub(crate) fn check_test_args(level: f64, permutations: usize) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level must lie in (0, 1), got {level}")));
    }
    if permutations < 19 {
        return Err(Error::invalid(format!("need at least 19 permutations, got {permutations}")));
    }
    Ok(())
}

enum Pooled {
    Terminal(DMatrix<f64>),
    Field(GramField),
}

fn submatrix(k: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| k[(rows[a], cols[b])])
}

impl Pooled {
    fn statistic(&self, ix: &[usize], iy: &[usize], cfg: &HigherOrderConfig, grid: &[f64], variant: Variant) -> Result<f64> {
        match self {
            Pooled::Terminal(k) => mmd_from_grams(
                &submatrix(k, ix, ix),
                &submatrix(k, ix, iy),
                &submatrix(k, iy, iy),
                variant,
            ),
            Pooled::Field(g) => {
                let (kxx, kxy, kyy) = lift_terminal(g.select(ix, ix), g.select(ix, iy), g.select(iy, iy), cfg, grid)?;
                mmd_from_grams(&kxx, &kxy, &kyy, variant)
            }
        }
    }
}

/// Permutation test of equal laws using the unbiased order-`cfg.order` MMD².
pub fn two_sample_test(
    x: &Ensemble,
    y: &Ensemble,
    cfg: &HigherOrderConfig,
    level: f64,
    permutations: usize,
    seed: u64,
) -> Result<TestReport> {
    two_sample_test_with(x, y, cfg, Variant::Unbiased, level, permutations, seed)
}

/// As [`two_sample_test`] with an explicit estimator variant.
///
/// The pooled first-order Gram data is computed once; each replica only
/// re-indexes it (and, above order 1, reruns the lift on the selected blocks).
/// Replica `r` draws its relabeling from the stream `(seed, r + 1)`.
pub fn two_sample_test_with(
    x: &Ensemble,
    y: &Ensemble,
    cfg: &HigherOrderConfig,
    variant: Variant,
    level: f64,
    permutations: usize,
    seed: u64,
) -> Result<TestReport> {
    check_test_args(level, permutations)?;
    cfg.validate()?;
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::invalid("each sample needs at least 2 paths"));
    }
    let pooled = cfg.prepare(&x.concat(y)?)?;
    let solver = cfg.solver();
    let cache = if cfg.order == 1 {
        Pooled::Terminal(first_order_gram_terminal(&pooled, &pooled, &solver)?)
    } else {
        Pooled::Field(first_order_gram(&pooled, &pooled, &solver)?)
    };
    let (m, total) = (x.len(), pooled.len());
    let grid = pooled.times();
    let ix: Vec<usize> = (0..m).collect();
    let iy: Vec<usize> = (m..total).collect();
    let statistic = cache.statistic(&ix, &iy, cfg, grid, variant)?;
    let null_samples = (0..permutations)
        .into_par_iter()
        .map(|r| {
            let perm = permutation(&mut replica(seed, r), total);
            cache.statistic(&perm[..m], &perm[m..], cfg, grid, variant)
        })
        .collect::<Result<Vec<_>>>()?;
    let p_value = permutation_p_value(statistic, &null_samples);
    Ok(TestReport {
        statistic,
        p_value,
        null_samples,
        level,
        reject: p_value <= level,
        order: cfg.order,
        variant,
        permutations,
        seed,
    })
}

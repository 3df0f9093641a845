//! Predictive kernel mean embeddings and MMDs of any order.
//!
//! The order-`k+1` Gram field is obtained by treating the estimated
//! predictive embeddings `t -> μ(X | X restricted to [0,t])` as RKHS-valued
//! paths: their increment inner products come from regularized solves on the
//! order-`k` field, and the signature PDE is run on those.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::shifted_solve;
use crate::path::Ensemble;
use crate::sigkernel::{first_order_gram, first_order_gram_terminal, row_classes, solve_cells, GramField, PdeSolver, Scheme};
use crate::{Error, Result};

/// Settings shared by every estimator built on the Gram recursion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HigherOrderConfig {
    pub order: usize,
    /// Tikhonov regularizer of the conditional embedding solves.
    pub lambda: f64,
    pub refinement: usize,
    #[serde(default)]
    pub scheme: Scheme,
    /// When set, every path (and every lifted embedding path) gets an extra
    /// coordinate `scale * t` before kernels are evaluated.
    #[serde(default)]
    pub time_augment: Option<f64>,
}

impl Default for HigherOrderConfig {
    fn default() -> Self {
        Self {
            order: 1,
            lambda: 1e-3,
            refinement: 2,
            scheme: Scheme::Series,
            time_augment: None,
        }
    }
}

impl HigherOrderConfig {
    pub fn with_order(order: usize) -> Self {
        Self {
            order,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::invalid("order must be at least 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.refinement < 1 {
            return Err(Error::invalid("refinement must be at least 1"));
        }
        if let Some(s) = self.time_augment {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("time augmentation scale must be positive, got {s}")));
            }
        }
        Ok(())
    }

    pub fn solver(&self) -> PdeSolver {
        PdeSolver {
            scheme: self.scheme,
            refinement: self.refinement,
        }
    }

    /// Applies the configured time augmentation to a base ensemble.
    pub fn prepare(&self, x: &Ensemble) -> Result<Ensemble> {
        match self.time_augment {
            Some(s) => x.time_augment(s),
            None => Ok(x.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Biased,
    #[default]
    Unbiased,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biased" => Ok(Variant::Biased),
            "unbiased" => Ok(Variant::Unbiased),
            _ => Err(Error::invalid(format!("unknown variant {s:?} (biased|unbiased)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdEstimate {
    pub order: usize,
    pub value_squared: f64,
    pub variant: Variant,
}

/// `(K + m λ I)^{-1} K` for every diagonal slice `K = g[:,:,p,p]`.
fn conditional_weights(g: &GramField, lambda: f64) -> Result<Vec<DMatrix<f64>>> {
    let (m, _, p, _) = g.shape();
    (0..p)
        .into_par_iter()
        .map(|s| {
            let k = g.slice(s, s);
            shifted_solve(&k, m as f64 * lambda, &k)
        })
        .collect()
}

fn check_triple(gxx: &GramField, gxy: &GramField, gyy: &GramField) -> Result<()> {
    let (m, m2, p, p2) = gxx.shape();
    let (n, n2, q, q2) = gyy.shape();
    if m != m2 || p != p2 || n != n2 || q != q2 || gxy.shape() != (m, n, p, q) {
        return Err(Error::GridMismatch(format!(
            "inconsistent gram fields {:?}, {:?}, {:?}",
            gxx.shape(),
            gxy.shape(),
            gyy.shape()
        )));
    }
    Ok(())
}

fn is_symmetric_triple(gxx: &GramField, gxy: &GramField, gyy: &GramField) -> bool {
    (std::ptr::eq(gxx, gxy) || gxx == gxy) && (std::ptr::eq(gxy, gyy) || gxy == gyy)
}

/// Estimated inner products of predictive embeddings:
/// `out[i,j,p,q] ≈ ⟨μ(X | x_i up to s_p), μ(Y | y_j up to t_q)⟩`.
///
/// Uses `gxx[:,:,p,p]` and `gyy[:,:,q,q]` for the conditioning and the
/// full-horizon block of `gxy` in the middle. The result has the shape of
/// `gxy` and is returned in the same container type.
pub fn inner_prod_pred_kme(gxx: &GramField, gxy: &GramField, gyy: &GramField, lambda: f64) -> Result<GramField> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    check_triple(gxx, gxy, gyy)?;
    let symmetric = is_symmetric_triple(gxx, gxy, gyy);
    let (m, n, pp, qq) = gxy.shape();
    let bx = conditional_weights(gxx, lambda)?;
    let by = if symmetric { bx.clone() } else { conditional_weights(gyy, lambda)? };
    let kt = gxy.terminal();
    let left: Vec<DMatrix<f64>> = bx.par_iter().map(|b| b.transpose() * &kt).collect();

    let pairs: Vec<(usize, usize)> = (0..pp)
        .flat_map(|p| (0..qq).map(move |q| (p, q)))
        .filter(|&(p, q)| !symmetric || p <= q)
        .collect();
    let blocks: Vec<DMatrix<f64>> = pairs.par_iter().map(|&(p, q)| &left[p] * &by[q]).collect();

    let mut data = vec![0.0; m * n * pp * qq];
    for (&(p, q), blk) in pairs.iter().zip(&blocks) {
        for i in 0..m {
            for j in 0..n {
                let v = blk[(i, j)];
                data[((i * n + j) * pp + p) * qq + q] = v;
                if symmetric && p != q {
                    data[((j * n + i) * pp + q) * qq + p] = v;
                }
            }
        }
    }
    if symmetric {
        // diagonal blocks are symmetric in exact arithmetic; enforce it
        for p in 0..pp {
            for i in 0..m {
                for j in 0..i {
                    let a = ((i * n + j) * pp + p) * qq + p;
                    let b = ((j * n + i) * pp + p) * qq + p;
                    let v = 0.5 * (data[a] + data[b]);
                    data[a] = v;
                    data[b] = v;
                }
            }
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite predictive embedding inner product"));
    }
    GramField::from_vec(m, n, pp, qq, data)
}

/// One step of the Gram recursion. `grid` is the shared time grid, used only
/// when `cfg.time_augment` is set. With `full == false` only the terminal
/// values are solved and the result has shape `(m, n, 1, 1)`.
pub fn higher_order_gram(
    gxx: &GramField,
    gxy: &GramField,
    gyy: &GramField,
    cfg: &HigherOrderConfig,
    grid: &[f64],
    full: bool,
) -> Result<GramField> {
    cfg.validate()?;
    let mf = inner_prod_pred_kme(gxx, gxy, gyy, cfg.lambda)?;
    let symmetric = is_symmetric_triple(gxx, gxy, gyy);
    let (m, n, pp, qq) = mf.shape();
    let (rows, cols) = (pp - 1, qq - 1);
    let time_term: Option<Vec<f64>> = match cfg.time_augment {
        Some(s) => {
            if grid.len() != pp || pp != qq {
                return Err(Error::GridMismatch(format!(
                    "time grid of length {} does not match gram fields with {pp}x{qq} prefixes",
                    grid.len()
                )));
            }
            let dt: Vec<f64> = grid.windows(2).map(|w| w[1] - w[0]).collect();
            Some(
                (0..rows)
                    .flat_map(|p| {
                        let a = s * s * dt[p];
                        dt.iter().map(move |b| a * b)
                    })
                    .collect(),
            )
        }
        None => None,
    };
    let solver = cfg.solver();
    // samples with identical first-order rows have identical lifted rows
    let cx = row_classes(gxx);
    let cy = if symmetric { cx.clone() } else { row_classes(gyy) };
    let data = solve_cells(&solver, m, n, rows, cols, symmetric, full, Some((&cx, &cy)), |i, j, buf| {
        let c = mf.cell(i, j);
        for p in 0..rows {
            for q in 0..cols {
                buf[p * cols + q] = c[(p + 1) * qq + q + 1] + c[p * qq + q] - c[(p + 1) * qq + q] - c[p * qq + q + 1];
            }
        }
        if let Some(t) = &time_term {
            for (b, a) in buf.iter_mut().zip(t) {
                *b += a;
            }
        }
    })?;
    if full {
        GramField::from_vec(m, n, pp, qq, data)
    } else {
        GramField::from_vec(m, n, 1, 1, data)
    }
}

/// Combines full-horizon Gram blocks into an MMD² estimate.
pub fn mmd_from_grams(kxx: &DMatrix<f64>, kxy: &DMatrix<f64>, kyy: &DMatrix<f64>, variant: Variant) -> Result<f64> {
    let (m, n) = (kxx.nrows(), kyy.nrows());
    let mean_xy = kxy.sum() / (m * n) as f64;
    let v = match variant {
        Variant::Biased => kxx.sum() / (m * m) as f64 - 2.0 * mean_xy + kyy.sum() / (n * n) as f64,
        Variant::Unbiased => {
            if m < 2 || n < 2 {
                return Err(Error::invalid("the unbiased estimator needs at least 2 samples per side"));
            }
            let off = |k: &DMatrix<f64>, s: usize| (k.sum() - k.trace()) / (s * (s - 1)) as f64;
            off(kxx, m) - 2.0 * mean_xy + off(kyy, n)
        }
    };
    if !v.is_finite() {
        return Err(Error::numeric("MMD estimate overflowed; rescale the paths"));
    }
    Ok(v)
}

/// Iterates the recursion from first-order fields up to `cfg.order` and
/// returns the full-horizon `(Kxx, Kxy, Kyy)` blocks.
pub fn lift_terminal(
    gxx: GramField,
    gxy: GramField,
    gyy: GramField,
    cfg: &HigherOrderConfig,
    grid: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (mut gxx, mut gxy, mut gyy) = (gxx, gxy, gyy);
    for level in 2..=cfg.order {
        let full = level < cfg.order;
        let nxy = higher_order_gram(&gxx, &gxy, &gyy, cfg, grid, full)?;
        let nxx = higher_order_gram(&gxx, &gxx, &gxx, cfg, grid, full)?;
        let nyy = higher_order_gram(&gyy, &gyy, &gyy, cfg, grid, full)?;
        (gxx, gxy, gyy) = (nxx, nxy, nyy);
    }
    Ok((gxx.terminal(), gxy.terminal(), gyy.terminal()))
}

/// Full-horizon Gram blocks of order `cfg.order` between two ensembles.
pub fn terminal_grams(
    x: &Ensemble,
    y: &Ensemble,
    cfg: &HigherOrderConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    cfg.validate()?;
    x.check_compatible(y)?;
    let (x, y) = (cfg.prepare(x)?, cfg.prepare(y)?);
    let solver = cfg.solver();
    if cfg.order == 1 {
        return Ok((
            first_order_gram_terminal(&x, &x, &solver)?,
            first_order_gram_terminal(&x, &y, &solver)?,
            first_order_gram_terminal(&y, &y, &solver)?,
        ));
    }
    let gxx = first_order_gram(&x, &x, &solver)?;
    let gxy = first_order_gram(&x, &y, &solver)?;
    let gyy = first_order_gram(&y, &y, &solver)?;
    lift_terminal(gxx, gxy, gyy, cfg, x.times())
}

/// Order-`cfg.order` MMD² estimate between the laws behind `x` and `y`.
pub fn higher_order_mmd(x: &Ensemble, y: &Ensemble, cfg: &HigherOrderConfig, variant: Variant) -> Result<MmdEstimate> {
    if variant == Variant::Unbiased && (x.len() < 2 || y.len() < 2) {
        return Err(Error::invalid("the unbiased estimator needs at least 2 samples per side"));
    }
    let (kxx, kxy, kyy) = terminal_grams(x, y, cfg)?;
    Ok(MmdEstimate {
        order: cfg.order,
        value_squared: mmd_from_grams(&kxx, &kxy, &kyy, variant)?,
        variant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::Path;
    use rand::Rng;

    fn random_ensemble(m: usize, p: usize, d: usize, seed: u64) -> Ensemble {
        let mut rng = crate::rng::stream(seed, 0);
        let times: Vec<f64> = (0..p).map(|t| t as f64).collect();
        Ensemble::new(
            (0..m)
                .map(|_| {
                    let mut acc = vec![0.0; d];
                    let mut vals = Vec::new();
                    for _ in 0..p {
                        vals.extend_from_slice(&acc);
                        for a in acc.iter_mut() {
                            *a += rng.gen_range(-0.5..0.5);
                        }
                    }
                    Path::from_flat(times.clone(), vals, d).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    fn constant_ensemble(m: usize) -> Ensemble {
        let p = Path::new(vec![0.0, 1.0, 2.0], vec![vec![1.5]; 3]).unwrap();
        Ensemble::new(vec![p; m]).unwrap()
    }

    #[test]
    fn trivial_conditioning_closed_form() {
        let x = random_ensemble(5, 4, 2, 11);
        let y = random_ensemble(4, 4, 2, 12);
        let s = PdeSolver::default();
        let (gxx, gxy, gyy) = (
            first_order_gram(&x, &x, &s).unwrap(),
            first_order_gram(&x, &y, &s).unwrap(),
            first_order_gram(&y, &y, &s).unwrap(),
        );
        let lam = 1e-3;
        let mf = inner_prod_pred_kme(&gxx, &gxy, &gyy, lam).unwrap();
        let want = gxy.terminal().mean() / ((1.0 + lam) * (1.0 + lam));
        for i in 0..5 {
            for j in 0..4 {
                assert!((mf.get(i, j, 0, 0) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_paths() {
        let x = constant_ensemble(4);
        let s = PdeSolver::default();
        let g = first_order_gram(&x, &x, &s).unwrap();
        let lam = 0.01;
        let mf = inner_prod_pred_kme(&g, &g, &g, lam).unwrap();
        for v in mf.data() {
            assert!((v - 1.0 / ((1.0 + lam) * (1.0 + lam))).abs() < 1e-12);
        }
        let cfg = HigherOrderConfig { lambda: lam, ..Default::default() };
        let h = higher_order_gram(&g, &g, &g, &cfg, x.times(), true).unwrap();
        assert!(h.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn vanishing_ridge_recovers_terminal_kernel() {
        let x = random_ensemble(6, 4, 2, 21);
        let g = first_order_gram(&x, &x, &PdeSolver::default()).unwrap();
        let err = |lam: f64| {
            let mf = inner_prod_pred_kme(&g, &g, &g, lam).unwrap();
            (0..6).map(|i| (mf.get(i, i, 3, 3) - g.get(i, i, 3, 3)).abs()).fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(1e-3), err(1e-8));
        assert!(fine < coarse);
        assert!(fine < 1e-4);
    }

    #[test]
    fn lifted_field_is_symmetric_with_unit_boundary() {
        let x = random_ensemble(5, 4, 1, 31);
        let g = first_order_gram(&x, &x, &PdeSolver::default()).unwrap();
        let h = higher_order_gram(&g, &g, &g, &HigherOrderConfig::default(), x.times(), true).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                for p in 0..4 {
                    assert_eq!(h.get(i, j, 0, p), 1.0);
                    assert_eq!(h.get(i, j, p, 0), 1.0);
                    assert!((h.get(i, j, p, p) - h.get(j, i, p, p)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn identical_ensembles_have_zero_biased_mmd() {
        let x = random_ensemble(6, 4, 2, 41);
        for order in 1..=3 {
            let cfg = HigherOrderConfig::with_order(order);
            let e = higher_order_mmd(&x, &x, &cfg, Variant::Biased).unwrap();
            assert!(e.value_squared.abs() < 1e-10, "order {order}: {}", e.value_squared);
        }
    }

    #[test]
    fn order_one_matches_direct_estimator() {
        let x = random_ensemble(5, 4, 2, 51);
        let y = random_ensemble(6, 4, 2, 52);
        let s = PdeSolver::default();
        let kxx = first_order_gram(&x, &x, &s).unwrap().terminal();
        let kxy = first_order_gram(&x, &y, &s).unwrap().terminal();
        let kyy = first_order_gram(&y, &y, &s).unwrap().terminal();
        let mut direct = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    direct += kxx[(i, j)] / 20.0;
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    direct += kyy[(i, j)] / 30.0;
                }
            }
        }
        direct -= 2.0 * kxy.mean();
        let est = higher_order_mmd(&x, &y, &HigherOrderConfig::default(), Variant::Unbiased).unwrap();
        assert!((est.value_squared - direct).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs() {
        let x = random_ensemble(1, 3, 1, 1);
        assert!(higher_order_mmd(&x, &x, &HigherOrderConfig::default(), Variant::Unbiased).is_err());
        assert!(HigherOrderConfig { order: 0, ..Default::default() }.validate().is_err());
        assert!(HigherOrderConfig { lambda: 0.0, ..Default::default() }.validate().is_err());
    }
}

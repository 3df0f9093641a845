//! Distribution regression with kernels built from MMDs between processes.
//!
//! Each input is a bag of sample paths. The kernel between two bags is
//! `exp(-max(D², 0) / σ)` where `D²` is the biased MMD² of the configured
//! order, and the learner is kernel ridge regression.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::higherorder::{higher_order_gram, HigherOrderConfig};
use crate::linalg::shifted_solve;
use crate::path::Ensemble;
use crate::rng::{permutation, stream};
use crate::sigkernel::{first_order_gram, first_order_gram_terminal, GramField};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub ensemble: Ensemble,
    pub label: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrModel {
    pub alpha: Vec<f64>,
    pub sigma: f64,
    pub ridge: f64,
    pub order: usize,
    pub config: HigherOrderConfig,
    pub labels: Vec<f64>,
    /// Row-major pairwise biased MMD² between training bags.
    pub train_mmd_matrix: Vec<Vec<f64>>,
    /// SHA-256 of each training bag's grid and values.
    pub bag_fingerprints: Vec<String>,
}

/// Hex SHA-256 over the little-endian bytes of every path's times and values.
pub fn fingerprint(e: &Ensemble) -> String {
    let mut h = Sha256::new();
    for p in e {
        h.update((p.dim() as u64).to_le_bytes());
        for v in p.times().iter().chain(p.values()) {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-bag cache: the self fields below the top order and the mean of the
/// top-order self Gram matrix.
struct BagCache {
    ens: Ensemble,
    chain: Vec<GramField>,
    self_mean: f64,
}

fn bag_cache(e: &Ensemble, cfg: &HigherOrderConfig) -> Result<BagCache> {
    let ens = cfg.prepare(e)?;
    let solver = cfg.solver();
    if cfg.order == 1 {
        let k = first_order_gram_terminal(&ens, &ens, &solver)?;
        return Ok(BagCache { ens, chain: Vec::new(), self_mean: k.mean() });
    }
    let mut chain = vec![first_order_gram(&ens, &ens, &solver)?];
    for level in 2..=cfg.order {
        let g = chain.last().unwrap();
        let full = level < cfg.order;
        let next = higher_order_gram(g, g, g, cfg, ens.times(), full)?;
        if full {
            chain.push(next);
        } else {
            let self_mean = next.terminal().mean();
            return Ok(BagCache { ens, chain, self_mean });
        }
    }
    unreachable!("order >= 2 returns inside the loop")
}

fn cross_mmd(a: &BagCache, b: &BagCache, cfg: &HigherOrderConfig) -> Result<f64> {
    a.ens.check_compatible(&b.ens)?;
    let solver = cfg.solver();
    let cross_mean = if cfg.order == 1 {
        first_order_gram_terminal(&a.ens, &b.ens, &solver)?.mean()
    } else {
        let mut g = first_order_gram(&a.ens, &b.ens, &solver)?;
        for level in 2..=cfg.order {
            let full = level < cfg.order;
            g = higher_order_gram(&a.chain[level - 2], &g, &b.chain[level - 2], cfg, a.ens.times(), full)?;
        }
        g.terminal().mean()
    };
    Ok(a.self_mean - 2.0 * cross_mean + b.self_mean)
}

fn caches(bags: &[Ensemble], cfg: &HigherOrderConfig) -> Result<Vec<BagCache>> {
    cfg.validate()?;
    bags.par_iter().map(|e| bag_cache(e, cfg)).collect()
}

/// Symmetric matrix of biased MMD² between all pairs of bags; zero diagonal.
pub fn pairwise_mmd(bags: &[Ensemble], cfg: &HigherOrderConfig) -> Result<DMatrix<f64>> {
    let c = caches(bags, cfg)?;
    let n = bags.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let vals = pairs
        .par_iter()
        .map(|&(a, b)| cross_mmd(&c[a], &c[b], cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut d = DMatrix::zeros(n, n);
    for (&(a, b), v) in pairs.iter().zip(vals) {
        d[(a, b)] = v;
        d[(b, a)] = v;
    }
    Ok(d)
}

/// Biased MMD² between every `train[a]` (rows) and `new[b]` (columns).
pub fn cross_mmd_matrix(train: &[Ensemble], new: &[Ensemble], cfg: &HigherOrderConfig) -> Result<DMatrix<f64>> {
    let (ct, cn) = (caches(train, cfg)?, caches(new, cfg)?);
    let pairs: Vec<(usize, usize)> = (0..train.len())
        .flat_map(|a| (0..new.len()).map(move |b| (a, b)))
        .collect();
    let vals = pairs
        .par_iter()
        .map(|&(a, b)| cross_mmd(&ct[a], &cn[b], cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut d = DMatrix::zeros(train.len(), new.len());
    for (&(a, b), v) in pairs.iter().zip(vals) {
        d[(a, b)] = v;
    }
    Ok(d)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

/// `exp(-max(d, 0) / σ)` entrywise.
pub fn kernel_from_mmd(d2: &DMatrix<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    Ok(d2.map(|v| (-v.max(0.0) / sigma).exp()))
}

pub fn process_kernel_matrix(bags: &[Bag], cfg: &HigherOrderConfig, sigma: f64) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    let ens: Vec<Ensemble> = bags.iter().map(|b| b.ensemble.clone()).collect();
    kernel_from_mmd(&pairwise_mmd(&ens, cfg)?, sigma)
}

fn krr_alpha(k: &DMatrix<f64>, y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(Error::invalid(format!("ridge must be positive, got {ridge}")));
    }
    let rhs = DMatrix::from_column_slice(y.len(), 1, y);
    Ok(shifted_solve(k, ridge, &rhs)?.iter().cloned().collect())
}

/// Fits from a precomputed training MMD² matrix.
pub fn fit_krr_from_mmd(
    d2: &DMatrix<f64>,
    labels: &[f64],
    cfg: &HigherOrderConfig,
    sigma: f64,
    ridge: f64,
    bag_fingerprints: Vec<String>,
) -> Result<DrModel> {
    if labels.len() < 2 || d2.shape() != (labels.len(), labels.len()) {
        return Err(Error::invalid("need at least 2 bags and a matching MMD matrix"));
    }
    if labels.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("labels must be finite"));
    }
    let k = kernel_from_mmd(d2, sigma)?;
    let alpha = krr_alpha(&k, labels, ridge)?;
    Ok(DrModel {
        alpha,
        sigma,
        ridge,
        order: cfg.order,
        config: cfg.clone(),
        labels: labels.to_vec(),
        train_mmd_matrix: (0..d2.nrows()).map(|i| d2.row(i).iter().cloned().collect()).collect(),
        bag_fingerprints,
    })
}

pub fn fit_krr(bags: &[Bag], cfg: &HigherOrderConfig, sigma: f64, ridge: f64) -> Result<DrModel> {
    if bags.len() < 2 {
        return Err(Error::invalid("need at least 2 bags"));
    }
    let ens: Vec<Ensemble> = bags.iter().map(|b| b.ensemble.clone()).collect();
    let d2 = pairwise_mmd(&ens, cfg)?;
    let labels: Vec<f64> = bags.iter().map(|b| b.label).collect();
    fit_krr_from_mmd(&d2, &labels, cfg, sigma, ridge, ens.iter().map(fingerprint).collect())
}

/// Predictions from a `train x new` MMD² matrix.
pub fn predict_from_mmd(model: &DrModel, d2: &DMatrix<f64>) -> Result<Vec<f64>> {
    if d2.nrows() != model.alpha.len() {
        return Err(Error::invalid("MMD matrix rows must match the training bags"));
    }
    let k = kernel_from_mmd(d2, model.sigma)?;
    Ok((k.transpose() * DVector::from_column_slice(&model.alpha)).iter().cloned().collect())
}

/// Predicts the label of each bag in `new`. `train` must be the bags the
/// model was fitted on, in the same order.
pub fn predict(model: &DrModel, train: &[Ensemble], new: &[Ensemble]) -> Result<Vec<f64>> {
    if train.len() != model.alpha.len() {
        return Err(Error::invalid("training bag count does not match the model"));
    }
    if !model.bag_fingerprints.is_empty() && train.iter().map(fingerprint).ne(model.bag_fingerprints.iter().cloned()) {
        return Err(Error::invalid("training bags do not match the model fingerprints"));
    }
    predict_from_mmd(model, &cross_mmd_matrix(train, new, &model.config)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub order: usize,
    pub sigma: f64,
    pub ridge: f64,
    pub mean_mse: f64,
    pub fold_mse: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: CvScore,
    pub scores: Vec<CvScore>,
    pub folds: Vec<usize>,
}

/// Fold of each bag: a seeded shuffle dealt round-robin into `folds` groups.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let perm = permutation(&mut stream(seed, 0), n);
    let mut out = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        out[i] = pos % folds;
    }
    out
}

fn sorted_unique(v: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = v.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v
}

/// Cross-validated grid search from precomputed MMD² matrices, one per
/// entry of `orders`. Candidates are scored by mean held-out MSE; ties go to
/// the lexicographically smallest `(order, σ, ridge)`.
pub fn cv_grid_search_from_mmd(
    mmd_by_order: &[(usize, DMatrix<f64>)],
    labels: &[f64],
    sigmas: &[f64],
    ridges: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    let n = labels.len();
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    if n < folds {
        return Err(Error::invalid(format!("{n} bags cannot fill {folds} folds")));
    }
    if mmd_by_order.is_empty() || sigmas.is_empty() || ridges.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    let mut orders: Vec<&(usize, DMatrix<f64>)> = mmd_by_order.iter().collect();
    orders.sort_by_key(|(o, _)| *o);
    orders.dedup_by_key(|(o, _)| *o);
    let (sigmas, ridges) = (sorted_unique(sigmas), sorted_unique(ridges));
    let fold = fold_assignment(n, folds, seed);
    let mut scores = Vec::new();
    for (order, d2) in orders {
        for &sigma in &sigmas {
            let k = kernel_from_mmd(d2, sigma)?;
            for &ridge in &ridges {
                let mut fold_mse = Vec::with_capacity(folds);
                for f in 0..folds {
                    let tr: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
                    let te: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
                    let ktr = DMatrix::from_fn(tr.len(), tr.len(), |a, b| k[(tr[a], tr[b])]);
                    let ytr: Vec<f64> = tr.iter().map(|&i| labels[i]).collect();
                    let alpha = krr_alpha(&ktr, &ytr, ridge)?;
                    let mse = te
                        .iter()
                        .map(|&t| {
                            let pred: f64 = tr.iter().zip(&alpha).map(|(&a, w)| w * k[(a, t)]).sum();
                            (pred - labels[t]).powi(2)
                        })
                        .sum::<f64>()
                        / te.len() as f64;
                    fold_mse.push(mse);
                }
                scores.push(CvScore {
                    order: *order,
                    sigma,
                    ridge,
                    mean_mse: fold_mse.iter().sum::<f64>() / folds as f64,
                    fold_mse,
                });
            }
        }
    }
    let mut best = &scores[0];
    for s in &scores[1..] {
        if s.mean_mse < best.mean_mse {
            best = s;
        }
    }
    Ok(CvResult {
        best: best.clone(),
        scores: scores.clone(),
        folds: fold,
    })
}

pub fn cv_grid_search(
    bags: &[Bag],
    base: &HigherOrderConfig,
    orders: &[usize],
    sigmas: &[f64],
    ridges: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    let ens: Vec<Ensemble> = bags.iter().map(|b| b.ensemble.clone()).collect();
    let labels: Vec<f64> = bags.iter().map(|b| b.label).collect();
    let mut uniq = orders.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let mats = uniq
        .iter()
        .map(|&o| {
            let cfg = HigherOrderConfig { order: o, ..base.clone() };
            Ok((o, pairwise_mmd(&ens, &cfg)?))
        })
        .collect::<Result<Vec<_>>>()?;
    cv_grid_search_from_mmd(&mats, &labels, sigmas, ridges, folds, seed)
}

//! Skeleton search of the kernel PC algorithm over path-valued variables.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condind::{hsic_from_grams, CiConfig};
use crate::path::Ensemble;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpcConfig {
    pub ci: CiConfig,
    /// An edge is removed once some conditioning set gives a statistic below
    /// this value.
    pub alpha: f64,
    pub max_cond_size: usize,
    /// Run the unconditional pass before conditioning on single variables.
    pub level_zero: bool,
    /// Rescale each variable to unit RMS increment norm before computing
    /// Gram matrices.
    pub normalize: bool,
}

impl Default for KpcConfig {
    fn default() -> Self {
        Self {
            ci: CiConfig::default(),
            alpha: 1e-3,
            max_cond_size: 1,
            level_zero: true,
            normalize: true,
        }
    }
}

/// One evaluated `(pair, conditioning set)` combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiRecord {
    pub pair: (usize, usize),
    pub cond: Vec<usize>,
    pub h_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatingSet {
    pub pair: (usize, usize),
    pub set: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub n_vars: usize,
    /// Remaining undirected edges `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub separating_sets: Vec<SeparatingSet>,
    pub stats: Vec<CiRecord>,
}

impl CausalGraph {
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).is_ok()
    }

    pub fn separating_set(&self, a: usize, b: usize) -> Option<&[usize]> {
        let key = (a.min(b), a.max(b));
        self.separating_sets
            .iter()
            .find(|s| s.pair == key)
            .map(|s| s.set.as_slice())
    }

    /// `a,b` rows under an `a,b` header.
    pub fn edge_csv(&self) -> String {
        let mut out = String::from("a,b\n");
        for (a, b) in &self.edges {
            out.push_str(&format!("{a},{b}\n"));
        }
        out
    }
}

/// All size-`k` subsets of `items` (sorted input gives lexicographic output).
fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if items.len() < k {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == items.len() - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            return out;
        }
        idx[pos - 1] += 1;
        for t in pos..k {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

fn product_gram(grams: &[DMatrix<f64>], set: &[usize]) -> Option<DMatrix<f64>> {
    let (&first, rest) = set.split_first()?;
    let mut k = grams[first].clone();
    for &v in rest {
        k.component_mul_assign(&grams[v]);
    }
    Some(k)
}

/// Prunes the complete graph on the variables level by level. At level `ℓ`
/// each remaining edge is tested against the size-`ℓ` subsets of the current
/// neighbours of either endpoint, in lexicographic order; the first set with
/// statistic below `alpha` removes the edge. Removals take effect between
/// levels. A conditioning set of several variables uses the entrywise
/// product of their Gram matrices.
pub fn kpc_skeleton(ensembles: &[Ensemble], cfg: &KpcConfig) -> Result<CausalGraph> {
    cfg.ci.validate()?;
    if !cfg.alpha.is_finite() {
        return Err(Error::invalid("alpha must be finite"));
    }
    let nv = ensembles.len();
    if nv == 0 {
        return Err(Error::invalid("need at least one variable"));
    }
    let m = ensembles[0].len();
    if ensembles.iter().any(|e| e.len() != m) {
        return Err(Error::invalid("all variables must have the same number of samples"));
    }
    let grams = ensembles
        .iter()
        .map(|e| {
            if cfg.normalize {
                cfg.ci.gram(&e.normalized())
            } else {
                cfg.ci.gram(e)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    kpc_skeleton_grams(&grams, cfg)
}

/// As [`kpc_skeleton`] on precomputed Gram matrices, one per variable.
pub fn kpc_skeleton_grams(grams: &[DMatrix<f64>], cfg: &KpcConfig) -> Result<CausalGraph> {
    let nv = grams.len();
    let mut edges: BTreeSet<(usize, usize)> = (0..nv)
        .flat_map(|a| (a + 1..nv).map(move |b| (a, b)))
        .collect();
    let mut separating_sets = Vec::new();
    let mut stats = Vec::new();
    let first = if cfg.level_zero { 0 } else { 1 };
    for level in first..=cfg.max_cond_size {
        let snapshot: Vec<(usize, usize)> = edges.iter().cloned().collect();
        let neighbours = |v: usize| -> BTreeSet<usize> {
            snapshot
                .iter()
                .filter_map(|&(a, b)| if a == v { Some(b) } else if b == v { Some(a) } else { None })
                .collect()
        };
        let mut any_testable = false;
        let jobs: Vec<((usize, usize), Vec<Vec<usize>>)> = snapshot
            .iter()
            .map(|&(a, b)| {
                let cand: Vec<usize> = neighbours(a)
                    .union(&neighbours(b))
                    .cloned()
                    .filter(|&v| v != a && v != b)
                    .collect();
                ((a, b), combinations(&cand, level))
            })
            .collect();
        for (_, sets) in &jobs {
            any_testable |= !sets.is_empty();
        }
        if !any_testable {
            break;
        }
        let results = jobs
            .par_iter()
            .map(|((a, b), sets)| -> Result<(Vec<CiRecord>, Option<Vec<usize>>)> {
                let mut recs = Vec::new();
                for set in sets {
                    let kz = product_gram(grams, set);
                    let ky = match (&kz, cfg.ci.product_kernel) {
                        (Some(kz), true) => grams[*b].component_mul(kz),
                        _ => grams[*b].clone(),
                    };
                    let h = hsic_from_grams(&grams[*a], &ky, kz.as_ref(), cfg.ci.epsilon)?;
                    recs.push(CiRecord {
                        pair: (*a, *b),
                        cond: set.clone(),
                        h_value: h,
                    });
                    if h < cfg.alpha {
                        return Ok((recs, Some(set.clone())));
                    }
                }
                Ok((recs, None))
            })
            .collect::<Result<Vec<_>>>()?;
        for (((a, b), _), (recs, removed)) in jobs.iter().zip(results) {
            stats.extend(recs);
            if let Some(set) = removed {
                edges.remove(&(*a, *b));
                separating_sets.push(SeparatingSet { pair: (*a, *b), set });
            }
        }
    }
    separating_sets.sort_by(|x, y| x.pair.cmp(&y.pair));
    Ok(CausalGraph {
        n_vars: nv,
        edges: edges.into_iter().collect(),
        separating_sets,
        stats,
    })
}

/// Precision/recall F1 of `found` against `truth`, both as `i < j` pairs.
/// Two empty sets score 1.
pub fn edge_f1(found: &[(usize, usize)], truth: &[(usize, usize)]) -> f64 {
    let f: BTreeSet<_> = found.iter().collect();
    let t: BTreeSet<_> = truth.iter().collect();
    if f.is_empty() && t.is_empty() {
        return 1.0;
    }
    let tp = f.intersection(&t).count() as f64;
    2.0 * tp / (f.len() + t.len()) as f64
}

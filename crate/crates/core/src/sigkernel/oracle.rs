//! Truncated signatures of piecewise-linear paths.
//!
//! The level-`k` signature of a linear segment with increment `v` is
//! `v^{⊗k} / k!`; segments are concatenated with the truncated tensor product.

use crate::path::Path;
use crate::{Error, Result};

/// Truncated signature: entry `k` is the flattened level-`k` tensor of
/// length `d^k` (level 0 is `[1.0]`).
pub fn truncated_signature(x: &Path, level: usize) -> Vec<Vec<f64>> {
    let d = x.dim();
    let mut sig = unit(d, level);
    let inc = x.increments();
    let mut seg = unit(d, level);
    for p in 0..inc.nrows() {
        let v: Vec<f64> = (0..d).map(|k| inc[(p, k)]).collect();
        for k in 1..=level {
            let f = 1.0 / k as f64;
            let prev = seg[k - 1].clone();
            let cur = &mut seg[k];
            for (a, pa) in prev.iter().enumerate() {
                for (b, vb) in v.iter().enumerate() {
                    cur[a * d + b] = pa * vb * f;
                }
            }
        }
        sig = tensor_product(&sig, &seg, d);
    }
    sig
}

fn unit(d: usize, level: usize) -> Vec<Vec<f64>> {
    (0..=level)
        .map(|k| {
            let mut t = vec![0.0; d.pow(k as u32)];
            if k == 0 {
                t[0] = 1.0;
            }
            t
        })
        .collect()
}

fn tensor_product(a: &[Vec<f64>], b: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    let level = a.len() - 1;
    let mut out = unit(d, level);
    out[0][0] = 0.0;
    for k in 0..=level {
        for i in 0..=k {
            let (ai, bj) = (&a[i], &b[k - i]);
            let w = bj.len();
            let o = &mut out[k];
            for (x, av) in ai.iter().enumerate() {
                if *av == 0.0 {
                    continue;
                }
                let row = &mut o[x * w..(x + 1) * w];
                for (r, bv) in row.iter_mut().zip(bj) {
                    *r += av * bv;
                }
            }
        }
    }
    out
}

/// `Σ_{k≤level} ⟨S_k(x), S_k(y)⟩`.
pub fn truncated_sig_kernel(x: &Path, y: &Path, level: usize) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::GridMismatch(format!(
            "dimensions differ: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    let sx = truncated_signature(x, level);
    let sy = truncated_signature(y, level);
    Ok(sx
        .iter()
        .zip(&sy)
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>())
        .sum())
}

use std::io::Read;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::pde::{PdeSolver, Workspace};
use crate::path::{Ensemble, Path};
use crate::{Error, Result};

/// Signature-kernel values on every pair of prefixes:
/// `g[i,j,p,q] = k(x_i restricted to p+1 points, y_j restricted to q+1 points)`.
///
/// Stored with the `(p, q)` block of each `(i, j)` pair contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct GramField {
    m: usize,
    n: usize,
    p: usize,
    q: usize,
    data: Vec<f64>,
}

const MAGIC: &[u8; 8] = b"HKGF0001";

impl GramField {
    pub fn from_vec(m: usize, n: usize, p: usize, q: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * n * p * q {
            return Err(Error::invalid(format!(
                "gram field of shape {m}x{n}x{p}x{q} needs {} values, got {}",
                m * n * p * q,
                data.len()
            )));
        }
        Ok(Self { m, n, p, q, data })
    }

    /// `(m, n, P, Q)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.m, self.n, self.p, self.q)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, p: usize, q: usize) -> f64 {
        self.data[((i * self.n + j) * self.p + p) * self.q + q]
    }

    /// The row-major `P x Q` block of pair `(i, j)`.
    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let len = self.p * self.q;
        let start = (i * self.n + j) * len;
        &self.data[start..start + len]
    }

    /// The `m x n` matrix at fixed prefix lengths.
    pub fn slice(&self, p: usize, q: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.n, |i, j| self.get(i, j, p, q))
    }

    /// Full-horizon Gram matrix.
    pub fn terminal(&self) -> DMatrix<f64> {
        self.slice(self.p - 1, self.q - 1)
    }

    /// The sub-field on sample rows `rows` and columns `cols`.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> GramField {
        let len = self.p * self.q;
        let mut data = Vec::with_capacity(rows.len() * cols.len() * len);
        for &i in rows {
            for &j in cols {
                data.extend_from_slice(self.cell(i, j));
            }
        }
        GramField {
            m: rows.len(),
            n: cols.len(),
            p: self.p,
            q: self.q,
            data,
        }
    }

    /// Little-endian dump: 8-byte magic, four `u64` extents, then the values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        for e in [self.m, self.n, self.p, self.q] {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 8];
        bytes.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a gram field dump".into()));
        }
        let mut ext = [0usize; 4];
        for e in ext.iter_mut() {
            let mut b = [0u8; 8];
            bytes.read_exact(&mut b)?;
            *e = u64::from_le_bytes(b) as usize;
        }
        let total = ext.iter().try_fold(1usize, |a, &e| a.checked_mul(e));
        if total.and_then(|t| t.checked_mul(8)) != Some(bytes.len()) {
            return Err(Error::Parse("gram field dump has the wrong length".into()));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_vec(ext[0], ext[1], ext[2], ext[3], data)
    }

    /// CSV dump: an `m,n,P,Q` header line with its values, then one
    /// `i,j,p,q,value` row per entry.
    pub fn to_csv(&self) -> String {
        let mut out = format!("m,n,P,Q\n{},{},{},{}\ni,j,p,q,value\n", self.m, self.n, self.p, self.q);
        for i in 0..self.m {
            for j in 0..self.n {
                for p in 0..self.p {
                    for q in 0..self.q {
                        out.push_str(&format!(
                            "{i},{j},{p},{q},{}\n",
                            crate::json::fmt_f64(self.get(i, j, p, q))
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse(format!("gram csv: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some("m,n,P,Q") {
            return Err(bad("missing header"));
        }
        let ext: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing extents"))?
            .split(',')
            .map(|s| s.parse().map_err(|_| bad("bad extent")))
            .collect::<Result<_>>()?;
        if ext.len() != 4 || lines.next() != Some("i,j,p,q,value") {
            return Err(bad("malformed header"));
        }
        let (m, n, p, q) = (ext[0], ext[1], ext[2], ext[3]);
        let mut data = vec![f64::NAN; m * n * p * q];
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad("row must have 5 fields"));
            }
            let idx: Vec<usize> = f[..4]
                .iter()
                .map(|s| s.parse().map_err(|_| bad("bad index")))
                .collect::<Result<_>>()?;
            if idx[0] >= m || idx[1] >= n || idx[2] >= p || idx[3] >= q {
                return Err(bad("index out of range"));
            }
            data[((idx[0] * n + idx[1]) * p + idx[2]) * q + idx[3]] =
                f[4].parse().map_err(|_| bad("bad value"))?;
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(bad("missing entries"));
        }
        Self::from_vec(m, n, p, q, data)
    }
}

/// Index of the first row equal to each row of `g` (bitwise over all
/// columns and prefix pairs). Samples in one class are interchangeable for
/// every estimator built on `g`.
pub(crate) fn row_classes(g: &GramField) -> Vec<usize> {
    let len = g.n * g.p * g.q;
    let mut seen: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    (0..g.m)
        .map(|i| {
            let key = g.data[i * len..(i + 1) * len].iter().map(|v| v.to_bits()).collect();
            *seen.entry(key).or_insert(i)
        })
        .collect()
}

/// Runs one PDE solve per sample pair. `fill(i, j, buf)` writes the
/// row-major `rows x cols` increment inner products of the pair. With
/// `symmetric`, only `j >= i` is solved and the rest is mirrored, which
/// requires `M(j, i) = M(i, j)ᵀ`. With `classes = (cx, cy)`, only pairs of
/// class representatives are solved and every other pair copies the result
/// of `(cx[i], cy[j])`. Output holds full node grids when `full`, else one
/// terminal value per pair.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_cells<F>(
    solver: &PdeSolver,
    m: usize,
    n: usize,
    rows: usize,
    cols: usize,
    symmetric: bool,
    full: bool,
    classes: Option<(&[usize], &[usize])>,
    fill: F,
) -> Result<Vec<f64>>
where
    F: Fn(usize, usize, &mut [f64]) + Sync,
{
    debug_assert!(!symmetric || (m == n && rows == cols));
    let cell_len = if full { (rows + 1) * (cols + 1) } else { 1 };
    let mut data = vec![0.0; m * n * cell_len];
    if data.is_empty() {
        return Ok(data);
    }
    let (cx, cy): (Vec<usize>, Vec<usize>) = match classes {
        Some((a, b)) => (a.to_vec(), b.to_vec()),
        None => ((0..m).collect(), (0..n).collect()),
    };
    let solved = |i: usize, j: usize| cx[i] == i && cy[j] == j && (!symmetric || j >= i);
    data.par_chunks_mut(n * cell_len).enumerate().try_for_each_init(
        || (Workspace::default(), vec![0.0; rows * cols]),
        |(ws, buf), (i, chunk)| -> Result<()> {
            for j in 0..n {
                if !solved(i, j) {
                    continue;
                }
                fill(i, j, buf);
                let out = &mut chunk[j * cell_len..(j + 1) * cell_len];
                if full {
                    solver.solve_into(buf, rows, cols, Some(out), ws)?;
                } else {
                    out[0] = solver.solve_into(buf, rows, cols, None, ws)?;
                }
            }
            Ok(())
        },
    )?;
    let (pp, qq) = (rows + 1, cols + 1);
    for i in 0..m {
        for j in 0..n {
            if solved(i, j) {
                continue;
            }
            let (si, sj) = (cx[i], cy[j]);
            let dst = (i * n + j) * cell_len;
            if !symmetric || sj >= si {
                let src = (si * n + sj) * cell_len;
                data.copy_within(src..src + cell_len, dst);
            } else if full {
                let src = (sj * n + si) * cell_len;
                for p in 0..pp {
                    for q in 0..qq {
                        data[dst + p * qq + q] = data[src + q * pp + p];
                    }
                }
            } else {
                data[dst] = data[sj * n + si];
            }
        }
    }
    Ok(data)
}

/// Paths with bitwise equal increments get the same kernel values.
fn increment_classes(inc: &[Vec<f64>]) -> Vec<usize> {
    let mut seen: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    inc.iter()
        .enumerate()
        .map(|(i, v)| *seen.entry(v.iter().map(|t| t.to_bits()).collect()).or_insert(i))
        .collect()
}

fn first_order(x: &Ensemble, y: &Ensemble, solver: &PdeSolver, full: bool) -> Result<Vec<f64>> {
    x.check_compatible(y)?;
    let d = x.dim();
    let rows = x.grid_len() - 1;
    let dx: Vec<Vec<f64>> = x.iter().map(Path::increments_flat).collect();
    let symmetric = x == y;
    let dy: Vec<Vec<f64>> = if symmetric {
        dx.clone()
    } else {
        y.iter().map(Path::increments_flat).collect()
    };
    let cx = increment_classes(&dx);
    let cy = if symmetric { cx.clone() } else { increment_classes(&dy) };
    solve_cells(solver, x.len(), y.len(), rows, rows, symmetric, full, Some((&cx, &cy)), |i, j, buf| {
        let (a, b) = (&dx[i], &dy[j]);
        for p in 0..rows {
            let u = &a[p * d..(p + 1) * d];
            for q in 0..rows {
                let v = &b[q * d..(q + 1) * d];
                buf[p * rows + q] = u.iter().zip(v).map(|(s, t)| s * t).sum();
            }
        }
    })
}

/// First-order Gram field over all prefix pairs.
pub fn first_order_gram(x: &Ensemble, y: &Ensemble, solver: &PdeSolver) -> Result<GramField> {
    let data = first_order(x, y, solver, true)?;
    let p = x.grid_len();
    GramField::from_vec(x.len(), y.len(), p, p, data)
}

/// Full-horizon signature Gram matrix `k(x_i, y_j)`.
pub fn first_order_gram_terminal(x: &Ensemble, y: &Ensemble, solver: &PdeSolver) -> Result<DMatrix<f64>> {
    let data = first_order(x, y, solver, false)?;
    Ok(DMatrix::from_row_slice(x.len(), y.len(), &data))
}

/// Signature kernel of two paths sharing a dimension (grids may differ).
pub fn sig_kernel(x: &Path, y: &Path, solver: &PdeSolver) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::GridMismatch(format!(
            "dimensions differ: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    let (ix, iy) = (x.increments(), y.increments());
    solver.solve_terminal(&(&ix * iy.transpose()))
}

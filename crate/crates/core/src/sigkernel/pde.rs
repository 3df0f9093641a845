//! Goursat solvers for `u_st = M(s,t) u` with `u = 1` on both axes.
//!
//! `M` is piecewise constant: entry `(p, q)` is the inner product of the
//! `p`-th increment of one path with the `q`-th increment of the other.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Discretization used inside each grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Power-series propagation of edge traces. Exact up to rounding for
    /// piecewise-constant `M`.
    #[default]
    Series,
    /// Second-order explicit five-point update on a refined grid.
    Explicit,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "series" => Ok(Scheme::Series),
            "explicit" => Ok(Scheme::Explicit),
            _ => Err(Error::invalid(format!("unknown scheme {s:?} (series|explicit)"))),
        }
    }
}

/// Solution values on the original grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct PdeGrid {
    pub u: DMatrix<f64>,
    pub refinement: usize,
}

impl PdeGrid {
    pub fn terminal(&self) -> f64 {
        self.u[(self.u.nrows() - 1, self.u.ncols() - 1)]
    }
}

/// Solver settings. `refinement` is the number of sub-cells per side of each
/// grid cell; each sub-cell sees `M / refinement²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdeSolver {
    pub scheme: Scheme,
    pub refinement: usize,
}

impl Default for PdeSolver {
    fn default() -> Self {
        Self {
            scheme: Scheme::Series,
            refinement: 2,
        }
    }
}

// Highest polynomial degree kept in an edge trace.
const NMAX: usize = 40;
const REL_TOL: f64 = 1e-17;

// INV[a][b] = 1 / (a b)
const INV: [[f64; NMAX + 2]; NMAX + 2] = {
    let mut t = [[0.0; NMAX + 2]; NMAX + 2];
    let mut a = 1;
    while a < NMAX + 2 {
        let mut b = 1;
        while b < NMAX + 2 {
            t[a][b] = 1.0 / (a * b) as f64;
            b += 1;
        }
        a += 1;
    }
    t
};

/// Scratch buffers reused across solves on one thread.
#[derive(Default)]
pub(crate) struct Workspace {
    traces: Vec<Vec<f64>>,
    s_trace: Vec<f64>,
    out_s: Vec<f64>,
    rows: [Vec<f64>; 2],
}

impl PdeSolver {
    pub fn new(scheme: Scheme, refinement: usize) -> Result<Self> {
        if refinement == 0 {
            return Err(Error::invalid("refinement must be at least 1"));
        }
        Ok(Self { scheme, refinement })
    }

    /// Full solution on the `(rows+1) x (cols+1)` node grid.
    pub fn solve(&self, m: &DMatrix<f64>) -> Result<PdeGrid> {
        let (r, c) = m.shape();
        let flat = row_major(m);
        let mut u = vec![0.0; (r + 1) * (c + 1)];
        let mut ws = Workspace::default();
        self.solve_into(&flat, r, c, Some(&mut u), &mut ws)?;
        Ok(PdeGrid {
            u: DMatrix::from_row_slice(r + 1, c + 1, &u),
            refinement: self.refinement,
        })
    }

    /// The terminal value `u(S, T)` only.
    pub fn solve_terminal(&self, m: &DMatrix<f64>) -> Result<f64> {
        let (r, c) = m.shape();
        self.solve_into(&row_major(m), r, c, None, &mut Workspace::default())
    }

    /// Core entry: `m` is row-major `rows x cols`. When `out` is given it
    /// receives the row-major `(rows+1) x (cols+1)` node values.
    pub(crate) fn solve_into(
        &self,
        m: &[f64],
        rows: usize,
        cols: usize,
        out: Option<&mut [f64]>,
        ws: &mut Workspace,
    ) -> Result<f64> {
        debug_assert_eq!(m.len(), rows * cols);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite increment inner product"));
        }
        let v = match self.scheme {
            Scheme::Series => series(m, rows, cols, self.refinement, out, ws),
            Scheme::Explicit => explicit(m, rows, cols, self.refinement, out, ws),
        };
        if !v.is_finite() {
            return Err(Error::numeric("signature kernel PDE diverged"));
        }
        Ok(v)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])).collect()
}

/// Solves one sub-cell with constant `c`. `s` is the trace on the edge where
/// the second coordinate is at its start (a polynomial in the first local
/// coordinate), `t` the trace on the edge where the first coordinate is at its
/// start. On return `out_s` holds the trace on the opposite edge in the first
/// coordinate and `t` is overwritten by the opposite trace in the second.
fn series_cell(c: f64, s: &[f64], t: &mut Vec<f64>, out_s: &mut Vec<f64>) {
    let scale = s
        .iter()
        .chain(t.iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    out_s.clear();
    let mut out_t = [0.0f64; NMAX + 1];
    let mut len_t = 0usize;
    if scale == 0.0 {
        t.clear();
        return;
    }
    let tol = REL_TOL * scale;
    out_s.resize(NMAX + 1, 0.0);
    let ac = c.abs();

    // diagonals seeded on the first-coordinate edge, including the corner
    for (j, &seed) in s.iter().enumerate() {
        if seed == 0.0 {
            continue;
        }
        let mut e = seed;
        let mut n = 0usize;
        while j + n <= NMAX {
            if e.abs() <= tol && ac < ((j + n + 1) * (n + 1)) as f64 {
                break;
            }
            out_s[j + n] += e;
            out_t[n] += e;
            len_t = len_t.max(n + 1);
            e *= c * INV[j + n + 1][n + 1];
            n += 1;
        }
    }
    // diagonals seeded on the second-coordinate edge, corner excluded
    for (j, &seed) in t.iter().enumerate().skip(1) {
        if seed == 0.0 {
            continue;
        }
        let mut e = seed;
        let mut n = 0usize;
        while j + n <= NMAX {
            if e.abs() <= tol && ac < ((j + n + 1) * (n + 1)) as f64 {
                break;
            }
            out_s[n] += e;
            out_t[j + n] += e;
            len_t = len_t.max(j + n + 1);
            e *= c * INV[j + n + 1][n + 1];
            n += 1;
        }
    }
    while out_s.len() > 1 && out_s.last().is_some_and(|v| v.abs() <= tol) {
        out_s.pop();
    }
    while len_t > 1 && out_t[len_t - 1].abs() <= tol {
        len_t -= 1;
    }
    t.clear();
    t.extend_from_slice(&out_t[..len_t.max(1)]);
}

fn series(
    m: &[f64],
    rows: usize,
    cols: usize,
    refinement: usize,
    mut out: Option<&mut [f64]>,
    ws: &mut Workspace,
) -> f64 {
    if let Some(o) = out.as_deref_mut() {
        o.fill(1.0);
    }
    if rows == 0 || cols == 0 {
        return 1.0;
    }
    // keep |c| per sub-cell at most 4 so the truncated series stays accurate
    let max_abs = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let r = refinement.max((max_abs / 4.0).sqrt().ceil() as usize);
    let inv = 1.0 / (r * r) as f64;
    let sub_cols = cols * r;

    ws.traces.resize_with(sub_cols, Vec::new);
    for tr in ws.traces.iter_mut() {
        tr.clear();
        tr.push(1.0);
    }
    let mut last = 1.0;
    for a in 0..rows * r {
        let p = a / r;
        let node_row = (a + 1) % r == 0;
        ws.s_trace.clear();
        ws.s_trace.push(1.0);
        for b in 0..sub_cols {
            let q = b / r;
            let c = m[p * cols + q] * inv;
            series_cell(c, &ws.s_trace, &mut ws.traces[b], &mut ws.out_s);
            std::mem::swap(&mut ws.s_trace, &mut ws.out_s);
            if ws.s_trace.is_empty() {
                ws.s_trace.push(0.0);
            }
            if ws.traces[b].is_empty() {
                ws.traces[b].push(0.0);
            }
            if node_row && (b + 1) % r == 0 {
                let v: f64 = ws.s_trace.iter().sum();
                last = v;
                if let Some(o) = out.as_deref_mut() {
                    o[(p + 1) * (cols + 1) + q + 1] = v;
                }
            }
        }
        // overflow reaches the last column of the sweep; stop early
        if !ws.s_trace.iter().all(|v| v.is_finite()) {
            return f64::NAN;
        }
    }
    last
}

fn explicit(
    m: &[f64],
    rows: usize,
    cols: usize,
    r: usize,
    mut out: Option<&mut [f64]>,
    ws: &mut Workspace,
) -> f64 {
    if let Some(o) = out.as_deref_mut() {
        o.fill(1.0);
    }
    if rows == 0 || cols == 0 {
        return 1.0;
    }
    let inv = 1.0 / (r * r) as f64;
    let width = cols * r + 1;
    let [prev, cur] = &mut ws.rows;
    prev.clear();
    prev.resize(width, 1.0);
    cur.clear();
    cur.resize(width, 1.0);
    for a in 0..rows * r {
        let p = a / r;
        cur[0] = 1.0;
        for b in 0..cols * r {
            let q = b / r;
            let mc = m[p * cols + q] * inv;
            let m2 = mc * mc / 12.0;
            cur[b + 1] = (cur[b] + prev[b + 1]) * (1.0 + 0.5 * mc + m2) - prev[b] * (1.0 - m2);
        }
        if (a + 1) % r == 0 {
            if let Some(o) = out.as_deref_mut() {
                for q in 0..cols {
                    o[(p + 1) * (cols + 1) + q + 1] = cur[(q + 1) * r];
                }
            }
        }
        std::mem::swap(prev, cur);
    }
    prev[width - 1]
}

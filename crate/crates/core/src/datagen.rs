//! Seeded generators for synthetic processes.
//!
//! Sample `i` of a generator with seed `s` is drawn from the stream
//! `(s, i)`, so every generator is a pure function of its arguments.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::path::{Ensemble, Path};
use crate::rng::stream;
use crate::{Error, Result};

/// The two tree-shaped processes on the grid `(0, 1, 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "variant")]
pub enum Fig3 {
    /// Reveals its final sign at `t = 1` through a move of size `1/n`.
    Left { n: f64 },
    /// Stays at 0 until `t = 1`; the sign is decided only at `t = 2`.
    Right,
}

fn coin(rng: &mut impl Rng) -> f64 {
    if rng.gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn fig3_path(variant: Fig3, sign: f64) -> Path {
    let mid = match variant {
        Fig3::Left { n } => sign / n,
        Fig3::Right => 0.0,
    };
    Path::from_flat(vec![0.0, 1.0, 2.0], vec![0.0, mid, sign], 1).expect("valid fig3 path")
}

pub fn gen_fig3(variant: Fig3, m: usize, seed: u64) -> Result<Ensemble> {
    if let Fig3::Left { n } = variant {
        if !(n >= 1.0 && n.is_finite()) {
            return Err(Error::invalid(format!("branch parameter n must be at least 1, got {n}")));
        }
    }
    if m == 0 {
        return Err(Error::invalid("m must be positive"));
    }
    Ensemble::new(
        (0..m)
            .map(|i| fig3_path(variant, coin(&mut stream(seed, i as u64))))
            .collect(),
    )
}

/// Each path comes from `Left { n }` with probability `theta`, otherwise from
/// `Right`. Terminal laws agree for every `theta`; only the information at
/// `t = 1` changes.
pub fn gen_fig3_mixture(theta: f64, n: f64, m: usize, seed: u64) -> Result<Ensemble> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid(format!("theta must lie in [0, 1], got {theta}")));
    }
    gen_fig3(Fig3::Left { n }, 1, seed)?;
    if m == 0 {
        return Err(Error::invalid("m must be positive"));
    }
    Ensemble::new(
        (0..m)
            .map(|i| {
                let mut rng = stream(seed, i as u64);
                let left = rng.gen::<f64>() < theta;
                let sign = coin(&mut rng);
                fig3_path(if left { Fig3::Left { n } } else { Fig3::Right }, sign)
            })
            .collect(),
    )
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("grid must have at least 2 strictly increasing finite points"));
    }
    Ok(())
}

/// `n` equispaced points on `[0, horizon]`.
pub fn uniform_grid(n: usize, horizon: f64) -> Vec<f64> {
    (0..n).map(|k| horizon * k as f64 / (n - 1) as f64).collect()
}

/// Standard `d`-dimensional Brownian motion started at 0.
pub fn gen_brownian(d: usize, m: usize, grid: &[f64], seed: u64) -> Result<Ensemble> {
    check_grid(grid)?;
    if d == 0 || m == 0 {
        return Err(Error::invalid("d and m must be positive"));
    }
    let paths = (0..m)
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let mut acc = vec![0.0; d];
            let mut vals = Vec::with_capacity(grid.len() * d);
            vals.extend_from_slice(&acc);
            for w in grid.windows(2) {
                let sd = (w[1] - w[0]).sqrt();
                for a in acc.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *a += sd * z;
                }
                vals.extend_from_slice(&acc);
            }
            Path::from_flat(grid.to_vec(), vals, d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(paths)
}

/// Fractional Brownian motion with Hurst index `h`, simulated exactly from
/// the Cholesky factor of its covariance on the grid. Grid points at `t = 0`
/// are pinned to 0. Coordinates are independent.
pub fn gen_fbm(h: f64, d: usize, m: usize, grid: &[f64], seed: u64) -> Result<Ensemble> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::invalid(format!("Hurst index must lie in (0, 1), got {h}")));
    }
    check_grid(grid)?;
    if grid[0] < 0.0 {
        return Err(Error::invalid("fBm grid must be nonnegative"));
    }
    if d == 0 || m == 0 {
        return Err(Error::invalid("d and m must be positive"));
    }
    let pos: Vec<usize> = (0..grid.len()).filter(|&k| grid[k] > 0.0).collect();
    let k = pos.len();
    let h2 = 2.0 * h;
    let cov = DMatrix::from_fn(k, k, |a, b| {
        let (s, t) = (grid[pos[a]], grid[pos[b]]);
        0.5 * (s.powf(h2) + t.powf(h2) - (s - t).abs().powf(h2))
    });
    let l = cov
        .cholesky()
        .ok_or_else(|| Error::numeric("fBm covariance is not positive definite on this grid"))?
        .unpack();
    let paths = (0..m)
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let mut vals = vec![0.0; grid.len() * d];
            for c in 0..d {
                let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
                for a in 0..k {
                    let v: f64 = (0..=a).map(|b| l[(a, b)] * z[b]).sum();
                    vals[pos[a] * d + c] = v;
                }
            }
            Path::from_flat(grid.to_vec(), vals, d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(paths)
}

/// Parameters of the planar spring simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpringConfig {
    pub stiffness: f64,
    /// Rest lengths are drawn uniformly from this range per edge and episode.
    pub rest_length: (f64, f64),
    pub steps: usize,
    pub dt: f64,
    /// Standard deviation of the per-step exogenous force on each coordinate.
    pub noise: f64,
    /// Initial positions are uniform in `[0, box_size]²`.
    pub box_size: f64,
}

impl Default for SpringConfig {
    fn default() -> Self {
        Self {
            stiffness: 20.0,
            rest_length: (20.0, 120.0),
            steps: 20,
            dt: 0.05,
            noise: 1000.0,
            box_size: 100.0,
        }
    }
}

/// Simulates unit-mass bodies in the plane joined by linear springs where
/// `adjacency[a][b]` is set. Integration is semi-implicit Euler with an
/// independent Gaussian force on every body at every step. Returns one 2-D
/// ensemble per body whose `e`-th path is episode `e`.
pub fn gen_spring_system(adjacency: &[Vec<bool>], cfg: &SpringConfig, episodes: usize, seed: u64) -> Result<Vec<Ensemble>> {
    let nb = adjacency.len();
    for (a, row) in adjacency.iter().enumerate() {
        if row.len() != nb {
            return Err(Error::invalid("adjacency must be square"));
        }
        if row[a] {
            return Err(Error::invalid("adjacency must not contain self-loops"));
        }
        for b in 0..nb {
            if row[b] != adjacency[b][a] {
                return Err(Error::invalid("adjacency must be symmetric"));
            }
        }
    }
    if nb == 0 || episodes == 0 || cfg.steps == 0 {
        return Err(Error::invalid("need at least one body, episode and step"));
    }
    if !(cfg.dt > 0.0 && cfg.stiffness >= 0.0 && cfg.noise >= 0.0 && cfg.rest_length.0 <= cfg.rest_length.1) {
        return Err(Error::invalid("invalid spring parameters"));
    }
    let grid: Vec<f64> = (0..=cfg.steps).map(|k| k as f64 * cfg.dt).collect();
    let edges: Vec<(usize, usize)> = (0..nb)
        .flat_map(|a| (a + 1..nb).map(move |b| (a, b)))
        .filter(|&(a, b)| adjacency[a][b])
        .collect();
    let mut per_body: Vec<Vec<Path>> = vec![Vec::with_capacity(episodes); nb];
    for e in 0..episodes {
        let mut rng = stream(seed, e as u64);
        let rest: Vec<f64> = edges
            .iter()
            .map(|_| rng.gen_range(cfg.rest_length.0..=cfg.rest_length.1))
            .collect();
        let mut pos: Vec<[f64; 2]> = (0..nb)
            .map(|_| [rng.gen_range(0.0..cfg.box_size), rng.gen_range(0.0..cfg.box_size)])
            .collect();
        let mut vel = vec![[0.0f64; 2]; nb];
        let mut traj: Vec<Vec<f64>> = pos.iter().map(|p| p.to_vec()).collect();
        for _ in 0..cfg.steps {
            let mut force: Vec<[f64; 2]> = (0..nb)
                .map(|_| {
                    let fx: f64 = rng.sample(StandardNormal);
                    let fy: f64 = rng.sample(StandardNormal);
                    [cfg.noise * fx, cfg.noise * fy]
                })
                .collect();
            for (&(a, b), &l0) in edges.iter().zip(&rest) {
                let dx = pos[b][0] - pos[a][0];
                let dy = pos[b][1] - pos[a][1];
                let dist = (dx * dx + dy * dy).sqrt().max(1e-9);
                let f = cfg.stiffness * (dist - l0) / dist;
                force[a][0] += f * dx;
                force[a][1] += f * dy;
                force[b][0] -= f * dx;
                force[b][1] -= f * dy;
            }
            for k in 0..nb {
                for c in 0..2 {
                    vel[k][c] += cfg.dt * force[k][c];
                    pos[k][c] += cfg.dt * vel[k][c];
                }
                traj[k].extend_from_slice(&pos[k]);
            }
        }
        for (k, vals) in traj.into_iter().enumerate() {
            per_body[k].push(Path::from_flat(grid.clone(), vals, 2)?);
        }
    }
    per_body.into_iter().map(Ensemble::new).collect()
}

/// Chain adjacency `0 - 1 - ... - (n-1)`.
pub fn chain_adjacency(n: usize) -> Vec<Vec<bool>> {
    (0..n)
        .map(|a| (0..n).map(|b| a.abs_diff(b) == 1).collect())
        .collect()
}

/// Dependence structure of a synthetic `(X, Y, Z)` triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiDesign {
    /// `X = Z + noise`, `Y = Z + noise`: X and Y are independent given Z.
    SharedDriver,
    /// `Y = X + noise` with Z independent of both.
    Direct,
}

/// Draws a triple of 1-D ensembles on `grid`; all three are built from
/// Brownian motions, and `noise` scales the idiosyncratic parts.
pub fn gen_ci_triple(design: CiDesign, m: usize, grid: &[f64], noise: f64, seed: u64) -> Result<(Ensemble, Ensemble, Ensemble)> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid("noise must be nonnegative"));
    }
    let base = gen_brownian(1, m, grid, seed)?;
    let e1 = gen_brownian(1, m, grid, seed.wrapping_add(0x9e37_79b9))?;
    let e2 = gen_brownian(1, m, grid, seed.wrapping_add(0x3c6e_f372))?;
    let combine = |a: &Ensemble, b: &Ensemble| -> Result<Ensemble> {
        Ensemble::new(
            a.iter()
                .zip(b)
                .map(|(p, q)| {
                    let v = p.values().iter().zip(q.values()).map(|(x, y)| x + noise * y).collect();
                    Path::from_flat(grid.to_vec(), v, 1)
                })
                .collect::<Result<Vec<_>>>()?,
        )
    };
    match design {
        CiDesign::SharedDriver => {
            let x = combine(&base, &e1)?;
            let y = combine(&base, &e2)?;
            Ok((x, y, base))
        }
        CiDesign::Direct => {
            let y = combine(&base, &e1)?;
            Ok((base, y, e2))
        }
    }
}

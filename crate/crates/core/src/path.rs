//! Piecewise-linear paths on a shared time grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A `d`-dimensional piecewise-linear trajectory sampled at strictly
/// increasing times. Values are stored row-major, one row per time point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

impl Path {
    /// Builds a path from per-time rows of values.
    pub fn new(times: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidPath("rows have differing dimensions".into()));
        }
        let values = rows.into_iter().flatten().collect();
        Self::from_flat(times, values, dim)
    }

    /// Builds a path from a row-major `P x d` buffer.
    pub fn from_flat(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidPath(format!(
                "a path needs at least 2 time points, got {}",
                times.len()
            )));
        }
        Self::checked(times, values, dim)
    }

    fn checked(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPath("dimension must be positive".into()));
        }
        if values.len() != times.len() * dim {
            return Err(Error::InvalidPath(format!(
                "expected {} values for {} times of dimension {}, got {}",
                times.len() * dim,
                times.len(),
                dim,
                values.len()
            )));
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("non-finite entry".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPath("times must be strictly increasing".into()));
        }
        Ok(Self { times, values, dim })
    }

    /// Number of time points `P`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Row-major `P x d` values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The state at grid index `p` (0-based).
    pub fn point(&self, p: usize) -> &[f64] {
        &self.values[p * self.dim..(p + 1) * self.dim]
    }

    /// The prefix made of the first `index_q` grid points (1-based count, so
    /// `restrict(len())` is the path itself and `restrict(1)` is the starting
    /// point alone).
    pub fn restrict(&self, index_q: usize) -> Result<Path> {
        if index_q == 0 || index_q > self.len() {
            return Err(Error::IndexOutOfRange {
                index: index_q,
                len: self.len(),
            });
        }
        Ok(Path {
            times: self.times[..index_q].to_vec(),
            values: self.values[..index_q * self.dim].to_vec(),
            dim: self.dim,
        })
    }

    /// The `(P-1) x d` matrix whose row `p` is `x[p+1] - x[p]`.
    pub fn increments(&self) -> DMatrix<f64> {
        let rows = self.len().saturating_sub(1);
        DMatrix::from_fn(rows, self.dim, |p, k| {
            self.values[(p + 1) * self.dim + k] - self.values[p * self.dim + k]
        })
    }

    /// Row-major increments, the form used by the Gram kernels.
    pub(crate) fn increments_flat(&self) -> Vec<f64> {
        let d = self.dim;
        (0..self.len().saturating_sub(1))
            .flat_map(|p| (0..d).map(move |k| (p, k)))
            .map(|(p, k)| self.values[(p + 1) * d + k] - self.values[p * d + k])
            .collect()
    }

    /// Prepends the coordinate `scale * t`. Times are copied unchanged.
    pub fn time_augment(&self, scale: f64) -> Result<Path> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!(
                "time augmentation scale must be positive, got {scale}"
            )));
        }
        let d = self.dim + 1;
        let mut values = Vec::with_capacity(self.len() * d);
        for (p, &t) in self.times.iter().enumerate() {
            values.push(scale * t);
            values.extend_from_slice(self.point(p));
        }
        Ok(Path {
            times: self.times.clone(),
            values,
            dim: d,
        })
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: f64) -> Path {
        Path {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            dim: self.dim,
        }
    }

    /// Linear interpolation onto `grid`, holding the end values constant
    /// outside the path's own time range.
    pub fn resample(&self, grid: &[f64]) -> Result<Path> {
        let d = self.dim;
        let mut values = Vec::with_capacity(grid.len() * d);
        let mut seg = 0;
        for &t in grid {
            if t <= self.times[0] {
                values.extend_from_slice(self.point(0));
                continue;
            }
            let last = self.len() - 1;
            if t >= self.times[last] {
                values.extend_from_slice(self.point(last));
                continue;
            }
            while self.times[seg + 1] < t {
                seg += 1;
            }
            while seg > 0 && self.times[seg] > t {
                seg -= 1;
            }
            let (t0, t1) = (self.times[seg], self.times[seg + 1]);
            let w = (t - t0) / (t1 - t0);
            let (a, b) = (self.point(seg), self.point(seg + 1));
            values.extend(a.iter().zip(b).map(|(a, b)| a + w * (b - a)));
        }
        Path::from_flat(grid.to_vec(), values, d)
    }
}

/// A nonempty collection of sample paths sharing one time grid and dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    paths: Vec<Path>,
}

impl Ensemble {
    pub fn new(paths: Vec<Path>) -> Result<Self> {
        let first = paths
            .first()
            .ok_or_else(|| Error::invalid("an ensemble needs at least one path"))?;
        for (i, p) in paths.iter().enumerate().skip(1) {
            if p.dim() != first.dim() {
                return Err(Error::GridMismatch(format!(
                    "path {i} has dimension {}, expected {}",
                    p.dim(),
                    first.dim()
                )));
            }
            if p.times() != first.times() {
                return Err(Error::GridMismatch(format!(
                    "path {i} does not share the ensemble time grid"
                )));
            }
        }
        Ok(Self { paths })
    }

    /// Builds an ensemble from paths on arbitrary grids by resampling every
    /// path onto `grid`.
    pub fn resampled(paths: &[Path], grid: &[f64]) -> Result<Self> {
        let paths = paths
            .iter()
            .map(|p| p.resample(grid))
            .collect::<Result<Vec<_>>>()?;
        Self::new(paths)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.paths[0].dim()
    }

    /// Number of grid points shared by all members.
    pub fn grid_len(&self) -> usize {
        self.paths[0].len()
    }

    pub fn times(&self) -> &[f64] {
        self.paths[0].times()
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn path(&self, i: usize) -> &Path {
        &self.paths[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Path> {
        self.paths.iter()
    }

    /// Fails unless `other` lives on the same grid with the same dimension.
    pub fn check_compatible(&self, other: &Ensemble) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::GridMismatch(format!(
                "dimensions differ: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        if self.times() != other.times() {
            return Err(Error::GridMismatch("time grids differ".into()));
        }
        Ok(())
    }

    /// The members at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Ensemble> {
        let paths = indices
            .iter()
            .map(|&i| {
                self.paths.get(i).cloned().ok_or(Error::IndexOutOfRange {
                    index: i + 1,
                    len: self.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ensemble::new(paths)
    }

    /// Members of `self` followed by members of `other`.
    pub fn concat(&self, other: &Ensemble) -> Result<Ensemble> {
        self.check_compatible(other)?;
        let mut paths = self.paths.clone();
        paths.extend(other.paths.iter().cloned());
        Ok(Ensemble { paths })
    }

    pub fn time_augment(&self, scale: f64) -> Result<Ensemble> {
        let paths = self
            .paths
            .iter()
            .map(|p| p.time_augment(scale))
            .collect::<Result<Vec<_>>>()?;
        Ok(Ensemble { paths })
    }

    pub fn scaled(&self, factor: f64) -> Ensemble {
        Ensemble {
            paths: self.paths.iter().map(|p| p.scaled(factor)).collect(),
        }
    }

    /// Rescales so that the root-mean-square path length (sum of increment
    /// norms) is one. Constant ensembles are returned unchanged.
    pub fn normalized(&self) -> Ensemble {
        let d = self.dim();
        let mut acc = 0.0;
        for p in &self.paths {
            let len: f64 = p
                .increments_flat()
                .chunks(d)
                .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
                .sum();
            acc += len * len;
        }
        let rms = (acc / self.len() as f64).sqrt();
        if rms > 0.0 {
            self.scaled(1.0 / rms)
        } else {
            self.clone()
        }
    }
}

impl<'a> IntoIterator for &'a Ensemble {
    type Item = &'a Path;
    type IntoIter = std::slice::Iter<'a, Path>;
    fn into_iter(self) -> Self::IntoIter {
        self.paths.iter()
    }
}

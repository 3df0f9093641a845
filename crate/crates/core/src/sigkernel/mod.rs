//! Signature kernels of piecewise-linear paths.

mod gram;
mod oracle;
mod pde;
mod static_kernel;

pub(crate) use gram::{row_classes, solve_cells};
pub use gram::{first_order_gram, first_order_gram_terminal, sig_kernel, GramField};
pub use oracle::{truncated_sig_kernel, truncated_signature};
pub use pde::{PdeGrid, PdeSolver, Scheme};
pub use static_kernel::{static_kernel_gram, StaticKind};

use nalgebra::DMatrix;

use crate::Result;

/// Solves the kernel PDE for increment inner products `m`; returns the full
/// node grid.
pub fn pde_solve(m: &DMatrix<f64>, solver: &PdeSolver) -> Result<PdeGrid> {
    solver.solve(m)
}

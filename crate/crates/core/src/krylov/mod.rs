//! Incremental Krylov factorizations.
//!
//! All processes keep every basis vector and orthogonalize with modified
//! Gram-Schmidt. With `reorth` a second pass is applied against the full
//! basis. A step whose normalizer falls below `1e-14` times the running
//! operator-scale estimate sets the `breakdown` flag; further steps return
//! [`Error::Breakdown`](crate::error::Error::Breakdown).

mod arnoldi;
mod flexible;
mod gkb;

pub use arnoldi::ArnoldiFactorization;
pub use flexible::{FlexArnoldiFactorization, FlexGkbFactorization};
pub use gkb::GkbFactorization;

pub(crate) const BREAKDOWN_RTOL: f64 = 1e-14;

/// Outcome of a single expansion step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    /// Step completed and the process can continue.
    Continue,
    /// Step completed but the next basis vector vanished; the factorization
    /// describes an invariant subspace.
    Breakdown,
}

pub(crate) fn passes(reorth: bool) -> usize {
    if reorth {
        2
    } else {
        1
    }
}

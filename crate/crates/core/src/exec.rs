//! Data-parallel map over index ranges.
//!
//! Every sweep in the crate (grid scans, Monte Carlo trials, Jacobian
//! assembly) goes through [`map_indexed`]. Results always come back in index
//! order, and reductions are done afterwards on the ordered vector, so the
//! parallel and sequential paths produce bit-identical output.

use crate::error::Result;

/// How a sweep is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise falls back
    /// to the sequential path.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluates `f(0..len)` and collects the results in index order.
pub fn map_indexed<T, F>(exec: Execution, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}

/// Like [`map_indexed`] but short-circuits on the lowest-index error.
pub fn try_map_indexed<T, F>(exec: Execution, len: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_indexed(exec, len, f).into_iter().collect()
}

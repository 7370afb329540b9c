//! Execution-mode plumbing for the data-parallel kernels.
//!
//! With the `parallel` feature (default) the hot loops fan out over rayon:
//! matrix rows inside the operator-application kernels and inside the
//! Runge-Kutta combination steps. The sequential fallback is always
//! compiled; it is selected at build time when the feature is off, or at
//! run time through [`force_sequential`] (used by the comparison benches
//! and by `--jobs 1` style callers). Results are bit-identical in both
//! modes because every output element is written by exactly one task and
//! accumulated in a fixed order.

use std::sync::atomic::{AtomicBool, Ordering};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::C64;

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Route all kernels through the sequential code path at run time.
pub fn force_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::SeqCst);
}

/// Requests a worker count for the parallel kernels. One worker routes
/// everything through the sequential path. More workers size the global
/// thread pool, which can be configured only once per process and only
/// before its first use; later calls fail. Without the `parallel`
/// feature any count is accepted and execution stays sequential.
pub fn set_worker_count(workers: usize) -> Result<()> {
    if workers == 0 {
        return Err(Error::InvalidInput { reason: "worker count must be positive".into() });
    }
    if workers == 1 {
        force_sequential(true);
        return Ok(());
    }
    force_sequential(false);
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::InvalidInput { reason: e.to_string() })?;
    }
    Ok(())
}

/// Whether the parallel code paths are currently in use.
pub fn parallelism_active() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// Visit every row of `m` with its row index, sequentially.
pub(crate) fn for_each_row_mut_seq<F>(m: &mut Array2<C64>, f: F)
where
    F: Fn(usize, &mut [C64]) + Sync,
{
    let cols = m.ncols();
    let data = m.as_slice_mut().expect("matrix must be in standard layout");
    for (r, row) in data.chunks_mut(cols).enumerate() {
        f(r, row);
    }
}

/// Visit every row of `m` with its row index, in parallel when active.
pub(crate) fn for_each_row_mut<F>(m: &mut Array2<C64>, f: F)
where
    F: Fn(usize, &mut [C64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallelism_active() {
            use rayon::prelude::*;
            let cols = m.ncols();
            let data = m.as_slice_mut().expect("matrix must be in standard layout");
            data.par_chunks_mut(cols).enumerate().for_each(|(r, row)| f(r, row));
            return;
        }
    }
    for_each_row_mut_seq(m, f);
}

//! Worker-pool sizing shared by the batch operations.

use crate::error::{Error, Result};

/// Runs `f` inside a dedicated rayon pool of `threads` workers, or in the
/// global pool when `threads` is `None`. Results never depend on the choice:
/// all randomness is lane-derived.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidParam("thread count must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParam(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

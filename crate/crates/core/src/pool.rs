use crate::error::{Error, Result};

/// Runs `f` on a dedicated rayon pool of `threads` workers, or on the global
/// pool when `threads` is `None`.
pub fn install<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::validation("threads", e.to_string()))?
            .install(f)),
        None => Ok(f()),
    }
}

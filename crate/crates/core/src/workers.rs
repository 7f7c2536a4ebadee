//! Worker-pool plumbing. Every parallel operation takes an explicit worker
//! count and must produce bitwise-identical results for any value of it.

/// Environment variable overriding the default worker count.
pub const WORKERS_ENV: &str = "PARASPEECH_WORKERS";

/// Default worker count: the environment override if set, else the number of
/// available CPUs.
pub fn default_workers() -> usize {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs `f` inside a rayon pool of the given size. `workers == 0` means the
/// global default pool.
pub fn run_with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("failed to build worker pool")
            .install(f)
    }
}

/// Chunk size used by deterministic parallel reductions. Fixed so that the
/// reduction tree does not depend on the worker count.
pub const REDUCE_CHUNK: usize = 1024;

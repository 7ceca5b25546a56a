//! Benchmark-only crate; see `benches/hot_paths.rs`.

use cogsim_core::{ArrivalProcess, ErasureSpec};

/// Channel used across all benchmarks: moderately lossy, strongly
/// admissible, so every protocol branch is exercised.
pub fn bench_spec() -> ErasureSpec {
    ErasureSpec::from_marginals_independent(0.2, 0.8, 0.5, 0.2, 0.2, true)
        .expect("valid probabilities")
}

/// Arrival process that keeps the primary queue busy without saturating the
/// no-cooperation protocol.
pub fn bench_arrivals() -> ArrivalProcess {
    ArrivalProcess::bernoulli(0.18).expect("valid rate")
}

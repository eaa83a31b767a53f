//! Criterion benchmarks for the ratekit kernels live in `benches/kernels.rs`;
//! run them with `cargo bench -p ratekit-bench`.

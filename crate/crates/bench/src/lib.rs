//! Criterion benchmarks for the numerical kernels; see `benches/kernels.rs`.
//! Run with `cargo bench -p corrqec-bench`.

//! Criterion benchmarks for the motionsync kernels live in `benches/`.

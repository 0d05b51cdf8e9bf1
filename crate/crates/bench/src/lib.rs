//! Criterion benchmarks for subglm live under `benches/`.

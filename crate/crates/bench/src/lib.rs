//! Criterion benchmarks for dicke-core live in `benches/`.

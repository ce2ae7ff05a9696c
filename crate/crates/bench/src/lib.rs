//! Criterion benchmarks for framemae; see `benches/`.

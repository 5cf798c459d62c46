//! Criterion benchmarks for the rigidity crates; see `benches/`.

//! Criterion benchmarks for the simulation and learning hot paths; see `benches/`.

//! Criterion benchmarks for the simulation and stability kernels; see `benches/`.

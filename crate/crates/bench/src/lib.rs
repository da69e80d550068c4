//! Benchmark-only crate; the kernels live in `nlw-core`.

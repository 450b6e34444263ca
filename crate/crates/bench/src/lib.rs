//! Criterion benchmarks for `agrotrend-core`. Run with `cargo bench -p agrotrend-bench`.

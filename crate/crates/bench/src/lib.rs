//! Criterion benchmarks for `blgeo-core`; run with `cargo bench -p blgeo-bench`.

//! Criterion benchmarks for the scene pipeline live in `benches/pipeline.rs`.

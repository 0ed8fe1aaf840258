//! Criterion benchmarks for `crep-core`; see `benches/pipeline.rs`.

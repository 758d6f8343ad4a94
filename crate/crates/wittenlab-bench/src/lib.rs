//! Criterion benchmarks for `wittenlab`; see `benches/pipeline.rs`.

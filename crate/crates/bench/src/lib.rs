//! Benchmark-only crate: see `benches/stages.rs` for the criterion entry
//! points covering the pipeline stages.

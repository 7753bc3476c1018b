//! This crate exists for its `benches/` target; see `benches/perf.rs`.

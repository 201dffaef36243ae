//! Benchmarks for the relucone crate live in `benches/`.

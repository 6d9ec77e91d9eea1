//! Criterion benchmarks live under `benches/`:
//!
//! - `selection`: greedy, parallel and exhaustive readout selection, and the
//!   regression conjugate update.
//! - `planning`: one MPPI plan under learned and exact dynamics.

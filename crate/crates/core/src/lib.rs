//! Time-series quantum generative model on a dense statevector simulator.
//!
//! A one-step unitary `U = V(φ) Σ(γ) V†(φ)` acts on the encoded joint state of
//! several discretized assets plus ancilla qubits; `k` steps cost one circuit
//! `V Σ(kγ) V†`. The crate covers simulation, training, the market-data
//! pipeline, classical baselines and the evaluation workflow.

pub mod ansatz;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod jsonfmt;
pub mod market;
pub mod model;
pub mod optim;
pub mod plot;
pub mod qsim;
pub mod synthetic;

pub use error::{Error, Result};

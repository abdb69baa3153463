//! Simulation of spin-photon graph-state generation with a cavity-coupled
//! quantum-dot trion.
//!
//! The crate is layered bottom-up:
//!
//! * [`qcore`]: dense complex linear algebra on labeled registers.
//! * [`trion`]: the four-level trion model, its Liouvillian and pulse channels.
//! * [`zpg`]: zero-photon-generator conditioning and the spin-photon
//!   emission process map.
//! * [`protocol`]: pulse programs compiled into multipartite states.
//! * [`ideal`]: exact pure-state oracle and graph-state constructions.
//! * [`metrics`], [`tomography`], [`fit`]: figures of merit, synthetic
//!   tomography and parameter estimation.

// `!(x > 0.0)` is used on purpose so that NaN fails validation, and the
// tensor contractions read best with explicit index loops.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fit;
pub mod ideal;
pub mod metrics;
pub mod protocol;
pub mod qcore;
pub mod tomography;
pub mod trion;
pub mod zpg;

pub use error::{Error, Result};

//! Dense complex linear algebra for small multi-qubit registers.

pub mod linalg;
pub mod state;
pub mod superop;

pub use linalg::{c, eigh, expm, pauli, trace_distance, CMat, CVec, I};
pub use state::{DensityMatrix, Ket, MatrixDoc, Operator, Register, Tensor};
pub use superop::{choi_of_transfer, propagate, SuperOperator};

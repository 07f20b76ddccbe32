//! Dense linear algebra on small qubit registers.

pub mod linalg;
pub mod measure;
mod operator;
pub mod pauli;
pub mod state;

pub use linalg::{closest_unitary, expm_hermitian, hermitian_eigen, log_unitary, log_unitary_compact, log_unitary_near, propagate, propagate_dim};
pub use measure::{exact_record, sample_counts, MeasurementRecord};
pub use operator::{Operator, C64};
pub use pauli::{pauli_decompose, pauli_matrix, pauli_sum, Pauli, PauliLabel};
pub use state::{qubit_from_bloch, DensityMatrix};

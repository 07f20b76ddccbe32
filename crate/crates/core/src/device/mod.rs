//! Forward model of a fixed-frequency transmon device.

pub mod config;
pub mod hamiltonian;
pub mod schedule;

pub use config::{AwgModel, Coupling, CrRule, CrRules, DeviceConfig, DriveModel, QubitSpec, TlsDrift, TlsSpec, REFERENCE_RATES};
pub use hamiltonian::{build_duffing_hamiltonian, build_qubit_hamiltonian, cross_resonance_rates, embed_pair_generator};
pub use schedule::{Channel, DriveSample, DriveSegment, Envelope, PulseSchedule};
pub mod simulate;

pub use simulate::{schedule_unitary, simulate_schedule, Frame, SimOptions};
pub mod provider;

pub use provider::{derive_seed, product_state, CountingProvider, Job, MeasurementProvider, Prep, Session, SimulatedDevice};

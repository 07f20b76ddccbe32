use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DeviceConfig, TlsSpec};
use super::schedule::PulseSchedule;
use super::simulate::{simulate_schedule, SimOptions};
use crate::error::{invalid, Result};
use crate::quantum::{exact_record, qubit_from_bloch, sample_counts, DensityMatrix, MeasurementRecord, PauliLabel};

/// Single-qubit preparation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prep {
    Zero,
    One,
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl Prep {
    pub fn bloch(self) -> [f64; 3] {
        match self {
            Prep::Zero => [0.0, 0.0, 1.0],
            Prep::One => [0.0, 0.0, -1.0],
            Prep::Plus => [1.0, 0.0, 0.0],
            Prep::Minus => [-1.0, 0.0, 0.0],
            Prep::PlusI => [0.0, 1.0, 0.0],
            Prep::MinusI => [0.0, -1.0, 0.0],
        }
    }

    pub fn state(self) -> DensityMatrix {
        qubit_from_bloch(self.bloch())
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Prep::Zero => "0",
            Prep::One => "1",
            Prep::Plus => "+",
            Prep::Minus => "-",
            Prep::PlusI => "+i",
            Prep::MinusI => "-i",
        }
    }
}

pub fn product_state(preps: &[Prep]) -> DensityMatrix {
    preps.iter().fold(DensityMatrix::basis_state(1, 0), |acc, p| acc.kron(&p.state()))
}

/// One circuit: prepare, run the schedule, measure `measured` qubits in each basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    /// One entry per device qubit.
    pub prep: Vec<Prep>,
    pub schedule: PulseSchedule,
    /// Ascending qubit indices; basis labels are over these qubits in order.
    pub measured: Vec<usize>,
    pub bases: Vec<PauliLabel>,
    /// `None` requests exact outcome probabilities.
    pub shots: Option<u64>,
    pub seed: u64,
}

/// A batch of jobs forming one experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Session {
    pub name: String,
    pub jobs: Vec<Job>,
}

/// Source of measurement records. Results come back in job order, one record per basis.
pub trait MeasurementProvider: Sync {
    fn num_qubits(&self) -> usize;

    fn run_session(&self, session: &Session) -> Result<Vec<Vec<MeasurementRecord>>>;

    /// Called between repetitions of a time-ordered experiment.
    fn respawn_environment(&mut self, _repetition: usize) -> Result<()> {
        Ok(())
    }
}

/// SplitMix64 mix of a base seed and a stream index.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// In-process simulator of a device.
#[derive(Debug, Clone)]
pub struct SimulatedDevice {
    pub config: DeviceConfig,
    pub options: SimOptions,
    /// Seed for environment redraws.
    pub environment_seed: u64,
}

impl SimulatedDevice {
    pub fn new(config: DeviceConfig) -> Result<Self> {
        config.validate()?;
        Ok(SimulatedDevice { config, options: SimOptions::default(), environment_seed: 0 })
    }

    pub fn with_options(mut self, options: SimOptions) -> Self {
        self.options = options;
        self
    }

    fn run_job(&self, job: &Job) -> Result<Vec<MeasurementRecord>> {
        let n = self.config.num_qubits();
        if job.prep.len() != n {
            return invalid(format!("job prepares {} qubits, device has {n}", job.prep.len()));
        }
        if job.measured.is_empty() || job.measured.windows(2).any(|w| w[0] >= w[1]) || job.measured[job.measured.len() - 1] >= n {
            return invalid("measured qubits must be ascending, distinct and on the device");
        }
        if job.bases.iter().any(|b| b.len() != job.measured.len()) {
            return invalid("every basis must cover exactly the measured qubits");
        }
        let init = product_state(&job.prep);
        let states = simulate_schedule(&self.config, &job.schedule, &init, &self.options, &[job.schedule.duration()])?;
        let rho = if job.measured.len() == n { states[0].clone() } else { states[0].partial_trace(&job.measured)? };
        let flips = self.config.readout_flips(&job.measured);
        job.bases
            .iter()
            .enumerate()
            .map(|(k, basis)| match job.shots {
                Some(shots) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(job.seed, k as u64));
                    sample_counts(&rho, basis, shots, &flips, &mut rng)
                }
                None => exact_record(&rho, basis, &flips),
            })
            .collect()
    }
}

impl MeasurementProvider for SimulatedDevice {
    fn num_qubits(&self) -> usize {
        self.config.num_qubits()
    }

    fn run_session(&self, session: &Session) -> Result<Vec<Vec<MeasurementRecord>>> {
        log::debug!("session {} with {} jobs", session.name, session.jobs.len());
        session.jobs.par_iter().map(|j| self.run_job(j)).collect()
    }

    /// Redraws the TLS environment of the drifting qubit from `tls_drift`.
    fn respawn_environment(&mut self, repetition: usize) -> Result<()> {
        let Some(drift) = self.config.tls_drift.clone() else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.environment_seed, repetition as u64));
        let count = rng.random_range(drift.count_min..=drift.count_max);
        self.config.tls.retain(|t| t.qubit != drift.qubit);
        for _ in 0..count {
            let chi = if drift.chi_max > drift.chi_min { rng.random_range(drift.chi_min..drift.chi_max) } else { drift.chi_min };
            let p = if drift.p_max > drift.p_min { rng.random_range(drift.p_min..drift.p_max) } else { drift.p_min };
            self.config.tls.push(TlsSpec { qubit: drift.qubit, chi, p_excited: p, lifetime: None });
        }
        Ok(())
    }
}

/// Wrapper counting sessions and jobs sent to the inner provider.
#[derive(Debug, Default)]
pub struct CountingProvider<P> {
    pub inner: P,
    sessions: AtomicUsize,
    jobs: AtomicUsize,
}

impl<P> CountingProvider<P> {
    pub fn new(inner: P) -> Self {
        CountingProvider { inner, sessions: AtomicUsize::new(0), jobs: AtomicUsize::new(0) }
    }

    pub fn sessions(&self) -> usize {
        self.sessions.load(Ordering::SeqCst)
    }

    pub fn jobs(&self) -> usize {
        self.jobs.load(Ordering::SeqCst)
    }
}

impl<P: MeasurementProvider> MeasurementProvider for CountingProvider<P> {
    fn num_qubits(&self) -> usize {
        self.inner.num_qubits()
    }

    fn run_session(&self, session: &Session) -> Result<Vec<Vec<MeasurementRecord>>> {
        self.sessions.fetch_add(1, Ordering::SeqCst);
        self.jobs.fetch_add(session.jobs.len(), Ordering::SeqCst);
        self.inner.run_session(session)
    }

    fn respawn_environment(&mut self, repetition: usize) -> Result<()> {
        self.inner.respawn_environment(repetition)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::config::TlsDrift;

    fn job(prep: Vec<Prep>, bases: &[&str], shots: Option<u64>, seed: u64) -> Job {
        let measured = (0..prep.len()).collect();
        Job {
            prep,
            schedule: PulseSchedule::empty(),
            measured,
            bases: bases.iter().map(|b| b.parse().unwrap()).collect(),
            shots,
            seed,
        }
    }

    #[test]
    fn exact_records_follow_preparation() {
        let dev = SimulatedDevice::new(DeviceConfig::chain(2, 5000.0, 100.0, 2.0)).unwrap();
        let s = Session { name: "t".into(), jobs: vec![job(vec![Prep::One, Prep::Plus], &["ZX", "ZZ"], None, 0)] };
        let r = dev.run_session(&s).unwrap();
        assert!((r[0][0].expectation(&"ZX".parse().unwrap()).unwrap() + 1.0).abs() < 1e-12);
        assert!(r[0][1].expectation(&"IZ".parse().unwrap()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let dev = SimulatedDevice::new(DeviceConfig::chain(1, 5000.0, 0.0, 0.0)).unwrap();
        let s = Session { name: "t".into(), jobs: vec![job(vec![Prep::Plus], &["Z"], Some(1000), 7); 3] };
        let a = dev.run_session(&s).unwrap();
        let b = dev.run_session(&s).unwrap();
        assert_eq!(a, b);
        let mut other = s.clone();
        other.jobs[0].seed = 8;
        assert_ne!(dev.run_session(&other).unwrap()[0], a[0]);
    }

    #[test]
    fn partial_measurement() {
        let dev = SimulatedDevice::new(DeviceConfig::chain(3, 5000.0, 100.0, 2.0)).unwrap();
        let mut j = job(vec![Prep::Zero, Prep::One, Prep::Zero], &["Z"], None, 0);
        j.measured = vec![1];
        let r = dev.run_session(&Session { name: "t".into(), jobs: vec![j.clone()] }).unwrap();
        assert!((r[0][0].frequencies[1] - 1.0).abs() < 1e-12);
        j.measured = vec![1, 0];
        assert!(dev.run_session(&Session { name: "t".into(), jobs: vec![j] }).is_err());
    }

    #[test]
    fn counting_wrapper_counts() {
        let dev = CountingProvider::new(SimulatedDevice::new(DeviceConfig::chain(1, 5000.0, 0.0, 0.0)).unwrap());
        let s = Session { name: "t".into(), jobs: vec![job(vec![Prep::Zero], &["Z"], None, 0); 4] };
        dev.run_session(&s).unwrap();
        dev.run_session(&s).unwrap();
        assert_eq!(dev.sessions(), 2);
        assert_eq!(dev.jobs(), 8);
    }

    #[test]
    fn respawn_redraws_tls() {
        let mut cfg = DeviceConfig::chain(1, 5000.0, 0.0, 0.0);
        cfg.tls_drift = Some(TlsDrift { qubit: 0, count_min: 1, count_max: 2, chi_min: 0.01, chi_max: 0.05, p_min: 0.0, p_max: 1.0 });
        let mut dev = SimulatedDevice::new(cfg).unwrap();
        dev.respawn_environment(0).unwrap();
        let first = dev.config.tls.clone();
        assert!(!first.is_empty() && first.len() <= 2);
        assert!(first.iter().all(|t| (0.01..0.05).contains(&t.chi)));
        dev.respawn_environment(1).unwrap();
        assert_ne!(first, dev.config.tls);
        dev.respawn_environment(0).unwrap();
        assert_eq!(first, dev.config.tls);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}

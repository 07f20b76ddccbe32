use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::operator::{Operator, C64};
use super::pauli::{Pauli, PauliLabel};
use super::state::DensityMatrix;
use crate::error::{invalid, Error, Result};

/// Outcome statistics of measuring every qubit of a register in a product Pauli basis.
///
/// `frequencies[b]` is the observed (or exact) probability of bitstring `b`,
/// with qubit 0 as the most significant bit. Bit value 0 is the +1 eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub basis: PauliLabel,
    /// `None` for exact-expectation records.
    pub shots: Option<u64>,
    pub frequencies: Vec<f64>,
}

impl MeasurementRecord {
    pub fn num_qubits(&self) -> usize {
        self.basis.len()
    }

    pub fn counts(&self) -> Option<Vec<u64>> {
        self.shots
            .map(|s| self.frequencies.iter().map(|f| (f * s as f64).round() as u64).collect())
    }

    /// Expectation of a Pauli string whose non-identity factors agree with the basis.
    pub fn expectation(&self, label: &PauliLabel) -> Result<f64> {
        let n = self.num_qubits();
        if label.len() != n {
            return invalid(format!("label {label} does not match {n}-qubit record"));
        }
        let mut mask = 0usize;
        for (q, (&op, &b)) in label.ops().iter().zip(self.basis.ops()).enumerate() {
            if op == Pauli::I {
                continue;
            }
            if op != b {
                return invalid(format!("label {label} not measurable in basis {}", self.basis));
            }
            mask |= 1 << (n - 1 - q);
        }
        Ok(self
            .frequencies
            .iter()
            .enumerate()
            .map(|(b, f)| if (b & mask).count_ones() % 2 == 0 { *f } else { -*f })
            .sum())
    }
}

/// Unitary rotating the eigenbasis of `p` onto the computational basis.
fn basis_rotation(p: Pauli) -> Operator {
    let s = FRAC_1_SQRT_2;
    let mut m = Operator::zeros(2);
    match p {
        Pauli::X => {
            m[(0, 0)] = C64::new(s, 0.0);
            m[(0, 1)] = C64::new(s, 0.0);
            m[(1, 0)] = C64::new(s, 0.0);
            m[(1, 1)] = C64::new(-s, 0.0);
        }
        Pauli::Y => {
            // H S†
            m[(0, 0)] = C64::new(s, 0.0);
            m[(0, 1)] = C64::new(0.0, -s);
            m[(1, 0)] = C64::new(s, 0.0);
            m[(1, 1)] = C64::new(0.0, s);
        }
        Pauli::Z | Pauli::I => m = Operator::identity(2),
    }
    m
}

/// Exact outcome distribution of measuring all qubits of `rho` in `basis`.
pub fn born_probabilities(rho: &DensityMatrix, basis: &PauliLabel) -> Result<Vec<f64>> {
    let n = basis.len();
    if rho.dim() != 1 << n {
        return invalid(format!("basis {basis} does not match state dimension {}", rho.dim()));
    }
    if basis.ops().contains(&Pauli::I) {
        return invalid(format!("basis {basis} has an identity factor on a measured qubit"));
    }
    let mut rot = Operator::identity(1);
    for &p in basis.ops() {
        rot = rot.kron(&basis_rotation(p));
    }
    let rotated = rho.evolve(&rot);
    Ok(rotated.populations().into_iter().map(|p| p.max(0.0)).collect())
}

/// Applies independent symmetric bit flips to an outcome distribution.
pub fn apply_readout_flips(probs: &[f64], flips: &[f64]) -> Vec<f64> {
    let n = flips.len();
    let mut p = probs.to_vec();
    for (q, &f) in flips.iter().enumerate() {
        if f == 0.0 {
            continue;
        }
        let bit = 1 << (n - 1 - q);
        let prev = p.clone();
        for (b, slot) in p.iter_mut().enumerate() {
            *slot = (1.0 - f) * prev[b] + f * prev[b ^ bit];
        }
    }
    p
}

/// Draws `shots` outcomes from the multinomial distribution `probs`.
pub fn sample_multinomial<R: Rng + ?Sized>(probs: &[f64], shots: u64, rng: &mut R) -> Result<Vec<u64>> {
    let total: f64 = probs.iter().sum();
    let mut remaining = shots;
    let mut mass = total;
    let mut counts = vec![0u64; probs.len()];
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == probs.len() {
            counts[k] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = Binomial::new(remaining, q)
            .map_err(|e| Error::Numerical(format!("binomial sampling: {e}")))?
            .sample(rng);
        counts[k] = c;
        remaining -= c;
        mass -= p;
    }
    Ok(counts)
}

/// Samples measurement outcomes of `rho` in `basis`, with independent readout
/// bit-flip probability `readout_flip[q]` on each qubit.
pub fn sample_counts<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    basis: &PauliLabel,
    shots: u64,
    readout_flip: &[f64],
    rng: &mut R,
) -> Result<MeasurementRecord> {
    if shots == 0 {
        return invalid("shots must be at least 1");
    }
    if readout_flip.len() != basis.len() {
        return invalid("one readout flip probability per measured qubit required");
    }
    if let Some(f) = readout_flip.iter().find(|f| !(0.0..0.5).contains(*f)) {
        return invalid(format!("readout flip probability {f} outside [0, 0.5)"));
    }
    let probs = apply_readout_flips(&born_probabilities(rho, basis)?, readout_flip);
    let counts = sample_multinomial(&probs, shots, rng)?;
    Ok(MeasurementRecord {
        basis: basis.clone(),
        shots: Some(shots),
        frequencies: counts.iter().map(|&c| c as f64 / shots as f64).collect(),
    })
}

/// Noise-free record carrying the exact (readout-flipped) distribution.
pub fn exact_record(rho: &DensityMatrix, basis: &PauliLabel, readout_flip: &[f64]) -> Result<MeasurementRecord> {
    let probs = apply_readout_flips(&born_probabilities(rho, basis)?, readout_flip);
    Ok(MeasurementRecord { basis: basis.clone(), shots: None, frequencies: probs })
}

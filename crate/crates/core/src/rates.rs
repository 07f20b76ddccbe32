use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quantum::PauliLabel;

/// Effective-Hamiltonian Pauli coefficients in MHz. The identity label is never stored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RateTable {
    pub rates: BTreeMap<PauliLabel, f64>,
    #[serde(default)]
    pub durations: Vec<f64>,
    #[serde(default)]
    pub qubits: Vec<usize>,
    #[serde(default)]
    pub drive: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RateTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_map(map: BTreeMap<PauliLabel, f64>) -> Self {
        let mut t = Self::new();
        for (l, v) in map {
            t.set(l, v);
        }
        t
    }

    /// Parses `(label, rate)` pairs such as `("ZX", -0.4915)`.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        let mut t = Self::new();
        for (l, v) in pairs {
            let label: PauliLabel = l.parse()?;
            if !v.is_finite() {
                return invalid(format!("rate for {l} is not finite"));
            }
            t.set(label, v);
        }
        Ok(t)
    }

    pub fn set(&mut self, label: PauliLabel, value: f64) {
        if !label.is_identity() {
            self.rates.insert(label, value);
        }
    }

    /// Rate for a label, zero when absent.
    pub fn get(&self, label: &str) -> f64 {
        label.parse::<PauliLabel>().ok().and_then(|l| self.rates.get(&l).copied()).unwrap_or(0.0)
    }

    pub fn num_qubits(&self) -> Option<usize> {
        self.rates.keys().next().map(PauliLabel::len)
    }

    /// Labels whose magnitude reaches `threshold` MHz.
    pub fn significant(&self, threshold: f64) -> Vec<PauliLabel> {
        self.rates.iter().filter(|(_, v)| v.abs() >= threshold).map(|(l, _)| l.clone()).collect()
    }

    pub fn max_abs_difference(&self, other: &RateTable) -> f64 {
        self.rates
            .keys()
            .chain(other.rates.keys())
            .map(|l| (self.rates.get(l).unwrap_or(&0.0) - other.rates.get(l).unwrap_or(&0.0)).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_label_dropped() {
        let t = RateTable::from_pairs([("II", 1.0), ("ZX", 0.5)]).unwrap();
        assert_eq!(t.rates.len(), 1);
        assert_eq!(t.get("ZX"), 0.5);
        assert_eq!(t.get("XX"), 0.0);
    }

    #[test]
    fn difference_covers_both_supports() {
        let a = RateTable::from_pairs([("ZX", 0.5)]).unwrap();
        let b = RateTable::from_pairs([("IX", 0.25)]).unwrap();
        assert_eq!(a.max_abs_difference(&b), 0.5);
    }
}

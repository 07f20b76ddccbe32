use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One transmon. Frequencies in MHz, times in µs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitSpec {
    /// Calibrated qubit frequency; the rotating frame and resonant carriers use it.
    pub omega: f64,
    /// Anharmonicity (negative for transmons).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Actual minus calibrated frequency. Shows up as a static Z field in the rotating frame.
    #[serde(default)]
    pub frequency_offset: f64,
    #[serde(default)]
    pub t1: Option<f64>,
    #[serde(default)]
    pub t2: Option<f64>,
    #[serde(default)]
    pub readout_flip: f64,
}

fn default_alpha() -> f64 {
    -330.0
}

impl QubitSpec {
    pub fn new(omega: f64) -> Self {
        QubitSpec { omega, alpha: default_alpha(), frequency_offset: 0.0, t1: None, t2: None, readout_flip: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    pub a: usize,
    pub b: usize,
    /// Capacitive coupling J in MHz.
    pub j: f64,
}

/// Arbitrary waveform generator imperfections applied to every requested drive amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AwgModel {
    /// Amplitude quantization step in MHz (0 disables quantization).
    #[serde(default)]
    pub amplitude_step: f64,
    /// Cubic gain coefficient g: delivered = quantize(A (1 + g A²)), A in MHz.
    #[serde(default)]
    pub gain_nonlinearity: f64,
    /// Phase added to every drive, radians.
    #[serde(default)]
    pub phase_offset: f64,
}

impl Default for AwgModel {
    fn default() -> Self {
        AwgModel { amplitude_step: 0.0, gain_nonlinearity: 0.0, phase_offset: 0.0 }
    }
}

impl AwgModel {
    /// Delivered amplitude for a requested (non-negative) amplitude.
    pub fn apply(&self, requested: f64) -> f64 {
        let a = requested * (1.0 + self.gain_nonlinearity * requested * requested);
        self.quantize(a)
    }

    /// Round to the nearest multiple of the step, halves away from zero.
    pub fn quantize(&self, a: f64) -> f64 {
        if self.amplitude_step <= 0.0 {
            return a;
        }
        (a / self.amplitude_step).round() * self.amplitude_step
    }

    /// Smallest non-zero deliverable amplitude.
    pub fn floor(&self) -> f64 {
        self.amplitude_step
    }
}

/// Dispersively coupled two-level defect: adds (χ/2) Z_q ⊗ Z_tls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsSpec {
    pub qubit: usize,
    /// Coupling rate χ in MHz.
    pub chi: f64,
    /// Initial excited-state population of the defect.
    #[serde(default)]
    pub p_excited: f64,
    /// Defect relaxation time in µs.
    #[serde(default)]
    pub lifetime: Option<f64>,
}

/// Distribution used to redraw the defect environment between repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsDrift {
    pub qubit: usize,
    #[serde(default)]
    pub count_min: usize,
    pub count_max: usize,
    pub chi_min: f64,
    pub chi_max: f64,
    #[serde(default)]
    pub p_min: f64,
    #[serde(default = "one")]
    pub p_max: f64,
}

fn one() -> f64 {
    1.0
}

/// Coefficient rule for one cross-resonance Pauli label:
/// c = omega_sq Ω² + J Ω (j_omega_cos cos φ + j_omega_sin sin φ) + j_sq J².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrRule {
    #[serde(default)]
    pub omega_sq: f64,
    #[serde(default)]
    pub j_omega_cos: f64,
    #[serde(default)]
    pub j_omega_sin: f64,
    #[serde(default)]
    pub j_sq: f64,
}

impl CrRule {
    pub fn rate(&self, j: f64, omega: f64, phase: f64) -> f64 {
        self.omega_sq * omega * omega
            + j * omega * (self.j_omega_cos * phase.cos() + self.j_omega_sin * phase.sin())
            + self.j_sq * j * j
    }
}

/// Injected effective cross-resonance generator: two-qubit label (control first) → rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CrRules(pub BTreeMap<String, CrRule>);

/// Rates of the reference cross-resonance device at Ω = 36 MHz, J = 2 MHz, phase 0.
pub const REFERENCE_RATES: [(&str, f64); 7] = [
    ("ZX", -0.4915),
    ("ZY", -0.0332),
    ("ZZ", 0.0294),
    ("IX", 0.4168),
    ("IY", 0.0649),
    ("IZ", -0.0756),
    ("ZI", 3.0810),
];

impl CrRules {
    /// Rules reproducing [`REFERENCE_RATES`] at Ω = `omega`, J = `j`, phase 0.
    ///
    /// The ZX/ZY and IX/IY pairs rotate together with the drive phase; the
    /// residual ZY and IY values enter as static J² terms.
    pub fn reference(j: f64, omega: f64) -> Self {
        let jo = j * omega;
        let jj = j * j;
        let mut m = BTreeMap::new();
        m.insert("ZI".into(), CrRule { omega_sq: 3.0810 / (omega * omega), ..Default::default() });
        m.insert("ZX".into(), CrRule { j_omega_cos: -0.4915 / jo, ..Default::default() });
        m.insert("ZY".into(), CrRule { j_omega_sin: -0.4915 / jo, j_sq: -0.0332 / jj, ..Default::default() });
        m.insert("ZZ".into(), CrRule { j_sq: 0.0294 / jj, ..Default::default() });
        m.insert("IX".into(), CrRule { j_omega_cos: 0.4168 / jo, ..Default::default() });
        m.insert("IY".into(), CrRule { j_omega_sin: 0.4168 / jo, j_sq: 0.0649 / jj, ..Default::default() });
        m.insert("IZ".into(), CrRule { j_sq: -0.0756 / jj, ..Default::default() });
        CrRules(m)
    }

    /// Only the phase-rotating ZX/ZY, IX/IY pairs and the Stark shift, no static residuals.
    pub fn ideal(j: f64, omega: f64) -> Self {
        let mut rules = Self::reference(j, omega);
        for rule in rules.0.values_mut() {
            rule.j_sq = 0.0;
        }
        rules.0.retain(|_, r| *r != CrRule::default());
        rules
    }
}

impl Default for CrRules {
    fn default() -> Self {
        CrRules::reference(2.0, 36.0)
    }
}

/// How drives are turned into generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveModel {
    /// Cross-resonance segments use the injected generator from [`CrRules`];
    /// resonant drives use the single-qubit rotating-frame field. Rotating frame only.
    #[default]
    Effective,
    /// Qubit-model Hamiltonian with explicit carriers and static couplings.
    Pulse,
}

/// Static description of a fixed-frequency device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub qubits: Vec<QubitSpec>,
    #[serde(default)]
    pub couplings: Vec<Coupling>,
    #[serde(default)]
    pub awg: AwgModel,
    #[serde(default)]
    pub tls: Vec<TlsSpec>,
    #[serde(default)]
    pub tls_drift: Option<TlsDrift>,
    #[serde(default)]
    pub cr_rules: CrRules,
    #[serde(default)]
    pub drive_model: DriveModel,
}

impl DeviceConfig {
    /// `n` qubits on a chain at `base`, `base + spacing`, ... MHz with uniform coupling `j`.
    pub fn chain(n: usize, base: f64, spacing: f64, j: f64) -> Self {
        DeviceConfig {
            qubits: (0..n).map(|i| QubitSpec::new(base + spacing * i as f64)).collect(),
            couplings: (1..n).map(|i| Coupling { a: i - 1, b: i, j }).collect(),
            awg: AwgModel::default(),
            tls: Vec::new(),
            tls_drift: None,
            cr_rules: CrRules::default(),
            drive_model: DriveModel::Effective,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.qubits.len()
    }

    /// Coupling between two qubits (either order).
    pub fn coupling(&self, a: usize, b: usize) -> Option<f64> {
        self.couplings
            .iter()
            .find(|c| (c.a == a && c.b == b) || (c.a == b && c.b == a))
            .map(|c| c.j)
    }

    pub fn readout_flips(&self, qubits: &[usize]) -> Vec<f64> {
        qubits.iter().map(|&q| self.qubits[q].readout_flip).collect()
    }

    /// Checks invariants; returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let n = self.num_qubits();
        if n == 0 {
            return invalid("device needs at least one qubit");
        }
        let mut warnings = Vec::new();
        for (i, q) in self.qubits.iter().enumerate() {
            if q.alpha > 0.0 {
                warnings.push(format!("qubit {i}: positive anharmonicity {}", q.alpha));
            }
            if let (Some(t1), Some(t2)) = (q.t1, q.t2) {
                if t2 > 2.0 * t1 + 1e-12 {
                    return invalid(format!("qubit {i}: T2 = {t2} exceeds 2·T1 = {}", 2.0 * t1));
                }
            }
            if q.t1.is_some_and(|t| t <= 0.0) || q.t2.is_some_and(|t| t <= 0.0) {
                return invalid(format!("qubit {i}: coherence times must be positive"));
            }
            if !(0.0..0.5).contains(&q.readout_flip) {
                return invalid(format!("qubit {i}: readout flip {} outside [0, 0.5)", q.readout_flip));
            }
        }
        for c in &self.couplings {
            if c.a == c.b {
                return invalid(format!("self-coupling on qubit {}", c.a));
            }
            if c.a >= n || c.b >= n {
                return invalid(format!("coupling ({}, {}) references a missing qubit", c.a, c.b));
            }
            let detuning = (self.qubits[c.a].omega - self.qubits[c.b].omega).abs();
            if c.j.abs() > 0.1 * detuning {
                warnings.push(format!(
                    "coupling ({}, {}): |J| = {} is not small against detuning {detuning}",
                    c.a,
                    c.b,
                    c.j.abs()
                ));
            }
        }
        for t in &self.tls {
            if t.qubit >= n {
                return invalid(format!("TLS on missing qubit {}", t.qubit));
            }
            if !(0.0..=1.0).contains(&t.p_excited) {
                return invalid(format!("TLS excited population {} outside [0, 1]", t.p_excited));
            }
            if !t.chi.is_finite() {
                return invalid("TLS coupling must be finite");
            }
        }
        if let Some(d) = &self.tls_drift {
            if d.qubit >= n || d.count_min > d.count_max || d.chi_min > d.chi_max || d.p_min > d.p_max {
                return invalid("inconsistent TLS drift distribution");
            }
        }
        for label in self.cr_rules.0.keys() {
            let ok = label.len() == 2 && label.chars().all(|c| "IXYZ".contains(c)) && label != "II";
            if !ok {
                return invalid(format!("cross-resonance rule label {label:?} must be a non-identity two-qubit Pauli string"));
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(warnings)
    }
}

use nalgebra::DMatrix;

use super::config::DeviceConfig;
use crate::error::{invalid, Result};
use crate::quantum::{pauli_matrix, Operator, PauliLabel, C64};
use crate::rates::RateTable;

/// Single-site operator `op` acting on site `site` of a register of `n` sites with `levels` each.
pub fn embed_site(op: &Operator, site: usize, n: usize, levels: usize) -> Operator {
    let mut out = Operator::identity(1);
    for k in 0..n {
        out = if k == site { out.kron(op) } else { out.kron(&Operator::identity(levels)) };
    }
    out
}

fn lowering(levels: usize) -> Operator {
    let mut m = DMatrix::zeros(levels, levels);
    for k in 1..levels {
        m[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    Operator(m)
}

/// Static lab-frame Duffing Hamiltonian (MHz) truncated to `levels` per transmon.
pub fn build_duffing_hamiltonian(cfg: &DeviceConfig, levels: usize) -> Result<Operator> {
    if !(2..=3).contains(&levels) {
        return invalid(format!("levels must be 2 or 3, got {levels}"));
    }
    let n = cfg.num_qubits();
    let a = lowering(levels);
    let ad = a.adjoint();
    let num = &ad * &a;
    let pair = &(&ad * &ad) * &(&a * &a);
    let diff = &a - &ad;
    let mut h = Operator::zeros(levels.pow(n as u32));
    for (i, q) in cfg.qubits.iter().enumerate() {
        let site = num.scale(q.omega) + pair.scale(q.alpha);
        h = h + embed_site(&site, i, n, levels);
    }
    for c in &cfg.couplings {
        let term = &embed_site(&diff, c.a, n, levels) * &embed_site(&diff, c.b, n, levels);
        h = h + term.scale(c.j);
    }
    Ok(h.hermitian_part())
}

fn single(n: usize, q: usize, p: char) -> PauliLabel {
    let s: String = (0..n).map(|k| if k == q { p } else { 'I' }).collect();
    s.parse().expect("valid label")
}

fn double(n: usize, a: usize, pa: char, b: usize, pb: char) -> PauliLabel {
    let s: String = (0..n)
        .map(|k| if k == a { pa } else if k == b { pb } else { 'I' })
        .collect();
    s.parse().expect("valid label")
}

/// Qubit-model Hamiltonian Σ (ω_i/2) Z_i + Σ J_ij Y_i Y_j in MHz, without drives.
/// `frequency_offset` is included in ω.
pub fn build_qubit_hamiltonian(cfg: &DeviceConfig) -> Operator {
    let n = cfg.num_qubits();
    let mut h = Operator::zeros(1 << n);
    for (i, q) in cfg.qubits.iter().enumerate() {
        h = h + pauli_matrix(&single(n, i, 'Z')).scale((q.omega + q.frequency_offset) / 2.0);
    }
    for c in &cfg.couplings {
        h = h + pauli_matrix(&double(n, c.a, 'Y', c.b, 'Y')).scale(c.j);
    }
    h
}

/// Injected effective cross-resonance generator for driving `control` at the frequency of
/// `target` with delivered amplitude `omega` (MHz) and phase `phase`. Labels are two-qubit,
/// control first.
pub fn cross_resonance_rates(cfg: &DeviceConfig, control: usize, target: usize, omega: f64, phase: f64) -> Result<RateTable> {
    let Some(j) = cfg.coupling(control, target) else {
        return invalid(format!("qubits {control} and {target} are not coupled"));
    };
    let mut table = RateTable::new();
    table.qubits = vec![control, target];
    table.drive = format!("CR {control}->{target} Ω={omega} MHz phase={phase}");
    if omega == 0.0 {
        return Ok(table);
    }
    for (label, rule) in &cfg.cr_rules.0 {
        table.set(label.parse()?, rule.rate(j, omega, phase));
    }
    Ok(table)
}

/// Embeds a two-qubit (control, target) rate table into an `n`-qubit generator in MHz.
pub fn embed_pair_generator(table: &RateTable, control: usize, target: usize, n: usize) -> Result<Operator> {
    let mut h = Operator::zeros(1 << n);
    for (label, v) in &table.rates {
        h = h + pauli_matrix(&label.embed(&[control, target], n)?).scale(*v);
    }
    Ok(h)
}

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quantum::{log_unitary, log_unitary_compact, log_unitary_near, pauli_decompose, pauli_sum, Operator, PauliLabel};
use crate::rates::RateTable;

fn num_qubits(u: &Operator) -> Result<usize> {
    let d = u.dim();
    if !d.is_power_of_two() || d < 2 {
        return invalid(format!("dimension {d} is not a qubit register"));
    }
    Ok(d.trailing_zeros() as usize)
}

/// Pauli coefficients (MHz) of the principal-branch generator of `u` over time `t`.
pub fn effective_rates(u: &Operator, t: f64) -> Result<RateTable> {
    let n = num_qubits(u)?;
    let h = log_unitary(u, t)?;
    let mut table = RateTable::from_map(pauli_decompose(&h, n)?);
    table.durations = vec![t];
    Ok(table)
}

/// Like [`effective_rates`] but on the branch of smallest eigenphase spread.
pub fn effective_rates_compact(u: &Operator, t: f64) -> Result<RateTable> {
    let n = num_qubits(u)?;
    let h = log_unitary_compact(u, t)?;
    let mut table = RateTable::from_map(pauli_decompose(&h, n)?);
    table.durations = vec![t];
    Ok(table)
}

/// Like [`effective_rates`] but picks, per eigenvector, the branch closest to `reference`.
pub fn effective_rates_near(u: &Operator, t: f64, reference: &RateTable) -> Result<RateTable> {
    let n = num_qubits(u)?;
    let h_ref = pauli_sum(reference.rates.iter(), n);
    let h = log_unitary_near(u, t, &h_ref)?;
    let mut table = RateTable::from_map(pauli_decompose(&h, n)?);
    table.durations = vec![t];
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBranch {
    /// Integer corrections k, one per duration; the corrected rate is raw + k/(2t).
    pub corrections: Vec<i32>,
    pub corrected: Vec<f64>,
    /// Sample standard deviation of the corrected rates.
    pub std_dev: f64,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchResolution {
    pub rates: RateTable,
    pub durations: Vec<f64>,
    pub labels: BTreeMap<PauliLabel, LabelBranch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchOptions {
    pub k_max: i32,
    /// Standard deviation (MHz) above which a label is flagged ambiguous.
    pub threshold: f64,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions { k_max: 3, threshold: 0.05 }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Corrects each label by integer multiples of 1/(2t) so its rate is constant across durations.
pub fn resolve_branch(tables: &[(f64, RateTable)], opts: BranchOptions) -> Result<BranchResolution> {
    let durations: Vec<f64> = tables.iter().map(|(t, _)| *t).collect();
    let distinct: BTreeSet<u64> = durations.iter().map(|t| t.to_bits()).collect();
    if distinct.len() < 3 || distinct.len() != durations.len() {
        return invalid("branch resolution needs at least 3 distinct durations");
    }
    if durations.iter().any(|t| !(*t > 0.0)) {
        return invalid("durations must be positive");
    }
    let labels: BTreeSet<PauliLabel> = tables.iter().flat_map(|(_, t)| t.rates.keys().cloned()).collect();
    let mut out = RateTable::new();
    out.durations = durations.clone();
    if let Some((_, first)) = tables.first() {
        out.qubits = first.qubits.clone();
        out.drive = first.drive.clone();
    }
    let mut per_label = BTreeMap::new();
    for label in labels {
        let raw: Vec<f64> = tables.iter().map(|(_, t)| t.rates.get(&label).copied().unwrap_or(0.0)).collect();
        let branch = resolve_label(&raw, &durations, opts);
        if branch.ambiguous {
            let msg = format!("{label}: no branch correction is consistent across durations (std {:.4} MHz)", branch.std_dev);
            log::warn!("{msg}");
            out.warnings.push(msg);
            out.set(label.clone(), mean(&raw));
        } else {
            out.set(label.clone(), mean(&branch.corrected));
        }
        per_label.insert(label, branch);
    }
    Ok(BranchResolution { rates: out, durations, labels: per_label })
}

fn resolve_label(raw: &[f64], durations: &[f64], opts: BranchOptions) -> LabelBranch {
    let assign = |c: f64| -> Vec<i32> {
        raw.iter()
            .zip(durations)
            .map(|(v, t)| (((c - v) * 2.0 * t).round() as i32).clamp(-opts.k_max, opts.k_max))
            .collect()
    };
    let apply = |ks: &[i32]| -> Vec<f64> { raw.iter().zip(durations).zip(ks).map(|((v, t), k)| v + *k as f64 / (2.0 * t)).collect() };
    let shortest = (0..durations.len()).min_by(|&a, &b| durations[a].total_cmp(&durations[b])).unwrap_or(0);
    // residual, then wraps at the shortest duration, then total wraps
    let score = |ks: &[i32]| -> (f64, i32, i32) {
        let c = apply(ks);
        let m = mean(&c);
        (c.iter().map(|x| (x - m).powi(2)).sum(), ks[shortest].abs(), ks.iter().map(|k| k.abs()).sum())
    };
    let mut best: Vec<i32> = vec![0; raw.len()];
    let mut best_score = score(&best);
    for (v, t) in raw.iter().zip(durations) {
        for k in -opts.k_max..=opts.k_max {
            let mut ks = assign(v + k as f64 / (2.0 * t));
            // settle the assignment around its own mean
            for _ in 0..3 {
                let next = assign(mean(&apply(&ks)));
                if next == ks {
                    break;
                }
                ks = next;
            }
            let s = score(&ks);
            let tied = (s.0 - best_score.0).abs() <= 1e-9 * (1.0 + best_score.0);
            let better = (!tied && s.0 < best_score.0) || (tied && (s.1, s.2) < (best_score.1, best_score.2));
            if better {
                best = ks;
                best_score = s;
            }
        }
    }
    let corrected = apply(&best);
    let std_dev = sample_std(&corrected);
    LabelBranch { corrections: best, corrected, std_dev, ambiguous: std_dev > opts.threshold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{expm_hermitian, pauli_matrix};
    use std::f64::consts::PI;

    fn table_for(h: &Operator, t: f64) -> RateTable {
        effective_rates(&expm_hermitian(h, 2.0 * PI * t).unwrap(), t).unwrap()
    }

    #[test]
    fn identity_gives_zero_rates() {
        let r = effective_rates(&Operator::identity(4), 0.3).unwrap();
        assert!(r.rates.values().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn wrap_shifts_commuting_term_by_half_inverse_duration_multiples() {
        let h = pauli_matrix(&"ZI".parse().unwrap()).scale(3.081);
        let t = 0.3;
        let r = table_for(&h, t).get("ZI");
        let k = (3.081 - r) * 2.0 * t;
        assert!((k - k.round()).abs() < 1e-9 && k.round() != 0.0);
    }

    #[test]
    fn stark_shift_recovered_over_durations() {
        let h = pauli_matrix(&"ZI".parse().unwrap()).scale(3.081);
        let tables: Vec<(f64, RateTable)> = [0.1, 0.2, 0.3, 0.4].iter().map(|&t| (t, table_for(&h, t))).collect();
        let res = resolve_branch(&tables, BranchOptions::default()).unwrap();
        assert!((res.rates.get("ZI") - 3.081).abs() < 1e-9);
        assert!(res.labels[&"ZI".parse::<PauliLabel>().unwrap()].std_dev < 1e-9);
    }

    #[test]
    fn small_rates_average() {
        let tables: Vec<(f64, RateTable)> = [(0.1, 0.11), (0.2, 0.09), (0.3, 0.1)]
            .iter()
            .map(|&(t, v)| (t, RateTable::from_pairs([("IX", v)]).unwrap()))
            .collect();
        let res = resolve_branch(&tables, BranchOptions::default()).unwrap();
        assert!((res.rates.get("IX") - 0.1).abs() < 1e-12);
        assert!(res.labels.values().all(|b| b.corrections.iter().all(|k| *k == 0)));
    }

    #[test]
    fn too_few_durations_rejected() {
        let t = RateTable::from_pairs([("IX", 0.1)]).unwrap();
        assert!(resolve_branch(&[(0.1, t.clone()), (0.2, t)], BranchOptions::default()).is_err());
    }

    #[test]
    fn inconsistent_label_flagged() {
        let tables: Vec<(f64, RateTable)> = [(0.1, 0.0), (0.2, 0.7), (0.3, -0.4), (0.4, 0.2)]
            .iter()
            .map(|&(t, v)| (t, RateTable::from_pairs([("IX", v)]).unwrap()))
            .collect();
        let res = resolve_branch(&tables, BranchOptions::default()).unwrap();
        assert!(res.labels.values().next().unwrap().ambiguous);
        assert_eq!(res.rates.warnings.len(), 1);
    }
}

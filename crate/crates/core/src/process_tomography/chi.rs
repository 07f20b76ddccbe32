use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::device::{derive_seed, Job, MeasurementProvider, Prep, PulseSchedule, Session};
use crate::error::{invalid, Error, Result};
use crate::quantum::{closest_unitary, hermitian_eigen, pauli_matrix, MeasurementRecord, Operator, Pauli, PauliLabel, C64};

/// Input states per qubit, in index order.
pub const QPT_PREPS: [Prep; 4] = [Prep::Zero, Prep::One, Prep::Plus, Prep::PlusI];

const MAX_CONDITION: f64 = 1e8;

/// Process matrix in the canonical Pauli basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiMatrix {
    pub n: usize,
    #[serde(with = "complex_matrix")]
    pub entries: DMatrix<C64>,
    pub lambda0: f64,
    /// Total weight of negative eigenvalues removed by the CP projection.
    pub clipped: f64,
}

impl ChiMatrix {
    /// Projects `raw` onto the positive cone with unit trace.
    pub fn from_raw(n: usize, raw: DMatrix<C64>) -> Result<Self> {
        let (entries, clipped) = project_cp(&raw)?;
        let (vals, _) = hermitian_eigen(&Operator(entries.clone()));
        let lambda0 = vals.last().copied().unwrap_or(0.0);
        Ok(ChiMatrix { n, entries, lambda0, clipped })
    }

    /// χ of the channel ρ ↦ Σ K ρ K†.
    pub fn from_kraus(kraus: &[Operator], n: usize) -> Result<Self> {
        let dim = 1usize << n;
        let labels: Vec<PauliLabel> = PauliLabel::all(n).collect();
        let mut chi = DMatrix::<C64>::zeros(labels.len(), labels.len());
        for k in kraus {
            if k.dim() != dim {
                return invalid("Kraus operator dimension mismatch");
            }
            let c: Vec<C64> = labels.iter().map(|l| (pauli_matrix(l).matrix() * k.matrix()).trace() / dim as f64).collect();
            for a in 0..c.len() {
                for b in 0..c.len() {
                    chi[(a, b)] += c[a] * c[b].conj();
                }
            }
        }
        Self::from_raw(n, chi)
    }

    pub fn from_unitary(u: &Operator, n: usize) -> Result<Self> {
        Self::from_kraus(std::slice::from_ref(u), n)
    }

    /// This channel followed by depolarizing noise of strength `p`.
    pub fn depolarized(&self, p: f64) -> Result<Self> {
        let d2 = self.entries.nrows() as f64;
        let mut m = self.entries.map(|z| z * (1.0 - p));
        for i in 0..self.entries.nrows() {
            m[(i, i)] += C64::new(p / d2, 0.0);
        }
        Self::from_raw(self.n, m)
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&Operator(self.entries.clone())).0
    }
}

/// Hermitizes, normalises to unit trace, clips negative eigenvalues and renormalises.
/// Returns the projected matrix and the clipped weight.
pub fn project_cp(raw: &DMatrix<C64>) -> Result<(DMatrix<C64>, f64)> {
    let herm = Operator(raw.clone()).hermitian_part();
    let tr = herm.trace().re;
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(Error::Numerical(format!("process matrix has non-positive trace {tr}")));
    }
    let (vals, vecs) = hermitian_eigen(&herm.scale(1.0 / tr));
    if vals.iter().all(|v| *v >= 0.0) {
        return Ok((herm.scale(1.0 / tr).0, 0.0));
    }
    let clipped: f64 = vals.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let kept: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = kept.iter().sum();
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(kept.len(), kept.iter().map(|v| C64::new(v / total, 0.0))));
    let m = &vecs * diag * vecs.adjoint();
    Ok((Operator(m).hermitian_part().0, clipped))
}

fn prep_vector(p: Prep) -> [f64; 4] {
    let b = p.bloch();
    [1.0, b[0], b[1], b[2]]
}

/// Prep assignment for input index `idx` over `n` tomography qubits (qubit 0 most significant).
pub fn prep_combination(idx: usize, n: usize) -> Vec<Prep> {
    (0..n).map(|q| QPT_PREPS[(idx >> (2 * (n - 1 - q))) & 3]).collect()
}

/// Circuits for QPT of `qubits` (ascending) on an `n_device`-qubit register. Spectators start in |0⟩.
pub fn qpt_session(n_device: usize, qubits: &[usize], schedule: &PulseSchedule, shots: Option<u64>, seed: u64) -> Result<Session> {
    let n = qubits.len();
    if !(1..=3).contains(&n) {
        return invalid(format!("QPT supports 1 to 3 qubits, got {n}"));
    }
    if qubits.windows(2).any(|w| w[0] >= w[1]) || qubits[n - 1] >= n_device {
        return invalid("QPT qubits must be ascending and on the device");
    }
    if let Some(s) = shots {
        if s < 256 {
            return invalid(format!("QPT needs at least 256 shots per circuit, got {s}"));
        }
    }
    let bases = PauliLabel::measurement_bases(n);
    let jobs = (0..1usize << (2 * n))
        .map(|idx| {
            let mut prep = vec![Prep::Zero; n_device];
            for (q, p) in qubits.iter().zip(prep_combination(idx, n)) {
                prep[*q] = p;
            }
            Job { prep, schedule: schedule.clone(), measured: qubits.to_vec(), bases: bases.clone(), shots, seed: derive_seed(seed, idx as u64) }
        })
        .collect();
    Ok(Session { name: format!("qpt{qubits:?}"), jobs })
}

/// Linear-inversion reconstruction from the records of [`qpt_session`].
pub fn reconstruct(n: usize, records: &[Vec<MeasurementRecord>]) -> Result<ChiMatrix> {
    let d2 = 1usize << (2 * n);
    if records.len() != d2 {
        return invalid(format!("expected {d2} preparations, got {}", records.len()));
    }
    let labels: Vec<PauliLabel> = PauliLabel::all(n).collect();
    let mut e = DMatrix::<f64>::zeros(d2, d2);
    for (p, recs) in records.iter().enumerate() {
        for (li, label) in labels.iter().enumerate() {
            if label.is_identity() {
                e[(li, p)] = 1.0;
                continue;
            }
            let mut sum = 0.0;
            let mut count = 0usize;
            for r in recs {
                let compatible = label.ops().iter().zip(r.basis.ops()).all(|(a, b)| *a == Pauli::I || a == b);
                if compatible {
                    sum += r.expectation(label)?;
                    count += 1;
                }
            }
            if count == 0 {
                return invalid(format!("no basis measures {label}"));
            }
            e[(li, p)] = sum / count as f64;
        }
    }
    let a1 = DMatrix::from_fn(4, 4, |comp, prep| prep_vector(QPT_PREPS[prep])[comp]);
    let mut a = DMatrix::<f64>::identity(1, 1);
    for _ in 0..n {
        a = a.kronecker(&a1);
    }
    let sv = a.clone().svd(false, false).singular_values;
    let condition = sv.max() / sv.min();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition, limit: MAX_CONDITION });
    }
    let a_inv = a.try_inverse().ok_or(Error::IllConditioned { condition: f64::INFINITY, limit: MAX_CONDITION })?;
    let ptm = e * a_inv;
    Ok(ChiMatrix::from_raw(n, chi_from_ptm(&ptm, n))?)
}

/// χ from the Pauli transfer matrix R_ij = Tr(P_i Λ(P_j))/d.
pub fn chi_from_ptm(ptm: &DMatrix<f64>, n: usize) -> DMatrix<C64> {
    let d = 1usize << n;
    let labels: Vec<PauliLabel> = PauliLabel::all(n).collect();
    let mats: Vec<DMatrix<C64>> = labels.iter().map(|l| pauli_matrix(l).0).collect();
    let mut choi = DMatrix::<C64>::zeros(d * d, d * d);
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            let r = ptm[(i, j)];
            if r != 0.0 {
                choi += mats[j].transpose().kronecker(&mats[i]) * C64::new(r / d as f64, 0.0);
            }
        }
    }
    // column a is vec(P_a) with entry k·d + m = P_a[m][k]
    let v = DMatrix::from_fn(d * d, labels.len(), |row, a| mats[a][(row % d, row / d)]);
    (v.adjoint() * choi * v) / C64::new((d * d) as f64, 0.0)
}

/// Full QPT of `qubits` under `schedule`.
pub fn run_qpt<P: MeasurementProvider + ?Sized>(
    provider: &P,
    qubits: &[usize],
    schedule: &PulseSchedule,
    shots: Option<u64>,
    seed: u64,
) -> Result<ChiMatrix> {
    let session = qpt_session(provider.num_qubits(), qubits, schedule, shots, seed)?;
    let records = provider.run_session(&session)?;
    reconstruct(qubits.len(), &records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominantUnitary {
    pub lambda0: f64,
    pub unitary: Operator,
    /// Top eigenvalue gap below 1e-6; the eigenvector was chosen by tie-break.
    pub degenerate: bool,
}

/// Unitary closest to the dominant eigenvector of χ, with real non-negative identity coefficient.
pub fn dominant_unitary(chi: &ChiMatrix) -> Result<DominantUnitary> {
    let (vals, vecs) = hermitian_eigen(&Operator(chi.entries.clone()));
    let top = *vals.last().ok_or_else(|| Error::Numerical("empty process matrix".into()))?;
    let candidates: Vec<usize> = (0..vals.len()).filter(|&k| top - vals[k] < 1e-6).collect();
    let degenerate = candidates.len() > 1;
    let key = |k: usize| -> Vec<f64> { vecs.column(k).iter().map(|z| (z.norm() * 1e9).round()).collect() };
    let pick = *candidates
        .iter()
        .max_by(|&&a, &&b| key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a)))
        .expect("at least one candidate");
    if degenerate {
        log::warn!("dominant eigenvalue of the process matrix is degenerate; using lexicographic tie-break");
    }
    let v = vecs.column(pick);
    let norm = v.norm();
    let d = 1usize << chi.n;
    let mut u = Operator::zeros(d);
    for (a, label) in PauliLabel::all(chi.n).enumerate() {
        if v[a].norm() > 0.0 {
            u = u + pauli_matrix(&label).scale_complex(v[a] / norm);
        }
    }
    let mut u = closest_unitary(&u)?;
    let reference = (0..d * d)
        .map(|a| crate::quantum::pauli::trace_with_pauli(&u, &PauliLabel::from_index(a, chi.n)))
        .find(|c| c.norm() > 1e-9)
        .unwrap_or(C64::new(1.0, 0.0));
    u = u.scale_complex(reference.conj() / reference.norm());
    Ok(DominantUnitary { lambda0: vals[pick], unitary: u, degenerate })
}

mod complex_matrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::quantum::C64;

    pub fn serialize<S: Serializer>(m: &DMatrix<C64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<C64>, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(n, cols, |r, c| C64::new(rows[r][c][0], rows[r][c][1])))
    }
}

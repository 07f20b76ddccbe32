use nalgebra::DMatrix;

use super::operator::{Operator, C64};
use crate::error::{invalid, Error, Result};

/// Mixed state on a register of two-level subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub DMatrix<C64>);

impl DensityMatrix {
    /// Validates Hermiticity and unit trace.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        let rho = DensityMatrix(m);
        let op = Operator(rho.0.clone());
        op.ensure_hermitian(1e-10)?;
        let tr = rho.0.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return invalid(format!("density matrix trace {tr} != 1"));
        }
        Ok(rho)
    }

    pub fn from_pure(psi: &[C64]) -> Self {
        let d = psi.len();
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        DensityMatrix(DMatrix::from_fn(d, d, |r, c| psi[r] * psi[c].conj() / norm))
    }

    /// Computational basis state |index>.
    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(index, index)] = C64::new(1.0, 0.0);
        DensityMatrix(m)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(DMatrix::identity(dim, dim).map(|z: C64| z / dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_subsystems(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix(self.0.kronecker(&other.0))
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Tr(ρ²)
    pub fn purity(&self) -> f64 {
        // Tr(ρ²) = Σ |ρ_ij|² for Hermitian ρ.
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Re Tr(ρ A)
    pub fn expectation(&self, op: &Operator) -> Result<f64> {
        if op.dim() != self.dim() {
            return invalid("operator and state dimensions differ");
        }
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            for k in 0..d {
                acc += self.0[(i, k)] * op[(k, i)];
            }
        }
        Ok(acc.re)
    }

    /// Reduced state on the subsystems in `keep` (ascending, unique).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let n = self.num_subsystems();
        if keep.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("keep-set must be strictly ascending");
        }
        if let Some(&q) = keep.iter().find(|&&q| q >= n) {
            return Err(Error::InvalidInput(format!("subsystem {q} out of range for {n} subsystems")));
        }
        let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
        let bit = |index: usize, q: usize| (index >> (n - 1 - q)) & 1;
        let gather = |index: usize, set: &[usize]| set.iter().fold(0usize, |acc, &q| (acc << 1) | bit(index, q));
        let dk = 1usize << keep.len();
        let mut out = DMatrix::<C64>::zeros(dk, dk);
        let d = self.dim();
        for i in 0..d {
            let ti = gather(i, &traced);
            let ki = gather(i, keep);
            for j in 0..d {
                if gather(j, &traced) == ti {
                    out[(ki, gather(j, keep))] += self.0[(i, j)];
                }
            }
        }
        Ok(DensityMatrix(out))
    }

    /// Applies U ρ U†.
    pub fn evolve(&self, u: &Operator) -> DensityMatrix {
        DensityMatrix(u.conjugate(&self.0))
    }

    /// Applies a Kraus channel Σ K ρ K†.
    pub fn apply_kraus(&self, kraus: &[Operator]) -> DensityMatrix {
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for k in kraus {
            out += k.conjugate(&self.0);
        }
        DensityMatrix(out)
    }

    /// Hermitian, unit-trace copy (removes round-off drift).
    pub fn renormalized(&self) -> DensityMatrix {
        let h = (self.0.clone() + self.0.adjoint()).map(|z| z * 0.5);
        let tr = h.trace().re;
        DensityMatrix(h.map(|z| z / tr))
    }

    /// Diagonal in the computational basis.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }
}

/// Single-qubit state from a Bloch vector, clipped to the unit ball.
pub fn qubit_from_bloch(r: [f64; 3]) -> DensityMatrix {
    let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let s = if norm > 1.0 { 1.0 / norm } else { 1.0 };
    let (x, y, z) = (r[0] * s, r[1] * s, r[2] * s);
    DensityMatrix(DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new((1.0 + z) / 2.0, 0.0),
            C64::new(x / 2.0, -y / 2.0),
            C64::new(x / 2.0, y / 2.0),
            C64::new((1.0 - z) / 2.0, 0.0),
        ],
    ))
}

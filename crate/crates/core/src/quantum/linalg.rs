//! Matrix functions on small dense operators.
//!
//! Exponentials of Hermitian generators go through a Hermitian
//! eigendecomposition, which keeps the result unitary to machine precision.
//! Unitaries are diagonalised through their commuting Hermitian and
//! anti-Hermitian parts, so only Hermitian eigensolvers are ever needed.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::operator::{Operator, C64};
use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-9;

/// Eigendecomposition of a Hermitian operator with eigenvalues in ascending order.
pub fn hermitian_eigen(h: &Operator) -> (Vec<f64>, DMatrix<C64>) {
    let eig = SymmetricEigen::new(h.hermitian_part().0);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(h.dim(), h.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Σ_k f(λ_k) |v_k><v_k|
fn spectral_map(values: &[f64], vectors: &DMatrix<C64>, f: impl Fn(f64) -> C64) -> Operator {
    let d = vectors.nrows();
    let diag = DVector::from_iterator(d, values.iter().map(|&v| f(v)));
    let scaled = DMatrix::from_fn(d, d, |r, c| vectors[(r, c)] * diag[c]);
    Operator(scaled * vectors.adjoint())
}

/// exp(-i θ H) for Hermitian H.
pub fn expm_hermitian(h: &Operator, theta: f64) -> Result<Operator> {
    h.ensure_hermitian(HERMITIAN_TOL * h.max_abs().max(1.0))?;
    let (values, vectors) = hermitian_eigen(h);
    Ok(spectral_map(&values, &vectors, |v| C64::from_polar(1.0, -theta * v)))
}

/// Time-ordered product of exp(-i H_k dt_k) with the first segment applied first.
///
/// Generators are in rad/us and durations in us.
pub fn propagate(segments: &[(Operator, f64)]) -> Result<Operator> {
    let Some((first, _)) = segments.first() else {
        return Err(Error::InvalidInput("cannot infer dimension of an empty segment list; use propagate_dim".into()));
    };
    propagate_dim(segments, first.dim())
}

/// As [`propagate`], returning the identity of `dim` for an empty list.
pub fn propagate_dim(segments: &[(Operator, f64)], dim: usize) -> Result<Operator> {
    let mut u = Operator::identity(dim);
    for (h, dt) in segments {
        if !(*dt > 0.0) {
            return Err(Error::InvalidInput(format!("segment duration must be positive, got {dt}")));
        }
        if h.dim() != dim {
            return Err(Error::InvalidInput("segment dimensions differ".into()));
        }
        let step = expm_hermitian(h, *dt)?;
        u = Operator(step.0 * u.0);
    }
    Ok(u)
}

/// Eigendecomposition of a (near-)unitary matrix: returns eigenphases in
/// (-π, π] and an orthonormal eigenbasis.
pub fn unitary_eigen(u: &Operator, tol: f64) -> Result<(Vec<f64>, DMatrix<C64>)> {
    u.ensure_unitary(tol)?;
    let re_part = u.hermitian_part();
    let im_part = Operator((u.0.clone() - u.0.adjoint()).map(|z| z * C64::new(0.0, -0.5)));
    // Generic mixing weights; a bad draw only happens on an accidental degeneracy.
    for &mix in &[0.618_033_988_749_894_9, 1.414_213_562_373_095, -0.377_964_473_009_227_2, 2.718_281_828_459_045] {
        let combo = re_part.clone() + im_part.scale(mix);
        let (_, vectors) = hermitian_eigen(&combo);
        let diag = vectors.adjoint() * &u.0 * &vectors;
        let d = diag.nrows();
        let mut off = 0.0f64;
        for r in 0..d {
            for c in 0..d {
                if r != c {
                    off = off.max(diag[(r, c)].norm());
                }
            }
        }
        if off <= tol.max(1e-9) * 10.0 {
            let phases = (0..d).map(|k| principal_phase(diag[(k, k)].arg())).collect();
            return Ok((phases, vectors));
        }
    }
    Err(Error::Numerical("failed to diagonalise unitary".into()))
}

/// Maps a phase into (-π, π], sending the -π boundary to +π.
pub fn principal_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    if (p + PI).abs() < 1e-12 || (p - PI).abs() < 1e-12 {
        p = PI;
    }
    p
}

/// Unwraps eigenphases so the branch cut falls in the widest gap on the circle.
/// The spread of the result, and hence the traceless log, does not depend on the global phase of U.
fn unwrap_phases(phases: &mut [f64]) {
    let d = phases.len();
    if d < 2 {
        return;
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| phases[a].total_cmp(&phases[b]));
    let wrap_gap = phases[order[0]] + 2.0 * PI - phases[order[d - 1]];
    let (mut best, mut cut) = (wrap_gap, None);
    for k in 0..d - 1 {
        let gap = phases[order[k + 1]] - phases[order[k]];
        if gap > best + 1e-9 {
            best = gap;
            cut = Some(k);
        }
    }
    if let Some(k) = cut {
        for &i in &order[..=k] {
            phases[i] += 2.0 * PI;
        }
    }
}

/// Traceless Hermitian H (MHz) with exp(-i 2π H t) = U up to global phase,
/// built from principal eigenphases.
pub fn log_unitary(u: &Operator, t: f64) -> Result<Operator> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("duration must be positive, got {t}")));
    }
    let (phases, vectors) = unitary_eigen(u, 1e-6)?;
    let values: Vec<f64> = phases.iter().map(|&p| -p / (2.0 * PI * t)).collect();
    Ok(spectral_map(&values, &vectors, |v| C64::new(v, 0.0)).hermitian_part().traceless())
}

/// Like [`log_unitary`] but with the branch of smallest eigenphase spread,
/// so the result does not depend on the global phase of U.
pub fn log_unitary_compact(u: &Operator, t: f64) -> Result<Operator> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("duration must be positive, got {t}")));
    }
    let (mut phases, vectors) = unitary_eigen(u, 1e-6)?;
    unwrap_phases(&mut phases);
    let values: Vec<f64> = phases.iter().map(|&p| -p / (2.0 * PI * t)).collect();
    Ok(spectral_map(&values, &vectors, |v| C64::new(v, 0.0)).hermitian_part().traceless())
}

/// Like [`log_unitary`] but each eigenvalue is moved by a multiple of 1/t to
/// the branch closest to the expectation of `reference` in that eigenvector.
pub fn log_unitary_near(u: &Operator, t: f64, reference: &Operator) -> Result<Operator> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("duration must be positive, got {t}")));
    }
    if reference.dim() != u.dim() {
        return Err(Error::InvalidInput("reference dimension mismatch".into()));
    }
    let (phases, vectors) = unitary_eigen(u, 1e-6)?;
    let reference = reference.traceless();
    let d = u.dim();
    let mut values: Vec<f64> = phases.iter().map(|&p| -p / (2.0 * PI * t)).collect();
    let expected: Vec<f64> = (0..d)
        .map(|k| {
            let v = vectors.column(k);
            (v.adjoint() * &reference.0 * v)[(0, 0)].re
        })
        .collect();
    // The global phase of U shifts every eigenvalue by a common offset; estimate it as the
    // circular mean of the mismatches on the 1/t lattice, then snap each value to its branch.
    let (sin_sum, cos_sum) = values.iter().zip(&expected).fold((0.0, 0.0), |(s, c), (v, e)| {
        let angle = 2.0 * PI * t * (v - e);
        (s + angle.sin(), c + angle.cos())
    });
    let offset = sin_sum.atan2(cos_sum) / (2.0 * PI * t);
    for (v, e) in values.iter_mut().zip(&expected) {
        let m = ((e + offset - *v) * t).round();
        *v += m / t;
    }
    Ok(spectral_map(&values, &vectors, |v| C64::new(v, 0.0)).hermitian_part().traceless())
}

/// Closest unitary in Frobenius norm (polar factor of the SVD).
pub fn closest_unitary(a: &Operator) -> Result<Operator> {
    let svd = a.0.clone().svd(true, true);
    let (Some(w), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Numerical("SVD failed".into()));
    };
    Ok(Operator(w * v_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::pauli::{pauli_decompose, pauli_matrix_str};

    #[test]
    fn quarter_period_x_rotation() {
        let h = pauli_matrix_str("X").unwrap().scale(PI / 2.0);
        let u = propagate(&[(h, 1.0)]).unwrap();
        let expect = pauli_matrix_str("X").unwrap().scale_complex(C64::new(0.0, -1.0));
        assert!((u - expect).max_abs() < 1e-12);
    }

    #[test]
    fn empty_propagation_is_identity() {
        let u = propagate_dim(&[], 4).unwrap();
        assert!((u - Operator::identity(4)).max_abs() < 1e-15);
    }

    #[test]
    fn rejects_non_hermitian_segment() {
        let mut h = Operator::zeros(2);
        h[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(propagate(&[(h, 0.1)]), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn rejects_non_positive_duration() {
        let h = pauli_matrix_str("Z").unwrap();
        assert!(propagate(&[(h, 0.0)]).is_err());
    }

    #[test]
    fn log_of_identity_is_zero() {
        let h = log_unitary(&Operator::identity(4), 0.37).unwrap();
        assert!(h.max_abs() < 1e-12);
    }

    #[test]
    fn log_recovers_zx_rate() {
        let t = 0.1;
        let zx = pauli_matrix_str("ZX").unwrap();
        let u = expm_hermitian(&zx, 2.0 * PI * 0.49 * t).unwrap();
        let h = log_unitary(&u, t).unwrap();
        let c = pauli_decompose(&h, 2).unwrap();
        assert!((c[&"ZX".parse().unwrap()] - 0.49).abs() < 1e-12);
    }

    #[test]
    fn eigenphase_pi_takes_positive_branch() {
        // diag(-1, 1): eigenphase exactly π on |0>.
        let u = Operator::from_real_diagonal(&[-1.0, 1.0]);
        let (phases, vectors) = unitary_eigen(&u, 1e-12).unwrap();
        for (k, p) in phases.iter().enumerate() {
            if vectors[(0, k)].norm() > 0.5 {
                assert_eq!(*p, PI);
            }
        }
        assert_eq!(principal_phase(-PI), PI);
    }

    #[test]
    fn compact_log_ignores_global_phase() {
        let t = 0.05;
        let h = pauli_matrix_str("ZI").unwrap().scale(3.081) + pauli_matrix_str("ZX").unwrap().scale(-0.49);
        let u = expm_hermitian(&h, 2.0 * PI * t).unwrap();
        for alpha in [0.0, 1.0, 2.5, -3.0] {
            let back = log_unitary_compact(&u.scale_complex(C64::from_polar(1.0, alpha)), t).unwrap();
            assert!((back - h.clone()).max_abs() < 1e-10, "alpha {alpha}");
        }
    }

    #[test]
    fn rejects_non_unitary_log() {
        let u = Operator::identity(2).scale(1.1);
        assert!(matches!(log_unitary(&u, 1.0), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn polar_projection_fixes_scaled_unitary() {
        let u = expm_hermitian(&pauli_matrix_str("XY").unwrap(), 0.3).unwrap();
        let w = closest_unitary(&u.scale(0.7)).unwrap();
        assert!((w - u).max_abs() < 1e-12);
    }
}

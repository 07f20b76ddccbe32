use std::f64::consts::PI;

use ffsim::device::{
    build_qubit_hamiltonian, simulate_schedule, DeviceConfig, DriveModel, DriveSegment, Frame, PulseSchedule, SimOptions, TlsSpec,
};
use ffsim::quantum::{expm_hermitian, hermitian_eigen, pauli_matrix, DensityMatrix, Operator, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn ket(amps: &[(f64, f64)]) -> DensityMatrix {
    let v: Vec<C64> = amps.iter().map(|&(r, i)| C64::new(r, i)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    DensityMatrix::from_pure(&v.iter().map(|z| z / norm).collect::<Vec<_>>())
}

fn plus() -> DensityMatrix {
    ket(&[(1.0, 0.0), (1.0, 0.0)])
}

fn concurrence(rho: &DensityMatrix) -> f64 {
    let yy = pauli_matrix(&"YY".parse().unwrap());
    let tilde = yy.conjugate(&rho.0.conjugate());
    let (vals, vecs) = hermitian_eigen(&Operator(rho.0.clone()));
    let sqrt_diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(4, vals.iter().map(|v| C64::new(v.max(0.0).sqrt(), 0.0))));
    let sqrt_rho = &vecs * sqrt_diag * vecs.adjoint();
    let m = &sqrt_rho * tilde * &sqrt_rho;
    let (ev, _) = hermitian_eigen(&Operator(m).hermitian_part());
    let mut l: Vec<f64> = ev.iter().map(|v| v.max(0.0).sqrt()).collect();
    l.sort_by(|a, b| b.total_cmp(a));
    (l[0] - l[1] - l[2] - l[3]).max(0.0)
}

fn pulse_device(n: usize, base: f64, spacing: f64, j: f64) -> DeviceConfig {
    let mut cfg = DeviceConfig::chain(n, base, spacing, j);
    cfg.drive_model = DriveModel::Pulse;
    cfg
}

#[test]
fn concurrence_helper_on_bell_state() {
    let bell = ket(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
    assert!((concurrence(&bell) - 1.0).abs() < 1e-9);
    assert!(concurrence(&plus().kron(&plus())) < 1e-9);
}

#[test]
fn lab_and_rotating_frames_agree() {
    let cfg = pulse_device(1, 100.0, 0.0, 0.0);
    let sched = PulseSchedule::empty().add(0, DriveSegment::constant(0.5, 0, 1.0, 0.3, [1.0, 0.0, 0.0]));
    let times: Vec<f64> = (0..=20).map(|k| 0.025 * k as f64).collect();
    let init = DensityMatrix::basis_state(2, 0);
    let lab = simulate_schedule(&cfg, &sched, &init, &SimOptions::lab(), &times).unwrap();
    let rot_opts = SimOptions { frame: Frame::Rotating, rwa: false, ..SimOptions::default() };
    let rot = simulate_schedule(&cfg, &sched, &init, &rot_opts, &times).unwrap();
    let rwa = simulate_schedule(&cfg, &sched, &init, &SimOptions::default(), &times).unwrap();
    for k in 0..times.len() {
        let (a, b) = (lab[k].populations()[1], rot[k].populations()[1]);
        assert!((a - b).abs() < 0.02, "t={} lab={a} rot={b}", times[k]);
        assert!((b - rwa[k].populations()[1]).abs() < 0.02);
    }
    assert!(rwa[20].populations()[1] > 0.99);
}

#[test]
fn idle_qubits_stay_unentangled() {
    let j = 2.0;
    let cfg = pulse_device(2, 5000.0, 50.0 * j, j);
    let times: Vec<f64> = (1..=10).map(|k| 0.1 / j * k as f64 / 10.0).collect();
    let inits = [plus().kron(&plus()), plus().kron(&DensityMatrix::basis_state(2, 0)), ket(&[(1.0, 0.0), (0.5, 0.3)]).kron(&plus())];
    for opts in [SimOptions::default(), SimOptions { rwa: false, ..SimOptions::default() }] {
        for init in &inits {
            let out = simulate_schedule(&cfg, &PulseSchedule::empty(), init, &opts, &times).unwrap();
            for rho in &out {
                assert!(concurrence(rho) < 0.05);
            }
        }
    }
}

#[test]
fn qubit_model_lab_evolution_matches_static_propagator() {
    let cfg = pulse_device(2, 50.0, 20.0, 1.0);
    let init = plus().kron(&DensityMatrix::basis_state(2, 1));
    let out = simulate_schedule(&cfg, &PulseSchedule::empty(), &init, &SimOptions::lab(), &[0.37]).unwrap();
    let u = expm_hermitian(&build_qubit_hamiltonian(&cfg), 2.0 * PI * 0.37).unwrap();
    assert!((out[0].0.clone() - init.evolve(&u).0).camax() < 1e-9);
}

#[test]
fn decoupled_tls_keeps_qubit_pure() {
    let sched = PulseSchedule::empty().add(0, DriveSegment::constant(0.8, 0, 1.3, 0.2, [0.6, 0.5, 0.2]));
    let times: Vec<f64> = (0..=12).map(|k| 0.1 * k as f64).collect();
    for (chi, p) in [(0.0, 0.4), (0.7, 0.0), (0.7, 1.0)] {
        let mut cfg = DeviceConfig::chain(1, 5000.0, 0.0, 0.0);
        cfg.tls.push(TlsSpec { qubit: 0, chi, p_excited: p, lifetime: None });
        let out = simulate_schedule(&cfg, &sched, &plus(), &SimOptions::default(), &times).unwrap();
        for rho in &out {
            assert!((rho.purity() - 1.0).abs() < 1e-9, "chi={chi} p={p}");
        }
    }
}

#[test]
fn mixed_tls_dephases_qubit() {
    let mut cfg = DeviceConfig::chain(1, 5000.0, 0.0, 0.0);
    cfg.tls.push(TlsSpec { qubit: 0, chi: 0.03, p_excited: 0.5, lifetime: None });
    let out = simulate_schedule(&cfg, &PulseSchedule::empty(), &plus(), &SimOptions::default(), &[1.0 / (4.0 * 0.03), 1.0 / (2.0 * 0.03)]).unwrap();
    assert!((out[0].purity() - 0.5).abs() < 1e-9);
    assert!((out[1].purity() - 1.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trace_is_preserved(
        amp in 0.0f64..20.0,
        phase in -PI..PI,
        hz in -1.0f64..1.0,
        t1 in 5.0f64..100.0,
        t2_frac in 0.1f64..2.0,
        chi in -0.5f64..0.5,
        p in 0.0f64..1.0,
        noisy in any::<bool>(),
    ) {
        let mut cfg = DeviceConfig::chain(2, 5000.0, 100.0, 2.0);
        if noisy {
            cfg.qubits[0].t1 = Some(t1);
            cfg.qubits[0].t2 = Some(t1 * t2_frac);
            cfg.qubits[1].t2 = Some(t1);
            cfg.tls.push(TlsSpec { qubit: 1, chi, p_excited: p, lifetime: Some(t1) });
        }
        let sched = PulseSchedule::empty()
            .add(0, DriveSegment::constant(0.3, 1, amp, phase, [1.0, 0.0, 0.0]))
            .add(1, DriveSegment::constant(0.3, 1, amp / 10.0, 0.0, [0.0, 0.8, hz * 0.5]));
        let init = plus().kron(&DensityMatrix::basis_state(2, 1));
        let out = simulate_schedule(&cfg, &sched, &init, &SimOptions::default(), &[0.1, 0.3, 0.6]).unwrap();
        for rho in &out {
            prop_assert!((rho.trace() - 1.0).abs() < 1e-8);
            prop_assert!(rho.purity() <= 1.0 + 1e-9);
        }
    }
}

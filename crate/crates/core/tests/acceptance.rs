//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ffsim::calibration::{fit_single_qubit, synthesize_cancellation, synthetic_single_qubit, CompensationFlag};
use ffsim::device::{
    product_state, AwgModel, CrRules, DeviceConfig, Job, MeasurementProvider, PulseSchedule, Session, SimulatedDevice, TlsDrift, TlsSpec,
    REFERENCE_RATES,
};
use ffsim::hamiltonian_tomography::{cr_hamiltonian_tomography, cr_hamiltonian_tomography_with, CR_LABELS};
use ffsim::process_tomography::{
    additivity_suite, cr_segment, dominant_unitary, effective_rates, expected_three_qubit_labels, qpt_rate_series, run_qpt, three_qubit_qpt,
    AdditivityOptions, QptSeriesOptions,
};
use ffsim::quantum::{
    exact_record, expm_hermitian, hermitian_eigen, log_unitary, pauli_sum, propagate, sample_counts, DensityMatrix, MeasurementRecord, Operator,
    PauliLabel, C64,
};
use ffsim::tls_analysis::{detect_revivals, ensemble_statistics, fit_two_cosine, purity_scan, run_delay_scan, DelayScanOptions, DEFAULT_PROMINENCE};
use ffsim::RateTable;
use nalgebra::DMatrix;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn grid(dt: f64, span: f64) -> Vec<f64> {
    (0..=(span / dt).round() as usize).map(|k| k as f64 * dt).collect()
}

fn within(measured: f64, truth: f64) -> bool {
    (measured - truth).abs() <= 0.02f64.max(0.03 * truth.abs())
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool").install(f)
}

fn reference_device(n: usize, flip: f64) -> SimulatedDevice {
    let mut cfg = DeviceConfig::chain(n, 5000.0, 100.0, 2.0);
    for q in &mut cfg.qubits {
        q.readout_flip = flip;
    }
    SimulatedDevice::new(cfg).expect("valid device")
}

/// Exact expectations of product preps evolved under a fixed two-qubit generator.
struct GeneratorOracle {
    h: Operator,
}

impl MeasurementProvider for GeneratorOracle {
    fn num_qubits(&self) -> usize {
        2
    }

    fn run_session(&self, session: &Session) -> ffsim::Result<Vec<Vec<MeasurementRecord>>> {
        session
            .jobs
            .iter()
            .map(|job: &Job| {
                let u = expm_hermitian(&self.h, 2.0 * PI * job.schedule.duration())?;
                let rho = product_state(&job.prep).evolve(&u);
                let rho = if job.measured.len() == 2 { rho } else { rho.partial_trace(&job.measured)? };
                job.bases.iter().map(|b| exact_record(&rho, b, &vec![0.0; job.measured.len()])).collect()
            })
            .collect()
    }
}

fn reference_round_trip() -> Result<String, String> {
    let dev = reference_device(2, 0.0);
    let out = single_threaded(|| cr_hamiltonian_tomography(&dev, 0, 1, 36.0, 0.0, &grid(0.04, 8.0), Some(4096), 1)).map_err(|e| e.to_string())?;
    let mut worst = (String::new(), 0.0f64);
    for (label, truth) in REFERENCE_RATES {
        let v = out.rates.get(label);
        ensure!(within(v, truth), "{label}: {v:.4} vs {truth}");
        let slack = (v - truth).abs() / 0.02f64.max(0.03 * truth.abs());
        if slack > worst.1 {
            worst = (label.to_string(), slack);
        }
    }
    Ok(format!("worst {} at {:.0}% of tolerance", worst.0, 100.0 * worst.1))
}

fn qpt_exactness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = 0.05;
    let mut worst = 0.0f64;
    let mut min_lambda = 1.0f64;
    for _ in 0..5 {
        let pairs: Vec<(&str, f64)> =
            CR_LABELS.iter().map(|&l| (l, if l == "ZI" { rng.random_range(-3.5..3.5) } else { rng.random_range(-0.8..0.8) })).collect();
        let truth = RateTable::from_pairs(pairs).map_err(|e| e.to_string())?;
        let oracle = GeneratorOracle { h: pauli_sum(truth.rates.iter(), 2) };
        let chi = run_qpt(&oracle, &[0, 1], &PulseSchedule::idle(t), None, 0).map_err(|e| e.to_string())?;
        min_lambda = min_lambda.min(chi.lambda0);
        ensure!(chi.lambda0 >= 1.0 - 1e-8, "lambda0 {}", chi.lambda0);
        let dom = dominant_unitary(&chi).map_err(|e| e.to_string())?;
        let rates = effective_rates(&dom.unitary, t).map_err(|e| e.to_string())?;
        let diff = rates.max_abs_difference(&truth);
        worst = worst.max(diff);
        ensure!(diff <= 1e-6, "rates off by {diff:e} MHz");
    }
    Ok(format!("5 unitaries, min lambda0 1 - {:.1e}, max rate error {worst:.1e} MHz", 1.0 - min_lambda))
}

fn branch_resolution() -> Result<String, String> {
    let dev = reference_device(2, 0.0);
    let durations: Vec<f64> = (1..=8).map(|k| 0.05 * k as f64).collect();
    let wraps = 2.0 * PI * 3.081 * durations[7] > PI;
    ensure!(wraps, "durations too short to wrap");
    let opts = QptSeriesOptions { durations, shots: Some(4096), seed: 3, branch: Default::default() };
    let series =
        qpt_rate_series(&dev, &[0, 1], |t| PulseSchedule::empty().add(0, cr_segment(t, 1, 36.0, 0.0)), &opts).map_err(|e| e.to_string())?;
    let res = &series.resolution;
    let mut worst_sd = 0.0f64;
    for (l, b) in &res.labels {
        ensure!(b.std_dev < 0.05, "{l}: std dev {:.4}", b.std_dev);
        worst_sd = worst_sd.max(b.std_dev);
    }
    for (label, truth) in REFERENCE_RATES {
        let v = res.rates.get(label);
        ensure!((v - truth).abs() < 0.05, "{label}: {v:.4} vs {truth}");
    }
    Ok(format!("max per-label std dev {worst_sd:.4} MHz, ZI {:.4}", res.rates.get("ZI")))
}

fn additivity() -> Result<String, String> {
    let dev = reference_device(3, 0.01);
    let opts = AdditivityOptions::new(vec![0.05, 0.1, 0.2, 0.3, 0.4], Some(4096), 11);
    let report = additivity_suite(&dev, 0, 1, 2, 36.0, &opts).map_err(|e| e.to_string())?;
    ensure!(!report.deviations.is_empty(), "no deviations computed");
    let mut iy = 0.0;
    let mut worst = (String::new(), 0.0f64);
    for (l, d) in &report.deviations {
        if l.to_string() == "IY" {
            iy = d.absolute;
            ensure!(d.absolute <= 0.1, "IY deviation {:.4}", d.absolute);
        } else {
            ensure!(d.absolute <= 0.05 || d.relative <= 0.015, "{l}: {:.4} MHz ({:.1}%)", d.absolute, 100.0 * d.relative);
            if d.absolute > worst.1 {
                worst = (l.to_string(), d.absolute);
            }
        }
    }
    Ok(format!("largest deviation {} {:.4} MHz, IY {iy:.4} MHz", worst.0, worst.1))
}

fn expected_labels() -> Result<String, String> {
    let mut cfg = DeviceConfig::chain(3, 5000.0, 100.0, 2.0);
    cfg.cr_rules = CrRules::ideal(2.0, 36.0);
    let opts = AdditivityOptions::new(vec![0.05, 0.1, 0.15], None, 1);
    let clean = three_qubit_qpt(&SimulatedDevice::new(cfg.clone()).unwrap(), 0, 1, 2, 36.0, &opts).map_err(|e| e.to_string())?;
    let mut flagged = clean.rates.significant(opts.display_threshold);
    flagged.sort();
    let mut expected = expected_three_qubit_labels();
    expected.sort();
    ensure!(flagged == expected, "flagged {flagged:?}");
    ensure!(clean.max_spurious.1 < 1e-6, "spurious {:?}", clean.max_spurious);

    for q in &mut cfg.qubits {
        q.readout_flip = 0.01;
    }
    let noisy_dev = SimulatedDevice::new(cfg).unwrap();
    let mut ratios = Vec::new();
    for seed in 0..3 {
        let opts = AdditivityOptions::new(vec![0.05, 0.1, 0.15], Some(1024), 40 + seed);
        ratios.push(three_qubit_qpt(&noisy_dev, 0, 1, 2, 36.0, &opts).map_err(|e| e.to_string())?.ratio);
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    ensure!(max > 0.2, "noisy spurious/expected ratio at most {max:.3} over 3 seeds (noiseless part passed)");
    Ok(format!("noiseless spurious {:.1e} MHz, noisy ratio up to {max:.2}", clean.max_spurious.1))
}

fn low_amplitude_fits() -> Result<String, String> {
    let times = grid(0.1, 64.0);
    let mut out = Vec::new();
    for (k, (rabi, phase, det)) in [(1.44, -0.04 * PI, 0.05), (0.16, 0.65 * PI, 0.07)].into_iter().enumerate() {
        let h = [rabi * phase.cos(), rabi * phase.sin(), det];
        let data = synthetic_single_qubit(h, 31.69, &times, Some(1024), 40 + k as u64).map_err(|e| e.to_string())?;
        let fit = fit_single_qubit(&data, 0.0).map_err(|e| e.to_string())?;
        ensure!((fit.rabi - rabi).abs() < 0.1 * rabi, "rabi {:.4} vs {rabi}", fit.rabi);
        ensure!((fit.phase_error - phase).abs() < 0.05 * PI, "phase {:.4}π vs {:.4}π", fit.phase_error / PI, phase / PI);
        ensure!((fit.detuning - det).abs() < 0.1 * det, "detuning {:.4} vs {det}", fit.detuning);
        ensure!((fit.t2 - 31.69).abs() < 0.1 * 31.69, "T2 {:.2}", fit.t2);
        out.push(format!("rabi {:.3} T2 {:.1}", fit.rabi, fit.t2));
    }
    Ok(out.join(", "))
}

fn sample(v: f64, shots: u64, rng: &mut ChaCha8Rng) -> f64 {
    let k = Binomial::new(shots, ((1.0 + v) / 2.0).clamp(0.0, 1.0)).unwrap().sample(rng);
    2.0 * k as f64 / shots as f64 - 1.0
}

fn two_cosine_fit() -> Result<String, String> {
    let times = grid(0.5, 60.0);
    let mut worst_f = 0.0f64;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = times
            .iter()
            .map(|t| sample((0.48 * (2.0 * PI * 0.18 * t).cos() + 0.51 * (2.0 * PI * 0.24 * t).cos()) * (-t / 20.2).exp(), 1024, &mut rng))
            .collect();
        let fit = fit_two_cosine(&times, &values).map_err(|e| e.to_string())?;
        let df = (fit.f0 - 0.18).abs().max((fit.f1 - 0.24).abs());
        worst_f = worst_f.max(df);
        ensure!(df < 0.01, "seed {seed}: f0 {:.4} f1 {:.4}", fit.f0, fit.f1);
        ensure!((fit.t2_star - 20.2).abs() < 2.02, "seed {seed}: T2* {:.2}", fit.t2_star);
        ensure!((fit.c0 - 0.48).abs() < 0.1 && (fit.c1 - 0.51).abs() < 0.1, "seed {seed}: c0 {:.3} c1 {:.3}", fit.c0, fit.c1);
    }
    Ok(format!("5 seeds, max frequency error {worst_f:.4} MHz"))
}

fn tls_device(t2: f64, tls: &[(f64, f64)]) -> SimulatedDevice {
    let mut cfg = DeviceConfig::chain(1, 5000.0, 0.0, 0.0);
    cfg.qubits[0].frequency_offset = 0.21;
    cfg.qubits[0].t2 = Some(t2);
    cfg.tls = tls.iter().map(|&(chi, p)| TlsSpec { qubit: 0, chi, p_excited: p, lifetime: None }).collect();
    SimulatedDevice::new(cfg).unwrap()
}

fn purity_revival() -> Result<String, String> {
    let delays = grid(0.25, 45.0);
    let purity = |dev: &SimulatedDevice| -> Result<Vec<f64>, String> {
        Ok(purity_scan(dev, 0, &delays, Some(4096), 3).map_err(|e| e.to_string())?.iter().map(|p| p.purity).collect())
    };
    let revivals = detect_revivals(&delays, &purity(&tls_device(40.0, &[(0.03, 0.5)]))?, DEFAULT_PROMINENCE).map_err(|e| e.to_string())?;
    let period = 1.0 / 0.06;
    ensure!(!revivals.is_empty(), "no revival");
    ensure!((revivals[0].time / period - 1.0).abs() < 0.15, "first revival at {:.2} µs", revivals[0].time);
    let second = revivals.iter().skip(1).find(|r| (r.time / period - 2.0).abs() < 0.15).ok_or("no second revival near 2/Δf")?;
    ensure!(second.prominence < revivals[0].prominence, "second revival not lower");
    let control = detect_revivals(&delays, &purity(&tls_device(20.0, &[]))?, DEFAULT_PROMINENCE).map_err(|e| e.to_string())?;
    ensure!(control.is_empty(), "classical dephasing shows {} revivals", control.len());
    Ok(format!("revivals at {:.2} and {:.2} µs (1/Δf = {period:.2})", revivals[0].time, second.time))
}

fn cancellation_loop() -> Result<String, String> {
    let run = |step: f64| -> Result<_, String> {
        let awg = AwgModel { amplitude_step: step, ..Default::default() };
        let mut cfg = DeviceConfig::chain(2, 5000.0, 100.0, 2.0);
        cfg.awg = awg.clone();
        let dev = SimulatedDevice::new(cfg).unwrap();
        let times = grid(0.04, 8.0);
        let before = cr_hamiltonian_tomography(&dev, 0, 1, 36.0, 0.0, &times, Some(4096), 31).map_err(|e| e.to_string())?.rates;
        let target = RateTable::from_pairs([("ZX", before.get("ZX"))]).unwrap();
        let cancel = synthesize_cancellation(&before, &target, &awg, 36.0).map_err(|e| e.to_string())?;
        let schedule = |t: f64| cancel.schedule(&[0, 1], 36.0, 0.0, t);
        let after = cr_hamiltonian_tomography_with(&dev, 0, 1, &schedule, &times, Some(4096), 32).map_err(|e| e.to_string())?.rates;
        Ok((before, after, cancel))
    };
    let (before, after, _) = run(0.0)?;
    let mut worst = 0.0f64;
    for l in ["IX", "IY", "IZ", "ZI"] {
        ensure!(after.get(l).abs() < 0.02, "step 0: residual {l} {:.4}", after.get(l));
        worst = worst.max(after.get(l).abs());
    }
    let shift = (after.get("ZX") - before.get("ZX")).abs() / before.get("ZX").abs();
    ensure!(shift < 0.02, "ZX shift {:.1}%", 100.0 * shift);
    let (_, coarse, cancel) = run(0.09)?;
    let flagged = cancel.tones.iter().any(|t| t.flags.iter().any(|f| matches!(f, CompensationFlag::Quantized { .. } | CompensationFlag::BelowFloor { .. })));
    ensure!(flagged, "IX compensation not flagged at step 0.09");
    ensure!(coarse.get("IX").abs() <= 0.045, "step 0.09: |IX| {:.4}", coarse.get("IX"));
    Ok(format!("max residual {worst:.4} MHz, ZX shift {:.2}%, coarse |IX| {:.4}", 100.0 * shift, coarse.get("IX").abs()))
}

fn hermitian(entries: &[(f64, f64)], dim: usize) -> Operator {
    let a = DMatrix::from_fn(dim, dim, |i, j| C64::new(entries[i * dim + j].0, entries[i * dim + j].1));
    Operator::from_matrix((&a + a.adjoint()) * C64::new(0.5, 0.0)).unwrap()
}

fn max_diff(a: &Operator, b: &Operator) -> f64 {
    (a.matrix() - b.matrix()).iter().fold(0.0, |m, v| m.max(v.norm()))
}

/// Draws `cases` values from `strategy` and applies `check` to each.
fn for_cases<S: Strategy>(strategy: S, cases: u32, check: impl Fn(S::Value) -> Result<(), String>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, ..Config::default() });
    for _ in 0..cases {
        let value = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        check(value)?;
    }
    Ok(())
}

fn property_suites() -> Result<String, String> {
    let entries = || proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 16);

    for_cases((entries(), -10.0f64..10.0), 200, |(e, theta)| {
        let u = expm_hermitian(&hermitian(&e, 4), theta).map_err(|e| e.to_string())?;
        ensure!(u.unitary_deviation() < 1e-10, "unitarity {:e}", u.unitary_deviation());
        Ok(())
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let segments: Vec<(Operator, f64)> = (0..10_000)
        .map(|_| {
            let e: Vec<(f64, f64)> = (0..16).map(|_| (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))).collect();
            (hermitian(&e, 4), rng.random_range(0.001..0.01))
        })
        .collect();
    let long = propagate(&segments).map_err(|e| e.to_string())?;
    ensure!(long.unitary_deviation() < 1e-9, "10⁴-segment product deviates by {:e}", long.unitary_deviation());

    for_cases((entries(), 0.01f64..0.2), 200, |(e, t)| {
        let h = hermitian(&e, 4);
        let (vals, _) = hermitian_eigen(&h);
        if vals.iter().any(|v| (2.0 * PI * v * t).abs() >= PI - 1e-6) {
            return Ok(());
        }
        let u = propagate(&[(h.scale(2.0 * PI), t)]).map_err(|e| e.to_string())?;
        let back = log_unitary(&u, t).map_err(|e| e.to_string())?;
        ensure!(max_diff(&back, &h.traceless()) < 1e-9, "log/exp mismatch {:e}", max_diff(&back, &h.traceless()));
        Ok(())
    })?;

    // Born convergence: the largest frequency error shrinks like 1/√N
    let psi = [C64::new(0.6, 0.0), C64::new(0.0, 0.48), C64::new(0.36, 0.0), C64::new(0.0, -0.528)];
    let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let rho = DensityMatrix::from_pure(&psi.map(|a| a / norm));
    let basis: PauliLabel = "XY".parse().unwrap();
    let exact = exact_record(&rho, &basis, &[0.0, 0.0]).map_err(|e| e.to_string())?;
    for shots in [100u64, 10_000, 1_000_000] {
        let mut rng = ChaCha8Rng::seed_from_u64(shots);
        let r = sample_counts(&rho, &basis, shots, &[0.0, 0.0], &mut rng).map_err(|e| e.to_string())?;
        for (f, p) in r.frequencies.iter().zip(&exact.frequencies) {
            let sigma = (p * (1.0 - p) / shots as f64).sqrt();
            ensure!((f - p).abs() <= 4.0 * sigma + 1e-12, "{shots} shots: frequency {f} vs {p}");
        }
    }

    // shot noise of a ⟨X⟩ estimate
    let plus = DensityMatrix::from_pure(&[C64::new(0.8, 0.0), C64::new(0.6, 0.0)]);
    let x: PauliLabel = "X".parse().unwrap();
    let truth = 0.96;
    let spread = |shots: u64| -> Result<f64, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(shots);
        let est: Vec<f64> = (0..400)
            .map(|_| sample_counts(&plus, &x, shots, &[0.0], &mut rng).and_then(|r| r.expectation(&x)).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        Ok((est.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / est.len() as f64).sqrt())
    };
    let (s256, s4096) = (spread(256)?, spread(4096)?);
    let predicted = |n: f64| ((1.0 - truth * truth) / n).sqrt();
    ensure!((s256 / predicted(256.0) - 1.0).abs() < 0.15, "256 shots: spread {s256:.4} vs {:.4}", predicted(256.0));
    ensure!((s4096 / predicted(4096.0) - 1.0).abs() < 0.15, "4096 shots: spread {s4096:.4} vs {:.4}", predicted(4096.0));
    ensure!((s256 / s4096 / 4.0 - 1.0).abs() < 0.2, "spread ratio {:.2}, expected 4", s256 / s4096);

    // determinism across worker counts
    let ht = |threads: usize| -> Result<String, String> {
        let dev = reference_device(2, 0.01);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let out = pool.install(|| cr_hamiltonian_tomography(&dev, 0, 1, 36.0, 0.0, &grid(0.05, 6.0), Some(1024), 77)).map_err(|e| e.to_string())?;
        serde_json::to_string(&out).map_err(|e| e.to_string())
    };
    ensure!(ht(1)? == ht(4)?, "tomography differs between 1 and 4 workers");
    let ensemble = |threads: usize| -> Result<String, String> {
        let mut cfg = DeviceConfig::chain(1, 5000.0, 0.0, 0.0);
        cfg.qubits[0].frequency_offset = 0.21;
        cfg.qubits[0].t2 = Some(40.0);
        cfg.tls_drift = Some(TlsDrift { qubit: 0, count_min: 1, count_max: 2, chi_min: 0.01, chi_max: 0.06, p_min: 0.1, p_max: 0.9 });
        let mut dev = SimulatedDevice::new(cfg).unwrap();
        let opts = DelayScanOptions { repetitions: 6, seed: 5, ..Default::default() };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let data = run_delay_scan(&mut dev, 0, "X", &grid(0.5, 60.0), &opts).map_err(|e| e.to_string())?;
            serde_json::to_string(&ensemble_statistics(&data, true).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
        })
    };
    ensure!(ensemble(1)? == ensemble(3)?, "ensemble differs between 1 and 3 workers");
    Ok(format!("unitarity, log/exp, Born convergence, 1/√N (spread ratio {:.2}), determinism", s256 / s4096))
}

fn main() {
    let criteria: [(u32, &str, Check, Option<u64>); 10] = [
        (1, "reference rate round trip at 4096 shots", reference_round_trip, Some(120)),
        (2, "QPT exactness", qpt_exactness, Some(30)),
        (3, "branch resolution over 0.05-0.4 µs", branch_resolution, None),
        (4, "additivity with readout noise", additivity, Some(600)),
        (5, "three-qubit expected labels", expected_labels, None),
        (6, "low-amplitude fits", low_amplitude_fits, Some(60)),
        (7, "two-cosine fit", two_cosine_fit, None),
        (8, "purity revival", purity_revival, None),
        (9, "cancellation closed loop", cancellation_loop, None),
        (10, "property suites", property_suites, Some(300)),
    ];
    let mut failed = 0;
    for (n, name, check, limit) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if elapsed > Duration::from_secs(l) => Err(format!("took {:.1} s, limit {l} s", elapsed.as_secs_f64())),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("criterion {n:>2}: PASS  {name}: {detail} [{:.1} s]", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2}: FAIL  {name}: {why} [{:.1} s]", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

use std::fmt::Write as _;

use ffsim::calibration::{calibrate_phase, fit_single_qubit, low_amplitude_tomography, ErrorReport, PhaseCalibration, PhaseScanOptions, SingleQubitFit};
use ffsim::device::{product_state, simulate_schedule, Prep, PulseSchedule, SimulatedDevice};
use ffsim::hamiltonian_tomography::{cr_hamiltonian_tomography, CrTomography, RabiSeries, CR_LABELS};
use ffsim::process_tomography::{additivity_suite, cr_segment, rates_vs_duration_tsv, AdditivityOptions, AdditivityReport, QptSeries, QptSeriesOptions};
use ffsim::quantum::pauli_matrix;
use ffsim::tls_analysis::{
    detect_revivals, ensemble_statistics, fit_two_cosine, purity_scan, revival_threshold, run_delay_scan, DelayDataset, DelayScanOptions, EnsembleSummary, PurityPoint,
    Revival, TwoCosineFit,
};
use ffsim::RateTable;
use serde::{Deserialize, Serialize};

use crate::config::{shots, Experiment, ExperimentConfig};

/// Single-qubit Pauli expectations of every qubit at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochSample {
    pub time: f64,
    pub bloch: Vec<[f64; 3]>,
    pub purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QptResult {
    pub series: QptSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResult {
    pub samples: Vec<BlochSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowAmpResult {
    pub series: Vec<RabiSeries>,
    pub fit: SingleQubitFit,
    pub report: ErrorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayScanResult {
    pub data: DelayDataset,
    /// Fit of each repetition, in order.
    pub fits: Vec<Option<TwoCosineFit>>,
    pub ensemble: Option<EnsembleSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityResult {
    pub points: Vec<PurityPoint>,
    pub revivals: Vec<Revival>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Results {
    Simulate(SimulateResult),
    Qpt(QptResult),
    Additivity(AdditivityReport),
    HamTomog(CrTomography),
    CalibratePhase(PhaseCalibration),
    LowAmp(LowAmpResult),
    DelayScan(DelayScanResult),
    PurityScan(PurityResult),
}

/// Results plus the plot-data tables (file name, contents) and quality warnings.
pub struct Outcome {
    pub results: Results,
    pub tables: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome, String> {
    let mut warnings = cfg.device.validate().map_err(|e| e.to_string())?;
    let mut device = SimulatedDevice::new(cfg.device.clone()).map_err(|e| e.to_string())?;
    let seed = cfg.seed();
    let mut tables = Vec::new();
    let results = match cfg.experiment {
        Experiment::Simulate => {
            let p = cfg.simulate();
            let n = cfg.device.num_qubits();
            let prep = if p.prep.is_empty() { vec![Prep::Zero; n] } else { p.prep.clone() };
            if prep.len() != n {
                return Err(format!("prep lists {} qubits, device has {n}", prep.len()));
            }
            let times = p.times.points()?;
            let states = simulate_schedule(&cfg.device, &p.schedule, &product_state(&prep), &p.options, &times).map_err(|e| e.to_string())?;
            let paulis = ["X", "Y", "Z"].map(|b| pauli_matrix(&b.parse().expect("valid label")));
            let mut samples = Vec::new();
            for (&time, rho) in times.iter().zip(&states) {
                let mut bloch = Vec::new();
                for q in 0..n {
                    let r = rho.partial_trace(&[q]).map_err(|e| e.to_string())?;
                    let mut v = [0.0; 3];
                    for (k, op) in paulis.iter().enumerate() {
                        v[k] = r.expectation(op).map_err(|e| e.to_string())?;
                    }
                    bloch.push(v);
                }
                samples.push(BlochSample { time, bloch, purity: rho.purity() });
            }
            tables.push(("bloch.tsv".into(), bloch_tsv(&samples)));
            Results::Simulate(SimulateResult { samples })
        }
        Experiment::Qpt => {
            let p = cfg.qpt();
            let opts = QptSeriesOptions { durations: p.durations.points()?, shots: shots(p.shots), seed, branch: p.branch };
            let schedule = |t: f64| {
                if p.drives.is_empty() {
                    return PulseSchedule::idle(t);
                }
                p.drives.iter().fold(PulseSchedule::empty(), |s, d| s.add(d.control, cr_segment(t, d.target, d.omega, d.phase)))
            };
            let series = ffsim::process_tomography::qpt_rate_series(&device, &p.qubits, schedule, &opts).map_err(|e| e.to_string())?;
            warnings.extend(series.resolution.rates.warnings.iter().cloned());
            for (l, b) in &series.resolution.labels {
                if b.ambiguous {
                    warnings.push(format!("{l}: branch ambiguous (std dev {:.4} MHz)", b.std_dev));
                }
            }
            tables.push(("rates_vs_duration.tsv".into(), rates_vs_duration_tsv(&series)));
            tables.push(("rates.tsv".into(), rates_tsv(&series.resolution.rates, None)));
            Results::Qpt(QptResult { series })
        }
        Experiment::Additivity => {
            let p = cfg.additivity();
            let mut opts = AdditivityOptions::new(p.durations.points()?, shots(p.shots), seed);
            opts.phase = p.phase;
            opts.display_threshold = p.display_threshold;
            let [q1, q2, q3] = p.qubits;
            let report = additivity_suite(&device, q1, q2, q3, p.omega, &opts).map_err(|e| e.to_string())?;
            for proto in &report.protocols {
                if let Some(e) = &proto.error {
                    warnings.push(format!("protocol {}: {e}", proto.name));
                }
                if let Some(r) = &proto.rates {
                    warnings.extend(r.warnings.iter().map(|w| format!("protocol {}: {w}", proto.name)));
                }
            }
            tables.push(("additivity.tsv".into(), report.to_tsv()));
            Results::Additivity(report)
        }
        Experiment::HamTomog => {
            let p = cfg.ham_tomog();
            let times = p.times.points()?;
            let tomo = cr_hamiltonian_tomography(&device, p.control, p.target, p.omega, p.phase, &times, shots(p.shots), seed).map_err(|e| e.to_string())?;
            warnings.extend(tomo.rates.warnings.iter().cloned());
            tables.push(("rates.tsv".into(), rates_tsv(&tomo.rates, Some(&CR_LABELS))));
            tables.push(("oscillations.tsv".into(), series_tsv(tomo.series.iter().chain(&tomo.stark.series))));
            Results::HamTomog(tomo)
        }
        Experiment::CalibratePhase => {
            let p = cfg.calibrate_phase();
            let opts = PhaseScanOptions { times: p.times.points()?, shots: shots(p.shots), seed, grid: p.grid, max_calls: p.max_calls };
            let cal = calibrate_phase(&device, p.control, p.target, p.omega, p.tolerance, &opts).map_err(|e| e.to_string())?;
            if !cal.converged {
                warnings.push(format!("phase search stopped after {} calls with |c_ZY| = {:.4} MHz", cal.calls(), cal.c_zy.abs()));
            }
            let mut tsv = String::from("call\tphase\tc_zy\n");
            for (k, (phase, c)) in cal.history.iter().enumerate() {
                let _ = writeln!(tsv, "{k}\t{phase:.6}\t{c:.6}");
            }
            tables.push(("phase_scan.tsv".into(), tsv));
            Results::CalibratePhase(cal)
        }
        Experiment::LowAmp => {
            let p = cfg.low_amp.clone().expect("checked at load");
            let times = p.times.points()?;
            let series = low_amplitude_tomography(&device, p.qubit, p.amplitude, p.phase, &times, shots(p.shots), seed).map_err(|e| e.to_string())?;
            let fit = fit_single_qubit(&series, p.phase).map_err(|e| e.to_string())?;
            warnings.extend(fit.flags.iter().cloned());
            let report = ErrorReport::new(p.amplitude, p.phase, 0.0, &fit);
            tables.push(("traces.tsv".into(), series_tsv(series.iter())));
            Results::LowAmp(LowAmpResult { series: series.to_vec(), fit, report })
        }
        Experiment::DelayScan => {
            let p = cfg.delay_scan();
            let opts = DelayScanOptions { prep: p.prep, shots: shots(p.shots), repetitions: p.repetitions, interval: p.interval, seed };
            let data = run_delay_scan(&mut device, p.qubit, &p.basis, &p.delays.points()?, &opts).map_err(|e| e.to_string())?;
            if let Some(f) = &data.failure {
                warnings.push(format!("scan stopped early: {f}"));
            }
            let mut fits = Vec::new();
            let mut ensemble = None;
            if data.repetitions() >= 2 {
                let summary = ensemble_statistics(&data, p.fit).map_err(|e| e.to_string())?;
                if summary.drift.as_ref().is_some_and(|d| d.unstable) {
                    warnings.push("dominant frequency drifts beyond the scan resolution".into());
                }
                fits = summary.fits.clone();
                tables.push(("ensemble.tsv".into(), summary.to_tsv()));
                ensemble = Some(summary);
            } else if p.fit {
                fits.push(fit_two_cosine(&data.delays, &data.values[0]).ok());
            }
            for (r, f) in fits.iter().enumerate() {
                match f {
                    Some(f) => warnings.extend(f.flags.iter().map(|w| format!("repetition {r}: {w}"))),
                    None => warnings.push(format!("repetition {r}: fit failed")),
                }
            }
            tables.push(("delay.tsv".into(), data.to_tsv()));
            if !fits.is_empty() {
                tables.push(("delay_fit.tsv".into(), fit_curves_tsv(&data, &fits)));
            }
            Results::DelayScan(DelayScanResult { data, fits, ensemble })
        }
        Experiment::PurityScan => {
            let p = cfg.purity_scan();
            let delays = p.delays.points()?;
            let points = purity_scan(&device, p.qubit, &delays, shots(p.shots), seed).map_err(|e| e.to_string())?;
            let purity: Vec<f64> = points.iter().map(|pt| pt.purity).collect();
            let revivals = detect_revivals(&delays, &purity, p.min_prominence.unwrap_or_else(|| revival_threshold(shots(p.shots)))).map_err(|e| e.to_string())?;
            let mut tsv = String::from("delay\tx\ty\tz\tpurity\n");
            for pt in &points {
                let _ = writeln!(tsv, "{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}", pt.delay, pt.bloch[0], pt.bloch[1], pt.bloch[2], pt.purity);
            }
            tables.push(("purity.tsv".into(), tsv));
            Results::PurityScan(PurityResult { points, revivals })
        }
    };
    Ok(Outcome { results, tables, warnings })
}

/// `label rate` rows, in `order` first when given.
pub fn rates_tsv(rates: &RateTable, order: Option<&[&str]>) -> String {
    let mut out = String::from("label\trate_mhz\n");
    match order {
        Some(labels) => {
            for l in labels {
                let _ = writeln!(out, "{l}\t{:.6}", rates.get(l));
            }
        }
        None => {
            for (l, v) in &rates.rates {
                let _ = writeln!(out, "{l}\t{v:.6}");
            }
        }
    }
    out
}

fn series_tsv<'a>(series: impl Iterator<Item = &'a RabiSeries>) -> String {
    let mut out = String::from("prep\tbasis\tqubit\ttime\tvalue\n");
    for s in series {
        for (t, v) in s.times.iter().zip(&s.values) {
            let _ = writeln!(out, "{}\t{}\t{}\t{t:.6}\t{v:.6}", s.prep, s.basis, s.measured_qubit);
        }
    }
    out
}

fn bloch_tsv(samples: &[BlochSample]) -> String {
    let mut out = String::from("time\tqubit\tx\ty\tz\tpurity\n");
    for s in samples {
        for (q, b) in s.bloch.iter().enumerate() {
            let _ = writeln!(out, "{:.6}\t{q}\t{:.6}\t{:.6}\t{:.6}\t{:.6}", s.time, b[0], b[1], b[2], s.purity);
        }
    }
    out
}

fn fit_curves_tsv(data: &DelayDataset, fits: &[Option<TwoCosineFit>]) -> String {
    let mut out = String::from("repetition\tdelay\tmeasured\tfit\n");
    for (r, (row, fit)) in data.values.iter().zip(fits).enumerate() {
        let Some(fit) = fit else { continue };
        for (d, v) in data.delays.iter().zip(row) {
            let _ = writeln!(out, "{r}\t{d:.6}\t{v:.6}\t{:.6}", fit.eval(*d));
        }
    }
    out
}

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::branch::{effective_rates_compact, effective_rates_near, resolve_branch, BranchOptions, BranchResolution};
use super::chi::{dominant_unitary, run_qpt};
use crate::device::{derive_seed, DriveSegment, MeasurementProvider, PulseSchedule};
use crate::error::{invalid, Result};
use crate::quantum::{Operator, PauliLabel};
use crate::rates::RateTable;

/// Per-duration outcome of a QPT series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QptPoint {
    pub duration: f64,
    pub lambda0: f64,
    pub rates: RateTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QptSeries {
    pub points: Vec<QptPoint>,
    pub resolution: BranchResolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QptSeriesOptions {
    pub durations: Vec<f64>,
    /// `None` for exact expectations.
    pub shots: Option<u64>,
    pub seed: u64,
    pub branch: BranchOptions,
}

/// Generators of unitaries at increasing durations, each extracted on the branch nearest the
/// running mean of the shorter ones, followed by per-label branch resolution.
pub fn track_unitaries(unitaries: &[(f64, Operator)], branch: BranchOptions) -> Result<(Vec<RateTable>, BranchResolution)> {
    if unitaries.windows(2).any(|w| w[1].0 <= w[0].0) {
        return invalid("durations must be strictly increasing");
    }
    let mut tables: Vec<RateTable> = Vec::new();
    for (t, u) in unitaries {
        let rates = if tables.is_empty() {
            effective_rates_compact(u, *t)?
        } else {
            let mut reference = RateTable::new();
            for l in tables[0].rates.keys() {
                let avg = tables.iter().map(|p| p.rates.get(l).copied().unwrap_or(0.0)).sum::<f64>() / tables.len() as f64;
                reference.set(l.clone(), avg);
            }
            effective_rates_near(u, *t, &reference)?
        };
        tables.push(rates);
    }
    let pairs: Vec<(f64, RateTable)> = unitaries.iter().map(|(t, _)| *t).zip(tables.iter().cloned()).collect();
    let resolution = resolve_branch(&pairs, branch)?;
    Ok((tables, resolution))
}

/// QPT at each duration, then [`track_unitaries`] on the dominant unitaries.
pub fn qpt_rate_series<P, F>(provider: &P, qubits: &[usize], schedule_for: F, opts: &QptSeriesOptions) -> Result<QptSeries>
where
    P: MeasurementProvider + ?Sized,
    F: Fn(f64) -> PulseSchedule,
{
    let mut durations = opts.durations.clone();
    durations.sort_by(f64::total_cmp);
    let mut unitaries = Vec::new();
    let mut lambdas = Vec::new();
    let mut warnings = Vec::new();
    for (k, &t) in durations.iter().enumerate() {
        let chi = run_qpt(provider, qubits, &schedule_for(t), opts.shots, derive_seed(opts.seed, k as u64))?;
        let dom = dominant_unitary(&chi)?;
        if dom.degenerate {
            warnings.push(format!("degenerate dominant eigenvalue at t = {t}"));
        }
        lambdas.push(dom.lambda0);
        unitaries.push((t, dom.unitary));
    }
    let (tables, mut resolution) = track_unitaries(&unitaries, opts.branch)?;
    resolution.rates.qubits = qubits.to_vec();
    resolution.rates.warnings.extend(warnings);
    let points = durations
        .iter()
        .zip(lambdas)
        .zip(tables)
        .map(|((&duration, lambda0), mut rates)| {
            rates.qubits = qubits.to_vec();
            QptPoint { duration, lambda0, rates }
        })
        .collect();
    Ok(QptSeries { points, resolution })
}

/// Drive of `control` at the frequency of `target` for `t` µs.
pub fn cr_segment(t: f64, target: usize, omega: f64, phase: f64) -> DriveSegment {
    DriveSegment::constant(t, target, omega, phase, [1.0, 0.0, 0.0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditivityOptions {
    pub series: QptSeriesOptions,
    pub phase: f64,
    /// Labels below this magnitude (MHz) in every protocol are hidden from summaries.
    pub display_threshold: f64,
}

impl AdditivityOptions {
    pub fn new(durations: Vec<f64>, shots: Option<u64>, seed: u64) -> Self {
        AdditivityOptions {
            series: QptSeriesOptions { durations, shots, seed, branch: BranchOptions::default() },
            phase: 0.0,
            display_threshold: 0.2,
        }
    }
}

pub const PROTOCOLS: [&str; 4] = ["idle", "drive_q1", "drive_q3", "both"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub name: String,
    pub rates: Option<RateTable>,
    pub lambda0: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub predicted: f64,
    pub measured: f64,
    pub absolute: f64,
    /// |predicted − measured| / |measured|
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditivityReport {
    pub qubits: [usize; 3],
    pub omega: f64,
    pub durations: Vec<f64>,
    pub protocols: Vec<ProtocolResult>,
    pub predicted: Option<RateTable>,
    pub deviations: BTreeMap<PauliLabel, Deviation>,
    pub display_threshold: f64,
}

fn check_chain(q: [usize; 3], n: usize) -> Result<()> {
    if !(q[0] < q[1] && q[1] < q[2] && q[2] < n) {
        return invalid("additivity protocols need ascending qubits q1 < q2 < q3 on the device");
    }
    Ok(())
}

fn protocol_schedule(kind: usize, q: [usize; 3], omega: f64, phase: f64, t: f64) -> PulseSchedule {
    let mut s = PulseSchedule::empty();
    if kind == 1 || kind == 3 {
        s = s.add(q[0], cr_segment(t, q[1], omega, phase));
    }
    if kind == 2 || kind == 3 {
        s = s.add(q[2], cr_segment(t, q[1], omega, phase));
    }
    if kind == 0 {
        s = PulseSchedule::idle(t);
    }
    s
}

/// Runs idle, single drives on q1 and q3 at ω_{q2}, and both, each with QPT on (q1, q2).
pub fn additivity_suite<P: MeasurementProvider + ?Sized>(
    provider: &P,
    q1: usize,
    q2: usize,
    q3: usize,
    omega: f64,
    opts: &AdditivityOptions,
) -> Result<AdditivityReport> {
    let q = [q1, q2, q3];
    check_chain(q, provider.num_qubits())?;
    let mut protocols = Vec::new();
    for (kind, name) in PROTOCOLS.iter().enumerate() {
        let mut series = opts.series.clone();
        series.seed = derive_seed(opts.series.seed, 100 + kind as u64);
        let result = qpt_rate_series(provider, &[q1, q2], |t| protocol_schedule(kind, q, omega, opts.phase, t), &series);
        protocols.push(match result {
            Ok(s) => {
                let mut rates = s.resolution.rates;
                rates.drive = name.to_string();
                ProtocolResult { name: name.to_string(), rates: Some(rates), lambda0: s.points.iter().map(|p| p.lambda0).collect(), error: None }
            }
            Err(e) => {
                log::warn!("additivity protocol {name} failed: {e}");
                ProtocolResult { name: name.to_string(), rates: None, lambda0: Vec::new(), error: Some(e.to_string()) }
            }
        });
    }
    let mut predicted = None;
    let mut deviations = BTreeMap::new();
    if protocols[..3].iter().all(|p| p.rates.is_some()) {
        let mut sum = RateTable::new();
        sum.qubits = vec![q1, q2];
        sum.drive = "idle + drive_q1 + drive_q3".into();
        for p in &protocols[..3] {
            for (l, v) in &p.rates.as_ref().expect("checked").rates {
                let cur = sum.rates.get(l).copied().unwrap_or(0.0);
                sum.set(l.clone(), cur + v);
            }
        }
        if let Some(both) = &protocols[3].rates {
            let labels: BTreeSet<&PauliLabel> = sum.rates.keys().chain(both.rates.keys()).collect();
            for l in labels {
                let predicted = sum.rates.get(l).copied().unwrap_or(0.0);
                let measured = both.rates.get(l).copied().unwrap_or(0.0);
                let absolute = (predicted - measured).abs();
                let relative = if measured != 0.0 { absolute / measured.abs() } else { f64::INFINITY };
                deviations.insert(l.clone(), Deviation { predicted, measured, absolute, relative });
            }
        }
        predicted = Some(sum);
    }
    let mut durations = opts.series.durations.clone();
    durations.sort_by(f64::total_cmp);
    Ok(AdditivityReport { qubits: q, omega, durations, protocols, predicted, deviations, display_threshold: opts.display_threshold })
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl AdditivityReport {
    /// Labels reaching the display threshold in any protocol or the prediction.
    pub fn displayed_labels(&self) -> Vec<PauliLabel> {
        let mut set = BTreeSet::new();
        for p in self.protocols.iter().filter_map(|p| p.rates.as_ref()).chain(self.predicted.as_ref()) {
            set.extend(p.significant(self.display_threshold));
        }
        set.into_iter().collect()
    }

    /// Columns: label, idle, drive_q1, drive_q3, both, predicted, deviation. Missing entries are `NA`.
    pub fn to_tsv(&self) -> String {
        let mut labels: BTreeSet<PauliLabel> = BTreeSet::new();
        for p in self.protocols.iter().filter_map(|p| p.rates.as_ref()) {
            labels.extend(p.rates.keys().cloned());
        }
        let mut out = String::from("label\tidle\tdrive_q1\tdrive_q3\tboth\tpredicted\tdeviation\n");
        for l in labels {
            let _ = write!(out, "{l}");
            for p in &self.protocols {
                let _ = write!(out, "\t{}", fmt_cell(p.rates.as_ref().map(|r| r.rates.get(&l).copied().unwrap_or(0.0))));
            }
            let pred = self.predicted.as_ref().map(|r| r.rates.get(&l).copied().unwrap_or(0.0));
            let dev = self.deviations.get(&l).map(|d| d.absolute);
            let _ = writeln!(out, "\t{}\t{}", fmt_cell(pred), fmt_cell(dev));
        }
        out
    }
}

/// Labels the simultaneous-drive three-qubit generator is expected to contain.
pub fn expected_three_qubit_labels() -> Vec<PauliLabel> {
    ["IIZ", "IXI", "IXZ", "ZII", "ZXI"].iter().map(|s| s.parse().expect("valid label")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeQubitReport {
    pub rates: RateTable,
    pub lambda0: Vec<f64>,
    pub expected: Vec<PauliLabel>,
    pub max_spurious: (PauliLabel, f64),
    pub min_expected: (PauliLabel, f64),
    /// max|spurious| / min|expected|
    pub ratio: f64,
}

/// Three-qubit QPT under simultaneous drives of q1 and q3 at ω_{q2}.
pub fn three_qubit_qpt<P: MeasurementProvider + ?Sized>(
    provider: &P,
    q1: usize,
    q2: usize,
    q3: usize,
    omega: f64,
    opts: &AdditivityOptions,
) -> Result<ThreeQubitReport> {
    let q = [q1, q2, q3];
    check_chain(q, provider.num_qubits())?;
    let series = qpt_rate_series(provider, &q, |t| protocol_schedule(3, q, omega, opts.phase, t), &opts.series)?;
    let rates = series.resolution.rates;
    let expected = expected_three_qubit_labels();
    let mut max_spurious = (PauliLabel::identity(3), 0.0f64);
    let mut min_expected = (expected[0].clone(), f64::INFINITY);
    for l in PauliLabel::all(3).filter(|l| !l.is_identity()) {
        let v = rates.rates.get(&l).copied().unwrap_or(0.0).abs();
        if expected.contains(&l) {
            if v < min_expected.1 {
                min_expected = (l, v);
            }
        } else if v > max_spurious.1 {
            max_spurious = (l, v);
        }
    }
    let ratio = max_spurious.1 / min_expected.1;
    Ok(ThreeQubitReport { rates, lambda0: series.points.iter().map(|p| p.lambda0).collect(), expected, max_spurious, min_expected, ratio })
}

/// One row per label, one column per duration (raw tracked rates), then the resolved rate.
pub fn rates_vs_duration_tsv(series: &QptSeries) -> String {
    let mut out = String::from("label");
    for p in &series.points {
        let _ = write!(out, "\tt={}", p.duration);
    }
    out.push_str("\tresolved\tstd_dev\n");
    for (l, b) in &series.resolution.labels {
        let _ = write!(out, "{l}");
        for v in &b.corrected {
            let _ = write!(out, "\t{v:.6}");
        }
        let _ = writeln!(out, "\t{:.6}\t{:.6}", series.resolution.rates.rates.get(l).copied().unwrap_or(0.0), b.std_dev);
    }
    out
}

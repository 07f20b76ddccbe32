//! Delay experiments on a qubit coupled to two-level defects: two-cosine fits,
//! purity revivals and statistics over repeated scans.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::device::{derive_seed, Job, MeasurementProvider, Prep, PulseSchedule, Session};
use crate::error::{invalid, Error, Result};
use crate::fitting::{least_squares, least_squares_limited, spectral_peaks, FitResult};
use crate::quantum::PauliLabel;

/// RMS above which the two-cosine model is considered not to describe the data.
pub const TWO_COSINE_RESIDUAL_LIMIT: f64 = 0.06;
pub const DEFAULT_PROMINENCE: f64 = 0.02;

/// Prominence threshold for purities estimated from `shots` per basis: three standard
/// deviations of a difference of two points, never below [`DEFAULT_PROMINENCE`].
pub fn revival_threshold(shots: Option<u64>) -> f64 {
    match shots {
        Some(n) if n > 0 => DEFAULT_PROMINENCE.max(3.0 * (2.0 / n as f64).sqrt()),
        _ => DEFAULT_PROMINENCE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayDataset {
    pub qubit: usize,
    pub basis: PauliLabel,
    pub prep: Prep,
    /// µs
    pub delays: Vec<f64>,
    /// One row per repetition.
    pub values: Vec<Vec<f64>>,
    /// Start time of each repetition, in hours.
    pub timestamps: Vec<f64>,
    pub shots: Option<u64>,
    /// Set when a repetition failed; `values` holds the repetitions completed before it.
    pub failure: Option<String>,
}

impl DelayDataset {
    pub fn repetitions(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.delays.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("delays must be strictly increasing");
        }
        if self.values.is_empty() {
            return invalid("dataset has no repetitions");
        }
        if self.timestamps.len() != self.values.len() {
            return invalid("one timestamp per repetition required");
        }
        for row in &self.values {
            if row.len() != self.delays.len() {
                return invalid("every repetition needs one value per delay");
            }
            if row.iter().any(|v| v.abs() > 1.0 + 1e-9) {
                return invalid("expectation outside [-1, 1]");
            }
        }
        Ok(())
    }

    /// Long-format table: `repetition timestamp delay value`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("repetition\ttimestamp\tdelay\tvalue\n");
        for (r, (row, ts)) in self.values.iter().zip(&self.timestamps).enumerate() {
            for (d, v) in self.delays.iter().zip(row) {
                let _ = writeln!(out, "{r}\t{ts:.4}\t{d:.6}\t{v:.6}");
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayScanOptions {
    pub prep: Prep,
    pub shots: Option<u64>,
    pub repetitions: usize,
    /// Hours between repetition starts.
    pub interval: f64,
    pub seed: u64,
}

impl Default for DelayScanOptions {
    fn default() -> Self {
        DelayScanOptions { prep: Prep::Plus, shots: Some(1024), repetitions: 1, interval: 0.06, seed: 0 }
    }
}

fn idle_session(n: usize, qubit: usize, prep: Prep, basis: &PauliLabel, delays: &[f64], shots: Option<u64>, seed: u64, name: String) -> Session {
    let mut preps = vec![Prep::Zero; n];
    preps[qubit] = prep;
    let jobs = delays
        .iter()
        .enumerate()
        .map(|(k, &t)| Job {
            prep: preps.clone(),
            schedule: PulseSchedule::idle(t),
            measured: vec![qubit],
            bases: vec![basis.clone()],
            shots,
            seed: derive_seed(seed, k as u64),
        })
        .collect();
    Session { name, jobs }
}

/// Idle-and-measure scan repeated in time order; the provider's environment is respawned
/// before every repetition.
pub fn run_delay_scan<P: MeasurementProvider + ?Sized>(
    provider: &mut P,
    qubit: usize,
    basis: &str,
    delays: &[f64],
    opts: &DelayScanOptions,
) -> Result<DelayDataset> {
    let basis: PauliLabel = basis.parse()?;
    let n = provider.num_qubits();
    if qubit >= n || basis.len() != 1 {
        return invalid("delay scans measure one device qubit in a single-qubit basis");
    }
    if opts.repetitions == 0 || delays.is_empty() || delays.windows(2).any(|w| w[1] <= w[0]) || delays[0] < 0.0 {
        return invalid("need at least one repetition and non-negative, increasing delays");
    }
    let mut data = DelayDataset {
        qubit,
        basis: basis.clone(),
        prep: opts.prep,
        delays: delays.to_vec(),
        values: Vec::new(),
        timestamps: Vec::new(),
        shots: opts.shots,
        failure: None,
    };
    for rep in 0..opts.repetitions {
        let name = format!("delay_q{qubit}_{basis}_rep{rep}");
        let session = idle_session(n, qubit, opts.prep, &basis, delays, opts.shots, derive_seed(opts.seed, rep as u64), name);
        let row = provider.respawn_environment(rep).and_then(|_| {
            provider
                .run_session(&session)?
                .iter()
                .map(|r| r.first().ok_or_else(|| Error::Provider("empty job result".into()))?.expectation(&basis))
                .collect::<Result<Vec<f64>>>()
        });
        match row {
            Ok(row) => {
                data.values.push(row);
                data.timestamps.push(rep as f64 * opts.interval);
            }
            Err(e) if rep > 0 => {
                log::warn!("delay scan stopped at repetition {rep}: {e}");
                data.failure = Some(format!("repetition {rep}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(data)
}

/// (c0 cos 2πf0t + c1 cos 2πf1t)·exp(−t/T2*) with f0 ≤ f1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoCosineFit {
    pub c0: f64,
    pub c1: f64,
    pub f0: f64,
    pub f1: f64,
    /// µs
    pub t2_star: f64,
    pub residual: f64,
    /// False when only one frequency could be fitted (then c1 = 0 and f1 = f0).
    pub f1_resolved: bool,
    pub flags: Vec<String>,
}

impl TwoCosineFit {
    pub fn eval(&self, t: f64) -> f64 {
        (self.c0 * (2.0 * PI * self.f0 * t).cos() + self.c1 * (2.0 * PI * self.f1 * t).cos()) * (-t / self.t2_star).exp()
    }

    pub fn well_reproduced(&self) -> bool {
        self.residual <= TWO_COSINE_RESIDUAL_LIMIT
    }
}

fn two_cosine_residual<'a>(times: &'a [f64], values: &'a [f64]) -> impl Fn(&[f64], &mut [f64]) + 'a {
    move |p: &[f64], r: &mut [f64]| {
        let decay = p[4] * p[4];
        for (k, &t) in times.iter().enumerate() {
            let s = p[0] * (2.0 * PI * p[2] * t).cos() + p[1] * (2.0 * PI * p[3] * t).cos();
            r[k] = s * (-decay * t).exp() - values[k];
        }
    }
}

fn one_cosine_residual<'a>(times: &'a [f64], values: &'a [f64]) -> impl Fn(&[f64], &mut [f64]) + 'a {
    move |p: &[f64], r: &mut [f64]| {
        let decay = p[2] * p[2];
        for (k, &t) in times.iter().enumerate() {
            r[k] = p[0] * (2.0 * PI * p[1] * t).cos() * (-decay * t).exp() - values[k];
        }
    }
}

/// Two-frequency Ramsey fit started from the strongest spectral peaks, with a one-cosine
/// fallback when the second frequency is not resolved.
pub fn fit_two_cosine(times: &[f64], values: &[f64]) -> Result<TwoCosineFit> {
    let m = times.len();
    if values.len() != m {
        return invalid("times and values differ in length");
    }
    if m < 25 {
        return invalid(format!("need at least 25 delay points, got {m}"));
    }
    let span = times[m - 1] - times[0];
    let resolution = 1.0 / span;
    let peaks = spectral_peaks(times, values, 3)?;
    let mut freqs: Vec<f64> = peaks.iter().map(|p| p.frequency).collect();
    if freqs.is_empty() {
        freqs.push(0.0);
    }
    let decays = [3.0 / span, 1.0 / span, 0.3 / span];

    let mut one: Option<FitResult> = None;
    for &f in &freqs {
        for &d in &decays {
            let fit = least_squares(one_cosine_residual(times, values), m, &[1.0, f, d.sqrt()])?;
            if one.as_ref().is_none_or(|b| fit.rms < b.rms) {
                one = Some(fit);
            }
        }
    }
    let one = one.expect("at least one start");

    // peak pairs, plus a split of each single peak for frequencies closer than the resolution
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for (i, &a) in freqs.iter().enumerate() {
        for &b in &freqs[i + 1..] {
            pairs.push((a.min(b), a.max(b)));
        }
        pairs.push(((a - 0.5 * resolution).max(0.0), a + 0.5 * resolution));
    }
    // weights are linear and converge from any start; screen briefly, polish the leaders
    let mut screened: Vec<FitResult> = Vec::new();
    for &(fa, fb) in &pairs {
        for &d in &decays[..2] {
            screened.push(least_squares_limited(two_cosine_residual(times, values), m, &[0.5, 0.5, fa, fb, d.sqrt()], 20)?);
        }
    }
    screened.sort_by(|a, b| a.rms.total_cmp(&b.rms));
    let mut two: Option<FitResult> = None;
    for start in screened.iter().take(2) {
        let fit = least_squares(two_cosine_residual(times, values), m, &start.params)?;
        if two.as_ref().is_none_or(|b| fit.rms < b.rms) {
            two = Some(fit);
        }
    }
    let two = two.expect("at least one start");

    let p = &two.params;
    let (mut c0, mut c1, mut f0, mut f1) = (p[0], p[1], p[2].abs(), p[3].abs());
    if f0 > f1 {
        std::mem::swap(&mut f0, &mut f1);
        std::mem::swap(&mut c0, &mut c1);
    }
    let collapsed = (f1 - f0) < 0.25 * resolution || c0.abs().min(c1.abs()) < 0.02;
    // a second cosine must earn its two extra parameters
    let better = two.rms * two.rms < one.rms * one.rms * (1.0 - 4.0 / m as f64);
    let mut out = if !collapsed && better {
        TwoCosineFit { c0, c1, f0, f1, t2_star: 1.0 / (p[4] * p[4]).max(1e-300), residual: two.rms, f1_resolved: true, flags: Vec::new() }
    } else {
        let q = &one.params;
        TwoCosineFit {
            c0: q[0],
            c1: 0.0,
            f0: q[1].abs(),
            f1: q[1].abs(),
            t2_star: 1.0 / (q[2] * q[2]).max(1e-300),
            residual: one.rms,
            f1_resolved: false,
            flags: vec!["f1 unresolved; single-cosine fit".into()],
        }
    };
    let weight = out.c0 + out.c1;
    if !(0.8..=1.2).contains(&weight) {
        out.flags.push(format!("c0 + c1 = {weight:.3} outside [0.8, 1.2]"));
    }
    if !out.well_reproduced() {
        out.flags.push(format!("residual {:.3}: data cannot be well reproduced by two cosines", out.residual));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityPoint {
    pub delay: f64,
    /// Bloch vector after clipping to the unit ball.
    pub bloch: [f64; 3],
    /// (1 + |r|²)/2
    pub purity: f64,
}

/// Bloch vector from three expectations, scaled back onto the unit ball if outside it.
pub fn clip_bloch(r: [f64; 3]) -> [f64; 3] {
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1.0 {
        r.map(|v| v / norm)
    } else {
        r
    }
}

pub fn purity(r: [f64; 3]) -> f64 {
    (1.0 + r.iter().map(|v| v * v).sum::<f64>()) / 2.0
}

/// Single-qubit state tomography after each idle delay from |+⟩ (three sessions).
pub fn purity_scan<P: MeasurementProvider + ?Sized>(provider: &P, qubit: usize, delays: &[f64], shots: Option<u64>, seed: u64) -> Result<Vec<PurityPoint>> {
    let n = provider.num_qubits();
    if qubit >= n {
        return invalid(format!("qubit {qubit} not on a {n}-qubit device"));
    }
    let mut components = Vec::with_capacity(3);
    for (b, basis) in ["X", "Y", "Z"].into_iter().enumerate() {
        let label: PauliLabel = basis.parse()?;
        let session = idle_session(n, qubit, Prep::Plus, &label, delays, shots, derive_seed(seed, b as u64), format!("purity_q{qubit}_{basis}"));
        let values = provider
            .run_session(&session)?
            .iter()
            .map(|r| r.first().ok_or_else(|| Error::Provider("empty job result".into()))?.expectation(&label))
            .collect::<Result<Vec<f64>>>()?;
        components.push(values);
    }
    Ok(delays
        .iter()
        .enumerate()
        .map(|(k, &delay)| {
            let bloch = clip_bloch([components[0][k], components[1][k], components[2][k]]);
            PurityPoint { delay, bloch, purity: purity(bloch) }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Revival {
    pub time: f64,
    pub prominence: f64,
}

/// Local maxima after the first local minimum whose topographic prominence reaches
/// `min_prominence`, in time order.
pub fn detect_revivals(times: &[f64], values: &[f64], min_prominence: f64) -> Result<Vec<Revival>> {
    let m = values.len();
    if times.len() != m {
        return invalid("times and values differ in length");
    }
    if m < 20 {
        return invalid(format!("need at least 20 points, got {m}"));
    }
    let Some(first_min) = (1..m - 1).find(|&i| values[i] < values[i - 1] && values[i] <= values[i + 1]) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    let mut i = first_min + 1;
    while i < m - 1 {
        // treat a flat top as one peak
        let mut j = i;
        while j + 1 < m && values[j + 1] == values[i] {
            j += 1;
        }
        if values[i] > values[i - 1] && j + 1 < m && values[i] > values[j + 1] {
            let v = values[i];
            let left = values[..i].iter().rev().take_while(|&&x| x <= v).fold(v, |a, &x| a.min(x));
            let right = values[j + 1..].iter().take_while(|&&x| x <= v).fold(v, |a, &x| a.min(x));
            let prominence = v - left.max(right);
            if prominence >= min_prominence {
                out.push(Revival { time: 0.5 * (times[i] + times[j]), prominence });
            }
        }
        i = j + 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    pub f0_mean: f64,
    /// Sample standard deviation of f0 across repetitions.
    pub f0_std: f64,
    /// max − min of f0.
    pub f0_spread: f64,
    /// The spread exceeds the frequency resolution of one scan.
    pub unstable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub delays: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// One entry per repetition; `None` where the fit failed.
    pub fits: Vec<Option<TwoCosineFit>>,
    pub drift: Option<DriftSummary>,
}

impl EnsembleSummary {
    /// Plot-ready `delay mean min max` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("delay\tmean\tmin\tmax\n");
        for k in 0..self.delays.len() {
            let _ = writeln!(out, "{:.6}\t{:.6}\t{:.6}\t{:.6}", self.delays[k], self.mean[k], self.min[k], self.max[k]);
        }
        out
    }
}

/// Pointwise mean and envelope over repetitions, optionally with a two-cosine fit per repetition.
pub fn ensemble_statistics(data: &DelayDataset, fit: bool) -> Result<EnsembleSummary> {
    data.validate()?;
    if data.repetitions() < 2 {
        return invalid("ensemble statistics need at least two repetitions");
    }
    let k = data.delays.len();
    let reps = data.repetitions() as f64;
    let column = |j: usize| data.values.iter().map(move |row| row[j]);
    let mean = (0..k).map(|j| column(j).sum::<f64>() / reps).collect();
    let min = (0..k).map(|j| column(j).fold(f64::INFINITY, f64::min)).collect();
    let max = (0..k).map(|j| column(j).fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut fits = Vec::new();
    let mut drift = None;
    if fit {
        use rayon::prelude::*;
        fits = data.values.par_iter().map(|row| fit_two_cosine(&data.delays, row).ok()).collect();
        let f0: Vec<f64> = fits.iter().flatten().map(|f| f.f0).collect();
        if f0.len() >= 2 {
            let n = f0.len() as f64;
            let f0_mean = f0.iter().sum::<f64>() / n;
            let f0_std = (f0.iter().map(|f| (f - f0_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let f0_spread = f0.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - f0.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let span = data.delays[k - 1] - data.delays[0];
            drift = Some(DriftSummary { f0_mean, f0_std, f0_spread, unstable: f0_spread > 1.0 / span });
        }
    }
    Ok(EnsembleSummary { delays: data.delays.clone(), mean, min, max, fits, drift })
}

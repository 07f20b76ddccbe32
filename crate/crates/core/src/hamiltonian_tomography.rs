//! Cross-resonance Hamiltonian tomography from eight Rabi experiments.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::device::{derive_seed, DriveSegment, Job, MeasurementProvider, Prep, PulseSchedule, Session};
use crate::error::{invalid, Error, Result};
use crate::fitting::{fit_damped_cosine, fit_precession, least_squares, DampedCosine};
use crate::quantum::{hermitian_eigen, pauli_sum, PauliLabel, C64};
use crate::rates::RateTable;

/// Labels of the two-qubit CR generator, control first.
pub const CR_LABELS: [&str; 7] = ["ZX", "ZY", "ZZ", "IX", "IY", "IZ", "ZI"];

const RESIDUAL_LIMIT: f64 = 0.15;
const MIN_PERIODS: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiSeries {
    /// Preparation, control first (e.g. "00", "10", "++").
    pub prep: String,
    pub basis: PauliLabel,
    pub measured_qubit: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub shots: Option<u64>,
}

impl RabiSeries {
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return invalid("times and values differ in length");
        }
        check_times(&self.times)?;
        if let Some(v) = self.values.iter().find(|v| v.abs() > 1.0 + 1e-9) {
            return invalid(format!("expectation {v} outside [-1, 1]"));
        }
        Ok(())
    }

    /// Tab-separated `time value shots prep basis` rows with a header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("time\tvalue\tshots\tprep\tbasis\n");
        let shots = self.shots.map_or("exact".to_string(), |s| s.to_string());
        for (t, v) in self.times.iter().zip(&self.values) {
            let _ = writeln!(out, "{t:.6}\t{v:.6}\t{shots}\t{}\t{}", self.prep, self.basis);
        }
        out
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 12 {
        return invalid(format!("need at least 12 time points, got {}", times.len()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
        return invalid("times must be non-negative and strictly increasing");
    }
    Ok(())
}

/// Effective target field for one control state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochFit {
    pub omega_x: f64,
    pub omega_y: f64,
    pub delta: f64,
    /// 1/µs
    pub decay: f64,
    pub amplitude: f64,
    pub residual: f64,
    pub periods_observed: f64,
    pub warnings: Vec<String>,
}

impl BlochFit {
    pub fn field(&self) -> [f64; 3] {
        [self.omega_x, self.omega_y, self.delta]
    }

    /// √(ω_x² + ω_y² + δ²)
    pub fn generalized_rabi(&self) -> f64 {
        self.field().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn unreliable(&self) -> bool {
        self.residual > RESIDUAL_LIMIT
    }

    pub fn under_resolved(&self) -> bool {
        self.periods_observed < MIN_PERIODS
    }
}

/// Constant CR drive on `control` at the frequency of `target` for `t` µs.
pub fn cr_schedule(control: usize, target: usize, omega: f64, phase: f64, t: f64) -> PulseSchedule {
    if t <= 0.0 {
        return PulseSchedule::empty();
    }
    PulseSchedule::empty().add(control, DriveSegment::constant(t, target, omega, phase, [1.0, 0.0, 0.0]))
}

/// Prepares `prep` (one entry per device qubit), runs `schedule(t)` for every time and
/// measures one qubit in `basis`. One session.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_series<P: MeasurementProvider + ?Sized>(
    provider: &P,
    name: &str,
    prep: &[Prep],
    label: String,
    measured: usize,
    basis: &str,
    schedule: &dyn Fn(f64) -> PulseSchedule,
    times: &[f64],
    shots: Option<u64>,
    seed: u64,
) -> Result<RabiSeries> {
    let basis: PauliLabel = basis.parse()?;
    let jobs = times
        .iter()
        .enumerate()
        .map(|(k, &t)| Job {
            prep: prep.to_vec(),
            schedule: schedule(t),
            measured: vec![measured],
            bases: vec![basis.clone()],
            shots,
            seed: derive_seed(seed, k as u64),
        })
        .collect();
    let records = provider.run_session(&Session { name: name.to_string(), jobs })?;
    let values = records
        .iter()
        .map(|r| r.first().ok_or_else(|| Error::Provider("empty job result".into()))?.expectation(&basis))
        .collect::<Result<Vec<f64>>>()?;
    let series = RabiSeries {
        prep: label,
        basis,
        measured_qubit: measured,
        times: times.to_vec(),
        values,
        shots,
    };
    series.validate()?;
    Ok(series)
}

/// Six sessions: control in |0⟩ and |1⟩, target measured in X, Y and Z.
/// Order is (|00⟩: X, Y, Z), (|10⟩: X, Y, Z).
#[allow(clippy::too_many_arguments)]
pub fn collect_cr_series<P: MeasurementProvider + ?Sized>(
    provider: &P,
    control: usize,
    target: usize,
    omega: f64,
    phase: f64,
    times: &[f64],
    shots: Option<u64>,
    seed: u64,
) -> Result<Vec<RabiSeries>> {
    let schedule = |t: f64| cr_schedule(control, target, omega, phase, t);
    collect_cr_series_with(provider, control, target, &schedule, times, shots, seed)
}

/// [`collect_cr_series`] with an arbitrary schedule per duration.
pub fn collect_cr_series_with<P: MeasurementProvider + ?Sized>(
    provider: &P,
    control: usize,
    target: usize,
    schedule: &dyn Fn(f64) -> PulseSchedule,
    times: &[f64],
    shots: Option<u64>,
    seed: u64,
) -> Result<Vec<RabiSeries>> {
    check_pair(provider, control, target)?;
    check_times(times)?;
    let n = provider.num_qubits();
    let mut out = Vec::with_capacity(6);
    for (c, ctrl) in [Prep::Zero, Prep::One].into_iter().enumerate() {
        let (prep, label) = pair_prep(n, control, target, (ctrl, Prep::Zero));
        for (b, basis) in ["X", "Y", "Z"].into_iter().enumerate() {
            let stream = derive_seed(seed, (3 * c + b) as u64);
            let name = format!("rabi_{label}_{basis}");
            out.push(run_series(provider, &name, &prep, label.clone(), target, basis, schedule, times, shots, stream)?);
        }
    }
    Ok(out)
}

fn pair_prep(n: usize, control: usize, target: usize, preps: (Prep, Prep)) -> (Vec<Prep>, String) {
    let mut prep = vec![Prep::Zero; n];
    prep[control] = preps.0;
    prep[target] = preps.1;
    (prep, format!("{}{}", preps.0.symbol(), preps.1.symbol()))
}

fn check_pair<P: MeasurementProvider + ?Sized>(provider: &P, control: usize, target: usize) -> Result<()> {
    let n = provider.num_qubits();
    if control == target || control >= n || target >= n {
        return invalid(format!("invalid control/target pair ({control}, {target}) on {n} qubits"));
    }
    Ok(())
}

/// Joint fit of the three target series to damped precession from |0⟩.
pub fn fit_bloch(x: &RabiSeries, y: &RabiSeries, z: &RabiSeries) -> Result<BlochFit> {
    for s in [x, y, z] {
        s.validate()?;
    }
    if x.times != y.times || x.times != z.times {
        return invalid("series must share the time grid");
    }
    let fit = fit_precession(&x.times, [&x.values, &y.values, &z.values], true, true, 0.0)?;
    let p = fit.params;
    let mut out = BlochFit {
        omega_x: p.field[0],
        omega_y: p.field[1],
        delta: p.field[2],
        decay: p.decay,
        amplitude: p.amplitude,
        residual: fit.rms,
        periods_observed: fit.periods_observed,
        warnings: Vec::new(),
    };
    if out.unreliable() {
        out.warnings.push(format!("prep {}: fit residual {:.3} above {RESIDUAL_LIMIT}", x.prep, out.residual));
    }
    if out.under_resolved() {
        out.warnings.push(format!("prep {}: only {:.2} periods observed", x.prep, out.periods_observed));
    }
    Ok(out)
}

/// Sum and difference of the control-|0⟩ and control-|1⟩ fields.
pub fn combine_rates(fit0: &BlochFit, fit1: &BlochFit) -> RateTable {
    let mut table = RateTable::new();
    for (a, (f0, f1)) in ["X", "Y", "Z"].iter().zip(fit0.field().into_iter().zip(fit1.field())) {
        table.set(format!("I{a}").parse().expect("static label"), (f0 + f1) / 2.0);
        table.set(format!("Z{a}").parse().expect("static label"), (f0 - f1) / 2.0);
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarkShift {
    /// (f₊ + f₋)/4 in MHz, unsigned.
    pub c_zi: f64,
    pub f_plus: f64,
    pub f_minus: f64,
    /// Control ⟨X⟩ for the |++⟩ and |−−⟩ preparations.
    pub series: [RabiSeries; 2],
    pub warnings: Vec<String>,
}

/// Two sessions: |++⟩ and |−−⟩, control measured in X.
#[allow(clippy::too_many_arguments)]
pub fn stark_shift_experiment<P: MeasurementProvider + ?Sized>(
    provider: &P,
    control: usize,
    target: usize,
    omega: f64,
    phase: f64,
    times: &[f64],
    shots: Option<u64>,
    seed: u64,
) -> Result<StarkShift> {
    let schedule = |t: f64| cr_schedule(control, target, omega, phase, t);
    stark_shift_experiment_with(provider, control, target, &schedule, times, shots, seed)
}

/// [`stark_shift_experiment`] with an arbitrary schedule per duration.
pub fn stark_shift_experiment_with<P: MeasurementProvider + ?Sized>(
    provider: &P,
    control: usize,
    target: usize,
    schedule: &dyn Fn(f64) -> PulseSchedule,
    times: &[f64],
    shots: Option<u64>,
    seed: u64,
) -> Result<StarkShift> {
    check_pair(provider, control, target)?;
    check_times(times)?;
    let n = provider.num_qubits();
    let (prep, label) = pair_prep(n, control, target, (Prep::Plus, Prep::Plus));
    let plus = run_series(provider, "stark_++", &prep, label, control, "X", schedule, times, shots, derive_seed(seed, 0))?;
    let (prep, label) = pair_prep(n, control, target, (Prep::Minus, Prep::Minus));
    let minus = run_series(provider, "stark_--", &prep, label, control, "X", schedule, times, shots, derive_seed(seed, 1))?;
    let span = times[times.len() - 1] - times[0];
    let mut warnings = Vec::new();
    let mut frequency = |s: &RabiSeries| -> f64 {
        match fit_damped_cosine(&s.times, &s.values) {
            Ok(DampedCosine { frequency, rms, .. }) => {
                if frequency < 1.0 / span || rms > RESIDUAL_LIMIT {
                    warnings.push(format!("stark prep {}: frequency peak unresolved", s.prep));
                }
                frequency
            }
            Err(e) => {
                warnings.push(format!("stark prep {}: {e}", s.prep));
                0.0
            }
        }
    };
    let f_plus = frequency(&plus);
    let f_minus = frequency(&minus);
    Ok(StarkShift { c_zi: (f_plus + f_minus) / 4.0, f_plus, f_minus, series: [plus, minus], warnings })
}

/// Control ⟨X⟩ under exp(−i2πtH) from |±±⟩, for the 2-qubit generator `rates` (control first).
pub fn stark_model(rates: &RateTable, sign: f64, times: &[f64]) -> Vec<f64> {
    let h = pauli_sum(rates.rates.iter(), 2);
    let (values, vectors) = hermitian_eigen(&h);
    let s = sign * 0.5;
    let psi = [0.5, s, s, 0.5].map(|a| C64::new(a, 0.0));
    // coordinates of |ψ⟩ in the eigenbasis
    let a: Vec<C64> = (0..4).map(|k| (0..4).map(|r| vectors[(r, k)].conj() * psi[r]).sum()).collect();
    times
        .iter()
        .map(|&t| {
            let mut phi = [C64::new(0.0, 0.0); 4];
            for k in 0..4 {
                let coeff = a[k] * C64::from_polar(1.0, -2.0 * PI * values[k] * t);
                for (r, p) in phi.iter_mut().enumerate() {
                    *p += vectors[(r, k)] * coeff;
                }
            }
            // X on the control swaps |0b⟩ and |1b⟩
            2.0 * (phi[0].conj() * phi[2] + phi[1].conj() * phi[3]).re
        })
        .collect()
}

// Both signs converging within this of each other means ZI is simply near zero.
const SIGN_RESOLUTION: f64 = 0.01;

/// Signed Z𝟙 from a joint model fit of both Stark series with the other six rates held fixed.
/// Returns the rate, the fit RMS and whether the opposite sign fits almost as well.
pub fn refine_stark(partial: &RateTable, stark: &StarkShift) -> Result<(f64, f64, bool)> {
    let [plus, minus] = &stark.series;
    let times = &plus.times;
    let m = times.len();
    let with_zi = |c: f64| {
        let mut r = partial.clone();
        r.set("ZI".parse().expect("static label"), c);
        r
    };
    let residual = |p: &[f64], r: &mut [f64]| {
        let table = with_zi(p[0]);
        let env: Vec<f64> = times.iter().map(|t| p[1] * (-p[2] * p[2] * t).exp()).collect();
        for (s, (series, off)) in [(1.0, (plus, 0)), (-1.0, (minus, m))] {
            for (k, v) in stark_model(&table, s, times).iter().enumerate() {
                r[off + k] = env[k] * v - series.values[k];
            }
        }
    };
    let mut r = vec![0.0; 2 * m];
    let cost = |c: f64, r: &mut [f64]| {
        residual(&[c, 1.0, 0.0], r);
        r.iter().map(|x| x * x).sum::<f64>()
    };
    // Coarse scan of both signs around the frequency estimate, then local refinement.
    let span = times[m - 1] - times[0];
    let step = (0.05 / span.max(1e-9)).min(0.01);
    let half_width = 0.5 + 0.25 * (stark.f_plus - stark.f_minus).abs();
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for sign in [1.0, -1.0] {
        let centre = sign * stark.c_zi;
        let n = (half_width / step).ceil() as i64;
        for i in -n..=n {
            let c = centre + i as f64 * step;
            candidates.push((cost(c, &mut r), c));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    // the control precesses at 2|c|; faster solutions are sampling aliases
    let nyquist = 0.25 * (m - 1) as f64 / span.max(1e-9);
    let mut best_pos: Option<(f64, f64)> = None;
    let mut best_neg: Option<(f64, f64)> = None;
    for &(_, c0) in candidates.iter().take(6).chain(candidates.iter().filter(|(_, c)| *c < 0.0).take(2)).chain(candidates.iter().filter(|(_, c)| *c > 0.0).take(2)) {
        let fit = least_squares(residual, 2 * m, &[c0, 1.0, 0.05])?;
        if fit.params[0].abs() > nyquist {
            continue;
        }
        let slot = if fit.params[0] >= 0.0 { &mut best_pos } else { &mut best_neg };
        if slot.is_none_or(|(rms, _)| fit.rms < rms) {
            *slot = Some((fit.rms, fit.params[0]));
        }
    }
    let (rms, c) = match (best_pos, best_neg) {
        (Some(p), Some(n)) => if n.0 < p.0 { n } else { p },
        (Some(p), None) => p,
        (None, Some(n)) => n,
        (None, None) => return Err(Error::Fit("stark model fit failed".into())),
    };
    let ambiguous = match (best_pos, best_neg) {
        (Some(p), Some(n)) => (p.0 - n.0).abs() <= 0.05 * p.0.max(n.0) + 1e-9 && (p.1 - n.1).abs() > SIGN_RESOLUTION,
        _ => false,
    };
    Ok((c, rms, ambiguous))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrTomography {
    pub rates: RateTable,
    pub fit0: BlochFit,
    pub fit1: BlochFit,
    pub stark: StarkShift,
    /// Mean of the two control-state decay rates, 1/µs.
    pub decay: f64,
    pub series: Vec<RabiSeries>,
}

/// Eight experiments (six Rabi series and two Stark series) combined into the 7-label table.
#[allow(clippy::too_many_arguments)]
pub fn cr_hamiltonian_tomography<P: MeasurementProvider + ?Sized>(
    provider: &P,
    control: usize,
    target: usize,
    omega: f64,
    phase: f64,
    times: &[f64],
    shots: Option<u64>,
    seed: u64,
) -> Result<CrTomography> {
    let schedule = |t: f64| cr_schedule(control, target, omega, phase, t);
    let mut out = cr_hamiltonian_tomography_with(provider, control, target, &schedule, times, shots, seed)?;
    out.rates.drive = format!("cr q{control}->q{target} omega {omega} phase {phase}");
    Ok(out)
}

/// [`cr_hamiltonian_tomography`] with an arbitrary schedule per duration (e.g. with
/// compensation tones added).
pub fn cr_hamiltonian_tomography_with<P: MeasurementProvider + ?Sized>(
    provider: &P,
    control: usize,
    target: usize,
    schedule: &dyn Fn(f64) -> PulseSchedule,
    times: &[f64],
    shots: Option<u64>,
    seed: u64,
) -> Result<CrTomography> {
    let series = collect_cr_series_with(provider, control, target, schedule, times, shots, derive_seed(seed, 0))?;
    let stark = stark_shift_experiment_with(provider, control, target, schedule, times, shots, derive_seed(seed, 1))?;
    let fit0 = fit_bloch(&series[0], &series[1], &series[2])?;
    let fit1 = fit_bloch(&series[3], &series[4], &series[5])?;
    let mut rates = combine_rates(&fit0, &fit1);
    rates.warnings.extend(fit0.warnings.iter().cloned());
    rates.warnings.extend(fit1.warnings.iter().cloned());
    rates.warnings.extend(stark.warnings.iter().cloned());
    let zi = match refine_stark(&rates, &stark) {
        Ok((c, _, ambiguous)) => {
            if ambiguous {
                rates.warnings.push("sign of ZI undetermined; reporting the unsigned Stark estimate".into());
                stark.c_zi
            } else {
                c
            }
        }
        Err(e) => {
            rates.warnings.push(format!("stark refinement failed: {e}"));
            stark.c_zi
        }
    };
    rates.set("ZI".parse()?, zi);
    for l in CR_LABELS {
        if !rates.rates.contains_key(&l.parse::<PauliLabel>()?) {
            rates.rates.insert(l.parse()?, 0.0);
        }
    }
    rates.durations = times.to_vec();
    rates.drive = format!("cr q{control}->q{target}");
    let decay = (fit0.decay + fit1.decay) / 2.0;
    Ok(CrTomography { rates, fit0, fit1, stark, decay, series })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::precession;

    fn series(prep: &str, basis: &str, times: &[f64], values: Vec<f64>) -> RabiSeries {
        RabiSeries { prep: prep.into(), basis: basis.parse().unwrap(), measured_qubit: 1, times: times.to_vec(), values, shots: None }
    }

    fn synthetic(field: [f64; 3], times: &[f64]) -> [RabiSeries; 3] {
        let traj: Vec<[f64; 3]> = times.iter().map(|&t| precession(field, t)).collect();
        [0, 1, 2].map(|k| series("00", ["X", "Y", "Z"][k], times, traj.iter().map(|v| v[k]).collect()))
    }

    #[test]
    fn noiseless_bloch_fit_recovers_field() {
        let times: Vec<f64> = (0..120).map(|k| k as f64 * 0.05).collect();
        let field = [0.9083, 0.0317, -0.0462];
        let [x, y, z] = synthetic(field, &times);
        let fit = fit_bloch(&x, &y, &z).unwrap();
        for (a, b) in fit.field().iter().zip(field) {
            assert!((a - b).abs() < 1e-4, "{:?}", fit.field());
        }
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn combine_round_trips_sum_and_difference() {
        let mk = |f: [f64; 3]| BlochFit { omega_x: f[0], omega_y: f[1], delta: f[2], decay: 0.0, amplitude: 1.0, residual: 0.0, periods_observed: 2.0, warnings: vec![] };
        let (ix, iy, iz, zx, zy, zz) = (0.4168, 0.0649, -0.0756, -0.4915, -0.0332, 0.0294);
        let t = combine_rates(&mk([ix + zx, iy + zy, iz + zz]), &mk([ix - zx, iy - zy, iz - zz]));
        for (l, v) in [("IX", ix), ("IY", iy), ("IZ", iz), ("ZX", zx), ("ZY", zy), ("ZZ", zz)] {
            assert!((t.get(l) - v).abs() < 1e-15, "{l}");
        }
        let same = combine_rates(&mk([0.3, 0.1, 0.2]), &mk([0.3, 0.1, 0.2]));
        assert!(same.get("ZX").abs() < 1e-15 && same.get("ZZ").abs() < 1e-15);
    }

    #[test]
    fn too_few_points_rejected() {
        let times: Vec<f64> = (0..8).map(|k| k as f64 * 0.1).collect();
        let [x, y, z] = synthetic([0.5, 0.0, 0.0], &times);
        assert!(fit_bloch(&x, &y, &z).is_err());
    }

    #[test]
    fn stark_model_without_conditional_terms_is_a_cosine() {
        let rates = RateTable::from_pairs([("ZI", 1.5), ("IX", 0.4)]).unwrap();
        let times: Vec<f64> = (0..20).map(|k| k as f64 * 0.03).collect();
        for sign in [1.0, -1.0] {
            for (v, t) in stark_model(&rates, sign, &times).iter().zip(&times) {
                assert!((v - sign * (4.0 * PI * 1.5 * t).cos()).abs() < 1e-10, "{v} {t}");
            }
        }
    }

    #[test]
    fn tsv_has_one_row_per_point() {
        let times: Vec<f64> = (0..12).map(|k| k as f64 * 0.1).collect();
        let [x, _, _] = synthetic([0.5, 0.0, 0.0], &times);
        let tsv = x.to_tsv();
        assert_eq!(tsv.lines().count(), 13);
        assert!(tsv.lines().nth(1).unwrap().ends_with("exact\t00\tX"));
    }
}

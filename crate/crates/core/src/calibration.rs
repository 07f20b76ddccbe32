//! Drive-phase calibration, low-amplitude single-qubit tomography and cancellation tones.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::device::{derive_seed, AwgModel, DriveSegment, MeasurementProvider, Prep, PulseSchedule};
use crate::error::{invalid, Error, Result};
use crate::fitting::{fit_precession, least_squares, PrecessionParams};
use crate::hamiltonian_tomography::{collect_cr_series, fit_bloch, run_series, RabiSeries};
use crate::quantum::{Pauli, PauliLabel};
use crate::rates::RateTable;

const MIN_PERIODS: f64 = 1.5;
/// T2 beyond this many spans is indistinguishable from no decay.
const T2_CAP_SPANS: f64 = 100.0;
/// Typical resonant π-pulse amplitude, MHz.
pub const TYPICAL_PI_AMPLITUDE: f64 = 30.0;

/// Wraps an angle into [−π, π).
pub fn wrap_phase(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Single-qubit precession fit in field units h = 2c (so `rabi` is the delivered drive amplitude).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleQubitFit {
    pub h_x: f64,
    pub h_y: f64,
    pub h_z: f64,
    /// µs
    pub t2: f64,
    pub amplitude: f64,
    /// √(h_x² + h_y²), MHz.
    pub rabi: f64,
    /// arg(h_x + i h_y) minus the requested phase, wrapped.
    pub phase_error: f64,
    /// h_z, MHz.
    pub detuning: f64,
    pub residual: f64,
    pub periods_observed: f64,
    /// Set when the oscillation is under-resolved and only T2 was fitted.
    pub rabi_upper_bound: Option<f64>,
    pub flags: Vec<String>,
}

impl SingleQubitFit {
    /// Azimuth of the transverse field.
    pub fn delivered_phase(&self) -> f64 {
        self.h_y.atan2(self.h_x)
    }
}

/// Requested versus delivered drive parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub requested_amplitude: f64,
    pub delivered_amplitude: f64,
    pub requested_phase: f64,
    pub delivered_phase: f64,
    pub requested_detuning: f64,
    pub delivered_detuning: f64,
    /// |delivered − requested| / requested; zero for a zero request.
    pub relative_amplitude_error: f64,
}

impl ErrorReport {
    pub fn new(requested_amplitude: f64, requested_phase: f64, requested_detuning: f64, fit: &SingleQubitFit) -> Self {
        let relative = if requested_amplitude > 0.0 { (fit.rabi - requested_amplitude).abs() / requested_amplitude } else { 0.0 };
        ErrorReport {
            requested_amplitude,
            delivered_amplitude: fit.rabi,
            requested_phase,
            delivered_phase: fit.delivered_phase(),
            requested_detuning,
            delivered_detuning: fit.detuning,
            relative_amplitude_error: relative,
        }
    }

    pub fn phase_error(&self) -> f64 {
        wrap_phase(self.delivered_phase - self.requested_phase)
    }

    /// Human-readable table: requested, delivered, error, % error.
    pub fn summary(&self) -> String {
        let mut out = format!("{:<12}{:>12}{:>12}{:>12}{:>10}\n", "quantity", "requested", "delivered", "error", "% error");
        let pct = |req: f64, err: f64| if req != 0.0 { format!("{:.1}", 100.0 * err / req.abs()) } else { "-".into() };
        let amp_err = self.delivered_amplitude - self.requested_amplitude;
        let _ = writeln!(
            out,
            "{:<12}{:>12.4}{:>12.4}{:>12.4}{:>10}",
            "amplitude",
            self.requested_amplitude,
            self.delivered_amplitude,
            amp_err,
            pct(self.requested_amplitude, amp_err)
        );
        let _ = writeln!(
            out,
            "{:<12}{:>12.4}{:>12.4}{:>12.4}{:>10}",
            "phase/pi",
            self.requested_phase / PI,
            self.delivered_phase / PI,
            self.phase_error() / PI,
            "-"
        );
        let det_err = self.delivered_detuning - self.requested_detuning;
        let _ = writeln!(
            out,
            "{:<12}{:>12.4}{:>12.4}{:>12.4}{:>10}",
            "detuning",
            self.requested_detuning,
            self.delivered_detuning,
            det_err,
            pct(self.requested_detuning, det_err)
        );
        out
    }
}

/// Resonant drive on `qubit` from |0⟩; X, Y and Z series of that qubit (three sessions).
#[allow(clippy::too_many_arguments)]
pub fn low_amplitude_tomography<P: MeasurementProvider + ?Sized>(
    provider: &P,
    qubit: usize,
    omega: f64,
    phase: f64,
    times: &[f64],
    shots: Option<u64>,
    seed: u64,
) -> Result<[RabiSeries; 3]> {
    let n = provider.num_qubits();
    if qubit >= n {
        return invalid(format!("qubit {qubit} not on a {n}-qubit device"));
    }
    if !(omega >= 0.0) {
        return invalid("requested amplitude must be non-negative");
    }
    let schedule = |t: f64| {
        if t <= 0.0 {
            PulseSchedule::empty()
        } else {
            PulseSchedule::empty().add(qubit, DriveSegment::constant(t, qubit, omega, phase, [1.0, 0.0, 0.0]))
        }
    };
    let prep = vec![Prep::Zero; n];
    let mut out = Vec::with_capacity(3);
    for (k, basis) in ["X", "Y", "Z"].into_iter().enumerate() {
        let name = format!("single_q{qubit}_{basis}");
        out.push(run_series(provider, &name, &prep, "0".into(), qubit, basis, &schedule, times, shots, derive_seed(seed, k as u64))?);
    }
    Ok(out.try_into().expect("three series"))
}

/// Joint damped-precession fit of the X, Y, Z series of one qubit.
pub fn fit_single_qubit(series: &[RabiSeries; 3], requested_phase: f64) -> Result<SingleQubitFit> {
    let [x, y, z] = series;
    for s in series {
        s.validate()?;
    }
    if x.times != y.times || x.times != z.times {
        return invalid("series must share the time grid");
    }
    let times = &x.times;
    let span = times[times.len() - 1] - times[0];
    let fit = fit_precession(times, [&x.values, &y.values, &z.values], true, true, 0.0)?;
    let p = fit.params;
    let h = p.field.map(|c| 2.0 * c);
    let mut flags = Vec::new();
    let cap = T2_CAP_SPANS * span;
    let mut t2 = if p.decay > 1.0 / cap { 1.0 / p.decay } else { cap };
    if t2 >= cap {
        flags.push(format!("T2 at upper bound {cap:.1} us"));
    }
    let mut rabi_upper_bound = None;
    let mut amplitude = p.amplitude;
    if fit.periods_observed < MIN_PERIODS {
        flags.push(format!("only {:.2} periods observed; T2 from Bloch-vector length", fit.periods_observed));
        let (a, tau) = fit_bloch_length(times, [&x.values, &y.values, &z.values], cap)?;
        amplitude = a;
        t2 = tau;
        rabi_upper_bound = Some(MIN_PERIODS / span);
    }
    let rabi = h[0].hypot(h[1]);
    Ok(SingleQubitFit {
        h_x: h[0],
        h_y: h[1],
        h_z: h[2],
        t2,
        amplitude,
        rabi,
        phase_error: wrap_phase(h[1].atan2(h[0]) - requested_phase),
        detuning: h[2],
        residual: fit.rms,
        periods_observed: fit.periods_observed,
        rabi_upper_bound,
        flags,
    })
}

// |r(t)| = a·exp(−t/T2) is independent of the precession axis.
fn fit_bloch_length(times: &[f64], xyz: [&[f64]; 3], cap: f64) -> Result<(f64, f64)> {
    let len: Vec<f64> = (0..times.len()).map(|k| xyz.iter().map(|s| s[k] * s[k]).sum::<f64>().sqrt()).collect();
    let residual = |p: &[f64], r: &mut [f64]| {
        for (k, &t) in times.iter().enumerate() {
            r[k] = p[0] * (-p[1] * p[1] * t).exp() - len[k];
        }
    };
    let fit = least_squares(residual, times.len(), &[1.0, (1.0 / cap).sqrt()])?;
    let decay = fit.params[1] * fit.params[1];
    Ok((fit.params[0], if decay > 1.0 / cap { 1.0 / decay } else { cap }))
}

/// Synthetic X, Y, Z series for precession from |0⟩ about the field `h` (MHz, h = 2c)
/// with Bloch-vector decay exp(−t/T2). `shots = None` returns exact expectations.
pub fn synthetic_single_qubit(h: [f64; 3], t2: f64, times: &[f64], shots: Option<u64>, seed: u64) -> Result<[RabiSeries; 3]> {
    if !(t2 > 0.0) {
        return invalid("T2 must be positive");
    }
    let params = PrecessionParams { field: h.map(|v| v / 2.0), decay: 1.0 / t2, amplitude: 1.0 };
    let mut out = Vec::with_capacity(3);
    for (b, basis) in ["X", "Y", "Z"].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
        let values = times
            .iter()
            .map(|&t| {
                let v = params.eval(t)[b].clamp(-1.0, 1.0);
                match shots {
                    None => Ok(v),
                    Some(n) => {
                        let d = Binomial::new(n, (1.0 + v) / 2.0).map_err(|e| Error::Numerical(e.to_string()))?;
                        Ok(2.0 * d.sample(&mut rng) as f64 / n as f64 - 1.0)
                    }
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(RabiSeries { prep: "0".into(), basis: basis.parse()?, measured_qubit: 0, times: times.to_vec(), values, shots });
    }
    Ok(out.try_into().expect("three series"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseScanOptions {
    pub times: Vec<f64>,
    pub shots: Option<u64>,
    pub seed: u64,
    /// Coarse scan points over [−π, π).
    pub grid: usize,
    pub max_calls: usize,
}

impl Default for PhaseScanOptions {
    fn default() -> Self {
        PhaseScanOptions { times: (0..=150).map(|k| k as f64 * 0.04).collect(), shots: Some(4096), seed: 0, grid: 8, max_calls: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCalibration {
    /// Drive phase nulling c_ZY, radians in [−π, π).
    pub phase: f64,
    /// c_ZY measured at `phase`, MHz.
    pub c_zy: f64,
    /// (phase, c_ZY) in measurement order.
    pub history: Vec<(f64, f64)>,
    pub converged: bool,
}

impl PhaseCalibration {
    pub fn calls(&self) -> usize {
        self.history.len()
    }
}

/// c_ZY of the CR drive at one phase, from the six target Rabi series.
pub fn measure_c_zy<P: MeasurementProvider + ?Sized>(
    provider: &P,
    control: usize,
    target: usize,
    omega: f64,
    phase: f64,
    opts: &PhaseScanOptions,
    call: usize,
) -> Result<f64> {
    let s = collect_cr_series(provider, control, target, omega, phase, &opts.times, opts.shots, derive_seed(opts.seed, call as u64))?;
    let f0 = fit_bloch(&s[0], &s[1], &s[2])?;
    let f1 = fit_bloch(&s[3], &s[4], &s[5])?;
    Ok((f0.omega_y - f1.omega_y) / 2.0)
}

/// Drive phase at which c_ZY vanishes: coarse scan, then bisection of the sign change
/// whose root lies nearest phase 0.
pub fn calibrate_phase<P: MeasurementProvider + ?Sized>(
    provider: &P,
    control: usize,
    target: usize,
    omega: f64,
    tol: f64,
    opts: &PhaseScanOptions,
) -> Result<PhaseCalibration> {
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    if opts.grid < 2 || opts.max_calls < opts.grid {
        return invalid("need at least two scan points and a call budget covering the scan");
    }
    let mut history = Vec::new();
    let measure = |phase: f64, history: &mut Vec<(f64, f64)>| -> Result<f64> {
        let c = measure_c_zy(provider, control, target, omega, wrap_phase(phase), opts, history.len())?;
        history.push((wrap_phase(phase), c));
        Ok(c)
    };
    let step = 2.0 * PI / opts.grid as f64;
    let grid: Vec<(f64, f64)> = (0..opts.grid)
        .map(|k| {
            let p = -PI + k as f64 * step;
            measure(p, &mut history).map(|c| (p, c))
        })
        .collect::<Result<_>>()?;
    if grid.iter().all(|(_, c)| c.abs() < tol) {
        return Err(Error::Calibration("c_ZY flat over [-pi, pi); drive too weak to measure".into()));
    }
    if let Some(&(p, c)) = grid.iter().filter(|(_, c)| c.abs() < tol).min_by(|a, b| a.0.abs().total_cmp(&b.0.abs())) {
        return Ok(PhaseCalibration { phase: p, c_zy: c, history, converged: true });
    }
    // brackets include the wrap from the last grid point back to −π
    let bracket = (0..opts.grid)
        .filter_map(|k| {
            let (a, ca) = grid[k];
            let (b, cb) = if k + 1 < opts.grid { grid[k + 1] } else { (grid[0].0 + 2.0 * PI, grid[0].1) };
            (ca * cb < 0.0).then(|| {
                let root = a - ca * (b - a) / (cb - ca);
                ((a, ca), (b, cb), wrap_phase(root).abs())
            })
        })
        .min_by(|x, y| x.2.total_cmp(&y.2));
    let Some(((mut lo, mut c_lo), (mut hi, _), _)) = bracket else {
        return Err(Error::Calibration("c_ZY has no sign change over [-pi, pi); drive too weak to measure".into()));
    };
    let mut best = (0.5 * (lo + hi), f64::INFINITY);
    while history.len() < opts.max_calls {
        let mid = 0.5 * (lo + hi);
        let c = measure(mid, &mut history)?;
        if c.abs() < best.1.abs() {
            best = (mid, c);
        }
        if c.abs() < tol {
            return Ok(PhaseCalibration { phase: wrap_phase(mid), c_zy: c, history, converged: true });
        }
        if (c < 0.0) == (c_lo < 0.0) {
            lo = mid;
            c_lo = c;
        } else {
            hi = mid;
        }
    }
    Ok(PhaseCalibration { phase: wrap_phase(best.0), c_zy: best.1, history, converged: false })
}

/// Why a compensation cannot be delivered exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CompensationFlag {
    /// Required amplitude is below the AWG step.
    BelowFloor { required: f64, achievable: f64 },
    /// Amplitude rounded to the AWG grid.
    Quantized { required: f64, achievable: f64 },
    /// Transverse fields on the CR control cannot share its channel.
    ControlTransverse { field: [f64; 2] },
}

/// Resonant tone on one qubit cancelling a single-qubit field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationTone {
    /// Position in the rate-table labels (0 is the CR control).
    pub position: usize,
    /// Field to add, MHz per X, Y, Z.
    pub field: [f64; 3],
    pub requested_amplitude: f64,
    pub delivered_amplitude: f64,
    pub phase: f64,
    /// Envelope (hx, hy, hz) of the tone.
    pub envelope: [f64; 3],
    pub flags: Vec<CompensationFlag>,
}

impl CompensationTone {
    /// Field actually produced by the tone.
    pub fn delivered_field(&self, awg: &AwgModel) -> [f64; 3] {
        let a = self.delivered_amplitude / 2.0;
        let phi = self.phase + awg.phase_offset;
        let t = self.envelope[0].hypot(self.envelope[1]);
        [a * t * phi.cos(), a * t * phi.sin(), a * self.envelope[2]]
    }

    pub fn is_active(&self) -> bool {
        self.delivered_amplitude > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cancellation {
    /// Tones for positions other than the control.
    pub tones: Vec<CompensationTone>,
    /// hz envelope added to the CR segment, cancelling the control Z field.
    pub control_hz: f64,
    /// Field on the control after the hz term, MHz (Z only).
    pub control_field: f64,
    /// Predicted rates with the delivered compensation added.
    pub residual: RateTable,
    /// Largest transverse compensation field relative to a typical π-pulse amplitude.
    pub pi_pulse_ratio: f64,
    pub flags: Vec<String>,
}

impl Cancellation {
    /// CR drive on `qubits[0]` toward `qubits[1]` for `t` µs with the compensation tones.
    /// `qubits` maps label positions to device qubits.
    pub fn schedule(&self, qubits: &[usize], omega: f64, phase: f64, t: f64) -> PulseSchedule {
        if t <= 0.0 {
            return PulseSchedule::empty();
        }
        let mut s = PulseSchedule::empty().add(qubits[0], DriveSegment::constant(t, qubits[1], omega, phase, [1.0, 0.0, self.control_hz]));
        for tone in self.tones.iter().filter(|t| t.is_active()) {
            let q = qubits[tone.position];
            s = s.add(q, DriveSegment::constant(t, q, tone.requested_amplitude, tone.phase, tone.envelope));
        }
        s
    }

    /// All flags, one per line, for reports.
    pub fn flag_lines(&self) -> Vec<String> {
        let mut out = self.flags.clone();
        for tone in &self.tones {
            for f in &tone.flags {
                out.push(format!("position {}: {f:?}", tone.position));
            }
        }
        out
    }
}

/// Requested amplitude whose AWG output before quantization equals `delivered`.
pub fn invert_awg_gain(awg: &AwgModel, delivered: f64) -> Result<f64> {
    let g = awg.gain_nonlinearity;
    if delivered == 0.0 || g == 0.0 {
        return Ok(delivered);
    }
    let mut a = delivered;
    for _ in 0..100 {
        let f = a * (1.0 + g * a * a) - delivered;
        let df = 1.0 + 3.0 * g * a * a;
        if df <= 0.0 {
            break;
        }
        let next = a - f / df;
        if (next - a).abs() <= 1e-14 * delivered.abs().max(1.0) {
            return Ok(next);
        }
        a = next;
    }
    Err(Error::Calibration(format!("AWG gain cannot deliver {delivered} MHz")))
}

fn single_qubit_axis(label: &PauliLabel) -> Option<(usize, usize)> {
    if label.weight() != 1 {
        return None;
    }
    let pos = label.ops().iter().position(|p| *p != Pauli::I)?;
    Some((pos, label.get(pos).index() - 1))
}

/// Single-qubit compensation turning `rates` into `target`.
///
/// Labels are over the CR pair, control first. Two-qubit labels present in `target` must
/// match `rates`; absent ones pass through. The control Z field is cancelled by an hz
/// term on the CR segment of amplitude `cr_amplitude`, other fields by resonant tones
/// with unit transverse envelope.
pub fn synthesize_cancellation(rates: &RateTable, target: &RateTable, awg: &AwgModel, cr_amplitude: f64) -> Result<Cancellation> {
    let n = rates.num_qubits().ok_or_else(|| Error::InvalidInput("empty rate table".into()))?;
    if target.num_qubits().is_some_and(|m| m != n) {
        return invalid("target and rates act on different qubit counts");
    }
    for (label, &want) in &target.rates {
        if label.weight() >= 2 {
            let have = rates.rates.get(label).copied().unwrap_or(0.0);
            if (have - want).abs() > 1e-9 + 1e-6 * have.abs() {
                return Err(Error::Calibration(format!("target changes two-qubit label {label}; only single-qubit control exists")));
            }
        }
    }
    let mut fields = vec![[0.0; 3]; n];
    let labels = rates.rates.keys().chain(target.rates.keys());
    for label in labels {
        if let Some((pos, axis)) = single_qubit_axis(label) {
            let have = rates.rates.get(label).copied().unwrap_or(0.0);
            let want = target.rates.get(label).copied().unwrap_or(0.0);
            fields[pos][axis] = -(have - want);
        }
    }
    let mut flags = Vec::new();
    let delivered_cr = awg.apply(cr_amplitude);
    let control_hz = if fields[0][2] == 0.0 {
        0.0
    } else if delivered_cr > 0.0 {
        2.0 * fields[0][2] / delivered_cr
    } else {
        flags.push("control Z compensation needs a non-zero CR amplitude".into());
        0.0
    };
    let control_field = delivered_cr / 2.0 * control_hz;
    let mut tones = Vec::new();
    let mut control_tone = CompensationTone {
        position: 0,
        field: fields[0],
        requested_amplitude: 0.0,
        delivered_amplitude: 0.0,
        phase: 0.0,
        envelope: [0.0; 3],
        flags: Vec::new(),
    };
    if fields[0][0] != 0.0 || fields[0][1] != 0.0 {
        control_tone.flags.push(CompensationFlag::ControlTransverse { field: [fields[0][0], fields[0][1]] });
        tones.push(control_tone);
    }
    for (pos, field) in fields.iter().enumerate().skip(1) {
        if field.iter().all(|c| *c == 0.0) {
            continue;
        }
        tones.push(tone_for(pos, *field, awg)?);
    }
    let mut residual = rates.clone();
    residual.warnings.clear();
    let mut add = |pos: usize, axis: usize, v: f64| {
        if v == 0.0 {
            return;
        }
        let mut ops = vec![Pauli::I; n];
        ops[pos] = [Pauli::X, Pauli::Y, Pauli::Z][axis];
        let label = PauliLabel::new(ops).expect("valid label");
        let old = residual.rates.get(&label).copied().unwrap_or(0.0);
        residual.set(label, old + v);
    };
    add(0, 2, control_field);
    for tone in tones.iter().filter(|t| t.is_active()) {
        for (axis, v) in tone.delivered_field(awg).into_iter().enumerate() {
            add(tone.position, axis, v);
        }
    }
    let transverse = fields.iter().map(|f| f[0].hypot(f[1])).fold(0.0, f64::max);
    let pi_pulse_ratio = if transverse > 0.0 { TYPICAL_PI_AMPLITUDE / transverse } else { f64::INFINITY };
    Ok(Cancellation { tones, control_hz, control_field, residual, pi_pulse_ratio, flags })
}

fn tone_for(position: usize, field: [f64; 3], awg: &AwgModel) -> Result<CompensationTone> {
    let required = 2.0 * field[0].hypot(field[1]);
    let mut flags = Vec::new();
    let mut delivered = awg.quantize(required);
    if required > 0.0 && required < awg.floor() {
        flags.push(CompensationFlag::BelowFloor { required, achievable: delivered });
    } else if (delivered - required).abs() > 1e-12 * required.max(1.0) {
        flags.push(CompensationFlag::Quantized { required, achievable: delivered });
    }
    // rounding up can overshoot by more than leaving the field alone
    if (delivered - required).abs() > required {
        delivered = 0.0;
    }
    let (phase, mut envelope) = if delivered > 0.0 {
        (wrap_phase(field[1].atan2(field[0]) - awg.phase_offset), [1.0, 0.0, 0.0])
    } else {
        (0.0, [0.0; 3])
    };
    if field[2] != 0.0 && delivered == 0.0 {
        // Z-only tone: smallest deliverable amplitude carries the hz envelope
        delivered = if awg.floor() > 0.0 { awg.floor() } else { 1.0 };
    }
    if delivered > 0.0 {
        envelope[2] = 2.0 * field[2] / delivered;
    }
    let requested_amplitude = invert_awg_gain(awg, delivered)?;
    Ok(CompensationTone { position, field, requested_amplitude, delivered_amplitude: delivered, phase, envelope, flags })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dt: f64, span: f64) -> Vec<f64> {
        (0..=(span / dt).round() as usize).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn wrap_phase_range() {
        for a in [-7.0, -PI, 0.0, PI, 3.5 * PI] {
            let w = wrap_phase(a);
            assert!((-PI..PI).contains(&w));
            assert!(((a - w) / (2.0 * PI)).fract().abs() < 1e-12);
        }
    }

    #[test]
    fn fit_is_a_fixed_point_of_its_own_model() {
        let times = grid(0.1, 20.0);
        let data = synthetic_single_qubit([0.5, -0.3, 0.1], 15.0, &times, Some(1024), 3).unwrap();
        let fit = fit_single_qubit(&data, 0.0).unwrap();
        let again = synthetic_single_qubit([fit.h_x, fit.h_y, fit.h_z], fit.t2, &times, None, 0).unwrap();
        let refit = fit_single_qubit(&again, 0.0).unwrap();
        for (a, b) in [(fit.h_x, refit.h_x), (fit.h_y, refit.h_y), (fit.h_z, refit.h_z), (fit.t2, refit.t2)] {
            assert!((a - b).abs() < 1e-6 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn undamped_x_field_hits_t2_cap() {
        let times = grid(0.05, 5.0);
        let data = synthetic_single_qubit([1.0, 0.0, 0.0], 1e12, &times, None, 0).unwrap();
        let fit = fit_single_qubit(&data, 0.0).unwrap();
        assert!((fit.rabi - 1.0).abs() < 1e-6);
        assert!(fit.flags.iter().any(|f| f.contains("T2 at upper bound")));
    }

    #[test]
    fn under_resolved_reports_bound() {
        let times = grid(0.1, 10.0);
        let data = synthetic_single_qubit([0.05, 0.0, 0.0], 20.0, &times, None, 0).unwrap();
        let fit = fit_single_qubit(&data, 0.0).unwrap();
        assert_eq!(fit.rabi_upper_bound, Some(0.15));
        assert!((fit.t2 - 20.0).abs() < 1e-3, "{}", fit.t2);
    }

    #[test]
    fn error_report_relative_error() {
        let times = grid(0.05, 6.0);
        let data = synthetic_single_qubit([1.44, 0.0, 0.05], 31.69, &times, None, 0).unwrap();
        let fit = fit_single_qubit(&data, 0.0).unwrap();
        let report = ErrorReport::new(1.5, 0.0, 0.0, &fit);
        assert!((report.relative_amplitude_error - 0.04).abs() < 1e-6);
        assert!(report.summary().contains("amplitude"));
    }

    #[test]
    fn gain_inversion_round_trips() {
        let awg = AwgModel { amplitude_step: 0.0, gain_nonlinearity: -0.01778, phase_offset: 0.0 };
        let a = invert_awg_gain(&awg, 1.44).unwrap();
        assert!((awg.apply(a) - 1.44).abs() < 1e-12);
        assert!((a - 1.5).abs() < 1e-3);
    }

    #[test]
    fn quantized_tone_is_flagged_with_nearest_value() {
        let awg = AwgModel { amplitude_step: 0.09, ..Default::default() };
        let tone = tone_for(1, [0.0325, 0.0, 0.0], &awg).unwrap();
        assert_eq!(tone.flags, vec![CompensationFlag::BelowFloor { required: 0.065, achievable: 0.09 }]);
        assert!((tone.delivered_amplitude - 0.09).abs() < 1e-12);
    }

    #[test]
    fn pure_zx_needs_nothing() {
        let rates = RateTable::from_pairs([("ZX", -0.49)]).unwrap();
        let c = synthesize_cancellation(&rates, &rates, &AwgModel::default(), 36.0).unwrap();
        assert!(c.tones.is_empty());
        assert_eq!(c.control_hz, 0.0);
        assert_eq!(c.residual.rates, rates.rates);
    }

    #[test]
    fn two_qubit_change_rejected() {
        let rates = RateTable::from_pairs([("ZX", -0.49), ("IX", 0.4)]).unwrap();
        let target = RateTable::from_pairs([("ZX", -0.3)]).unwrap();
        assert!(matches!(synthesize_cancellation(&rates, &target, &AwgModel::default(), 36.0), Err(Error::Calibration(_))));
    }
}

//! Nonlinear least squares and spectral initialisation shared by the analysis modules.

use std::f64::consts::PI;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Root-mean-square residual.
    pub rms: f64,
    pub converged: bool,
}

struct Problem<F> {
    f: F,
    m: usize,
    p: DVector<f64>,
}

impl<F: Fn(&[f64], &mut [f64])> Problem<F> {
    fn eval(&self, p: &[f64]) -> DVector<f64> {
        let mut r = DVector::zeros(self.m);
        (self.f)(p, r.as_mut_slice());
        r
    }
}

impl<F: Fn(&[f64], &mut [f64])> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<F> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = self.eval(self.p.as_slice());
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let n = self.p.len();
        let mut jac = DMatrix::zeros(self.m, n);
        let mut p = self.p.clone();
        for k in 0..n {
            let h = 1e-6 * self.p[k].abs().max(1e-3);
            p[k] = self.p[k] + h;
            let plus = self.eval(p.as_slice());
            p[k] = self.p[k] - h;
            let minus = self.eval(p.as_slice());
            p[k] = self.p[k];
            jac.set_column(k, &((plus - minus) / (2.0 * h)));
        }
        jac.iter().all(|v| v.is_finite()).then_some(jac)
    }
}

/// Minimises Σ r_i(p)² with `residual(p, r)` filling `m` residuals.
pub fn least_squares<F: Fn(&[f64], &mut [f64])>(residual: F, m: usize, p0: &[f64]) -> Result<FitResult> {
    least_squares_limited(residual, m, p0, 400)
}

/// As [`least_squares`] with an explicit evaluation budget (LM patience).
pub fn least_squares_limited<F: Fn(&[f64], &mut [f64])>(residual: F, m: usize, p0: &[f64], patience: usize) -> Result<FitResult> {
    if m < p0.len() {
        return invalid(format!("{m} residuals cannot constrain {} parameters", p0.len()));
    }
    let problem = Problem { f: residual, m, p: DVector::from_column_slice(p0) };
    let (problem, report) = LevenbergMarquardt::new().with_patience(patience).minimize(problem);
    let r = problem.eval(problem.p.as_slice());
    let rms = (r.norm_squared() / m as f64).sqrt();
    if !rms.is_finite() {
        return Err(Error::Fit(format!("non-finite residual ({:?})", report.termination)));
    }
    Ok(FitResult { params: problem.p.iter().copied().collect(), rms, converged: report.termination.was_successful() })
}

/// Checks that `times` are strictly increasing and returns the mean spacing.
pub fn uniform_spacing(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return invalid("at least two time points required");
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("times must be strictly increasing");
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1e-12) + 1e-12) {
        return invalid("spectral analysis needs uniformly spaced times");
    }
    Ok(dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPeak {
    /// Ordinary frequency in MHz.
    pub frequency: f64,
    /// Magnitude of the (mean-subtracted, zero-padded) spectrum at the peak.
    pub magnitude: f64,
}

/// Local maxima of the zero-padded amplitude spectrum, strongest first.
pub fn spectral_peaks(times: &[f64], values: &[f64], max_peaks: usize) -> Result<Vec<SpectralPeak>> {
    if times.len() != values.len() {
        return invalid("times and values differ in length");
    }
    let dt = uniform_spacing(times)?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let len = (values.len() * 16).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mag: Vec<f64> = buf[..len / 2 + 1].iter().map(|z| z.norm()).collect();
    let df = 1.0 / (len as f64 * dt);
    let mut peaks = Vec::new();
    for k in 0..mag.len() {
        let left = if k == 0 { f64::NEG_INFINITY } else { mag[k - 1] };
        let right = if k + 1 == mag.len() { f64::NEG_INFINITY } else { mag[k + 1] };
        if mag[k] > left && mag[k] >= right && mag[k] > 0.0 {
            let shift = if k > 0 && k + 1 < mag.len() {
                let denom = mag[k - 1] - 2.0 * mag[k] + mag[k + 1];
                if denom.abs() > 0.0 { 0.5 * (mag[k - 1] - mag[k + 1]) / denom } else { 0.0 }
            } else {
                0.0
            };
            peaks.push(SpectralPeak { frequency: ((k as f64 + shift) * df).max(0.0), magnitude: mag[k] });
        }
    }
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    peaks.truncate(max_peaks);
    Ok(peaks)
}

/// Bloch vector at time `t` after precessing from (0, 0, 1) under `H = c·σ` (MHz).
pub fn precession(c: [f64; 3], t: f64) -> [f64; 3] {
    let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    if norm == 0.0 {
        return [0.0, 0.0, 1.0];
    }
    let n = [c[0] / norm, c[1] / norm, c[2] / norm];
    let theta = 4.0 * PI * norm * t;
    let (s, co) = theta.sin_cos();
    // Rodrigues rotation of ẑ about n
    [n[0] * n[2] * (1.0 - co) + n[1] * s, n[1] * n[2] * (1.0 - co) - n[0] * s, n[2] * n[2] * (1.0 - co) + co]
}

/// Precession model with contrast `amplitude` and envelope `exp(-decay·t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecessionParams {
    pub field: [f64; 3],
    pub decay: f64,
    pub amplitude: f64,
}

impl PrecessionParams {
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let r = precession(self.field, t);
        let env = self.amplitude * (-self.decay * t).exp();
        [r[0] * env, r[1] * env, r[2] * env]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecessionFit {
    pub params: PrecessionParams,
    pub rms: f64,
    /// Generalised precession frequency 2|c| times the span, in periods.
    pub periods_observed: f64,
}

/// Linear regression of `y` onto [1, cos ωt, sin ωt].
fn harmonic_projection(times: &[f64], y: &[f64], f: f64) -> [f64; 3] {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for (t, v) in times.iter().zip(y) {
        let (s, c) = (2.0 * PI * f * t).sin_cos();
        let row = nalgebra::Vector3::new(1.0, c, s);
        ata += row * row.transpose();
        atb += row * *v;
    }
    ata.try_inverse().map(|inv| inv * atb).map(|v| [v[0], v[1], v[2]]).unwrap_or([y.iter().sum::<f64>() / y.len() as f64, 0.0, 0.0])
}

/// Field guess from the precession frequency `f` (= 2|c|) and harmonic content of the data.
fn field_guess(times: &[f64], xyz: [&[f64]; 3], f: f64) -> Vec<[f64; 3]> {
    let px = harmonic_projection(times, xyz[0], f);
    let py = harmonic_projection(times, xyz[1], f);
    let pz = harmonic_projection(times, xyz[2], f);
    let nx = -py[2];
    let ny = px[2];
    let nz_sq = pz[0].max(0.0) / (pz[0].max(0.0) + pz[1].max(0.0)).max(1e-12);
    let transverse = (nx * nx + ny * ny).sqrt().max(1e-12);
    let nz_abs = nz_sq.sqrt();
    let scale_t = (1.0 - nz_sq).max(0.0).sqrt() / transverse;
    let sign = if px[0] * nx + py[0] * ny >= 0.0 { 1.0 } else { -1.0 };
    let c = f / 2.0;
    [sign, -sign]
        .iter()
        .map(|s| [c * nx * scale_t, c * ny * scale_t, c * s * nz_abs])
        .collect()
}

const FIELD_RIDGE: f64 = 0.3;
const SCREEN_KEEP: usize = 3;

/// Joint fit of X, Y, Z series to damped precession from (0, 0, 1).
///
/// `fit_decay` and `fit_amplitude` free the envelope parameters; otherwise they stay at
/// `decay0` and 1. Starts from the strongest spectral peaks of ⟨Z⟩ (and of ⟨X⟩, ⟨Y⟩).
pub fn fit_precession(times: &[f64], xyz: [&[f64]; 3], fit_decay: bool, fit_amplitude: bool, decay0: f64) -> Result<PrecessionFit> {
    let m = times.len();
    if xyz.iter().any(|s| s.len() != m) {
        return invalid("series lengths differ from the time grid");
    }
    let span = times[m - 1] - times[0];
    let mut freqs: Vec<f64> = Vec::new();
    for series in [xyz[2], xyz[0], xyz[1]] {
        for p in spectral_peaks(times, series, 2)? {
            freqs.push(p.frequency);
        }
    }
    freqs.push(0.5 / span.max(1e-12));
    freqs.sort_by(f64::total_cmp);
    freqs.dedup_by(|a, b| (*a - *b).abs() < 0.1 / span.max(1e-12));
    let data = |p: &[f64], r: &mut [f64]| {
        let params = unpack(p, fit_decay, fit_amplitude, decay0);
        for (k, &t) in times.iter().enumerate() {
            let v = params.eval(t);
            r[k] = v[0] - xyz[0][k];
            r[m + k] = v[1] - xyz[1][k];
            r[2 * m + k] = v[2] - xyz[2][k];
        }
    };
    // ridge pins directions the data cannot see; it is dropped again for the final polish
    let residual = |p: &[f64], r: &mut [f64]| {
        data(p, r);
        for i in 0..3 {
            r[3 * m + i] = FIELD_RIDGE * p[i];
        }
    };
    let mut fits: Vec<FitResult> = Vec::new();
    let mut guesses: Vec<[f64; 3]> = vec![[1e-3; 3]];
    for f in freqs {
        guesses.extend(field_guess(times, xyz, f));
    }
    {
        for guess in guesses {
            let mut p0 = guess.to_vec();
            if fit_decay {
                p0.push(decay0.max(1e-3 / span.max(1e-12)).sqrt());
            }
            if fit_amplitude {
                p0.push(1.0);
            }
            fits.push(least_squares_limited(&residual, 3 * m + 3, &p0, 15)?);
        }
    }
    // short screening runs first; only the zero start and the leaders get the full budget
    let zero = fits.remove(0);
    fits.sort_by(|a, b| a.rms.total_cmp(&b.rms));
    fits.truncate(SCREEN_KEEP);
    fits.push(zero);
    let fits: Vec<FitResult> = fits.iter().map(|f| least_squares(&residual, 3 * m + 3, &f.params)).collect::<Result<_>>()?;
    // Fields along the initial vector barely move the data, so near-ties go to the weakest field.
    let min_rms = fits.iter().map(|f| f.rms).fold(f64::INFINITY, f64::min);
    let norm = |f: &FitResult| f.params[..3].iter().map(|c| c * c).sum::<f64>();
    let tolerance = 1.0 + 10.0 / (3 * m) as f64;
    let best = fits
        .into_iter()
        .filter(|f| f.rms * f.rms <= min_rms * min_rms * tolerance + 1e-24)
        .min_by(|a, b| norm(a).total_cmp(&norm(b)))
        .ok_or_else(|| Error::Fit("no precession start converged".into()))?;
    let mut r = vec![0.0; 3 * m];
    data(&best.params, &mut r);
    let ridge_rms = (r.iter().map(|x| x * x).sum::<f64>() / (3 * m) as f64).sqrt();
    // Keep the unregularised polish only when the data support it beyond fitting noise.
    let polished = least_squares(data, 3 * m, &best.params)?;
    let keep = polished.rms * polished.rms < ridge_rms * ridge_rms * (1.0 - 1.0 / m as f64);
    let (chosen, rms) = if keep { (&polished.params, polished.rms) } else { (&best.params, ridge_rms) };
    let params = unpack(chosen, fit_decay, fit_amplitude, decay0);
    let c = params.field;
    let gen = 2.0 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    Ok(PrecessionFit { params, rms, periods_observed: gen * span })
}

// decay is parameterised as its square root to keep it non-negative
fn unpack(p: &[f64], fit_decay: bool, fit_amplitude: bool, decay0: f64) -> PrecessionParams {
    let mut k = 3;
    let decay = if fit_decay {
        k += 1;
        p[3] * p[3]
    } else {
        decay0
    };
    let amplitude = if fit_amplitude { p[k] } else { 1.0 };
    PrecessionParams { field: [p[0], p[1], p[2]], decay, amplitude }
}

/// `a·cos(2πft + φ)·exp(-t/τ) + b`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedCosine {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    /// 1/τ in 1/µs.
    pub decay: f64,
    pub offset: f64,
    pub rms: f64,
}

impl DampedCosine {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.frequency * t + self.phase).cos() * (-self.decay * t).exp() + self.offset
    }
}

/// Fits a single damped cosine, starting from the strongest spectral peaks.
pub fn fit_damped_cosine(times: &[f64], values: &[f64]) -> Result<DampedCosine> {
    let m = times.len();
    if values.len() != m || m < 6 {
        return invalid("damped cosine fit needs at least 6 matching points");
    }
    let span = times[m - 1] - times[0];
    let peaks = spectral_peaks(times, values, 3)?;
    let residual = |p: &[f64], r: &mut [f64]| {
        for (k, &t) in times.iter().enumerate() {
            r[k] = p[0] * (2.0 * PI * p[1] * t + p[2]).cos() * (-p[3] * p[3] * t).exp() + p[4] - values[k];
        }
    };
    let mut best: Option<FitResult> = None;
    for peak in peaks {
        let h = harmonic_projection(times, values, peak.frequency);
        let amp = h[1].hypot(h[2]).max(1e-6);
        let phase = (-h[2]).atan2(h[1]);
        for decay in [0.1 / span, 1.0 / span] {
            let fit = least_squares(residual, m, &[amp, peak.frequency, phase, decay.sqrt(), h[0]])?;
            if best.as_ref().is_none_or(|b| fit.rms < b.rms) {
                best = Some(fit);
            }
        }
    }
    let p = best.ok_or_else(|| Error::Fit("no spectral peak to start from".into()))?;
    let (mut a, mut f, mut ph) = (p.params[0], p.params[1], p.params[2]);
    if f < 0.0 {
        f = -f;
        ph = -ph;
    }
    if a < 0.0 {
        a = -a;
        ph += PI;
    }
    ph = (ph + PI).rem_euclid(2.0 * PI) - PI;
    Ok(DampedCosine { amplitude: a, frequency: f, phase: ph, decay: p.params[3] * p.params[3], offset: p.params[4], rms: p.rms })
}

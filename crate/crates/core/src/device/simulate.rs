use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::{DeviceConfig, DriveModel};
use super::hamiltonian::{cross_resonance_rates, embed_pair_generator};
use super::schedule::{DriveSample, PulseSchedule};
use crate::error::{invalid, Error, Result};
use crate::quantum::{expm_hermitian, hermitian_eigen, pauli_matrix, DensityMatrix, Operator, PauliLabel, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lab,
    #[default]
    Rotating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOptions {
    #[serde(default)]
    pub frame: Frame,
    /// Drop counter-rotating terms in the rotating frame (pulse model only).
    #[serde(default = "yes")]
    pub rwa: bool,
    /// Split steps automatically when the phase bound is violated.
    #[serde(default = "yes")]
    pub refine: bool,
    /// Largest phase in radians one propagation step may accumulate.
    #[serde(default = "default_max_phase")]
    pub max_step_phase: f64,
}

fn yes() -> bool {
    true
}

fn default_max_phase() -> f64 {
    0.1
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { frame: Frame::Rotating, rwa: true, refine: true, max_step_phase: default_max_phase() }
    }
}

impl SimOptions {
    pub fn lab() -> Self {
        SimOptions { frame: Frame::Lab, rwa: false, ..Self::default() }
    }
}

struct Site {
    x: Operator,
    y: Operator,
    z: Operator,
}

struct Damping {
    mask: usize,
    t1: Option<f64>,
    t_phi: Option<f64>,
}

struct Model<'a> {
    cfg: &'a DeviceConfig,
    schedule: &'a PulseSchedule,
    opts: SimOptions,
    n: usize,
    dim: usize,
    sites: Vec<Site>,
    stat: Operator,
    damping: Vec<Damping>,
    drive_freq: f64,
    idle_freq: f64,
}

fn site_label(total: usize, k: usize, p: char) -> PauliLabel {
    let s: String = (0..total).map(|i| if i == k { p } else { 'I' }).collect();
    s.parse().expect("valid label")
}

impl<'a> Model<'a> {
    fn new(cfg: &'a DeviceConfig, schedule: &'a PulseSchedule, opts: SimOptions) -> Result<Self> {
        let n = cfg.num_qubits();
        let total = n + cfg.tls.len();
        let dim = 1usize << total;
        let sites: Vec<Site> = (0..total)
            .map(|k| Site {
                x: pauli_matrix(&site_label(total, k, 'X')),
                y: pauli_matrix(&site_label(total, k, 'Y')),
                z: pauli_matrix(&site_label(total, k, 'Z')),
            })
            .collect();
        let pulse = cfg.drive_model == DriveModel::Pulse;
        if !pulse && opts.frame == Frame::Lab {
            return invalid("the effective drive model is defined in the rotating frame only");
        }
        let mut stat = Operator::zeros(dim);
        for (i, q) in cfg.qubits.iter().enumerate() {
            let w = if opts.frame == Frame::Lab { q.omega + q.frequency_offset } else { q.frequency_offset };
            stat = stat + sites[i].z.scale(w / 2.0);
        }
        for (k, t) in cfg.tls.iter().enumerate() {
            stat = stat + (&sites[t.qubit].z * &sites[n + k].z).scale(t.chi / 2.0);
        }
        if pulse && opts.frame == Frame::Lab {
            for c in &cfg.couplings {
                stat = stat + (&sites[c.a].y * &sites[c.b].y).scale(c.j);
            }
        }
        let mut damping = Vec::new();
        for (i, q) in cfg.qubits.iter().enumerate() {
            let t_phi = match (q.t1, q.t2) {
                (_, None) => None,
                (None, Some(t2)) => Some(t2),
                (Some(t1), Some(t2)) => {
                    let rate = 1.0 / t2 - 1.0 / (2.0 * t1);
                    (rate > 0.0).then(|| 1.0 / rate)
                }
            };
            if q.t1.is_some() || t_phi.is_some() {
                damping.push(Damping { mask: 1 << (total - 1 - i), t1: q.t1, t_phi });
            }
        }
        for (k, t) in cfg.tls.iter().enumerate() {
            if t.lifetime.is_some() {
                damping.push(Damping { mask: 1 << (total - 1 - (n + k)), t1: t.lifetime, t_phi: None });
            }
        }
        let (drive_freq, idle_freq) = Self::frequencies(cfg, schedule, opts);
        Ok(Model { cfg, schedule, opts, n, dim, sites, stat, damping, drive_freq, idle_freq })
    }

    /// Fastest explicit time dependence during drives and while idle, MHz.
    fn frequencies(cfg: &DeviceConfig, schedule: &PulseSchedule, opts: SimOptions) -> (f64, f64) {
        let pulse = cfg.drive_model == DriveModel::Pulse;
        let omega = |q: usize| cfg.qubits[q].omega;
        let mut drive = 0.0f64;
        let mut idle = 0.0f64;
        for ch in &schedule.channels {
            for seg in &ch.segments {
                let Some(target) = seg.carrier_target else { continue };
                let carrier = omega(target) + seg.detuning;
                let f = match (pulse, opts.frame, opts.rwa) {
                    (false, _, _) => {
                        if target == ch.qubit {
                            seg.detuning.abs()
                        } else {
                            0.0
                        }
                    }
                    (true, Frame::Lab, _) => carrier.abs(),
                    (true, Frame::Rotating, true) => (carrier - omega(ch.qubit)).abs(),
                    (true, Frame::Rotating, false) => carrier.abs() + omega(ch.qubit).abs(),
                };
                drive = drive.max(f);
            }
        }
        if pulse && opts.frame == Frame::Rotating {
            for c in &cfg.couplings {
                let f = if opts.rwa { (omega(c.a) - omega(c.b)).abs() } else { omega(c.a).abs() + omega(c.b).abs() };
                idle = idle.max(f);
            }
        }
        (drive.max(idle), idle)
    }

    fn awg(&self, s: &DriveSample) -> (f64, C64) {
        let awg = &self.cfg.awg;
        let amp = awg.apply(s.amplitude) * s.ramp;
        let d = C64::new(s.h[0], s.h[1]) * C64::from_polar(1.0, s.phase + awg.phase_offset);
        (amp, d)
    }

    fn generator(&self, t: f64) -> Result<Operator> {
        let mut h = self.stat.clone();
        let pulse = self.cfg.drive_model == DriveModel::Pulse;
        let two_pi = 2.0 * PI;
        if pulse && self.opts.frame == Frame::Rotating {
            for c in &self.cfg.couplings {
                let (sa, sb) = (&self.sites[c.a], &self.sites[c.b]);
                let (ta, tb) = (two_pi * self.cfg.qubits[c.a].omega * t, two_pi * self.cfg.qubits[c.b].omega * t);
                if self.opts.rwa {
                    let d = ta - tb;
                    let sym = &sa.x * &sb.x + (&sa.y * &sb.y);
                    let anti = &sa.x * &sb.y - (&sa.y * &sb.x);
                    h = h + sym.scale(c.j / 2.0 * d.cos()) + anti.scale(c.j / 2.0 * d.sin());
                } else {
                    let ya = sa.y.scale(ta.cos()) + sa.x.scale(ta.sin());
                    let yb = sb.y.scale(tb.cos()) + sb.x.scale(tb.sin());
                    h = h + (&ya * &yb).scale(c.j);
                }
            }
        }
        for ch in &self.schedule.channels {
            let q = ch.qubit;
            let Some(s) = self.schedule.sample(q, t) else { continue };
            let (amp, d) = self.awg(&s);
            if amp == 0.0 {
                continue;
            }
            let site = &self.sites[q];
            if s.h[2] != 0.0 {
                h = h + site.z.scale(amp / 2.0 * s.h[2]);
            }
            if d.norm() == 0.0 {
                continue;
            }
            if !pulse {
                if s.carrier_target == q {
                    let e = d * C64::from_polar(1.0, two_pi * s.detuning * t);
                    h = h + site.x.scale(amp / 2.0 * e.re) + site.y.scale(amp / 2.0 * e.im);
                } else {
                    let table = cross_resonance_rates(self.cfg, q, s.carrier_target, amp * d.norm(), d.arg())?;
                    let g = embed_pair_generator(&table, q, s.carrier_target, self.n)?;
                    h = h + self.extend(&g);
                }
                continue;
            }
            let carrier = two_pi * (self.cfg.qubits[s.carrier_target].omega + s.detuning) * t;
            let theta = two_pi * self.cfg.qubits[q].omega * t;
            match (self.opts.frame, self.opts.rwa) {
                (Frame::Lab, _) => {
                    let drive = amp * (C64::from_polar(1.0, carrier) * d).re;
                    h = h + site.x.scale(drive);
                }
                (Frame::Rotating, false) => {
                    let drive = amp * (C64::from_polar(1.0, carrier) * d).re;
                    h = h + site.x.scale(drive * theta.cos()) - site.y.scale(drive * theta.sin());
                }
                (Frame::Rotating, true) => {
                    let e = d * C64::from_polar(1.0, carrier - theta);
                    h = h + site.x.scale(amp / 2.0 * e.re) + site.y.scale(amp / 2.0 * e.im);
                }
            }
        }
        Ok(h)
    }

    /// Extends a qubit-register operator by identity on the TLS sites.
    fn extend(&self, op: &Operator) -> Operator {
        let extra = self.dim / op.dim();
        if extra == 1 {
            op.clone()
        } else {
            op.kron(&Operator::identity(extra))
        }
    }

    fn apply_noise(&self, rho: &mut DMatrix<C64>, dt: f64) {
        for d in &self.damping {
            if let Some(t1) = d.t1 {
                let gamma = 1.0 - (-dt / t1).exp();
                let keep = (1.0 - gamma).sqrt();
                let old = rho.clone();
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        let bi = i & d.mask != 0;
                        let bj = j & d.mask != 0;
                        let mut v = old[(i, j)];
                        if bi {
                            v *= keep;
                        }
                        if bj {
                            v *= keep;
                        }
                        if !bi && !bj {
                            v += old[(i | d.mask, j | d.mask)] * gamma;
                        }
                        rho[(i, j)] = v;
                    }
                }
            }
            if let Some(tp) = d.t_phi {
                let lambda = (-dt / tp).exp();
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        if (i ^ j) & d.mask != 0 {
                            rho[(i, j)] *= lambda;
                        }
                    }
                }
            }
        }
    }

    fn initial(&self, init: &DensityMatrix) -> Result<DMatrix<C64>> {
        if init.dim() != 1 << self.n {
            return invalid(format!("initial state has dimension {}, device needs {}", init.dim(), 1 << self.n));
        }
        let mut rho = init.0.clone();
        for t in &self.cfg.tls {
            let tls = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                C64::new(1.0 - t.p_excited, 0.0),
                C64::new(t.p_excited, 0.0),
            ]));
            rho = rho.kronecker(&tls);
        }
        Ok(rho)
    }

    fn reduce(&self, rho: &DMatrix<C64>) -> Result<DensityMatrix> {
        let full = DensityMatrix(rho.clone());
        if self.cfg.tls.is_empty() {
            return Ok(full);
        }
        let keep: Vec<usize> = (0..self.n).collect();
        full.partial_trace(&keep)
    }
}

struct StepCache {
    h: Operator,
    dt: f64,
    u: Operator,
    radius: Option<f64>,
}

fn spectral_radius(h: &Operator) -> f64 {
    let (vals, _) = hermitian_eigen(&h.traceless());
    vals.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Sample-bin edges and the extra points, sorted and deduplicated. Idle stretches are one
/// step; `Model::step` subdivides them by accumulated phase.
fn timeline(schedule: &PulseSchedule, t_end: f64, extra: &[f64]) -> Vec<f64> {
    let mut points = schedule.breakpoints();
    points.extend_from_slice(extra);
    points.push(0.0);
    points.push(t_end);
    points.retain(|p| *p <= t_end);
    points.sort_by(f64::total_cmp);
    points.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    points
}

impl Model<'_> {
    /// Propagates over `[a, b]`, calling `apply(U, dt)` for every substep in order.
    fn step(&self, a: f64, b: f64, cache: &mut Option<StepCache>, mut apply: impl FnMut(&Operator, f64)) -> Result<()> {
        let span = b - a;
        let mid = 0.5 * (a + b);
        let h_mid = self.generator(mid)?;
        let f = if mid < self.schedule.drive_duration() { self.drive_freq } else { self.idle_freq };
        let radius = match cache {
            Some(StepCache { h, radius: Some(r), .. }) if *h == h_mid => *r,
            _ => spectral_radius(&h_mid),
        };
        let phase = 2.0 * PI * span * (radius + f);
        let mut m = 1usize;
        if phase > self.opts.max_step_phase {
            m = (phase / self.opts.max_step_phase).ceil() as usize;
            if !self.opts.refine {
                return Err(Error::StepTooCoarse { dt: span, phase, required_dt: span / m as f64 });
            }
        }
        // Without explicit time dependence inside the step the midpoint generator is exact;
        // substeps are then only needed to interleave noise.
        let constant = f == 0.0;
        if constant && self.damping.is_empty() {
            m = 1;
        }
        let sub = span / m as f64;
        for s in 0..m {
            let h = if m == 1 || constant { h_mid.clone() } else { self.generator(a + (s as f64 + 0.5) * sub)? };
            let reuse = matches!(cache, Some(c) if (c.dt - sub).abs() <= 1e-12 * sub && c.h == h);
            if !reuse {
                let u = expm_hermitian(&h, 2.0 * PI * sub)?;
                let radius = (m == 1).then_some(radius);
                *cache = Some(StepCache { h, dt: sub, u, radius });
            }
            apply(&cache.as_ref().expect("cache filled").u, sub);
        }
        Ok(())
    }
}

/// Evolves `init` (qubit register only) under `schedule` and returns the reduced qubit
/// state at each of the sorted `times`. Times past the schedule continue with idle evolution.
pub fn simulate_schedule(
    cfg: &DeviceConfig,
    schedule: &PulseSchedule,
    init: &DensityMatrix,
    opts: &SimOptions,
    times: &[f64],
) -> Result<Vec<DensityMatrix>> {
    cfg.validate()?;
    schedule.validate(cfg.num_qubits())?;
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return invalid("times must be finite and non-negative");
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return invalid("times must be sorted");
    }
    let model = Model::new(cfg, schedule, *opts)?;
    let mut rho = model.initial(init)?;
    let Some(&t_end) = times.last() else { return Ok(Vec::new()) };
    let points = timeline(schedule, t_end, times);

    let mut out = Vec::with_capacity(times.len());
    let mut next = 0usize;
    let mut cache = None;
    let mut record = |rho: &DMatrix<C64>, t: f64| -> Result<()> {
        while next < times.len() && (times[next] - t).abs() < 1e-12 {
            out.push(model.reduce(rho)?);
            next += 1;
        }
        Ok(())
    };
    record(&rho, 0.0)?;
    for w in points.windows(2) {
        model.step(w[0], w[1], &mut cache, |u, dt| {
            rho = u.conjugate(&rho);
            model.apply_noise(&mut rho, dt);
        })?;
        rho = (&rho + &rho.adjoint()) * C64::new(0.5, 0.0);
        record(&rho, w[1])?;
    }
    Ok(out)
}

/// Noiseless propagator of the qubit register over the full schedule. The device must have no TLS.
pub fn schedule_unitary(cfg: &DeviceConfig, schedule: &PulseSchedule, opts: &SimOptions) -> Result<Operator> {
    if !cfg.tls.is_empty() {
        return invalid("schedule_unitary needs a device without TLS");
    }
    schedule.validate(cfg.num_qubits())?;
    let model = Model::new(cfg, schedule, *opts)?;
    let mut u = Operator::identity(1 << cfg.num_qubits());
    let mut cache = None;
    for w in timeline(schedule, schedule.duration(), &[]).windows(2) {
        model.step(w[0], w[1], &mut cache, |step, _| u = step * &u)?;
    }
    Ok(u)
}

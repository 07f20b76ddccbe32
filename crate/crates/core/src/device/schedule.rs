use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Piecewise-constant envelope component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Envelope {
    Constant(f64),
    /// One value per `dt_sample` bin.
    Samples(Vec<f64>),
}

impl Default for Envelope {
    fn default() -> Self {
        Envelope::Constant(0.0)
    }
}

impl Envelope {
    fn at(&self, bin: usize) -> f64 {
        match self {
            Envelope::Constant(v) => *v,
            Envelope::Samples(s) => s.get(bin).copied().unwrap_or(0.0),
        }
    }

    fn max_abs(&self) -> f64 {
        match self {
            Envelope::Constant(v) => v.abs(),
            Envelope::Samples(s) => s.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

/// One drive segment on a qubit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSegment {
    pub duration: f64,
    /// Carrier frequency is ω of this qubit plus `detuning`. `None` leaves the qubit idle.
    #[serde(default)]
    pub carrier_target: Option<usize>,
    #[serde(default)]
    pub detuning: f64,
    /// Requested amplitude Ω in MHz.
    #[serde(default)]
    pub amplitude: f64,
    /// Extra phase of the complex envelope, radians.
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub hx: Envelope,
    #[serde(default)]
    pub hy: Envelope,
    #[serde(default)]
    pub hz: Envelope,
    #[serde(default)]
    pub ramp_time: f64,
}

impl DriveSegment {
    pub fn idle(duration: f64) -> Self {
        DriveSegment {
            duration,
            carrier_target: None,
            detuning: 0.0,
            amplitude: 0.0,
            phase: 0.0,
            hx: Envelope::default(),
            hy: Envelope::default(),
            hz: Envelope::default(),
            ramp_time: 0.0,
        }
    }

    /// Constant drive with envelope `h = (hx, hy, hz)` on the carrier of `carrier_target`.
    pub fn constant(duration: f64, carrier_target: usize, amplitude: f64, phase: f64, h: [f64; 3]) -> Self {
        DriveSegment {
            carrier_target: Some(carrier_target),
            amplitude,
            phase,
            hx: Envelope::Constant(h[0]),
            hy: Envelope::Constant(h[1]),
            hz: Envelope::Constant(h[2]),
            ..Self::idle(duration)
        }
    }

    /// No ramp and no sampled envelope.
    pub fn is_constant(&self) -> bool {
        self.ramp_time <= 0.0 && [&self.hx, &self.hy, &self.hz].iter().all(|e| matches!(e, Envelope::Constant(_)))
    }

    /// Cosine ramp factor at time `t` into the segment.
    pub fn ramp(&self, t: f64) -> f64 {
        let r = self.ramp_time;
        if r <= 0.0 {
            return 1.0;
        }
        let edge = t.min(self.duration - t).max(0.0);
        if edge >= r {
            1.0
        } else {
            0.5 * (1.0 - (std::f64::consts::PI * edge / r).cos())
        }
    }
}

/// Instantaneous drive on one qubit, after ramping but before the AWG model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSample {
    pub carrier_target: usize,
    pub detuning: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub ramp: f64,
    pub h: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    pub qubit: usize,
    pub segments: Vec<DriveSegment>,
}

impl Channel {
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

/// Time-dependent drive program. Idle qubits need no channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSchedule {
    #[serde(default = "default_dt")]
    pub dt_sample: f64,
    #[serde(default)]
    pub channels: Vec<Channel>,
    /// Idle time appended after the drives.
    #[serde(default)]
    pub trailing_idle: f64,
}

fn default_dt() -> f64 {
    0.01
}

impl Default for PulseSchedule {
    fn default() -> Self {
        PulseSchedule { dt_sample: default_dt(), channels: Vec::new(), trailing_idle: 0.0 }
    }
}

const GRID_TOL: f64 = 1e-9;

impl PulseSchedule {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn idle(duration: f64) -> Self {
        PulseSchedule { trailing_idle: duration, ..Self::default() }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt_sample = dt;
        self
    }

    pub fn add(mut self, qubit: usize, segment: DriveSegment) -> Self {
        match self.channels.iter_mut().find(|c| c.qubit == qubit) {
            Some(c) => c.segments.push(segment),
            None => self.channels.push(Channel { qubit, segments: vec![segment] }),
        }
        self
    }

    /// Duration of the driven part.
    pub fn drive_duration(&self) -> f64 {
        self.channels.iter().map(Channel::duration).fold(0.0, f64::max)
    }

    pub fn duration(&self) -> f64 {
        self.drive_duration() + self.trailing_idle
    }

    pub fn driven_qubits(&self) -> Vec<usize> {
        self.channels.iter().map(|c| c.qubit).collect()
    }

    /// Checks invariants against a register of `n` qubits.
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.dt_sample > 0.0 && self.dt_sample.is_finite()) {
            return invalid("dt_sample must be positive");
        }
        if self.trailing_idle < 0.0 {
            return invalid("trailing idle must be non-negative");
        }
        let total = self.drive_duration();
        let mut seen = Vec::new();
        for ch in &self.channels {
            if ch.qubit >= n {
                return invalid(format!("channel on missing qubit {}", ch.qubit));
            }
            if seen.contains(&ch.qubit) {
                return invalid(format!("duplicate channel for qubit {}", ch.qubit));
            }
            seen.push(ch.qubit);
            if (ch.duration() - total).abs() > GRID_TOL {
                return invalid(format!(
                    "channel {} lasts {} µs but the schedule lasts {total} µs",
                    ch.qubit,
                    ch.duration()
                ));
            }
            for seg in &ch.segments {
                if seg.duration < 0.0 || seg.amplitude < 0.0 || seg.ramp_time < 0.0 {
                    return invalid("segment durations, amplitudes and ramps must be non-negative");
                }
                let bins = seg.duration / self.dt_sample;
                if (bins - bins.round()).abs() > 1e-6 {
                    return invalid(format!("dt_sample {} does not divide segment duration {}", self.dt_sample, seg.duration));
                }
                if 2.0 * seg.ramp_time > seg.duration + GRID_TOL {
                    return invalid("ramps longer than half the segment");
                }
                if let Some(t) = seg.carrier_target {
                    if t >= n {
                        return invalid(format!("carrier references missing qubit {t}"));
                    }
                }
                for (name, env) in [("hx", &seg.hx), ("hy", &seg.hy), ("hz", &seg.hz)] {
                    if let Envelope::Samples(s) = env {
                        if s.len() != bins.round() as usize {
                            return invalid(format!("{name} has {} samples, expected {}", s.len(), bins.round()));
                        }
                    }
                    if env.max_abs() > 1.0 + 1e-12 {
                        return invalid(format!("{name} envelope exceeds 1"));
                    }
                }
                let hxy = match (&seg.hx, &seg.hy) {
                    (Envelope::Constant(x), Envelope::Constant(y)) => x.hypot(*y),
                    _ => (0..bins.round() as usize).map(|k| seg.hx.at(k).hypot(seg.hy.at(k))).fold(0.0, f64::max),
                };
                if hxy > 1.0 + 1e-12 {
                    return invalid("|hx + i hy| exceeds 1");
                }
            }
        }
        Ok(())
    }

    /// Drive on `qubit` at time `t`, envelope taken at the midpoint of its sample bin.
    pub fn sample(&self, qubit: usize, t: f64) -> Option<DriveSample> {
        let ch = self.channels.iter().find(|c| c.qubit == qubit)?;
        let mut start = 0.0;
        for seg in &ch.segments {
            let end = start + seg.duration;
            if t >= start && t < end {
                let target = seg.carrier_target?;
                let local = t - start;
                let bin = ((local / self.dt_sample).floor() as usize).min(((seg.duration / self.dt_sample).round() as usize).max(1) - 1);
                let mid = (bin as f64 + 0.5) * self.dt_sample;
                return Some(DriveSample {
                    carrier_target: target,
                    detuning: seg.detuning,
                    amplitude: seg.amplitude,
                    phase: seg.phase,
                    ramp: seg.ramp(mid.min(seg.duration)),
                    h: [seg.hx.at(bin), seg.hy.at(bin), seg.hz.at(bin)],
                });
            }
            start = end;
        }
        None
    }

    /// Sample-bin boundaries of the driven part, including 0 and the drive end.
    /// Segments with constant envelopes and no ramp contribute only their edges.
    pub fn breakpoints(&self) -> Vec<f64> {
        let total = self.drive_duration();
        if self.channels.iter().all(|c| c.segments.iter().all(DriveSegment::is_constant)) {
            let mut edges = vec![0.0, total];
            for ch in &self.channels {
                let mut start = 0.0;
                for seg in &ch.segments {
                    start += seg.duration;
                    edges.push(start.min(total));
                }
            }
            edges.sort_by(f64::total_cmp);
            edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            return edges;
        }
        let bins = (total / self.dt_sample).round() as usize;
        (0..=bins).map(|k| (k as f64 * self.dt_sample).min(total)).collect()
    }
}

use std::fmt;
use std::path::{Path, PathBuf};

use ffsim::device::{DeviceConfig, Prep, PulseSchedule, SimOptions};
use ffsim::process_tomography::BranchOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Qpt,
    Additivity,
    HamTomog,
    CalibratePhase,
    LowAmp,
    DelayScan,
    PurityScan,
}

impl Experiment {
    /// Name of the parameter section, same as the experiment name.
    pub fn section(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Qpt => "qpt",
            Experiment::Additivity => "additivity",
            Experiment::HamTomog => "ham-tomog",
            Experiment::CalibratePhase => "calibrate-phase",
            Experiment::LowAmp => "low-amp",
            Experiment::DelayScan => "delay-scan",
            Experiment::PurityScan => "purity-scan",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.section())
    }
}

/// Explicit list of points or an inclusive `start..=stop` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range(RangeSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    #[serde(default)]
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn range(start: f64, stop: f64, step: f64) -> Self {
        Grid::Range(RangeSpec { start, stop, step })
    }

    pub fn points(&self) -> Result<Vec<f64>, String> {
        match self {
            Grid::List(v) => Ok(v.clone()),
            Grid::Range(r) => {
                if !(r.step > 0.0) || r.stop < r.start {
                    return Err(format!("bad range start {} stop {} step {}", r.start, r.stop, r.step));
                }
                let n = ((r.stop - r.start) / r.step + 1e-9).floor() as usize;
                Ok((0..=n).map(|k| r.start + k as f64 * r.step).collect())
            }
        }
    }
}

fn default_shots() -> u64 {
    4096
}

fn default_omega() -> f64 {
    36.0
}

fn one() -> usize {
    1
}

fn cr_durations() -> Grid {
    Grid::range(0.05, 0.4, 0.05)
}

fn rabi_times() -> Grid {
    Grid::range(0.0, 8.0, 0.04)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    #[serde(default)]
    pub schedule: PulseSchedule,
    /// One entry per device qubit; all `Zero` when empty.
    #[serde(default)]
    pub prep: Vec<Prep>,
    #[serde(default = "simulate_times")]
    pub times: Grid,
    #[serde(default)]
    pub options: SimOptions,
}

fn simulate_times() -> Grid {
    Grid::range(0.0, 1.0, 0.01)
}

impl Default for SimulateParams {
    fn default() -> Self {
        SimulateParams { schedule: PulseSchedule::empty(), prep: Vec::new(), times: simulate_times(), options: SimOptions::default() }
    }
}

/// Cross-resonance drive of `control` at the frequency of `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrDrive {
    pub control: usize,
    pub target: usize,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QptParams {
    #[serde(default = "pair")]
    pub qubits: Vec<usize>,
    #[serde(default = "default_drives")]
    pub drives: Vec<CrDrive>,
    #[serde(default = "cr_durations")]
    pub durations: Grid,
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default)]
    pub branch: BranchOptions,
}

fn pair() -> Vec<usize> {
    vec![0, 1]
}

fn default_drives() -> Vec<CrDrive> {
    vec![CrDrive { control: 0, target: 1, omega: default_omega(), phase: 0.0 }]
}

impl Default for QptParams {
    fn default() -> Self {
        QptParams { qubits: pair(), drives: default_drives(), durations: cr_durations(), shots: default_shots(), branch: BranchOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditivityParams {
    #[serde(default = "chain3")]
    pub qubits: [usize; 3],
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "cr_durations")]
    pub durations: Grid,
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default = "display_threshold")]
    pub display_threshold: f64,
}

fn chain3() -> [usize; 3] {
    [0, 1, 2]
}

fn display_threshold() -> f64 {
    0.2
}

impl Default for AdditivityParams {
    fn default() -> Self {
        AdditivityParams {
            qubits: chain3(),
            omega: default_omega(),
            phase: 0.0,
            durations: cr_durations(),
            shots: default_shots(),
            display_threshold: display_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamTomogParams {
    #[serde(default)]
    pub control: usize,
    #[serde(default = "one")]
    pub target: usize,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "rabi_times")]
    pub times: Grid,
    #[serde(default = "default_shots")]
    pub shots: u64,
}

impl Default for HamTomogParams {
    fn default() -> Self {
        HamTomogParams { control: 0, target: 1, omega: default_omega(), phase: 0.0, times: rabi_times(), shots: default_shots() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibratePhaseParams {
    #[serde(default)]
    pub control: usize,
    #[serde(default = "one")]
    pub target: usize,
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// |c_ZY| in MHz accepted as zero.
    #[serde(default = "phase_tolerance")]
    pub tolerance: f64,
    #[serde(default = "phase_times")]
    pub times: Grid,
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default = "phase_grid")]
    pub grid: usize,
    #[serde(default = "max_calls")]
    pub max_calls: usize,
}

fn phase_tolerance() -> f64 {
    0.01
}

fn phase_times() -> Grid {
    Grid::range(0.0, 6.0, 0.04)
}

fn phase_grid() -> usize {
    8
}

fn max_calls() -> usize {
    20
}

impl Default for CalibratePhaseParams {
    fn default() -> Self {
        CalibratePhaseParams {
            control: 0,
            target: 1,
            omega: default_omega(),
            tolerance: phase_tolerance(),
            times: phase_times(),
            shots: default_shots(),
            grid: phase_grid(),
            max_calls: max_calls(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowAmpParams {
    #[serde(default)]
    pub qubit: usize,
    /// Requested resonant amplitude, MHz.
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "rabi_times")]
    pub times: Grid,
    #[serde(default = "low_amp_shots")]
    pub shots: u64,
}

fn low_amp_shots() -> u64 {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayScanParams {
    #[serde(default)]
    pub qubit: usize,
    #[serde(default = "basis_x")]
    pub basis: String,
    #[serde(default = "plus")]
    pub prep: Prep,
    #[serde(default = "delay_grid")]
    pub delays: Grid,
    #[serde(default = "low_amp_shots")]
    pub shots: u64,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Hours between repetitions.
    #[serde(default = "interval")]
    pub interval: f64,
    #[serde(default = "yes")]
    pub fit: bool,
}

fn basis_x() -> String {
    "X".into()
}

fn plus() -> Prep {
    Prep::Plus
}

fn delay_grid() -> Grid {
    Grid::range(0.0, 60.0, 0.5)
}

fn interval() -> f64 {
    0.06
}

fn yes() -> bool {
    true
}

impl Default for DelayScanParams {
    fn default() -> Self {
        DelayScanParams {
            qubit: 0,
            basis: basis_x(),
            prep: plus(),
            delays: delay_grid(),
            shots: low_amp_shots(),
            repetitions: 1,
            interval: interval(),
            fit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PurityScanParams {
    #[serde(default)]
    pub qubit: usize,
    #[serde(default = "purity_grid")]
    pub delays: Grid,
    #[serde(default = "default_shots")]
    pub shots: u64,
    /// Defaults to a shot-noise based threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_prominence: Option<f64>,
}

fn purity_grid() -> Grid {
    Grid::range(0.0, 45.0, 0.25)
}

impl Default for PurityScanParams {
    fn default() -> Self {
        PurityScanParams { qubit: 0, delays: purity_grid(), shots: default_shots(), min_prominence: None }
    }
}

/// A run description. Only the section named by `experiment` may be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Result directory; not part of the recorded config.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
    pub device: DeviceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qpt: Option<QptParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub additivity: Option<AdditivityParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ham_tomog: Option<HamTomogParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate_phase: Option<CalibratePhaseParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_amp: Option<LowAmpParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_scan: Option<DelayScanParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purity_scan: Option<PurityScanParams>,
}

/// Failure to load a config, with a position when it came from the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        ConfigError { message: message.into(), line: None, column: None }
    }

    fn from_toml(e: &toml::de::Error, text: &str) -> Self {
        let (line, column) = match e.span() {
            Some(span) => {
                let (l, c) = line_column(text, span.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        ConfigError { message: e.message().to_string(), line, column }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

/// 1-based line and column (in characters) of a byte offset.
pub fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let start = before.rfind('\n').map_or(0, |i| i + 1);
    (line, before[start..].chars().count() + 1)
}

/// Command-line replacements applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub output: Option<PathBuf>,
    /// Dotted key and TOML value (bare words are taken as strings).
    pub set: Vec<(String, String)>,
}

pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in `{s}`"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| ConfigError::new(format!("override `{key}`: `{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    #[cfg(test)]
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::from_toml(&e, text))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_with(&text, overrides)
    }

    /// Parses `text` strictly, then reapplies the overrides and parses again.
    pub fn parse_with(text: &str, overrides: &Overrides) -> Result<Self, ConfigError> {
        let base: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::from_toml(&e, text))?;
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::from_toml(&e, text))?;
        for (k, v) in &overrides.set {
            set_path(&mut table, k, parse_value(v))?;
        }
        if let Some(seed) = overrides.seed {
            table.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        if let Some(shots) = overrides.shots {
            if base.experiment == Experiment::Simulate {
                return Err(ConfigError::new("--shots: simulate has no shots"));
            }
            set_path(&mut table, &format!("{}.shots", base.experiment.section()), toml::Value::Integer(shots as i64))?;
        }
        let mut cfg: ExperimentConfig =
            table.try_into().map_err(|e: toml::de::Error| ConfigError::new(format!("after overrides: {}", e.message())))?;
        if let Some(out) = &overrides.output {
            cfg.output = Some(out.clone());
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn present_sections(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let flags = [
            ("simulate", self.simulate.is_some()),
            ("qpt", self.qpt.is_some()),
            ("additivity", self.additivity.is_some()),
            ("ham-tomog", self.ham_tomog.is_some()),
            ("calibrate-phase", self.calibrate_phase.is_some()),
            ("low-amp", self.low_amp.is_some()),
            ("delay-scan", self.delay_scan.is_some()),
            ("purity-scan", self.purity_scan.is_some()),
        ];
        for (name, present) in flags {
            if present {
                out.push(name);
            }
        }
        out
    }

    fn check(&self) -> Result<(), ConfigError> {
        let own = self.experiment.section();
        if let Some(other) = self.present_sections().into_iter().find(|s| *s != own) {
            return Err(ConfigError::new(format!("section [{other}] does not belong to experiment {own}")));
        }
        if self.experiment == Experiment::LowAmp && self.low_amp.is_none() {
            return Err(ConfigError::new("low-amp needs a [low-amp] section with `amplitude`"));
        }
        if self.stochastic() && self.seed.is_none() {
            return Err(ConfigError::new(format!("{own} samples shots; `seed` is mandatory")));
        }
        Ok(())
    }

    /// Whether any step draws random numbers.
    pub fn stochastic(&self) -> bool {
        let shots = match self.experiment {
            Experiment::Simulate => 0,
            Experiment::Qpt => self.qpt().shots,
            Experiment::Additivity => self.additivity().shots,
            Experiment::HamTomog => self.ham_tomog().shots,
            Experiment::CalibratePhase => self.calibrate_phase().shots,
            Experiment::LowAmp => self.low_amp.as_ref().map_or(0, |p| p.shots),
            Experiment::DelayScan => self.delay_scan().shots,
            Experiment::PurityScan => self.purity_scan().shots,
        };
        shots > 0 || (self.experiment == Experiment::DelayScan && self.device.tls_drift.is_some())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Canonical TOML of everything except the output directory.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn simulate(&self) -> SimulateParams {
        self.simulate.clone().unwrap_or_default()
    }

    pub fn qpt(&self) -> QptParams {
        self.qpt.clone().unwrap_or_default()
    }

    pub fn additivity(&self) -> AdditivityParams {
        self.additivity.clone().unwrap_or_default()
    }

    pub fn ham_tomog(&self) -> HamTomogParams {
        self.ham_tomog.clone().unwrap_or_default()
    }

    pub fn calibrate_phase(&self) -> CalibratePhaseParams {
        self.calibrate_phase.clone().unwrap_or_default()
    }

    pub fn delay_scan(&self) -> DelayScanParams {
        self.delay_scan.clone().unwrap_or_default()
    }

    pub fn purity_scan(&self) -> PurityScanParams {
        self.purity_scan.clone().unwrap_or_default()
    }
}

/// `0` shots means exact expectations.
pub fn shots(n: u64) -> Option<u64> {
    (n > 0).then_some(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "ham-tomog"
seed = 7

[device]
qubits = [{ omega = 5000.0 }, { omega = 5100.0 }]
couplings = [{ a = 0, b = 1, j = 2.0 }]
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.experiment, Experiment::HamTomog);
        assert_eq!(cfg.ham_tomog().shots, 4096);
        assert_eq!(cfg.ham_tomog().times.points().unwrap().len(), 201);
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nshotz = 3");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert_eq!(err.line, Some(4));
        assert_eq!(err.column, Some(1));
        assert!(err.message.contains("shotz"), "{err}");
    }

    #[test]
    fn nested_unknown_key_is_fatal() {
        let text = format!("{MINIMAL}\n[ham-tomog]\nomgea = 30.0\n");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert_eq!(err.line, Some(10));
    }

    #[test]
    fn seed_required_when_sampling() {
        let text = MINIMAL.replace("seed = 7", "");
        assert!(ExperimentConfig::parse(&text).unwrap_err().message.contains("seed"));
        let exact = format!("{text}\n[ham-tomog]\nshots = 0\n");
        assert!(ExperimentConfig::parse(&exact).is_ok());
    }

    #[test]
    fn foreign_section_rejected() {
        let text = format!("{MINIMAL}\n[purity-scan]\nqubit = 0\n");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn overrides_apply_in_order() {
        let o = Overrides {
            seed: Some(9),
            shots: Some(1024),
            output: Some("out".into()),
            set: vec![("ham-tomog.omega".into(), "30".into()), ("ham-tomog.phase".into(), "0.5".into())],
        };
        let cfg = ExperimentConfig::parse_with(MINIMAL, &o).unwrap();
        assert_eq!(cfg.seed, Some(9));
        let p = cfg.ham_tomog();
        assert_eq!((p.shots, p.omega, p.phase), (1024, 30.0, 0.5));
        assert_eq!(cfg.output.as_deref(), Some(Path::new("out")));
        let bad = Overrides { set: vec![("ham-tomog.omgea".into(), "1".into())], ..Default::default() };
        assert!(ExperimentConfig::parse_with(MINIMAL, &bad).is_err());
    }

    #[test]
    fn canonical_form_round_trips() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        let again = ExperimentConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn range_is_inclusive() {
        assert_eq!(Grid::range(0.05, 0.4, 0.05).points().unwrap().len(), 8);
        assert!(Grid::range(0.0, 1.0, 0.0).points().is_err());
    }

    #[test]
    fn line_column_counts_characters() {
        assert_eq!(line_column("ab\nµx", 5), (2, 2));
    }
}

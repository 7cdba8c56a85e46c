//! Sweep configuration: parsing, validation and parameter resolution.
//!
//! All rates and frequencies are in units of the pair-coupling constant
//! kappa. Pump frequencies are measured from the β0 mode frequency.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::{
    pair_resonance_detuning, resonance_detuning, truncated_spectrum, CircuitParams, ModelError,
};

pub const DEFAULT_MAX_STATES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    FreqSweep,
    AmpSweep,
    StepResponse,
    PulseGrid,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::FreqSweep => "freq_sweep",
            SweepKind::AmpSweep => "amp_sweep",
            SweepKind::StepResponse => "step_response",
            SweepKind::PulseGrid => "pulse_grid",
        }
    }

    pub fn is_steady(self) -> bool {
        matches!(self, SweepKind::FreqSweep | SweepKind::AmpSweep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxisName {
    #[serde(rename = "omega")]
    Omega,
    #[serde(rename = "F")]
    F,
    #[serde(rename = "F0")]
    F0,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "tau")]
    Tau,
}

impl AxisName {
    pub fn name(self) -> &'static str {
        match self {
            AxisName::Omega => "omega",
            AxisName::F => "F",
            AxisName::F0 => "F0",
            AxisName::Gamma => "gamma",
            AxisName::Tau => "tau",
        }
    }

    fn is_amplitude(self) -> bool {
        matches!(self, AxisName::F | AxisName::F0)
    }
}

/// A number, or a pump-frequency alias such as `"res2A"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Alias(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{v}"),
            Value::Alias(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSpec {
    Explicit(f64),
    /// `"auto"`: tune the single-pair resonance.
    Keyword(String),
    /// Tune the resonance of a given (n+, n-) sector.
    Sector { n_plus: usize, n_minus: usize },
}

impl Default for DeltaSpec {
    fn default() -> Self {
        DeltaSpec::Keyword("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitBlock {
    pub x: f64,
    pub u_over_j: f64,
    /// Hopping strength. Normally omitted, which fixes `J` so that kappa is
    /// the unit of every rate; required when `u_over_j = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    #[serde(default)]
    pub delta: DeltaSpec,
    pub gamma: f64,
    #[serde(rename = "F", default)]
    pub drive: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameChoice {
    /// Rotating frame for steady states; pair frame for time evolution
    /// whenever the model allows it.
    #[default]
    Auto,
    Lab,
    Rotating,
    Pair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_cap: Option<usize>,
    #[serde(default = "default_max_states")]
    pub max_states: usize,
    #[serde(default)]
    pub include_delta_h: bool,
    #[serde(default)]
    pub frame: FrameChoice,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default = "default_steady_tol")]
    pub steady_tol: f64,
}

fn default_n_max() -> usize {
    6
}
fn default_max_states() -> usize {
    DEFAULT_MAX_STATES
}
fn default_rtol() -> f64 {
    1e-8
}
fn default_atol() -> f64 {
    1e-10
}
fn default_steady_tol() -> f64 {
    1e-13
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n_max: default_n_max(),
            total_cap: None,
            max_states: default_max_states(),
            include_delta_h: false,
            frame: FrameChoice::Auto,
            rtol: default_rtol(),
            atol: default_atol(),
            steady_tol: default_steady_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeName {
    Step,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseBlock {
    #[serde(default = "default_shape")]
    pub shape: ShapeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// End of the time window; Gaussian pulses default to
    /// `2 tau + 3 pi / sqrt(2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_shape() -> ShapeName {
    ShapeName::Gaussian
}
fn default_samples() -> usize {
    801
}

impl Default for PulseBlock {
    fn default() -> Self {
        Self { shape: default_shape(), tau: None, t_end: None, samples: default_samples() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: AxisName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Value>>,
}

impl Axis {
    pub fn linspace(name: AxisName, start: f64, stop: f64, count: usize) -> Self {
        Self { name, start: Some(start), stop: Some(stop), count: Some(count), values: None }
    }

    pub fn list(name: AxisName, values: Vec<Value>) -> Self {
        Self { name, start: None, stop: None, count: None, values: Some(values) }
    }

    /// Grid values before alias resolution.
    pub fn raw_values(&self) -> Vec<Value> {
        if let Some(v) = &self.values {
            return v.clone();
        }
        let (Some(a), Some(b), Some(n)) = (self.start, self.stop, self.count) else {
            return Vec::new();
        };
        if n == 1 {
            return vec![Value::Number(a)];
        }
        (0..n).map(|i| Value::Number(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
    }
}

/// Physical units for converting kappa-unit results into rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiBlock {
    /// kappa in s^-1.
    pub kappa: f64,
    /// Pulse repetition rate in s^-1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetition_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: SweepKind,
    pub circuit: CircuitBlock,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseBlock>,
    #[serde(default, rename = "axis")]
    pub axes: Vec<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub si: Option<SiBlock>,
}

/// Observable columns in their fixed output order.
pub const OBSERVABLE_COLUMNS: [&str; 9] =
    ["N0", "Nplus", "Nminus", "g2_0", "g2_plus", "g2_minus", "P_20", "P_11", "trace_err"];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line in the source text, when known.
    pub line: Option<usize>,
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.path.is_empty()) {
            (Some(l), true) => write!(f, "line {l}: {}", self.message),
            (Some(l), false) => write!(f, "line {l}: {}: {}", self.path, self.message),
            (None, true) => write!(f, "{}", self.message),
            (None, false) => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn issue(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError { line: None, path: path.into(), message: message.into() }
}

impl SweepSpec {
    /// Parse TOML text and validate it.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(text, s.start)),
            path: String::new(),
            message: e.message().trim().to_string(),
        })?;
        spec.validate().map_err(|mut e| {
            e.line = locate(text, &e.path);
            e
        })?;
        Ok(spec)
    }

    /// Parse either a bare spec or a run manifest holding one under `config`.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| ConfigError { line: Some(e.line()), path: String::new(), message: e.to_string() })?;
        let inner = match value.get("config") {
            Some(c) => c.clone(),
            None => value,
        };
        let spec: SweepSpec = serde_json::from_value(inner).map_err(|e| issue("config", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Load from a file; `.json` files are read as specs or manifests,
    /// anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| issue(path.display().to_string(), format!("cannot read: {e}")))?;
        let mut spec = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        if spec.name.is_none() {
            spec.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serialises")
    }

    pub fn pulse_block(&self) -> PulseBlock {
        self.pulse.clone().unwrap_or_default()
    }

    pub fn axis(&self, name: AxisName) -> Option<&Axis> {
        self.axes.iter().find(|a| a.name == name)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.circuit;
        if !(c.x.is_finite() && c.x >= 0.0) {
            return Err(issue("circuit.x", "must be finite and >= 0"));
        }
        if !(c.u_over_j.is_finite() && c.u_over_j >= 0.0) {
            return Err(issue("circuit.u_over_j", "must be finite and >= 0"));
        }
        match c.j {
            Some(j) if !(j.is_finite() && j > 0.0) => return Err(issue("circuit.j", "must be positive")),
            None if c.u_over_j == 0.0 => {
                return Err(issue("circuit.u_over_j", "a linear circuit has no kappa; give `j` explicitly"))
            }
            _ => {}
        }
        if !(c.gamma.is_finite() && c.gamma >= 0.0) {
            return Err(issue("circuit.gamma", "must be finite and >= 0"));
        }
        if !c.drive.is_finite() {
            return Err(issue("circuit.F", "must be finite"));
        }
        match &c.delta {
            DeltaSpec::Explicit(d) if !d.is_finite() => return Err(issue("circuit.delta", "must be finite")),
            DeltaSpec::Keyword(k) if k != "auto" => {
                return Err(issue("circuit.delta", format!("expected a number or \"auto\", got \"{k}\"")))
            }
            _ => {}
        }
        if let Some(Value::Alias(a)) = &c.omega {
            alias_order(a).map_err(|m| issue("circuit.omega", m))?;
        }
        if let Some(Value::Number(w)) = c.omega {
            if !w.is_finite() {
                return Err(issue("circuit.omega", "must be finite"));
            }
        }

        let n = &self.numerics;
        if n.n_max == 0 {
            return Err(issue("numerics.n_max", "must be at least 1"));
        }
        if n.total_cap == Some(0) {
            return Err(issue("numerics.total_cap", "must be at least 1"));
        }
        for (key, v) in [("numerics.rtol", n.rtol), ("numerics.atol", n.atol), ("numerics.steady_tol", n.steady_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(issue(key, "must be positive"));
            }
        }
        if n.frame == FrameChoice::Pair && n.include_delta_h {
            return Err(issue("numerics.frame", "the pair frame cannot represent the residual interaction; use \"rotating\""));
        }
        if self.kind.is_steady() && n.frame == FrameChoice::Lab {
            return Err(issue("numerics.frame", "steady states need a rotating frame"));
        }

        for (i, ax) in self.axes.iter().enumerate() {
            let path = format!("axis[{i}]");
            if self.axes[..i].iter().any(|b| b.name == ax.name) {
                return Err(issue(path, format!("axis \"{}\" is swept twice", ax.name.name())));
            }
            if ax.name.is_amplitude() && self.axes[..i].iter().any(|b| b.name.is_amplitude()) {
                return Err(issue(path, "F and F0 name the same amplitude; sweep only one"));
            }
            match (&ax.values, ax.start, ax.stop, ax.count) {
                (Some(v), None, None, None) => {
                    if v.is_empty() {
                        return Err(issue(format!("{path}.values"), "must not be empty"));
                    }
                    for val in v {
                        match val {
                            Value::Number(x) if !x.is_finite() => {
                                return Err(issue(format!("{path}.values"), "must be finite"))
                            }
                            Value::Alias(a) if ax.name != AxisName::Omega => {
                                return Err(issue(format!("{path}.values"), format!("alias \"{a}\" only applies to omega")))
                            }
                            Value::Alias(a) => {
                                alias_order(a).map_err(|m| issue(format!("{path}.values"), m))?;
                            }
                            _ => {}
                        }
                    }
                }
                (None, Some(a), Some(b), Some(count)) => {
                    if count == 0 {
                        return Err(issue(format!("{path}.count"), "must be at least 1"));
                    }
                    if !(a.is_finite() && b.is_finite()) {
                        return Err(issue(path, "start and stop must be finite"));
                    }
                }
                _ => return Err(issue(path, "give either `values` or all of `start`, `stop`, `count`")),
            }
            if matches!(ax.name, AxisName::Gamma | AxisName::Tau) {
                let bad = ax.raw_values().iter().any(|v| matches!(v, Value::Number(x) if *x < 0.0 || (ax.name == AxisName::Tau && *x == 0.0)));
                if bad {
                    return Err(issue(path, format!("{} must be positive", ax.name.name())));
                }
            }
        }

        let has = |n: AxisName| self.axis(n).is_some();
        let has_amp = has(AxisName::F) || has(AxisName::F0);
        let pulse = self.pulse_block();
        if pulse.samples < 2 {
            return Err(issue("pulse.samples", "must be at least 2"));
        }
        if let Some(t) = pulse.tau {
            if !(t.is_finite() && t > 0.0) {
                return Err(issue("pulse.tau", "must be positive"));
            }
        }
        if let Some(t) = pulse.t_end {
            if !(t.is_finite() && t > 0.0) {
                return Err(issue("pulse.t_end", "must be positive"));
            }
        }
        match self.kind {
            SweepKind::FreqSweep => {
                if !has(AxisName::Omega) {
                    return Err(issue("kind", "freq_sweep needs an omega axis"));
                }
                if has(AxisName::Tau) {
                    return Err(issue("kind", "tau has no meaning for a steady state"));
                }
            }
            SweepKind::AmpSweep => {
                if !has_amp {
                    return Err(issue("kind", "amp_sweep needs an F axis"));
                }
                if has(AxisName::Tau) {
                    return Err(issue("kind", "tau has no meaning for a steady state"));
                }
            }
            SweepKind::StepResponse => {
                if self.pulse.is_none() {
                    return Err(issue("kind", "step_response needs a [pulse] block"));
                }
                match pulse.shape {
                    ShapeName::Step => {
                        if pulse.t_end.is_none() {
                            return Err(issue("pulse", "a step drive needs t_end"));
                        }
                        if has(AxisName::Tau) || pulse.tau.is_some() {
                            return Err(issue("pulse", "tau only applies to gaussian pulses"));
                        }
                    }
                    ShapeName::Gaussian => {
                        if pulse.tau.is_none() && !has(AxisName::Tau) {
                            return Err(issue("pulse", "a gaussian pulse needs tau"));
                        }
                    }
                }
            }
            SweepKind::PulseGrid => {
                if !(has(AxisName::Tau) && has_amp) {
                    return Err(issue("kind", "pulse_grid needs tau and F0 axes"));
                }
                if pulse.shape != ShapeName::Gaussian {
                    return Err(issue("pulse.shape", "pulse_grid uses gaussian pulses"));
                }
            }
        }
        if self.kind.is_steady() && c.gamma == 0.0 && !has(AxisName::Gamma) {
            return Err(issue("circuit.gamma", "a steady state needs gamma > 0"));
        }
        if c.omega.is_none() && !has(AxisName::Omega) {
            return Err(issue("circuit.omega", "pump frequency missing"));
        }
        if let Some(outs) = &self.outputs {
            for o in outs {
                if !OBSERVABLE_COLUMNS.contains(&o.as_str()) {
                    return Err(issue("outputs", format!("unknown observable \"{o}\"")));
                }
            }
        }
        if let Some(si) = &self.si {
            if !(si.kappa.is_finite() && si.kappa > 0.0) {
                return Err(issue("si.kappa", "must be positive"));
            }
            if si.repetition_rate.is_some_and(|r| !(r.is_finite() && r > 0.0)) {
                return Err(issue("si.repetition_rate", "must be positive"));
            }
        }
        let points: usize = self.axes.iter().map(|a| a.raw_values().len()).product();
        if points == 0 {
            return Err(issue("axis", "empty grid"));
        }
        Ok(())
    }

    /// Resolve detuning, pump aliases and the grid.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        self.validate()?;
        let c = &self.circuit;
        let delta = match &c.delta {
            DeltaSpec::Explicit(d) => *d,
            DeltaSpec::Keyword(_) => pair_resonance_detuning(c.x, c.u_over_j),
            DeltaSpec::Sector { n_plus, n_minus } => resonance_detuning(c.x, c.u_over_j, *n_plus, *n_minus),
        };
        let base = match c.j {
            None => CircuitParams::kappa_units(c.x, c.u_over_j, delta),
            Some(j) => {
                let p = CircuitParams { omega_c: 0.0, j, x: c.x, delta, u: c.u_over_j * j, gamma: 0.0, drive: 0.0, omega_pump: 0.0 };
                p.validate().map(|_| p)
            }
        }
        .map_err(|e| model_issue("circuit", e))?;
        let omega_0 = base.extended().omega_0;
        let levels = truncated_spectrum(&base).map_err(|e| model_issue("circuit", e))?;
        let resonances: Vec<Resonance> = levels
            .iter()
            .filter(|l| l.photons >= 2)
            .map(|l| Resonance {
                alias: format!("res{}", l.label),
                omega: l.energy / l.photons as f64 - omega_0,
                analytic: l.analytic / l.photons as f64 - omega_0,
            })
            .collect();
        let resolve_value = |v: &Value, path: &str| -> Result<f64, ConfigError> {
            match v {
                Value::Number(x) => Ok(*x),
                Value::Alias(a) => resonances
                    .iter()
                    .find(|r| r.alias == *a)
                    .map(|r| r.omega)
                    .ok_or_else(|| issue(path, format!("unknown alias \"{a}\""))),
            }
        };
        let omega = match &c.omega {
            Some(v) => Some(resolve_value(v, "circuit.omega")?),
            None => None,
        };
        let mut axes = Vec::with_capacity(self.axes.len());
        for (i, ax) in self.axes.iter().enumerate() {
            let values = ax
                .raw_values()
                .iter()
                .map(|v| resolve_value(v, &format!("axis[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            axes.push(ResolvedAxis { name: ax.name, values });
        }
        let params = CircuitParams {
            gamma: c.gamma,
            drive: c.drive,
            omega_pump: omega_0 + omega.unwrap_or(0.0),
            ..base
        };
        Ok(Resolved {
            params,
            delta,
            omega_0,
            omega,
            resonances,
            axes,
            strong_nonlinearity: base.strong_nonlinearity(),
        })
    }
}

fn model_issue(path: &str, e: ModelError) -> ConfigError {
    issue(path, e.to_string())
}

/// Photon number of a pump alias.
fn alias_order(a: &str) -> Result<usize, String> {
    match a {
        "res2A" | "res2B" => Ok(2),
        "res3A" | "res3B" => Ok(3),
        _ => Err(format!("unknown alias \"{a}\" (expected res2A, res2B, res3A or res3B)")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resonance {
    pub alias: String,
    /// `E/N - omega_0` from the truncated spectrum.
    pub omega: f64,
    /// The same from the closed-form levels.
    pub analytic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedAxis {
    pub name: AxisName,
    pub values: Vec<f64>,
}

/// A spec with every symbolic quantity turned into a number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    /// Base circuit; `omega_pump` is absolute, `drive` and `gamma` are the
    /// unswept values.
    pub params: CircuitParams,
    pub delta: f64,
    pub omega_0: f64,
    /// Unswept pump frequency relative to `omega_0`.
    pub omega: Option<f64>,
    pub resonances: Vec<Resonance>,
    pub axes: Vec<ResolvedAxis>,
    pub strong_nonlinearity: bool,
}

impl Resolved {
    pub fn num_points(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Axis values of grid point `index`; the first axis varies slowest.
    pub fn coordinates(&self, index: usize) -> Vec<f64> {
        let mut rem = index;
        let mut out = vec![0.0; self.axes.len()];
        for (k, ax) in self.axes.iter().enumerate().rev() {
            let n = ax.values.len();
            out[k] = ax.values[rem % n];
            rem /= n;
        }
        out
    }

    pub fn resonance(&self, alias: &str) -> Option<f64> {
        self.resonances.iter().find(|r| r.alias == alias).map(|r| r.omega)
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Best-effort line lookup for a validation path such as `circuit.gamma`,
/// `axis[1].count` or `kind`.
fn locate(text: &str, path: &str) -> Option<usize> {
    let lines: Vec<&str> = text.lines().collect();
    let header = |l: &str| l.trim_start().starts_with('[');
    let key_line = |from: usize, key: &str| -> Option<usize> {
        lines[from..]
            .iter()
            .take_while(|l| !header(l))
            .position(|l| {
                let t = l.trim_start();
                t.strip_prefix(key).is_some_and(|r| r.trim_start().starts_with('='))
            })
            .map(|p| from + p)
    };
    let (table, rest) = match path.split_once('.') {
        Some((t, r)) => (t, Some(r)),
        None => (path, None),
    };
    let table_start = if let Some(idx) = table.strip_prefix("axis[").and_then(|s| s.strip_suffix(']')) {
        let want: usize = idx.parse().ok()?;
        lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.trim() == "[[axis]]")
            .nth(want)
            .map(|(i, _)| i)
    } else if rest.is_some() || ["circuit", "numerics", "pulse", "si", "axis"].contains(&table) {
        let head = if table == "axis" { "[[axis]]".to_string() } else { format!("[{table}]") };
        lines.iter().position(|l| l.trim() == head)
    } else {
        return key_line(0, table).map(|i| i + 1);
    };
    let start = table_start?;
    match rest {
        Some(key) => Some(key_line(start + 1, key).unwrap_or(start) + 1),
        None => Some(start + 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG4: &str = r#"
kind = "freq_sweep"

[circuit]
x = 1.0
u_over_j = 0.01
delta = "auto"
gamma = 0.1
F = 0.5

[numerics]
n_max = 4

[[axis]]
name = "omega"
start = -1.0
stop = 5.0
count = 7
"#;

    #[test]
    fn parses_and_resolves() {
        let spec = SweepSpec::from_toml(FIG4).unwrap();
        let r = spec.resolve().unwrap();
        assert!((r.delta + 2.995).abs() < 1e-12);
        assert_eq!(r.num_points(), 7);
        assert_eq!(r.coordinates(3), vec![2.0]);
        let a = r.resonance("res2A").unwrap();
        assert!((a - 2.44).abs() < 0.02, "{a}");
    }

    #[test]
    fn explicit_delta_passes_through() {
        let text = FIG4.replace("delta = \"auto\"", "delta = -2.5");
        let r = SweepSpec::from_toml(&text).unwrap().resolve().unwrap();
        assert_eq!(r.delta, -2.5);
    }

    #[test]
    fn sector_delta() {
        let text = FIG4.replace("delta = \"auto\"", "delta = { n_plus = 1, n_minus = 1 }");
        let r = SweepSpec::from_toml(&text).unwrap().resolve().unwrap();
        assert_eq!(r.delta, resonance_detuning(1.0, 0.01, 1, 1));
    }

    #[test]
    fn alias_on_circuit() {
        let text = FIG4.replace("F = 0.5", "F = 0.5\nomega = \"res2B\"").replace("\"omega\"", "\"F\"");
        let e = SweepSpec::from_toml(&text).unwrap_err();
        assert_eq!(e.path, "kind", "{e}");
        let text = text.replace("freq_sweep", "amp_sweep");
        let r = SweepSpec::from_toml(&text).unwrap().resolve().unwrap();
        assert!((r.omega.unwrap() - r.resonance("res2B").unwrap()).abs() < 1e-15);
    }

    #[test]
    fn syntax_error_has_line() {
        let text = FIG4.replace("gamma = 0.1", "gamma = = 0.1");
        let e = SweepSpec::from_toml(&text).unwrap_err();
        assert_eq!(e.line, Some(8), "{e}");
    }

    #[test]
    fn unknown_key_has_line() {
        let text = FIG4.replace("n_max = 4", "n_max = 4\nnmax = 5");
        let e = SweepSpec::from_toml(&text).unwrap_err();
        assert_eq!(e.line, Some(13), "{e}");
    }

    #[test]
    fn semantic_errors_have_lines() {
        let e = SweepSpec::from_toml(&FIG4.replace("count = 7", "count = 0")).unwrap_err();
        assert_eq!((e.line, e.path.as_str()), (Some(18), "axis[0].count"), "{e}");
        let e = SweepSpec::from_toml(&FIG4.replace("gamma = 0.1", "gamma = -1.0")).unwrap_err();
        assert_eq!(e.line, Some(8), "{e}");
        let e = SweepSpec::from_toml(&FIG4.replace("\"auto\"", "\"tuned\"")).unwrap_err();
        assert_eq!(e.line, Some(7), "{e}");
        let e = SweepSpec::from_toml(&FIG4.replace("freq_sweep", "pulse_grid")).unwrap_err();
        assert_eq!(e.line, Some(2), "{e}");
        assert!(e.to_string().starts_with("line 2: kind:"));
    }

    #[test]
    fn bad_alias_rejected() {
        let text = FIG4.replace("start = -1.0\nstop = 5.0\ncount = 7", "values = [\"res4A\"]");
        let e = SweepSpec::from_toml(&text).unwrap_err();
        assert!(e.message.contains("res4A"), "{e}");
        assert_eq!(e.line, Some(16));
    }

    #[test]
    fn duplicate_axis_rejected() {
        let text = format!("{FIG4}\n[[axis]]\nname = \"omega\"\nvalues = [1.0]\n");
        let e = SweepSpec::from_toml(&text).unwrap_err();
        assert!(e.message.contains("twice"));
        assert_eq!(e.line, Some(20));
    }

    #[test]
    fn grid_order_first_axis_slowest() {
        let text = format!("{FIG4}\n[[axis]]\nname = \"F\"\nvalues = [0.1, 0.2]\n");
        let r = SweepSpec::from_toml(&text).unwrap().resolve().unwrap();
        assert_eq!(r.num_points(), 14);
        assert_eq!(r.coordinates(0), vec![-1.0, 0.1]);
        assert_eq!(r.coordinates(1), vec![-1.0, 0.2]);
        assert_eq!(r.coordinates(2), vec![0.0, 0.1]);
    }

    #[test]
    fn toml_and_json_round_trip() {
        let spec = SweepSpec::from_toml(FIG4).unwrap();
        assert_eq!(SweepSpec::from_toml(&spec.to_toml()).unwrap(), spec);
        let json = serde_json::json!({ "config": spec }).to_string();
        assert_eq!(SweepSpec::from_json(&json).unwrap(), spec);
    }
}

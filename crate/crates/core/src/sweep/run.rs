//! Execution of a resolved sweep, one independent simulation per grid point.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::{CircuitParams, Frame};
use crate::fock::{BasisIndex, FockError};
use crate::lindblad::{
    circuit_liouvillian, propagate_with, steady_state, DensityMatrix, DrivePulse, LindbladError, ModelOptions,
    PropagationOptions, SteadyStateMethod, SteadyStateOptions,
};
use crate::observables::{find_harvest, ObservableRecord, ObservableSet};

use super::config::{AxisName, ConfigError, FrameChoice, Resolved, ShapeName, SweepKind, SweepSpec};

/// Tolerance on trace drift and negative eigenvalues for a trajectory to
/// count as physical.
pub const CPTP_TOL: f64 = 1e-8;
pub const CONVERGENCE_THRESHOLD: f64 = 0.01;
pub const DELTA_H_THRESHOLD: f64 = 0.05;

/// Positivity is checked on this many evenly spaced samples of a trace.
const EIGEN_CHECKS: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("point index {index} out of range ({points} points)")]
    BadPoint { index: usize, points: usize },
    #[error("cannot build thread pool: {0}")]
    Pool(String),
}

/// Circuit and drive at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointSetup {
    pub params: CircuitParams,
    /// Pump frequency relative to `omega_0`.
    pub omega: f64,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PointData {
    Steady {
        record: ObservableRecord,
        residual: f64,
        iterations: usize,
        by_propagation: bool,
    },
    Trace {
        times: Vec<f64>,
        records: Vec<ObservableRecord>,
    },
    Harvest {
        t_max: f64,
        on_boundary: bool,
        record: ObservableRecord,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub index: usize,
    pub coords: Vec<f64>,
    pub converged: bool,
    pub max_trace_err: f64,
    pub min_eigenvalue: f64,
    pub data: Result<PointData, String>,
}

impl PointResult {
    /// The single record describing the point (steady state or harvest);
    /// `None` for traces and failures.
    pub fn record(&self) -> Option<&ObservableRecord> {
        match &self.data {
            Ok(PointData::Steady { record, .. }) | Ok(PointData::Harvest { record, .. }) => Some(record),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub resolved: Resolved,
    pub points: Vec<PointResult>,
}

impl SweepResult {
    pub fn all_converged(&self) -> bool {
        self.points.iter().all(|p| p.converged)
    }
}

/// Shared, read-only state for all points of a sweep.
struct Engine<'a> {
    spec: &'a SweepSpec,
    resolved: &'a Resolved,
    basis: BasisIndex,
    observables: ObservableSet,
}

impl<'a> Engine<'a> {
    fn new(spec: &'a SweepSpec, resolved: &'a Resolved) -> Result<Self, RunError> {
        let n = &spec.numerics;
        let basis = BasisIndex::with_limit(3, n.n_max, n.total_cap, n.max_states)?;
        let observables = ObservableSet::new(&basis);
        Ok(Self { spec, resolved, basis, observables })
    }

    fn setup(&self, coords: &[f64]) -> PointSetup {
        setup_at(self.spec, self.resolved, coords)
    }

    fn frame(&self) -> Frame {
        let n = &self.spec.numerics;
        match n.frame {
            FrameChoice::Lab => Frame::Lab,
            FrameChoice::Rotating => Frame::Rotating,
            FrameChoice::Pair => Frame::PairRotating,
            FrameChoice::Auto if self.spec.kind.is_steady() || n.include_delta_h => Frame::Rotating,
            FrameChoice::Auto => Frame::PairRotating,
        }
    }

    fn run_point(&self, index: usize) -> PointResult {
        let coords = self.resolved.coordinates(index);
        let setup = self.setup(&coords);
        let outcome = if self.spec.kind.is_steady() {
            self.steady(&setup)
        } else {
            self.evolve(&setup)
        };
        match outcome {
            Ok((data, max_trace_err, min_eigenvalue)) => PointResult {
                index,
                coords,
                converged: max_trace_err < CPTP_TOL && min_eigenvalue >= -CPTP_TOL,
                max_trace_err,
                min_eigenvalue,
                data: Ok(data),
            },
            Err(e) => PointResult {
                index,
                coords,
                converged: false,
                max_trace_err: f64::NAN,
                min_eigenvalue: f64::NAN,
                data: Err(e.to_string()),
            },
        }
    }

    fn model_options(&self) -> ModelOptions {
        ModelOptions { include_delta_h: self.spec.numerics.include_delta_h, frame: self.frame() }
    }

    fn steady(&self, setup: &PointSetup) -> Result<(PointData, f64, f64), LindbladError> {
        let l = circuit_liouvillian(&setup.params, &self.basis, self.model_options())?;
        let opts = SteadyStateOptions { tol: self.spec.numerics.steady_tol, ..Default::default() };
        let ss = steady_state(&l, C64::new(setup.params.drive, 0.0), &opts)?;
        let record = self.observables.evaluate(&ss.rho);
        let min_eig = ss.rho.min_eigenvalue();
        let data = PointData::Steady {
            record: record.clone(),
            residual: ss.residual,
            iterations: ss.iterations,
            by_propagation: ss.method == SteadyStateMethod::Propagation,
        };
        Ok((data, record.trace_err, min_eig))
    }

    fn evolve(&self, setup: &PointSetup) -> Result<(PointData, f64, f64), LindbladError> {
        let l = circuit_liouvillian(&setup.params, &self.basis, self.model_options())?;
        let block = self.spec.pulse_block();
        let amplitude = setup.params.drive;
        let pulse = match (block.shape, setup.tau) {
            (ShapeName::Step, _) => DrivePulse::step(amplitude),
            (ShapeName::Gaussian, Some(tau)) => DrivePulse::gaussian(amplitude, tau),
            (ShapeName::Gaussian, None) => unreachable!("validated: gaussian pulses carry tau"),
        };
        let t_end = block.t_end.unwrap_or_else(|| default_window(setup.tau.unwrap_or(0.0)));
        let n = block.samples;
        let times: Vec<f64> = (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect();
        let opts = PropagationOptions { rtol: self.spec.numerics.rtol, atol: self.spec.numerics.atol, ..Default::default() };
        let stride = (n / EIGEN_CHECKS).max(1);
        let mut records = Vec::with_capacity(n);
        let mut min_eig = f64::INFINITY;
        let mut k = 0;
        let rho0 = DensityMatrix::basis_state(self.basis.dim(), 0);
        let stats = propagate_with(&l, &pulse, rho0, &times, &opts, |_, rho| {
            records.push(self.observables.evaluate(rho));
            if k % stride == 0 || k + 1 == n {
                min_eig = min_eig.min(rho.min_eigenvalue());
            }
            k += 1;
        })?;
        let max_trace_err = stats.max_trace_error;
        let data = if self.spec.kind == SweepKind::PulseGrid {
            let p11: Vec<f64> = records.iter().map(|r| r.p11).collect();
            let g2: Vec<Option<f64>> = records.iter().map(|r| r.g2[1]).collect();
            let h = find_harvest(&times, &p11, &g2).expect("non-empty trace");
            PointData::Harvest { t_max: h.t_max, on_boundary: h.on_boundary, record: records.swap_remove(h.index) }
        } else {
            PointData::Trace { times, records }
        };
        Ok((data, max_trace_err, min_eig))
    }
}

/// `2 tau + 3` Rabi periods, with the Rabi period `pi / (sqrt 2 kappa)`.
pub fn default_window(tau: f64) -> f64 {
    2.0 * tau + 3.0 * std::f64::consts::PI / std::f64::consts::SQRT_2
}

pub fn setup_at(spec: &SweepSpec, resolved: &Resolved, coords: &[f64]) -> PointSetup {
    let mut params = resolved.params;
    let mut omega = resolved.omega.unwrap_or(0.0);
    let mut tau = spec.pulse.as_ref().and_then(|p| p.tau);
    for (ax, &v) in resolved.axes.iter().zip(coords) {
        match ax.name {
            AxisName::Omega => omega = v,
            AxisName::F | AxisName::F0 => params.drive = v,
            AxisName::Gamma => params.gamma = v,
            AxisName::Tau => tau = Some(v),
        }
    }
    params.omega_pump = resolved.omega_0 + omega;
    PointSetup { params, omega, tau }
}

/// Run every grid point. `jobs = None` uses the global rayon pool; points
/// are independent, so the result does not depend on the thread count.
pub fn run(spec: &SweepSpec, jobs: Option<usize>) -> Result<SweepResult, RunError> {
    let resolved = spec.resolve()?;
    let engine = Engine::new(spec, &resolved)?;
    let n = resolved.num_points();
    let work = || (0..n).into_par_iter().map(|i| engine.run_point(i)).collect::<Vec<_>>();
    let points = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))?
            .install(work),
        None => work(),
    };
    Ok(SweepResult { spec: spec.clone(), resolved, points })
}

/// Run a single grid point.
pub fn run_point(spec: &SweepSpec, index: usize) -> Result<PointResult, RunError> {
    let resolved = spec.resolve()?;
    let points = resolved.num_points();
    if index >= points {
        return Err(RunError::BadPoint { index, points });
    }
    let engine = Engine::new(spec, &resolved)?;
    Ok(engine.run_point(index))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonEntry {
    pub name: String,
    pub baseline: Option<f64>,
    pub variant: Option<f64>,
    /// `|a - b| / max(|a|, |b|)`; for traces the sup norm over samples.
    pub rel_change: Option<f64>,
    pub judged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub point: usize,
    pub coords: Vec<f64>,
    pub baseline: String,
    pub variant: String,
    pub threshold: f64,
    pub entries: Vec<ComparisonEntry>,
    pub passed: bool,
    /// Set when either run failed.
    pub error: Option<String>,
}

impl ComparisonReport {
    pub fn entry(&self, name: &str) -> Option<&ComparisonEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn max_change(&self) -> f64 {
        self.entries.iter().filter(|e| e.judged).filter_map(|e| e.rel_change).fold(0.0, f64::max)
    }
}

/// Rerun point `index` with `N_max + 2` (and the total cap, if any, also
/// raised by 2) and report per-observable relative changes.
pub fn convergence_report(spec: &SweepSpec, index: usize) -> Result<ComparisonReport, RunError> {
    let mut finer = spec.clone();
    finer.numerics.n_max += 2;
    finer.numerics.total_cap = spec.numerics.total_cap.map(|c| c + 2);
    finer.numerics.max_states = finer.numerics.max_states.max(basis_size(&finer.numerics));
    let base_label = format!("n_max={}", spec.numerics.n_max);
    let var_label = format!("n_max={}", finer.numerics.n_max);
    compare(spec, &finer, index, base_label, var_label, CONVERGENCE_THRESHOLD, None)
}

/// Rerun point `index` with the residual interaction toggled. Only the pair
/// probability is judged.
pub fn delta_h_report(spec: &SweepSpec, index: usize) -> Result<ComparisonReport, RunError> {
    let mut base = spec.clone();
    base.numerics.include_delta_h = false;
    let mut with = spec.clone();
    with.numerics.include_delta_h = true;
    if with.numerics.frame == FrameChoice::Pair {
        with.numerics.frame = FrameChoice::Rotating;
    }
    compare(&base, &with, index, "without dH".into(), "with dH".into(), DELTA_H_THRESHOLD, Some(&["P_11"]))
}

fn basis_size(n: &super::config::Numerics) -> usize {
    match n.total_cap {
        None => (n.n_max + 1).pow(3),
        Some(_) => BasisIndex::with_limit(3, n.n_max, n.total_cap, usize::MAX).map(|b| b.dim()).unwrap_or(0),
    }
}

fn compare(
    a: &SweepSpec,
    b: &SweepSpec,
    index: usize,
    baseline: String,
    variant: String,
    threshold: f64,
    judged: Option<&[&str]>,
) -> Result<ComparisonReport, RunError> {
    let ra = run_point(a, index)?;
    let rb = run_point(b, index)?;
    let mut report = ComparisonReport {
        point: index,
        coords: ra.coords.clone(),
        baseline,
        variant,
        threshold,
        entries: Vec::new(),
        passed: false,
        error: None,
    };
    let (da, db) = match (&ra.data, &rb.data) {
        (Ok(da), Ok(db)) => (da, db),
        (Err(e), _) | (_, Err(e)) => {
            report.error = Some(e.clone());
            return Ok(report);
        }
    };
    let is_judged = |name: &str| judged.map_or(true, |j| j.contains(&name));
    let mut push = |name: &str, x: Option<f64>, y: Option<f64>, rel: Option<f64>| {
        report.entries.push(ComparisonEntry {
            name: name.to_string(),
            baseline: x,
            variant: y,
            rel_change: rel,
            judged: is_judged(name),
        })
    };
    match (da, db) {
        (PointData::Trace { records: xa, .. }, PointData::Trace { records: xb, .. }) => {
            for (k, name) in COMPARED.iter().enumerate() {
                let (mut sup_a, mut sup_b, mut diff) = (0.0f64, 0.0f64, 0.0f64);
                let mut any = false;
                for (p, q) in xa.iter().zip(xb) {
                    if let (Some(u), Some(v)) = (observable(p, k), observable(q, k)) {
                        sup_a = sup_a.max(u.abs());
                        sup_b = sup_b.max(v.abs());
                        diff = diff.max((u - v).abs());
                        any = true;
                    }
                }
                let scale = sup_a.max(sup_b);
                let rel = any.then(|| if scale > 0.0 { diff / scale } else { 0.0 });
                push(name, any.then_some(sup_a), any.then_some(sup_b), rel);
            }
        }
        _ => {
            if let (PointData::Harvest { t_max: ta, .. }, PointData::Harvest { t_max: tb, .. }) = (da, db) {
                push("t_max", Some(*ta), Some(*tb), Some(relative_change(*ta, *tb)));
            }
            let (pa, pb) = (ra.record().expect("steady or harvest"), rb.record().expect("steady or harvest"));
            for (k, name) in COMPARED.iter().enumerate() {
                let (x, y) = (observable(pa, k), observable(pb, k));
                let rel = match (x, y) {
                    (Some(x), Some(y)) => Some(relative_change(x, y)),
                    _ => None,
                };
                push(name, x, y, rel);
            }
        }
    }
    report.passed = ra.converged
        && rb.converged
        && report.entries.iter().filter(|e| e.judged).all(|e| e.rel_change.is_none_or(|r| r < threshold));
    Ok(report)
}

const COMPARED: [&str; 8] = ["N0", "Nplus", "Nminus", "g2_0", "g2_plus", "g2_minus", "P_20", "P_11"];

fn observable(r: &ObservableRecord, k: usize) -> Option<f64> {
    match k {
        0..=2 => Some(r.occupation[k]),
        3..=5 => r.g2[k - 3],
        6 => Some(r.p20),
        7 => Some(r.p11),
        _ => None,
    }
}

pub fn relative_change(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

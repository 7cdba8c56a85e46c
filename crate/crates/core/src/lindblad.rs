//! Open-system dynamics for the driven circuit:
//!
//! ```text
//! d rho/dt = -i[H, rho] + gamma * sum_k (2 c_k rho c_k^dag - c_k^dag c_k rho - rho c_k^dag c_k)
//! ```
//!
//! with amplitude decay rate `gamma` (photon-number decay `2 gamma`). The
//! density matrix is dense and column-vectorised, `vec[i + j*dim] = rho_ij`;
//! operators and the superoperator are sparse.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::circuit::{self, CircuitParams, DriveOperator, Frame, ModelError};
use crate::dense::{self, CMatrix};
use crate::fock::{self, BasisIndex, FockError, Ladder, SparseOperator};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LindbladError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("Hamiltonian is not Hermitian (max |H - H^dag| = {0:e})")]
    NotHermitian(f64),
    #[error("density matrix has {got} entries, expected {expected}")]
    BadState { got: usize, expected: usize },
    #[error("no unique steady state without decay (gamma = 0)")]
    NoDecay,
    #[error("steady state needs a time-independent generator; the lab-frame drive carries e^(i omega t)")]
    TimeDependent,
    #[error("sample times must be strictly increasing")]
    BadTimeGrid,
    #[error("step size underflow at t = {t} (h = {h:e}); the problem is too stiff for the explicit integrator")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("steady state did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
}

/// Dense Hermitian density matrix, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl DensityMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    /// Projector on basis state `index`.
    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut rho = Self::zeros(dim);
        rho.data[index + index * dim] = ONE;
        rho
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn pure(psi: &[C64]) -> Self {
        let dim = psi.len();
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let mut rho = Self::zeros(dim);
        for j in 0..dim {
            for i in 0..dim {
                rho.data[i + j * dim] = psi[i] * psi[j].conj() / norm;
            }
        }
        rho
    }

    pub fn from_column_major(dim: usize, data: Vec<C64>) -> Result<Self, LindbladError> {
        if data.len() != dim * dim {
            return Err(LindbladError::BadState { got: data.len(), expected: dim * dim });
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row + col * self.dim]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i + i * self.dim]).sum()
    }

    pub fn trace_error(&self) -> f64 {
        (self.trace() - ONE).norm()
    }

    /// Real parts of the populations.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.data[i + i * self.dim].re).collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim;
        let mut err = 0.0f64;
        for j in 0..d {
            for i in 0..=j {
                err = err.max((self.data[i + j * d] - self.data[j + i * d].conj()).norm());
            }
        }
        err
    }

    /// Replace `rho` by `(rho + rho^dag) / 2`.
    pub fn symmetrize(&mut self) {
        symmetrize(&mut self.data, self.dim);
    }

    /// `Tr[A rho]`.
    pub fn expectation(&self, op: &SparseOperator) -> C64 {
        op.iter().map(|(i, k, a)| a * self.data[k + i * self.dim]).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let mut m = CMatrix::from_column_slice(self.dim, self.dim, &self.data);
        // eigen solvers read one triangle; make it exactly Hermitian
        let adj = m.adjoint();
        m = (m + adj).scale(0.5);
        dense::hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
    }

    /// Largest entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

fn symmetrize(data: &mut [C64], d: usize) {
    for j in 0..d {
        data[j + j * d].im = 0.0;
        for i in 0..j {
            let avg = 0.5 * (data[i + j * d] + data[j + i * d].conj());
            data[i + j * d] = avg;
            data[j + i * d] = avg.conj();
        }
    }
}

/// Drive envelope in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseShape {
    /// On for all times; used for steady states.
    Constant,
    /// `F0 * theta(t)`.
    Step,
    /// `F0 * exp(-(t - 2 tau)^2 / tau^2) * theta(t)`.
    Gaussian { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivePulse {
    pub shape: PulseShape,
    pub amplitude: f64,
}

impl DrivePulse {
    pub fn constant(amplitude: f64) -> Self {
        Self { shape: PulseShape::Constant, amplitude }
    }

    pub fn step(amplitude: f64) -> Self {
        Self { shape: PulseShape::Step, amplitude }
    }

    pub fn gaussian(amplitude: f64, tau: f64) -> Self {
        Self { shape: PulseShape::Gaussian { tau }, amplitude }
    }

    pub fn off() -> Self {
        Self::constant(0.0)
    }

    pub fn envelope(&self, t: f64) -> f64 {
        match self.shape {
            PulseShape::Constant => self.amplitude,
            PulseShape::Step => {
                if t >= 0.0 {
                    self.amplitude
                } else {
                    0.0
                }
            }
            PulseShape::Gaussian { tau } => {
                if t < 0.0 {
                    0.0
                } else {
                    let z = (t - 2.0 * tau) / tau;
                    self.amplitude * (-z * z).exp()
                }
            }
        }
    }

    /// Time of the envelope maximum.
    pub fn center(&self) -> f64 {
        match self.shape {
            PulseShape::Gaussian { tau } => 2.0 * tau,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct DriveSuper {
    x: SparseOperator,
    y: SparseOperator,
    carrier: Option<f64>,
}

/// Vectorised Lindblad generator, affine in the drive amplitude:
/// `L(t) = L_0 + Re f(t) L_x + Im f(t) L_y`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    gamma: f64,
    frame: Frame,
    hamiltonian: SparseOperator,
    collapse: Vec<SparseOperator>,
    constant: SparseOperator,
    drive: Option<DriveSuper>,
    // total photon number of each basis state, when known
    photons: Option<Vec<usize>>,
}

/// Superoperator of `-i[A, .]`.
fn commutator_super(a: &SparseOperator, scale: C64) -> Vec<(usize, usize, C64)> {
    let d = a.dim();
    let mut t = Vec::with_capacity(2 * a.nnz() * d);
    for (i, k, v) in a.iter() {
        // (A rho)_ij = sum_k A_ik rho_kj
        for j in 0..d {
            t.push((i + j * d, k + j * d, -I * scale * v));
        }
    }
    for (k, j, v) in a.iter() {
        // (rho A)_ij = sum_k rho_ik A_kj
        for i in 0..d {
            t.push((i + j * d, i + k * d, I * scale * v));
        }
    }
    t
}

/// Build `L[rho] = -i[H, rho] + gamma sum_k D[c_k] rho` with the
/// `2 c rho c^dag - {c^dag c, rho}` dissipator.
pub fn build_liouvillian(
    hamiltonian: &SparseOperator,
    collapse: &[SparseOperator],
    gamma: f64,
) -> Result<Liouvillian, LindbladError> {
    let d = hamiltonian.dim();
    for c in collapse {
        if c.dim() != d {
            return Err(FockError::DimensionMismatch { left: d, right: c.dim() }.into());
        }
    }
    let herm = hamiltonian.hermiticity_error();
    if herm > 1e-12 * hamiltonian.max_abs().max(1.0) {
        return Err(LindbladError::NotHermitian(herm));
    }
    let mut t = commutator_super(hamiltonian, ONE);
    if gamma != 0.0 {
        let mut m = SparseOperator::zeros(d);
        for c in collapse {
            m = m.add(&c.adjoint().matmul(c)?)?;
            // 2 gamma (c rho c^dag)_ij = 2 gamma c_ik rho_kl conj(c_jl)
            for (i, k, cik) in c.iter() {
                for (j, l, cjl) in c.iter() {
                    t.push((i + j * d, k + l * d, 2.0 * gamma * cik * cjl.conj()));
                }
            }
        }
        for (i, k, v) in m.iter() {
            for j in 0..d {
                t.push((i + j * d, k + j * d, -gamma * v));
            }
        }
        for (k, j, v) in m.iter() {
            for i in 0..d {
                t.push((i + j * d, i + k * d, -gamma * v));
            }
        }
    }
    Ok(Liouvillian {
        dim: d,
        gamma,
        frame: Frame::Rotating,
        hamiltonian: hamiltonian.clone(),
        collapse: collapse.to_vec(),
        constant: SparseOperator::from_triplets(d * d, t),
        drive: None,
        photons: None,
    })
}

impl Liouvillian {
    /// Attach a drive term; the drive is applied as `-i[D(t), rho]`.
    pub fn with_drive(mut self, drive: &DriveOperator) -> Self {
        let d = self.dim;
        self.drive = Some(DriveSuper {
            x: SparseOperator::from_triplets(d * d, commutator_super(&drive.quadrature_x, ONE)),
            y: SparseOperator::from_triplets(d * d, commutator_super(&drive.quadrature_y, ONE)),
            carrier: drive.carrier,
        });
        if drive.carrier.is_some() {
            self.frame = Frame::Lab;
        }
        self
    }

    /// Record the total photon number of each basis state. Enables the
    /// sector preconditioner of the steady-state solver.
    pub fn with_photon_sectors(mut self, basis: &BasisIndex) -> Self {
        self.photons = Some((0..basis.dim()).map(|i| basis.total_photons(i)).collect());
        self
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn hamiltonian(&self) -> &SparseOperator {
        &self.hamiltonian
    }

    pub fn is_time_dependent(&self) -> bool {
        self.drive.as_ref().is_some_and(|d| d.carrier.is_some())
    }

    /// Complex drive amplitude at time `t` for envelope value `envelope`.
    pub fn drive_amplitude(&self, envelope: f64, t: f64) -> C64 {
        match self.drive.as_ref().and_then(|d| d.carrier) {
            Some(w) => C64::from_polar(envelope, w * t),
            None => C64::new(envelope, 0.0),
        }
    }

    /// Static superoperator at drive amplitude `f`.
    pub fn superoperator(&self, f: C64) -> SparseOperator {
        match &self.drive {
            Some(dr) if f != ZERO => self
                .constant
                .add(&dr.x.scale_real(f.re))
                .and_then(|s| s.add(&dr.y.scale_real(f.im)))
                .expect("superoperators share a dimension"),
            _ => self.constant.clone(),
        }
    }

    /// `out = L(f) vec`.
    pub fn apply(&self, f: C64, v: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = ZERO);
        self.constant.apply_add(v, ONE, out);
        if let Some(dr) = &self.drive {
            if f.re != 0.0 {
                dr.x.apply_add(v, C64::new(f.re, 0.0), out);
            }
            if f.im != 0.0 {
                dr.y.apply_add(v, C64::new(f.im, 0.0), out);
            }
        }
    }

    /// `L(f)[rho]` as a matrix.
    pub fn evaluate(&self, f: C64, rho: &DensityMatrix) -> DensityMatrix {
        let mut out = vec![ZERO; self.dim * self.dim];
        self.apply(f, rho.as_slice(), &mut out);
        DensityMatrix { dim: self.dim, data: out }
    }
}

/// Options for the extended-basis circuit generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    pub include_delta_h: bool,
    pub frame: Frame,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { include_delta_h: false, frame: Frame::Rotating }
    }
}

/// Generator of the driven circuit in the extended-mode basis, decay on
/// `beta_0, beta_+, beta_-`.
pub fn circuit_liouvillian(
    params: &CircuitParams,
    basis: &BasisIndex,
    opts: ModelOptions,
) -> Result<Liouvillian, LindbladError> {
    let h = circuit::hamiltonian_extended(params, basis, opts.include_delta_h, opts.frame)?;
    let collapse = (0..3)
        .map(|k| fock::ladder(basis, k, Ladder::Annihilate))
        .collect::<Result<Vec<_>, _>>()?;
    let drive = circuit::drive_operator(basis, opts.frame, params.omega_pump)?;
    Ok(build_liouvillian(&h, &collapse, params.gamma)?
        .with_drive(&drive)
        .with_frame(opts.frame)
        .with_photon_sectors(basis))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Largest step; `None` for unbounded.
    pub max_step: Option<f64>,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 5_000_000, max_step: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PropagationStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Largest `|tr rho - 1|` seen at sample times.
    pub max_trace_error: f64,
}

// Dormand-Prince 5(4) tableau
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate from `t_grid[0]` with adaptive Dormand-Prince steps, calling
/// `observer` with the state at every sample time (including the first).
/// The trace is never renormalised; its drift is reported in the stats.
pub fn propagate_with<F>(
    l: &Liouvillian,
    pulse: &DrivePulse,
    rho0: DensityMatrix,
    t_grid: &[f64],
    opts: &PropagationOptions,
    mut observer: F,
) -> Result<PropagationStats, LindbladError>
where
    F: FnMut(f64, &DensityMatrix),
{
    let d = l.dim;
    if rho0.dim != d {
        return Err(LindbladError::BadState { got: rho0.data.len(), expected: d * d });
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LindbladError::BadTimeGrid);
    }
    let mut stats = PropagationStats::default();
    let Some(&t0) = t_grid.first() else {
        return Ok(stats);
    };
    let n = d * d;
    let mut rho = rho0;
    let rhs = |t: f64, y: &[C64], out: &mut [C64]| {
        let f = l.drive_amplitude(pulse.envelope(t), t);
        l.apply(f, y, out);
    };

    stats.max_trace_error = rho.trace_error();
    observer(t0, &rho);

    let mut k: Vec<Vec<C64>> = vec![vec![ZERO; n]; 7];
    let mut stage = vec![ZERO; n];
    let mut y_new = vec![ZERO; n];
    let mut t = t0;
    rhs(t, &rho.data, &mut k[0]);
    let mut h = initial_step(&rho.data, &k[0], opts);
    if let Some(hm) = opts.max_step {
        h = h.min(hm);
    }

    for &t_target in &t_grid[1..] {
        while t < t_target {
            let remaining = t_target - t;
            let mut h_try = h.min(remaining);
            // avoid a sliver of a step just before the sample time
            if remaining - h_try < 1e-3 * h_try {
                h_try = remaining;
            }
            if h_try < 1e-13 * t.abs().max(1.0) {
                return Err(LindbladError::StepUnderflow { t, h: h_try });
            }
            for s in 1..7 {
                for (idx, st) in stage.iter_mut().enumerate() {
                    let mut acc = rho.data[idx];
                    for (a, kk) in A[s][..s].iter().zip(&k[..s]) {
                        if *a != 0.0 {
                            acc += kk[idx] * (a * h_try);
                        }
                    }
                    *st = acc;
                }
                rhs(t + C[s] * h_try, &stage, &mut k[s]);
            }
            // stage 7 evaluated at the 5th-order solution (FSAL)
            y_new.copy_from_slice(&stage);
            let mut err = 0.0f64;
            for idx in 0..n {
                let mut e = ZERO;
                for (ei, kk) in E.iter().zip(&k) {
                    if *ei != 0.0 {
                        e += kk[idx] * ei;
                    }
                }
                let scale = opts.atol + opts.rtol * rho.data[idx].norm().max(y_new[idx].norm());
                err = err.max((e * h_try).norm() / scale);
            }
            if err <= 1.0 {
                stats.accepted += 1;
                t += h_try;
                if (t_target - t).abs() <= 1e-12 * t_target.abs().max(1.0) {
                    t = t_target;
                }
                std::mem::swap(&mut rho.data, &mut y_new);
                symmetrize(&mut rho.data, d);
                k.swap(0, 6);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // a step clipped to a sample time says little about the natural step
                h = if h_try < h { h.max(h_try * fac) } else { h_try * fac };
                if let Some(hm) = opts.max_step {
                    h = h.min(hm);
                }
            } else {
                stats.rejected += 1;
                h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
            if stats.accepted + stats.rejected > opts.max_steps {
                return Err(LindbladError::TooManySteps(opts.max_steps));
            }
        }
        stats.max_trace_error = stats.max_trace_error.max(rho.trace_error());
        observer(t, &rho);
    }
    Ok(stats)
}

fn initial_step(y: &[C64], f: &[C64], opts: &PropagationOptions) -> f64 {
    let scale = |i: usize| opts.atol + opts.rtol * y[i].norm();
    let d0 = (0..y.len()).map(|i| y[i].norm() / scale(i)).fold(0.0, f64::max);
    let d1 = (0..y.len()).map(|i| f[i].norm() / scale(i)).fold(0.0, f64::max);
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}

/// Propagate and keep every sampled state.
pub fn propagate(
    l: &Liouvillian,
    pulse: &DrivePulse,
    rho0: DensityMatrix,
    t_grid: &[f64],
    opts: &PropagationOptions,
) -> Result<(Vec<DensityMatrix>, PropagationStats), LindbladError> {
    let mut out = Vec::with_capacity(t_grid.len());
    let stats = propagate_with(l, pulse, rho0, t_grid, opts, |_, rho| out.push(rho.clone()))?;
    Ok((out, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyStateMethod {
    /// Preconditioned Krylov solve of the trace-constrained linear system.
    LinearSolve,
    /// Long-time propagation until the state stops changing.
    Propagation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    /// Relative residual target of the linear solve.
    pub tol: f64,
    pub restart: usize,
    pub max_iterations: usize,
    /// Accept when `max |L rho| < residual_factor * max |L|`.
    pub residual_factor: f64,
    /// Fall back to propagation if the linear solve fails.
    pub fallback: bool,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self { tol: 1e-13, restart: 150, max_iterations: 3000, residual_factor: 1e-9, fallback: true }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// `max |L[rho]|`.
    pub residual: f64,
    pub method: SteadyStateMethod,
    pub iterations: usize,
}

/// Upper bound on stored Krylov vector elements (about 1.6 GB).
const KRYLOV_BUDGET: usize = 100_000_000;

/// Steady state of the static generator at drive amplitude `f`.
pub fn steady_state(l: &Liouvillian, f: C64, opts: &SteadyStateOptions) -> Result<SteadyState, LindbladError> {
    if l.gamma <= 0.0 {
        return Err(LindbladError::NoDecay);
    }
    if l.is_time_dependent() && f != ZERO {
        return Err(LindbladError::TimeDependent);
    }
    let superop = l.superoperator(f);
    let l_max = superop.max_abs();
    // Strong drives need a longer Krylov memory; widen it once, within a
    // fixed memory budget, before giving up on the linear solve.
    let mut attempt = solve_trace_constrained(l, &superop, opts);
    let wider = (3 * opts.restart).min(KRYLOV_BUDGET / (l.dim * l.dim).max(1));
    if attempt.is_err() && wider > opts.restart {
        attempt = solve_trace_constrained(l, &superop, &SteadyStateOptions { restart: wider, ..*opts });
    }
    match attempt {
        Ok((rho, iterations)) => {
            let residual = residual_max(&superop, &rho);
            if residual < opts.residual_factor * l_max {
                return Ok(SteadyState { rho, residual, method: SteadyStateMethod::LinearSolve, iterations });
            }
            if !opts.fallback {
                return Err(LindbladError::NotConverged { residual, iterations });
            }
        }
        Err(e) if !opts.fallback => return Err(e),
        Err(_) => {}
    }
    // chunk-to-chunk noise sits near atol times the step count
    let prop = PropagationOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
    steady_state_by_propagation(l, f, DensityMatrix::basis_state(l.dim, 0), 1e-9, &prop)
}

fn residual_max(superop: &SparseOperator, rho: &DensityMatrix) -> f64 {
    superop.apply(rho.as_slice()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Propagate from `rho0` under the static generator until states one decay
/// time apart differ by less than `tol` entrywise. The derivative itself is
/// a poor test: its floor is the integrator error times the generator norm.
pub fn steady_state_by_propagation(
    l: &Liouvillian,
    f: C64,
    rho0: DensityMatrix,
    tol: f64,
    opts: &PropagationOptions,
) -> Result<SteadyState, LindbladError> {
    if l.gamma <= 0.0 {
        return Err(LindbladError::NoDecay);
    }
    if l.is_time_dependent() && f != ZERO {
        return Err(LindbladError::TimeDependent);
    }
    let superop = l.superoperator(f);
    // constant generator: reuse the propagator with a static drive
    let static_l = Liouvillian { constant: superop.clone(), drive: None, ..l.clone() };
    let chunk = 1.0 / l.gamma;
    let mut rho = rho0;
    let mut t = 0.0;
    let mut chunks = 0;
    loop {
        let grid = [t, t + chunk];
        let mut last = None;
        propagate_with(&static_l, &DrivePulse::off(), rho.clone(), &grid, opts, |_, r| last = Some(r.clone()))?;
        let next = last.expect("propagation emits the final sample");
        let change = next.max_abs_diff(&rho);
        rho = next;
        t += chunk;
        chunks += 1;
        if change < tol {
            let residual = residual_max(&superop, &rho);
            return Ok(SteadyState { rho, residual, method: SteadyStateMethod::Propagation, iterations: chunks });
        }
        if chunks > 2000 {
            return Err(LindbladError::NotConverged { residual: change, iterations: chunks });
        }
    }
}

/// Index of the vacuum-vacuum element, whose equation is replaced by the
/// trace constraint.
fn trace_row(l: &Liouvillian) -> usize {
    let v = l
        .photons
        .as_ref()
        .and_then(|p| p.iter().position(|&n| n == 0))
        .unwrap_or(0);
    v + v * l.dim
}

fn solve_trace_constrained(
    l: &Liouvillian,
    superop: &SparseOperator,
    opts: &SteadyStateOptions,
) -> Result<(DensityMatrix, usize), LindbladError> {
    let d = l.dim;
    let n = d * d;
    let row = trace_row(l);
    let apply = |x: &[C64], out: &mut [C64]| {
        out.iter_mut().for_each(|o| *o = ZERO);
        superop.apply_add(x, ONE, out);
        out[row] = (0..d).map(|i| x[i + i * d]).sum();
    };
    let mut b = vec![ZERO; n];
    b[row] = ONE;
    let precond = SectorPreconditioner::new(l, row);
    let (x, rel, iterations) = match &precond {
        Some(p) => gmres(&apply, |r| p.solve(r), &b, opts),
        None => gmres(&apply, |r| r.to_vec(), &b, opts),
    };
    if !(rel <= opts.tol * 10.0) {
        return Err(LindbladError::NotConverged { residual: rel, iterations });
    }
    let mut rho = DensityMatrix { dim: d, data: x };
    rho.symmetrize();
    Ok((rho, iterations))
}

/// Dense LU solve of the trace-constrained system; only for small bases.
pub fn steady_state_dense(l: &Liouvillian, f: C64) -> Result<DensityMatrix, LindbladError> {
    if l.gamma <= 0.0 {
        return Err(LindbladError::NoDecay);
    }
    let d = l.dim;
    let n = d * d;
    let row = trace_row(l);
    let superop = l.superoperator(f);
    let mut m = CMatrix::zeros(n, n);
    for (r, c, v) in superop.iter() {
        if r != row {
            m[(r, c)] = v;
        }
    }
    for i in 0..d {
        m[(row, i + i * d)] = ONE;
    }
    let mut b = nalgebra::DVector::<C64>::zeros(n);
    b[row] = ONE;
    let x = m.lu().solve(&b).ok_or(LindbladError::NotConverged { residual: f64::INFINITY, iterations: 0 })?;
    let mut rho = DensityMatrix { dim: d, data: x.iter().copied().collect() };
    rho.symmetrize();
    Ok(rho)
}

/// Exact inverse of the drive-free generator with the trace row replaced.
///
/// Without drive the Hamiltonian conserves total photon number and each
/// collapse operator lowers it by one, so the generator is block triangular
/// over sector pairs `(N, M)`. Each diagonal block is a Sylvester operator
/// diagonalised by the sector eigenbases of `H`.
struct SectorPreconditioner<'a> {
    dim: usize,
    gamma: f64,
    row: usize,
    collapse: &'a [SparseOperator],
    sectors: Vec<Sector>,
}

struct Sector {
    members: Vec<usize>,
    energies: Vec<f64>,
    vectors: CMatrix,
    // eigenvalue of sum_k c_k^dag c_k on this sector
    decay: f64,
}

impl<'a> SectorPreconditioner<'a> {
    fn new(l: &'a Liouvillian, row: usize) -> Option<Self> {
        let photons = l.photons.as_ref()?;
        let d = l.dim;
        let top = *photons.iter().max()?;
        let mut members = vec![Vec::new(); top + 1];
        for (i, &n) in photons.iter().enumerate() {
            members[n].push(i);
        }
        // H must not couple sectors
        if l.hamiltonian.iter().any(|(r, c, _)| photons[r] != photons[c]) {
            return None;
        }
        // each collapse operator lowers N by exactly one
        for c in &l.collapse {
            if c.iter().any(|(r, col, _)| photons[r] + 1 != photons[col]) {
                return None;
            }
        }
        let mut m = SparseOperator::zeros(d);
        for c in &l.collapse {
            m = m.add(&c.adjoint().matmul(c).ok()?).ok()?;
        }
        let mut sectors = Vec::with_capacity(top + 1);
        for mem in members {
            if mem.is_empty() {
                sectors.push(Sector { members: mem, energies: Vec::new(), vectors: CMatrix::zeros(0, 0), decay: 0.0 });
                continue;
            }
            // the dissipative part must be a multiple of the identity here
            let decay = m.get(mem[0], mem[0]).re;
            for &a in &mem {
                for (c, v) in m.row(a) {
                    let target = if c == a { decay } else { 0.0 };
                    if (v - C64::new(target, 0.0)).norm() > 1e-12 * decay.abs().max(1.0) {
                        return None;
                    }
                }
            }
            let block = CMatrix::from_fn(mem.len(), mem.len(), |r, c| l.hamiltonian.get(mem[r], mem[c]));
            let (energies, vectors) = dense::hermitian_eigen(block);
            sectors.push(Sector { members: mem, energies, vectors, decay });
        }
        if sectors[0].members.len() != 1 || row != sectors[0].members[0] * (d + 1) {
            return None;
        }
        Some(Self { dim: d, gamma: l.gamma, row, collapse: &l.collapse, sectors })
    }

    fn solve(&self, r: &[C64]) -> Vec<C64> {
        let d = self.dim;
        let top = self.sectors.len() - 1;
        let mut x = vec![ZERO; d * d];
        for total in (1..=2 * top).rev() {
            for nl in total.saturating_sub(top)..=total.min(top) {
                let nr = total - nl;
                let (sl, sr) = (&self.sectors[nl], &self.sectors[nr]);
                if sl.members.is_empty() || sr.members.is_empty() {
                    continue;
                }
                let mut rhs = CMatrix::from_fn(sl.members.len(), sr.members.len(), |a, b| {
                    r[sl.members[a] + sr.members[b] * d]
                });
                if nl < top && nr < top && self.gamma != 0.0 {
                    // jump feed from sector pair (nl+1, nr+1), already solved
                    for (a, &ia) in sl.members.iter().enumerate() {
                        for (b, &ib) in sr.members.iter().enumerate() {
                            let mut acc = ZERO;
                            for c in self.collapse {
                                for (ka, ca) in c.row(ia) {
                                    for (kb, cb) in c.row(ib) {
                                        acc += ca * x[ka + kb * d] * cb.conj();
                                    }
                                }
                            }
                            rhs[(a, b)] -= 2.0 * self.gamma * acc;
                        }
                    }
                }
                let mut y = sl.vectors.adjoint() * rhs * &sr.vectors;
                let damp = self.gamma * (sl.decay + sr.decay);
                for a in 0..sl.members.len() {
                    for b in 0..sr.members.len() {
                        let denom = C64::new(-damp, -(sl.energies[a] - sr.energies[b]));
                        y[(a, b)] /= denom;
                    }
                }
                let xb = &sl.vectors * y * sr.vectors.adjoint();
                for (a, &ia) in sl.members.iter().enumerate() {
                    for (b, &ib) in sr.members.iter().enumerate() {
                        x[ia + ib * d] = xb[(a, b)];
                    }
                }
            }
        }
        let off_trace: C64 = (0..d).map(|i| x[i + i * d]).sum();
        x[self.row] = r[self.row] - off_trace;
        x
    }
}

/// Restarted GMRES with right preconditioning. Returns the solution, the
/// final relative residual and the number of inner iterations.
fn gmres<A, P>(apply: &A, precond: P, b: &[C64], opts: &SteadyStateOptions) -> (Vec<C64>, f64, usize)
where
    A: Fn(&[C64], &mut [C64]),
    P: Fn(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let m = opts.restart.max(1);
    let b_norm = norm2(b);
    let mut x = vec![ZERO; n];
    let mut r = vec![ZERO; n];
    let mut w = vec![ZERO; n];
    let mut iterations = 0;
    let mut rel = 1.0;
    if b_norm == 0.0 {
        return (x, 0.0, 0);
    }
    while iterations < opts.max_iterations {
        apply(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm2(&r);
        rel = beta / b_norm;
        if rel <= opts.tol {
            break;
        }
        let mut v: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|z| z / beta).collect());
        let mut h = vec![vec![ZERO; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![ZERO; m];
        let mut g = vec![ZERO; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            let z = precond(&v[k]);
            apply(&z, &mut w);
            for (i, vi) in v.iter().enumerate() {
                let hik: C64 = vi.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= hik * vj;
                }
            }
            let hn = norm2(&w);
            h[k + 1][k] = C64::new(hn, 0.0);
            for i in 0..k {
                let (a, bb) = (h[i][k], h[i + 1][k]);
                h[i][k] = cs[i] * a + sn[i] * bb;
                h[i + 1][k] = -sn[i].conj() * a + cs[i] * bb;
            }
            let (a, bb) = (h[k][k], h[k + 1][k]);
            let t = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if t == 0.0 {
                cs[k] = 1.0;
                sn[k] = ZERO;
            } else if a.norm() == 0.0 {
                cs[k] = 0.0;
                sn[k] = bb.conj() / bb.norm();
            } else {
                cs[k] = a.norm() / t;
                sn[k] = a / a.norm() * bb.conj() / t;
            }
            h[k][k] = cs[k] * a + sn[k] * bb;
            h[k + 1][k] = ZERO;
            g[k + 1] = -sn[k].conj() * g[k];
            g[k] = cs[k] * g[k];
            iterations += 1;
            k_used = k + 1;
            rel = g[k + 1].norm() / b_norm;
            if rel <= opts.tol || hn == 0.0 || iterations >= opts.max_iterations {
                break;
            }
            v.push(w.iter().map(|z| z / hn).collect());
        }
        // back substitution
        let mut y = vec![ZERO; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        let mut update = vec![ZERO; n];
        for (yi, vi) in y.iter().zip(&v) {
            for (u, vv) in update.iter_mut().zip(vi) {
                *u += yi * vv;
            }
        }
        let z = precond(&update);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
        if rel <= opts.tol {
            // confirm with the true residual
            apply(&x, &mut r);
            let true_rel = norm2(&r.iter().zip(b).map(|(a, c)| c - a).collect::<Vec<_>>()) / b_norm;
            rel = true_rel;
            if true_rel <= opts.tol * 10.0 {
                break;
            }
        }
    }
    (x, rel, iterations)
}

fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

//! Three-cavity Kerr circuit: parameters, the transform to extended
//! eigenmodes, Hamiltonians in both bases, the coherent drive and the
//! analytic low-photon spectrum.
//!
//! Mode conventions used throughout the crate:
//!
//! * cavity basis: index 0, 1, 2 = resonators 1, 2, 3 (resonator 1 is the
//!   detuned one, `Omega' = Omega + J*delta`);
//! * extended basis: index 0, 1, 2 = `beta_0`, `beta_+`, `beta_-`.

use std::f64::consts::SQRT_2;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::dense;
use crate::fock::{self, BasisIndex, FockError, Ladder, SparseOperator};

pub const MODE_0: usize = 0;
pub const MODE_PLUS: usize = 1;
pub const MODE_MINUS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("invalid circuit parameters: {0}")]
    InvalidParams(String),
    #[error("the {frame:?} frame is not available here: {reason}")]
    FrameUnsupported { frame: Frame, reason: &'static str },
    #[error("basis must have exactly three modes (got {0})")]
    NotThreeModes(usize),
}

/// Reference frame for Hamiltonians and drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Explicit `e^{i omega t}` drive carriers.
    Lab,
    /// Uniform frame at the pump frequency: `H - omega * N_total`.
    Rotating,
    /// Pump frame for `beta_0` and a split frame for the conjugate pair,
    /// `omega'_+ + omega'_- = 2 omega`, removing the large `+-J` offsets of
    /// the conjugate modes. Exact only when the Hamiltonian conserves
    /// `n_+ - n_-`, i.e. with `delta H` neglected.
    PairRotating,
}

impl Frame {
    pub fn name(self) -> &'static str {
        match self {
            Frame::Lab => "lab",
            Frame::Rotating => "rotating",
            Frame::PairRotating => "pair",
        }
    }
}

/// Physical parameters of the circuit. All frequencies and rates share one
/// (arbitrary) unit; `x` and `delta` are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CircuitParams {
    /// Bare cavity frequency of resonators 2 and 3.
    pub omega_c: f64,
    /// Hopping between resonator 1 and resonators 2, 3.
    pub j: f64,
    /// Hopping ratio `J'/J`.
    pub x: f64,
    /// Detuning of resonator 1 in units of `J`.
    pub delta: f64,
    /// Kerr strength per cavity.
    pub u: f64,
    /// Amplitude decay rate of each extended mode.
    pub gamma: f64,
    /// Drive amplitude.
    pub drive: f64,
    /// Pump frequency.
    pub omega_pump: f64,
}

impl CircuitParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = [
            self.omega_c,
            self.j,
            self.x,
            self.delta,
            self.u,
            self.gamma,
            self.drive,
            self.omega_pump,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::InvalidParams("non-finite value".into()));
        }
        if self.j <= 0.0 {
            return Err(ModelError::InvalidParams(format!("J must be positive (got {})", self.j)));
        }
        if self.u < 0.0 {
            return Err(ModelError::InvalidParams(format!("u must be non-negative (got {})", self.u)));
        }
        if self.gamma < 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "gamma must be non-negative (got {})",
                self.gamma
            )));
        }
        if self.x < 0.0 {
            return Err(ModelError::InvalidParams(format!("x must be non-negative (got {})", self.x)));
        }
        Ok(())
    }

    /// The weak-nonlinearity picture assumes `u << J`.
    pub fn strong_nonlinearity(&self) -> bool {
        self.u / self.j > 0.1
    }

    pub fn omega_prime(&self) -> f64 {
        self.omega_c + self.j * self.delta
    }

    pub fn extended(&self) -> ExtendedParams {
        ExtendedParams::new(self)
    }

    /// Parameters in units where the four-wave-mixing strength is one.
    ///
    /// `J` is fixed by `kappa = sqrt(2) u / s = 1` with `u = u_over_j * J`,
    /// and `Omega = 0` so every frequency is a detuning from the bare
    /// cavities. Requires `u_over_j > 0`.
    pub fn kappa_units(x: f64, u_over_j: f64, delta: f64) -> Result<Self, ModelError> {
        if !(u_over_j > 0.0) {
            return Err(ModelError::InvalidParams(
                "kappa units need a nonzero Kerr strength (u/J > 0)".into(),
            ));
        }
        let s = ModeTransform::new(x, delta).s;
        let j = s / (SQRT_2 * u_over_j);
        let p = Self {
            omega_c: 0.0,
            j,
            x,
            delta,
            u: u_over_j * j,
            gamma: 0.0,
            drive: 0.0,
            omega_pump: 0.0,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Orthogonal 3x3 transform from cavity operators to extended modes,
/// `beta_k = sum_i rows[k][i] a_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeTransform {
    pub s: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub rows: [[f64; 3]; 3],
}

impl ModeTransform {
    pub fn new(x: f64, delta: f64) -> Self {
        let d = delta - x;
        let s = (d * d + 8.0).sqrt();
        let c_plus = d + s;
        // c_+ c_- = -8; this form avoids cancellation when d >> 1
        let c_minus = if d >= 0.0 { -8.0 / c_plus } else { d - s };
        let c_plus = if d >= 0.0 { c_plus } else { -8.0 / c_minus };
        let row = |c: f64| {
            let norm = (8.0 + c * c).sqrt();
            [c / norm, 2.0 / norm, 2.0 / norm]
        };
        let inv_sqrt2 = 1.0 / SQRT_2;
        Self {
            s,
            c_plus,
            c_minus,
            rows: [[0.0, -inv_sqrt2, inv_sqrt2], row(c_plus), row(c_minus)],
        }
    }

    /// `max |U U^T - I|`.
    pub fn unitarity_error(&self) -> f64 {
        let mut err = 0.0f64;
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3).map(|i| self.rows[a][i] * self.rows[b][i]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                err = err.max((dot - target).abs());
            }
        }
        err
    }
}

/// Extended-mode frequencies and Kerr coefficients.
///
/// `alpha[k][k']` multiplies `beta_k^dag beta_k'^dag beta_k' beta_k` in an
/// ordered double sum, so each unordered cross pair appears twice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedParams {
    pub omega_0: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub s: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub kappa: f64,
    pub alpha: [[f64; 3]; 3],
    pub transform: ModeTransform,
}

impl ExtendedParams {
    pub fn new(p: &CircuitParams) -> Self {
        let t = ModeTransform::new(p.x, p.delta);
        let s = t.s;
        let d = p.delta - p.x;
        let kappa = SQRT_2 * p.u / s;
        let a00 = kappa * s / (2.0 * SQRT_2);
        let a_pm = 6.0 * kappa / (SQRT_2 * s);
        let a_p0 = kappa / (2.0 * SQRT_2) * (s - d);
        let a_m0 = kappa / (2.0 * SQRT_2) * (s + d);
        let a_pp = kappa / (4.0 * SQRT_2 * s) * (3.0 * s * s - 12.0 + d * s);
        let a_mm = kappa / (4.0 * SQRT_2 * s) * (3.0 * s * s - 12.0 - d * s);
        Self {
            omega_0: p.omega_c - p.j * p.x,
            omega_plus: p.omega_c + 0.5 * p.j * (p.delta + p.x + s),
            omega_minus: p.omega_c + 0.5 * p.j * (p.delta + p.x - s),
            s,
            c_plus: t.c_plus,
            c_minus: t.c_minus,
            kappa,
            alpha: [[a00, a_p0, a_m0], [a_p0, a_pp, a_pm], [a_m0, a_pm, a_mm]],
            transform: t,
        }
    }

    pub fn frequencies(&self) -> [f64; 3] {
        [self.omega_0, self.omega_plus, self.omega_minus]
    }

    /// Energy of the Fock state `(n_0, n_+, n_-)` under the explicit
    /// extended-mode Hamiltonian, ignoring the four-wave-mixing coupling.
    pub fn diagonal_energy(&self, occ: [usize; 3]) -> f64 {
        let w = self.frequencies();
        let mut e = 0.0;
        for k in 0..3 {
            let nk = occ[k] as f64;
            e += w[k] * nk + self.alpha[k][k] * nk * (nk - 1.0);
            for l in 0..3 {
                if l != k {
                    e += self.alpha[k][l] * nk * occ[l] as f64;
                }
            }
        }
        e
    }
}

/// Closed-form extended parameters valid at the single-pair resonance,
/// to first order in `u/J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonantParams {
    pub omega_0: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub kappa: f64,
    pub alpha: [[f64; 3]; 3],
}

impl ResonantParams {
    pub fn new(p: &CircuitParams) -> Self {
        let x = p.x;
        let r = (1.0 + 2.0 * x * x).sqrt();
        let kappa = p.u / (2.0 * r);
        let q = (4.0 * x * x - 1.0) / (4.0 * x * x + 2.0);
        let wpm = |sign: f64| {
            p.omega_c - (x - sign * SQRT_2 * r) * p.j + q * (r - sign * SQRT_2 * x) * kappa
        };
        let a00 = r * kappa;
        let a_pp = (3.0 + 12.0 * x * x - 2.0 * x * (2.0 + 4.0 * x * x).sqrt()) / (4.0 * r) * kappa;
        let a_mm = (3.0 + 12.0 * x * x + 2.0 * x * (2.0 + 4.0 * x * x).sqrt()) / (4.0 * r) * kappa;
        let a_p0 = (r + SQRT_2 * x) * kappa;
        let a_m0 = (r - SQRT_2 * x) * kappa;
        let a_pm = 3.0 * kappa / (2.0 * r);
        Self {
            omega_0: p.omega_c - p.j * x,
            omega_plus: wpm(1.0),
            omega_minus: wpm(-1.0),
            kappa,
            alpha: [[a00, a_p0, a_m0], [a_p0, a_pp, a_pm], [a_m0, a_pm, a_mm]],
        }
    }
}

/// Detuning `delta` that makes `|n0+2, n+, n-> ` and `|n0, n++1, n-+1>`
/// degenerate, to first order in `u/J` and neglecting `delta H`. For
/// `n+ = n- = 0` this is independent of `n0`.
pub fn resonance_detuning(x: f64, u_over_j: f64, n_plus: usize, n_minus: usize) -> f64 {
    let r = (1.0 + 2.0 * x * x).sqrt();
    let kappa_over_j = u_over_j / (2.0 * r);
    let np = n_plus as f64;
    let nm = n_minus as f64;
    -3.0 * x
        + 0.5
            * kappa_over_j
            * ((4.0 * x * x - 1.0) / r * (2.0 + np + nm) + 10.0 * SQRT_2 * x * (np - nm))
}

/// Single-pair resonance, `(4x^2 - 1)/(4x^2 + 2) * u/J - 3x`.
pub fn pair_resonance_detuning(x: f64, u_over_j: f64) -> f64 {
    -3.0 * x + (4.0 * x * x - 1.0) / (4.0 * x * x + 2.0) * u_over_j
}

fn require_three_modes(basis: &BasisIndex) -> Result<(), ModelError> {
    if basis.num_modes() != 3 {
        return Err(ModelError::NotThreeModes(basis.num_modes()));
    }
    Ok(())
}

struct Ladders {
    a: [SparseOperator; 3],
    ad: [SparseOperator; 3],
}

impl Ladders {
    fn new(basis: &BasisIndex) -> Result<Self, FockError> {
        let a = [0, 1, 2].map(|k| fock::ladder(basis, k, Ladder::Annihilate));
        let [a0, a1, a2] = a;
        let a = [a0?, a1?, a2?];
        let ad = [a[0].adjoint(), a[1].adjoint(), a[2].adjoint()];
        Ok(Self { a, ad })
    }
}

/// `u * sum_i A_i^dag A_i^dag A_i A_i` for arbitrary mode operators `A_i`.
fn kerr_term(u: f64, a: &[SparseOperator], ad: &[SparseOperator]) -> Result<SparseOperator, FockError> {
    let dim = a[0].dim();
    let mut h = SparseOperator::zeros(dim);
    for (ai, adi) in a.iter().zip(ad) {
        let lowered = ai.matmul(ai)?;
        let raised = adi.matmul(adi)?;
        h = h.add(&raised.matmul(&lowered)?.scale_real(u))?;
    }
    Ok(h)
}

fn frame_shift(
    basis: &BasisIndex,
    frame: Frame,
    params: &CircuitParams,
    ext: Option<&ExtendedParams>,
) -> Result<Option<SparseOperator>, ModelError> {
    match frame {
        Frame::Lab => Ok(None),
        Frame::Rotating => Ok(Some(fock::total_number(basis).scale_real(params.omega_pump))),
        Frame::PairRotating => {
            let ext = ext.ok_or(ModelError::FrameUnsupported {
                frame,
                reason: "the split pair frame is defined on extended modes only",
            })?;
            let f = pair_frame_frequencies(params, ext);
            Ok(Some(SparseOperator::diagonal((0..basis.dim()).map(|i| {
                let occ = basis.state(i);
                C64::new((0..3).map(|k| f[k] * occ[k] as f64).sum(), 0.0)
            }))))
        }
    }
}

/// Frame frequencies of `(beta_0, beta_+, beta_-)` in the pair frame.
pub fn pair_frame_frequencies(params: &CircuitParams, ext: &ExtendedParams) -> [f64; 3] {
    let shift = params.omega_pump - 0.5 * (ext.omega_plus + ext.omega_minus);
    [params.omega_pump, ext.omega_plus + shift, ext.omega_minus + shift]
}

/// `H0 + H2` in the single-cavity basis (exact Kerr term, no drive).
pub fn hamiltonian_cavity(
    params: &CircuitParams,
    basis: &BasisIndex,
    frame: Frame,
) -> Result<SparseOperator, ModelError> {
    params.validate()?;
    require_three_modes(basis)?;
    let l = Ladders::new(basis)?;
    let dim = basis.dim();
    let jp = params.j * params.x;
    let mut h = SparseOperator::diagonal((0..dim).map(|i| {
        let occ = basis.state(i);
        C64::new(
            params.omega_prime() * occ[0] as f64 + params.omega_c * (occ[1] as f64 + occ[2] as f64),
            0.0,
        )
    }));
    let hop = |i: usize, k: usize, amp: f64| -> Result<SparseOperator, FockError> {
        let fwd = l.ad[i].matmul(&l.a[k])?;
        Ok(fwd.add(&fwd.adjoint())?.scale_real(amp))
    };
    h = h.add(&hop(1, 2, jp)?)?;
    h = h.add(&hop(0, 1, params.j)?)?;
    h = h.add(&hop(0, 2, params.j)?)?;
    h = h.add(&kerr_term(params.u, &l.a, &l.ad)?)?;
    if let Some(shift) = frame_shift(basis, frame, params, None)? {
        h = h.sub(&shift)?;
    }
    Ok(h)
}

/// The Kerr interaction written in extended modes.
///
/// With `include_delta_h` the cavity-basis Kerr term is transformed exactly
/// through the mode transform; without it only the four-wave-mixing and
/// occupation-shift terms are kept.
pub fn kerr_extended(
    params: &CircuitParams,
    basis: &BasisIndex,
    include_delta_h: bool,
) -> Result<SparseOperator, ModelError> {
    require_three_modes(basis)?;
    let ext = params.extended();
    let l = Ladders::new(basis)?;
    if include_delta_h {
        // a_i = sum_k U[k][i] beta_k
        let rows = ext.transform.rows;
        let mut cavity_a = Vec::with_capacity(3);
        for i in 0..3 {
            let mut op = SparseOperator::zeros(basis.dim());
            for k in 0..3 {
                op = op.add(&l.a[k].scale_real(rows[k][i]))?;
            }
            cavity_a.push(op);
        }
        let cavity_ad: Vec<_> = cavity_a.iter().map(|a| a.adjoint()).collect();
        return Ok(kerr_term(params.u, &cavity_a, &cavity_ad)?);
    }
    let fwm = l.ad[MODE_PLUS]
        .matmul(&l.ad[MODE_MINUS])?
        .matmul(&l.a[MODE_0])?
        .matmul(&l.a[MODE_0])?;
    let fwm = fwm.add(&fwm.adjoint())?.scale_real(ext.kappa);
    let shifts = SparseOperator::diagonal((0..basis.dim()).map(|i| {
        let occ = basis.state(i);
        let occ = [occ[0] as usize, occ[1] as usize, occ[2] as usize];
        let mut e = 0.0;
        for k in 0..3 {
            let nk = occ[k] as f64;
            e += ext.alpha[k][k] * nk * (nk - 1.0);
            for m in 0..3 {
                if m != k {
                    e += ext.alpha[k][m] * nk * occ[m] as f64;
                }
            }
        }
        C64::new(e, 0.0)
    }));
    Ok(fwm.add(&shifts)?)
}

/// The non-resonant remainder `delta H` = exact transformed Kerr term minus
/// the explicit extended-mode terms.
pub fn delta_h(params: &CircuitParams, basis: &BasisIndex) -> Result<SparseOperator, ModelError> {
    Ok(kerr_extended(params, basis, true)?.sub(&kerr_extended(params, basis, false)?)?)
}

/// `sum_k omega_k n_k + H2` in the extended basis (no drive).
pub fn hamiltonian_extended(
    params: &CircuitParams,
    basis: &BasisIndex,
    include_delta_h: bool,
    frame: Frame,
) -> Result<SparseOperator, ModelError> {
    params.validate()?;
    require_three_modes(basis)?;
    if include_delta_h && frame == Frame::PairRotating {
        return Err(ModelError::FrameUnsupported {
            frame,
            reason: "delta H does not conserve n+ - n-, so the split frame is time dependent",
        });
    }
    let ext = params.extended();
    let w = ext.frequencies();
    let free = SparseOperator::diagonal((0..basis.dim()).map(|i| {
        let occ = basis.state(i);
        C64::new((0..3).map(|k| w[k] * occ[k] as f64).sum(), 0.0)
    }));
    let mut h = free.add(&kerr_extended(params, basis, include_delta_h)?)?;
    if let Some(shift) = frame_shift(basis, frame, params, Some(&ext))? {
        h = h.sub(&shift)?;
    }
    Ok(h)
}

/// Coherent pump on `beta_0`, `-f beta_0 - f* beta_0^dag` for a complex
/// amplitude `f`, split into two Hermitian quadratures so that the drive
/// at amplitude `f` is `Re f * quadrature_x + Im f * quadrature_y`.
///
/// In the lab frame the amplitude carries `e^{i omega t}`; in both rotating
/// frames it is the bare (possibly time dependent) envelope.
#[derive(Debug, Clone)]
pub struct DriveOperator {
    pub quadrature_x: SparseOperator,
    pub quadrature_y: SparseOperator,
    /// Carrier frequency in the lab frame, `None` in rotating frames.
    pub carrier: Option<f64>,
}

impl DriveOperator {
    /// Complex amplitude multiplying the quadratures at time `t` for a real
    /// envelope value.
    pub fn amplitude(&self, envelope: f64, t: f64) -> C64 {
        match self.carrier {
            Some(w) => C64::from_polar(envelope, w * t),
            None => C64::new(envelope, 0.0),
        }
    }

    /// Static drive operator for a complex amplitude.
    pub fn operator(&self, f: C64) -> SparseOperator {
        self.quadrature_x
            .scale_real(f.re)
            .add(&self.quadrature_y.scale_real(f.im))
            .expect("quadratures share a basis")
    }
}

pub fn drive_operator(basis: &BasisIndex, frame: Frame, omega_pump: f64) -> Result<DriveOperator, ModelError> {
    require_three_modes(basis)?;
    let b0 = fock::ladder(basis, MODE_0, Ladder::Annihilate)?;
    let b0d = b0.adjoint();
    let quadrature_x = b0.add(&b0d)?.scale_real(-1.0);
    let quadrature_y = b0.sub(&b0d)?.scale(C64::new(0.0, -1.0));
    Ok(DriveOperator {
        quadrature_x,
        quadrature_y,
        carrier: (frame == Frame::Lab).then_some(omega_pump),
    })
}

/// One level of the truncated low-photon spectrum.
#[derive(Debug, Clone)]
pub struct SpectrumLevel {
    pub label: &'static str,
    pub photons: usize,
    /// Numerical eigenvalue.
    pub energy: f64,
    /// Closed-form approximation.
    pub analytic: f64,
    /// Amplitudes over [`TRUNCATED_STATES`].
    pub eigenvector: [C64; 6],
}

/// The six extended-mode Fock states `(n_0, n_+, n_-)` kept in the truncated
/// spectrum.
pub const TRUNCATED_STATES: [[usize; 3]; 6] =
    [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0], [0, 1, 1], [1, 1, 1]];

/// Diagonalise the explicit extended-mode Hamiltonian (`delta H` neglected)
/// on [`TRUNCATED_STATES`]. Levels are returned as `0, 1, 2B, 2A, 3B, 3A`
/// (A is the upper member of each doublet).
pub fn truncated_spectrum(params: &CircuitParams) -> Result<Vec<SpectrumLevel>, ModelError> {
    let basis = fock::build_basis(3, 3, Some(3))?;
    let h = hamiltonian_extended(params, &basis, false, Frame::Lab)?;
    let idx: Vec<usize> = TRUNCATED_STATES
        .iter()
        .map(|occ| basis.index_of(occ).expect("state inside cap-3 basis"))
        .collect();
    let ext = params.extended();
    let w0 = ext.omega_0;
    let k = ext.kappa;
    let r = (2.0 + 4.0 * params.x * params.x).sqrt();
    let r3 = (6.0 + 12.0 * params.x * params.x).sqrt();

    let block = |members: &[usize]| {
        let sub: Vec<Vec<C64>> = members
            .iter()
            .map(|&a| members.iter().map(|&b| h.get(idx[a], idx[b])).collect())
            .collect();
        dense::hermitian_eigen(dense::from_rows(&sub))
    };
    let mut levels = Vec::with_capacity(6);
    let mut push = |label, photons, energy, analytic, members: &[usize], vec: Vec<C64>| {
        let mut eigenvector = [C64::new(0.0, 0.0); 6];
        for (&m, v) in members.iter().zip(vec) {
            eigenvector[m] = v;
        }
        levels.push(SpectrumLevel { label, photons, energy, analytic, eigenvector });
    };
    push("0", 0, h.get(idx[0], idx[0]).re, 0.0, &[0], vec![C64::new(1.0, 0.0)]);
    push("1", 1, h.get(idx[1], idx[1]).re, w0, &[1], vec![C64::new(1.0, 0.0)]);
    for (n, members, labels, analytic) in [
        (
            2usize,
            [2usize, 4],
            ["2B", "2A"],
            [2.0 * w0 + (r - 1.0) * SQRT_2 * k, 2.0 * w0 + (r + 1.0) * SQRT_2 * k],
        ),
        (
            3,
            [3, 5],
            ["3B", "3A"],
            [3.0 * w0 + (r3 - 1.0) * 6f64.sqrt() * k, 3.0 * w0 + (r3 + 1.0) * 6f64.sqrt() * k],
        ),
    ] {
        let (vals, vecs) = block(&members);
        for lvl in 0..2 {
            let v = vec![vecs[(0, lvl)], vecs[(1, lvl)]];
            // fix the global phase: first component real and non-negative
            let phase = if v[0].norm() > 0.0 { v[0].conj() / v[0].norm() } else { C64::new(1.0, 0.0) };
            let v = v.into_iter().map(|z| z * phase).collect();
            push(labels[lvl], n, vals[lvl], analytic[lvl], &members, v);
        }
    }
    Ok(levels)
}

/// Look up a level by label (`"2A"`, `"3B"`, ...).
pub fn level<'a>(levels: &'a [SpectrumLevel], label: &str) -> Option<&'a SpectrumLevel> {
    levels.iter().find(|l| l.label == label)
}

//! Photon-counting observables of the extended modes, harvest-time detection
//! for pulsed runs, and the two-ended waveguide output map of a conjugate
//! pair.

use std::f64::consts::SQRT_2;

use crate::fock::BasisIndex;
use crate::lindblad::DensityMatrix;

/// Occupations below this make `g2` undefined.
pub const G2_MIN_OCCUPATION: f64 = 1e-12;

/// Observables evaluated on one density matrix.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ObservableRecord {
    /// `Tr[beta_k^dag beta_k rho]` for `k = 0, +, -`.
    pub occupation: [f64; 3],
    /// Zero-delay correlations, `None` when the occupation vanishes.
    pub g2: [Option<f64>; 3],
    /// Two photons in `omega_0`, conjugate modes traced out.
    pub p20: f64,
    /// One photon in each conjugate mode, `omega_0` traced out.
    pub p11: f64,
    /// `|2, 0, 0>` population.
    pub p20_strict: f64,
    /// `|0, 1, 1>` population.
    pub p11_strict: f64,
    /// `|tr rho - 1|`.
    pub trace_err: f64,
    /// Largest imaginary part of a population.
    pub imag_residual: f64,
}

/// Precomputed diagonal weights for a basis; all observables here are
/// diagonal in the Fock basis.
#[derive(Debug, Clone)]
pub struct ObservableSet {
    occ: Vec<[f64; 3]>,
    pair: Vec<bool>,
    two_zero: Vec<bool>,
    pair_strict: Option<usize>,
    two_zero_strict: Option<usize>,
}

impl ObservableSet {
    pub fn new(basis: &BasisIndex) -> Self {
        assert_eq!(basis.num_modes(), 3, "observables are defined on the three extended modes");
        let occ: Vec<[f64; 3]> = basis
            .states()
            .map(|s| [s[0] as f64, s[1] as f64, s[2] as f64])
            .collect();
        Self {
            pair: basis.states().map(|s| s[1] == 1 && s[2] == 1).collect(),
            two_zero: basis.states().map(|s| s[0] == 2).collect(),
            pair_strict: basis.index_of(&[0, 1, 1]),
            two_zero_strict: basis.index_of(&[2, 0, 0]),
            occ,
        }
    }

    pub fn evaluate(&self, rho: &DensityMatrix) -> ObservableRecord {
        assert_eq!(rho.dim(), self.occ.len());
        let mut n = [0.0; 3];
        let mut nn = [0.0; 3];
        let (mut p20, mut p11) = (0.0, 0.0);
        let mut imag = 0.0f64;
        for (i, occ) in self.occ.iter().enumerate() {
            let z = rho.get(i, i);
            imag = imag.max(z.im.abs());
            let p = z.re;
            for k in 0..3 {
                n[k] += occ[k] * p;
                nn[k] += occ[k] * (occ[k] - 1.0) * p;
            }
            if self.pair[i] {
                p11 += p;
            }
            if self.two_zero[i] {
                p20 += p;
            }
        }
        let strict = |idx: Option<usize>| idx.map_or(0.0, |i| rho.get(i, i).re);
        ObservableRecord {
            occupation: n,
            g2: [0, 1, 2].map(|k| g2_ratio(nn[k], n[k])),
            p20,
            p11,
            p20_strict: strict(self.two_zero_strict),
            p11_strict: strict(self.pair_strict),
            trace_err: rho.trace_error(),
            imag_residual: imag,
        }
    }
}

fn g2_ratio(second_moment: f64, occupation: f64) -> Option<f64> {
    (occupation >= G2_MIN_OCCUPATION).then(|| second_moment / (occupation * occupation))
}

/// `Tr[beta_k^dag beta_k rho]`.
pub fn occupation(basis: &BasisIndex, rho: &DensityMatrix, mode: usize) -> f64 {
    ObservableSet::new(basis).evaluate(rho).occupation[mode]
}

/// `Tr[(beta_k^dag)^2 beta_k^2 rho] / N_k^2`, or `None` when `N_k` vanishes.
pub fn g2(basis: &BasisIndex, rho: &DensityMatrix, mode: usize) -> Option<f64> {
    ObservableSet::new(basis).evaluate(rho).g2[mode]
}

/// `(P(2_0), P(1_+, 1_-))` with the other modes traced out.
pub fn pair_probabilities(basis: &BasisIndex, rho: &DensityMatrix) -> (f64, f64) {
    let r = ObservableSet::new(basis).evaluate(rho);
    (r.p20, r.p11)
}

/// Best harvest point of a pulsed trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Harvest {
    pub index: usize,
    pub t_max: f64,
    pub p_max: f64,
    pub g2_at_max: Option<f64>,
    /// The maximum sits on the first or last sample: the window is too short.
    pub on_boundary: bool,
    /// Every interior local maximum as `(t, P)`.
    pub local_maxima: Vec<(f64, f64)>,
}

/// Global maximum of `p11` over the sampled window.
pub fn find_harvest(times: &[f64], p11: &[f64], g2_plus: &[Option<f64>]) -> Option<Harvest> {
    assert_eq!(times.len(), p11.len());
    assert_eq!(times.len(), g2_plus.len());
    let (index, &p_max) = p11
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, &f64)>, (i, p)| match best {
            Some((_, b)) if *b >= *p => best,
            _ => Some((i, p)),
        })?;
    let local_maxima = (1..p11.len().saturating_sub(1))
        .filter(|&i| p11[i] > p11[i - 1] && p11[i] >= p11[i + 1])
        .map(|i| (times[i], p11[i]))
        .collect();
    Some(Harvest {
        index,
        t_max: times[index],
        p_max,
        g2_at_max: g2_plus[index],
        on_boundary: index == 0 || index + 1 == p11.len(),
        local_maxima,
    })
}

/// Amplitudes of a conjugate pair `|1_+, 1_->` leaking into a left
/// waveguide (resonator 1) and a right one (resonators 2 and 3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveguideOutput {
    /// `|L_+, R_->`.
    pub lr: f64,
    /// `|R_+, L_->`.
    pub rl: f64,
    /// `|R_+, R_->`.
    pub rr: f64,
    /// `|L_+, L_->`.
    pub ll: f64,
}

impl WaveguideOutput {
    pub fn amplitudes(&self) -> [f64; 4] {
        [self.lr, self.rl, self.rr, self.ll]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes().iter().map(|a| a * a).sum()
    }

    /// Probability of one photon at each end.
    pub fn postselection_probability(&self) -> f64 {
        self.lr * self.lr + self.rl * self.rl
    }

    /// Overlap of the renormalised one-photon-per-end state with
    /// `(|L_+ R_-> - |R_+ L_->) / sqrt 2`.
    pub fn bell_fidelity(&self) -> f64 {
        let p = self.postselection_probability();
        if p == 0.0 {
            return 0.0;
        }
        let overlap = (self.lr - self.rl) / SQRT_2;
        overlap * overlap / p
    }
}

pub fn waveguide_output(x: f64) -> WaveguideOutput {
    let r = (1.0 + 2.0 * x * x).sqrt();
    let skew = x / (SQRT_2 * r);
    WaveguideOutput {
        lr: 0.5 - skew,
        rl: -(0.5 + skew),
        rr: 0.5 / r,
        ll: -0.5 / r,
    }
}

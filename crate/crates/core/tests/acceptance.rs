//! Acceptance checks A1-A10. Prints one PASS/FAIL line per criterion. A
//! failed criterion is reported, not hidden; set `KERRPAIR_ACCEPTANCE_STRICT=1`
//! to also make the process exit nonzero.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use kerrpair::circuit::{
    hamiltonian_cavity, level, pair_resonance_detuning, truncated_spectrum, CircuitParams, Frame,
};
use kerrpair::dense;
use kerrpair::fock;
use kerrpair::lindblad::{
    circuit_liouvillian, propagate_with, steady_state, steady_state_by_propagation, DensityMatrix, DrivePulse,
    ModelOptions, PropagationOptions, SteadyStateOptions,
};
use kerrpair::observables::{waveguide_output, ObservableSet};
use kerrpair::sweep::config::{Axis, AxisName, SweepSpec, Value};
use kerrpair::sweep::run::{relative_change, run, SweepResult};
use num_complex::Complex64 as C64;

const X: f64 = 1.0;
const U_OVER_J: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn resonant_params() -> CircuitParams {
    CircuitParams::kappa_units(X, U_OVER_J, pair_resonance_detuning(X, U_OVER_J)).unwrap()
}

fn config(name: &str) -> SweepSpec {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    SweepSpec::load(&path).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `(P_11, g2_plus, N_plus)` per grid point.
fn pair_stats(r: &SweepResult) -> Vec<(f64, Option<f64>, f64)> {
    r.points
        .iter()
        .map(|p| {
            let rec = p.record().expect("point solved");
            (rec.p11, rec.g2[1], rec.occupation[1])
        })
        .collect()
}

fn local_maxima(v: &[f64]) -> Vec<usize> {
    (1..v.len() - 1).filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1]).collect()
}

fn a1() -> Outcome {
    let p = resonant_params();
    let levels = truncated_spectrum(&p).unwrap();
    let e = |l: &str| level(&levels, l).unwrap().energy;
    let d2 = e("2A") - e("2B");
    let d3 = e("3A") - e("3B");
    let (t2, t3) = (2.0 * SQRT_2, 2.0 * 6f64.sqrt());

    // exact Kerr term in the cavity basis, two-photon sector
    let basis = fock::build_basis(3, 2, Some(2)).unwrap();
    let h = hamiltonian_cavity(&p, &basis, Frame::Lab).unwrap();
    let sector: Vec<usize> = (0..basis.dim()).filter(|&i| basis.total_photons(i) == 2).collect();
    let block = h.submatrix(&sector);
    let (vals, _) = dense::hermitian_eigen(dense::from_rows(&block));
    let w2 = 2.0 * p.extended().omega_0;
    let mut near: Vec<f64> = vals.clone();
    near.sort_by(|a, b| (a - w2).abs().total_cmp(&(b - w2).abs()));
    let d2_exact = (near[0] - near[1]).abs();

    let (r2, r3, rx) = (rel(d2, t2), rel(d3, t3), rel(d2_exact, t2));
    Outcome::new(
        r2 < 1e-2 && r3 < 1e-2 && rx < 5e-2,
        format!("2A-2B {d2:.5} (rel {r2:.1e}), 3A-3B {d3:.5} (rel {r3:.1e}), exact N=2 block {d2_exact:.5} (rel {rx:.1e})"),
    )
}

/// Period from upward crossings of `P = 1/2`.
fn crossing_periods(t: &[f64], p: &[f64]) -> Vec<f64> {
    let mut crossings = Vec::new();
    for i in 1..p.len() {
        if p[i - 1] < 0.5 && p[i] >= 0.5 {
            let f = (0.5 - p[i - 1]) / (p[i] - p[i - 1]);
            crossings.push(t[i - 1] + f * (t[i] - t[i - 1]));
        }
    }
    crossings.windows(2).map(|w| w[1] - w[0]).collect()
}

fn a2() -> Outcome {
    let target = PI / SQRT_2;
    let basis = fock::build_basis(3, 2, Some(2)).unwrap();
    let obs = ObservableSet::new(&basis);
    let start = basis.index_of(&[2, 0, 0]).unwrap();
    let t: Vec<f64> = (0..=6000).map(|i| 6.0 * target * i as f64 / 6000.0).collect();
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for (frame, dh) in [(Frame::PairRotating, false), (Frame::Rotating, true)] {
        let p = CircuitParams { omega_pump: resonant_params().extended().omega_0, ..resonant_params() };
        let l = circuit_liouvillian(&p, &basis, ModelOptions { include_delta_h: dh, frame }).unwrap();
        let mut p11 = Vec::with_capacity(t.len());
        propagate_with(&l, &DrivePulse::off(), DensityMatrix::basis_state(basis.dim(), start), &t,
            &PropagationOptions::default(), |_, rho| p11.push(obs.evaluate(rho).p11))
        .unwrap();
        let periods = crossing_periods(&t, &p11);
        let err = if periods.len() < 5 {
            f64::INFINITY
        } else {
            periods.iter().map(|&p| rel(p, target)).fold(0.0, f64::max)
        };
        worst = worst.max(err);
        let mean = periods.iter().sum::<f64>() / periods.len().max(1) as f64;
        details.push(format!("{} dH={dh}: {} periods, mean {mean:.5}, worst rel {err:.1e}", frame.name(), periods.len()));
    }
    Outcome::new(worst < 0.02, format!("target {target:.5}; {}", details.join("; ")))
}

fn a3() -> Outcome {
    let text = r#"kind = "freq_sweep"
[circuit]
x = 1.0
u_over_j = 0.0
j = 10.0
gamma = 1.0
F = 0.5
[numerics]
n_max = 10
total_cap = 10
[[axis]]
name = "omega"
values = [-2.0, -0.5, 0.0, 0.7, 3.0]
"#;
    let spec = SweepSpec::from_toml(text).unwrap();
    let r = run(&spec, None).unwrap();
    let (f, gamma) = (0.5, 1.0);
    let (mut worst_n, mut worst_g) = (0.0f64, 0.0f64);
    for p in &r.points {
        let rec = p.record().unwrap();
        let delta = p.coords[0];
        let n0 = f * f / (delta * delta + gamma * gamma);
        worst_n = worst_n.max(rel(rec.occupation[0], n0));
        worst_g = worst_g.max((rec.g2[0].unwrap() - 1.0).abs());
    }
    Outcome::new(
        worst_n < 1e-6 && worst_g < 1e-6,
        format!("max rel error N0 {worst_n:.1e}, max |g2_0 - 1| {worst_g:.1e} over {} detunings", r.points.len()),
    )
}

fn a4() -> Outcome {
    let basis = fock::build_basis(3, 4, None).unwrap();
    let base = resonant_params();
    let w0 = base.extended().omega_0;
    let res = config("fig6.toml").resolve().unwrap();
    let opts = PropagationOptions::default();
    let mut worst_trace = 0.0f64;
    let mut worst_eig = f64::INFINITY;
    let mut samples = 0;
    for (offset, f0, tau) in [(res.resonance("res2B").unwrap(), 2.0, 0.5), (res.resonance("res2A").unwrap(), 3.0, 1.0), (0.0, 1.0, 0.3)] {
        let p = CircuitParams { gamma: 0.1, omega_pump: w0 + offset, ..base };
        let l = circuit_liouvillian(&p, &basis, ModelOptions { include_delta_h: false, frame: Frame::PairRotating }).unwrap();
        let t: Vec<f64> = (0..=200).map(|i| (2.0 * tau + 7.0) * i as f64 / 200.0).collect();
        propagate_with(&l, &DrivePulse::gaussian(f0, tau), DensityMatrix::basis_state(basis.dim(), 0), &t, &opts, |_, rho| {
            worst_trace = worst_trace.max(rho.trace_error());
            worst_eig = worst_eig.min(rho.min_eigenvalue());
            samples += 1;
        })
        .unwrap();
    }

    let mut worst_diff = 0.0f64;
    let tight = PropagationOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
    for offset in [0.0, 1.0, 2.5] {
        let p = CircuitParams { gamma: 1.0, omega_pump: w0 + offset, ..base };
        let l = circuit_liouvillian(&p, &basis, ModelOptions { include_delta_h: false, frame: Frame::PairRotating }).unwrap();
        let f = C64::new(2.0, 0.0);
        let direct = steady_state(&l, f, &SteadyStateOptions::default()).unwrap();
        let evolved = steady_state_by_propagation(&l, f, DensityMatrix::basis_state(basis.dim(), 0), 1e-9, &tight).unwrap();
        worst_diff = worst_diff.max(direct.rho.max_abs_diff(&evolved.rho));
        worst_trace = worst_trace.max(direct.rho.trace_error());
        worst_eig = worst_eig.min(direct.rho.min_eigenvalue());
    }
    Outcome::new(
        worst_trace < 1e-8 && worst_eig >= -1e-8 && worst_diff < 1e-6,
        format!(
            "{samples} trajectory samples: max |tr-1| {worst_trace:.1e}, min eig {worst_eig:.1e}; \
             direct vs propagated steady state max entry diff {worst_diff:.1e}"
        ),
    )
}

struct Peaks {
    omega: Vec<f64>,
    p11: Vec<f64>,
}

fn a5(store: &mut Option<Peaks>) -> Outcome {
    let mut spec = config("fig4.toml");
    spec.numerics.n_max = 4;
    spec.axes = vec![Axis::linspace(AxisName::Omega, -1.0, 5.0, 200)];
    let res = spec.resolve().unwrap();
    let r2a = res.resonance("res2A").unwrap();
    let r2b = res.resonance("res2B").unwrap();
    let r3a = res.resonance("res3A").unwrap();
    let r3b = res.resonance("res3B").unwrap();

    spec.circuit.drive = 0.5;
    let weak = run(&spec, None).unwrap();
    let omega = res.axes[0].values.clone();
    let stats = pair_stats(&weak);
    let p: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let top = p.iter().copied().fold(0.0, f64::max);
    // a maximum is dominant when it reaches a tenth of the largest one
    let dominant: Vec<usize> = local_maxima(&p).into_iter().filter(|&i| p[i] >= 0.1 * top).collect();
    let near = |i: usize, target: f64| (omega[i] - target).abs() < 0.5;
    let two_photon = dominant.len() == 2
        && ((near(dominant[0], r2b) && near(dominant[1], r2a)) || (near(dominant[0], r2a) && near(dominant[1], r2b)));
    let antibunched = dominant.iter().all(|&i| stats[i].1.is_some_and(|g| g < 1.0));
    let found: Vec<String> =
        dominant.iter().map(|&i| format!("{:.3} (P {:.4}, g2+ {:.1e})", omega[i], p[i], stats[i].1.unwrap_or(f64::NAN))).collect();

    spec.circuit.drive = 1.5;
    let strong = run(&spec, None).unwrap();
    let ps: Vec<f64> = pair_stats(&strong).iter().map(|s| s.0).collect();
    let maxima = local_maxima(&ps);
    let three_a = maxima.iter().any(|&i| near(i, r3a));
    let three_b = maxima.iter().any(|&i| near(i, r3b));
    let strong_found: Vec<String> = maxima.iter().map(|&i| format!("{:.3}", omega[i])).collect();

    *store = Some(Peaks { omega: dominant.iter().map(|&i| omega[i]).collect(), p11: dominant.iter().map(|&i| p[i]).collect() });
    Outcome::new(
        two_photon && antibunched && three_a && three_b,
        format!(
            "F=0.5 dominant maxima {} vs 2B {r2b:.3}, 2A {r2a:.3}; F=1.5 maxima at [{}] vs 3B {r3b:.3}, 3A {r3a:.3}",
            found.join(", "),
            strong_found.join(", ")
        ),
    )
}

struct Saturation {
    f: Vec<f64>,
    p11: Vec<f64>,
    g2: Vec<f64>,
}

fn amp_spec(n_max: usize, drives: Option<Vec<f64>>) -> SweepSpec {
    let mut spec = config("fig5.toml");
    spec.numerics.n_max = n_max;
    spec.axes[0] = Axis::list(AxisName::Omega, vec![Value::Alias("res2A".into())]);
    if let Some(d) = drives {
        spec.axes[1] = Axis::list(AxisName::F, d.into_iter().map(Value::Number).collect());
    }
    spec
}

fn a6(store: &mut Option<Saturation>) -> Outcome {
    let spec = amp_spec(6, None);
    let res = spec.resolve().unwrap();
    let r = run(&spec, None).unwrap();
    let f = res.axes[1].values.clone();
    let stats = pair_stats(&r);
    let p: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let g: Vec<f64> = stats.iter().map(|s| s.1.unwrap_or(f64::NAN)).collect();

    let peak = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    let rising = p[..=peak].windows(2).all(|w| w[1] >= w[0]);
    let at2 = (0..f.len()).min_by(|&a, &b| (f[a] - 2.0).abs().total_cmp(&(f[b] - 2.0).abs())).unwrap();
    let beyond = p[at2..].iter().copied().fold(0.0, f64::max);
    let saturated = beyond <= 1.1 * p[at2];
    let g_dips: Vec<String> =
        (1..g.len()).filter(|&i| !(g[i] > g[i - 1])).map(|i| format!("{:.2}->{:.2}", f[i - 1], f[i])).collect();
    let monotone = g_dips.is_empty();

    *store = Some(Saturation { f: f.clone(), p11: p.clone(), g2: g.clone() });
    Outcome::new(
        rising && saturated && monotone,
        format!(
            "P rises to {:.4} at F={:.2} (monotone rise {rising}); max P beyond F=2 is {:.3}x P(2); \
             g2+ from {:.2e} to {:.2e}, non-increasing steps: [{}]",
            p[peak],
            f[peak],
            beyond / p[at2],
            g[0],
            g[g.len() - 1],
            g_dips.join(", ")
        ),
    )
}

struct PulseBest {
    tau: f64,
    f0: f64,
    p11: f64,
    g2: f64,
}

// Nodes of the shipped 20x20 grid around its optimum; the full grid takes
// about half an hour on one core and is left to the CLI.
fn pulse_spec(n_max: usize, tau: Vec<f64>, f0: Vec<f64>) -> SweepSpec {
    let mut spec = config("fig6.toml");
    spec.numerics.n_max = n_max;
    spec.axes = vec![
        Axis::list(AxisName::Tau, tau.into_iter().map(Value::Number).collect()),
        Axis::list(AxisName::F0, f0.into_iter().map(Value::Number).collect()),
    ];
    spec
}

fn a7(store: &mut Option<PulseBest>) -> Outcome {
    let full = config("fig6.toml").resolve().unwrap();
    let tau: Vec<f64> = full.axes[0].values[1..5].to_vec();
    let f0: Vec<f64> = full.axes[1].values[8..13].to_vec();
    let spec = pulse_spec(4, tau, f0);
    let r = run(&spec, None).unwrap();
    let mut best: Option<(usize, f64)> = None;
    let mut candidates = 0;
    for (i, (p, g, n)) in pair_stats(&r).into_iter().enumerate() {
        let Some(g) = g else { continue };
        if p >= 0.4 && g <= 1e-2 {
            candidates += 1;
            let excess = n - p;
            if excess < 0.05 && best.is_none_or(|(_, b)| p > b) {
                best = Some((i, p));
            }
        }
    }
    let converged = r.points.iter().all(|p| p.converged);
    match best {
        Some((i, _)) => {
            let pt = &r.points[i];
            let rec = pt.record().unwrap();
            let g2 = rec.g2[1].unwrap();
            *store = Some(PulseBest { tau: pt.coords[0], f0: pt.coords[1], p11: rec.p11, g2 });
            Outcome::new(
                converged,
                format!(
                    "{} points, {candidates} with P>=0.4 and g2+<=1e-2; best tau={:.3} F0={:.3}: P {:.4}, g2+ {g2:.2e}, N+ - P {:.4}",
                    r.points.len(),
                    pt.coords[0],
                    pt.coords[1],
                    rec.p11,
                    rec.occupation[1] - rec.p11
                ),
            )
        }
        None => Outcome::new(false, format!("{} points, {candidates} with P>=0.4 and g2+<=1e-2, none with N+ - P < 0.05", r.points.len())),
    }
}

fn a8() -> Outcome {
    let w = waveguide_output(0.0);
    let amps = w.amplitudes();
    let expected = [0.5, -0.5, 0.5, -0.5];
    let amp_err = amps.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let post = (w.postselection_probability() - 0.5).abs();
    let fid = (w.bell_fidelity() - 1.0).abs();
    let norm = (0..100).map(|i| (waveguide_output(10.0 * i as f64 / 99.0).norm_sqr() - 1.0).abs()).fold(0.0, f64::max);
    Outcome::new(
        amp_err < 1e-15 && post < 1e-15 && fid < 1e-12 && norm < 1e-12,
        format!("amplitude error {amp_err:.1e}, post-selection error {post:.1e}, fidelity error {fid:.1e}, max norm error {norm:.1e}"),
    )
}

fn steady_peaks(n_max: usize, include_delta_h: bool, omega: &[f64]) -> Vec<(f64, Option<f64>)> {
    let mut spec = config("fig4.toml");
    spec.numerics.n_max = n_max;
    spec.numerics.include_delta_h = include_delta_h;
    spec.circuit.drive = 0.5;
    spec.axes = vec![Axis::list(AxisName::Omega, omega.iter().map(|&w| Value::Number(w)).collect())];
    pair_stats(&run(&spec, None).unwrap()).into_iter().map(|(p, g, _)| (p, g)).collect()
}

fn a9(peaks: Option<&Peaks>) -> Outcome {
    let Some(peaks) = peaks else {
        return Outcome::new(false, "no resonance peaks from A5");
    };
    let with = steady_peaks(4, true, &peaks.omega);
    let changes: Vec<f64> = with.iter().zip(&peaks.p11).map(|(w, &p)| relative_change(p, w.0)).collect();
    let worst = changes.iter().copied().fold(0.0, f64::max);
    let list: Vec<String> = peaks.omega.iter().zip(&changes).map(|(w, c)| format!("{w:.3}: {c:.2e}")).collect();
    Outcome::new(worst < 0.05, format!("relative change of P with dH at [{}]", list.join(", ")))
}

fn a10(peaks: Option<&Peaks>, sat: Option<&Saturation>, pulse: Option<&PulseBest>) -> Outcome {
    let mut lines = Vec::new();
    let mut worst = 0.0f64;
    let mut note = |label: String, a: f64, b: f64| {
        let c = relative_change(a, b);
        worst = worst.max(c);
        lines.push(format!("{label} {c:.2e}"));
    };
    if let Some(pk) = peaks {
        let base = steady_peaks(4, false, &pk.omega);
        let up = steady_peaks(6, false, &pk.omega);
        for ((w, a), b) in pk.omega.iter().zip(&base).zip(&up) {
            note(format!("A5 P@{w:.3}"), a.0, b.0);
            note(format!("A5 g2+@{w:.3}"), a.1.unwrap(), b.1.unwrap());
        }
    }
    if let Some(s) = sat {
        let picks: Vec<usize> = [0.5, 1.5, 3.0]
            .iter()
            .map(|t| (0..s.f.len()).min_by(|&a, &b| (s.f[a] - t).abs().total_cmp(&(s.f[b] - t).abs())).unwrap())
            .collect();
        let drives: Vec<f64> = picks.iter().map(|&i| s.f[i]).collect();
        let up = pair_stats(&run(&amp_spec(8, Some(drives)), None).unwrap());
        for (&i, u) in picks.iter().zip(&up) {
            note(format!("A6 P@F={:.2}", s.f[i]), s.p11[i], u.0);
            note(format!("A6 g2+@F={:.2}", s.f[i]), s.g2[i], u.1.unwrap());
        }
    }
    if let Some(b) = pulse {
        let up = pair_stats(&run(&pulse_spec(6, vec![b.tau], vec![b.f0]), None).unwrap());
        note("A7 P".into(), b.p11, up[0].0);
        note("A7 g2+".into(), b.g2, up[0].1.unwrap());
    }
    if lines.is_empty() {
        return Outcome::new(false, "no figure-level results to check");
    }
    Outcome::new(worst < 0.01, format!("relative change at N_max + 2: {}", lines.join(", ")))
}

fn main() -> ExitCode {
    let mut peaks = None;
    let mut sat = None;
    let mut pulse = None;
    let mut failed = 0;
    let mut report = |id: &str, what: &str, check: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{id} {verdict} {what}: {} [{:.1} s]", o.detail, t0.elapsed().as_secs_f64());
    };
    report("A1", "spectrum", &mut a1);
    report("A2", "Rabi period", &mut a2);
    report("A3", "linear cavity", &mut a3);
    report("A4", "CPTP and steady state", &mut a4);
    report("A5", "two-photon resonances", &mut || a5(&mut peaks));
    report("A6", "saturation and pollution", &mut || a6(&mut sat));
    report("A7", "pulsed optimum", &mut || a7(&mut pulse));
    report("A8", "Bell output", &mut a8);
    report("A9", "residual interaction", &mut || a9(peaks.as_ref()));
    report("A10", "truncation convergence", &mut || a10(peaks.as_ref(), sat.as_ref(), pulse.as_ref()));
    if failed == 0 {
        println!("all acceptance criteria passed");
        return ExitCode::SUCCESS;
    }
    println!("{failed} acceptance criteria failed");
    if std::env::var_os("KERRPAIR_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

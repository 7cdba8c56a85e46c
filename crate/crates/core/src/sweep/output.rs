//! CSV rows and the JSON run manifest.
//!
//! Column order: sweep coordinates (axis names in config order, then `t`
//! for time traces or `t_max` for pulse grids), the selected observables
//! out of `N0 Nplus Nminus g2_0 g2_plus g2_minus P_20 P_11 trace_err`, and
//! `converged_flag`. Verbose output appends `P_20_strict`, `P_11_strict`,
//! `imag_residual` and, for pulse grids, `t_max_on_boundary`. Undefined
//! correlations are written as `undef`, failed points as `nan`.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::observables::ObservableRecord;

use super::config::{SweepKind, OBSERVABLE_COLUMNS};
use super::run::{PointData, SweepResult};

pub const UNDEF: &str = "undef";

pub fn columns(result: &SweepResult, verbose: bool) -> Vec<String> {
    let spec = &result.spec;
    let mut cols: Vec<String> = spec.axes.iter().map(|a| a.name.name().to_string()).collect();
    match spec.kind {
        SweepKind::StepResponse => cols.push("t".into()),
        SweepKind::PulseGrid => cols.push("t_max".into()),
        _ => {}
    }
    cols.extend(selected(result).into_iter().map(|c| c.to_string()));
    cols.push("converged_flag".into());
    if verbose {
        cols.extend(["P_20_strict", "P_11_strict", "imag_residual"].map(String::from));
        if spec.kind == SweepKind::PulseGrid {
            cols.push("t_max_on_boundary".into());
        }
    }
    cols
}

fn selected(result: &SweepResult) -> Vec<&'static str> {
    match &result.spec.outputs {
        Some(outs) => OBSERVABLE_COLUMNS.iter().copied().filter(|c| outs.iter().any(|o| o == c)).collect(),
        None => OBSERVABLE_COLUMNS.to_vec(),
    }
}

/// Shortest round-trip decimal; exponent form for very small or large
/// magnitudes.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e15) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn observable_cell(r: &ObservableRecord, name: &str) -> String {
    let g = |v: Option<f64>| v.map_or_else(|| UNDEF.to_string(), format_float);
    match name {
        "N0" => format_float(r.occupation[0]),
        "Nplus" => format_float(r.occupation[1]),
        "Nminus" => format_float(r.occupation[2]),
        "g2_0" => g(r.g2[0]),
        "g2_plus" => g(r.g2[1]),
        "g2_minus" => g(r.g2[2]),
        "P_20" => format_float(r.p20),
        "P_11" => format_float(r.p11),
        "trace_err" => format_float(r.trace_err),
        _ => unreachable!("unknown column {name}"),
    }
}

/// All data rows, in grid order (and time order within a trace).
pub fn rows(result: &SweepResult, verbose: bool) -> Vec<Vec<String>> {
    let obs = selected(result);
    let cols = columns(result, verbose);
    let flag_col = cols.iter().position(|c| c == "converged_flag").expect("flag column");
    let mut out = Vec::new();
    for p in &result.points {
        let coords: Vec<String> = p.coords.iter().map(|&c| format_float(c)).collect();
        let flag = if p.converged { "1" } else { "0" };
        let emit = |lead: Vec<String>, r: &ObservableRecord, extra: Option<&str>| {
            let mut row = lead;
            row.extend(obs.iter().map(|c| observable_cell(r, c)));
            row.push(flag.to_string());
            if verbose {
                row.push(format_float(r.p20_strict));
                row.push(format_float(r.p11_strict));
                row.push(format_float(r.imag_residual));
                if let Some(e) = extra {
                    row.push(e.to_string());
                }
            }
            row
        };
        match &p.data {
            Ok(PointData::Steady { record, .. }) => out.push(emit(coords.clone(), record, None)),
            Ok(PointData::Trace { times, records }) => {
                for (t, r) in times.iter().zip(records) {
                    let mut lead = coords.clone();
                    lead.push(format_float(*t));
                    out.push(emit(lead, r, None));
                }
            }
            Ok(PointData::Harvest { t_max, on_boundary, record }) => {
                let mut lead = coords.clone();
                lead.push(format_float(*t_max));
                out.push(emit(lead, record, Some(if *on_boundary { "1" } else { "0" })));
            }
            Err(_) => {
                let mut row = coords.clone();
                row.resize(cols.len(), "nan".to_string());
                row[flag_col] = "0".into();
                out.push(row);
            }
        }
    }
    out
}

pub fn write_csv<W: Write>(result: &SweepResult, verbose: bool, w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(columns(result, verbose))?;
    for row in rows(result, verbose) {
        wr.write_record(row)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub points: usize,
    pub converged: usize,
    pub failed: Vec<usize>,
    pub errors: Vec<(usize, String)>,
    pub max_trace_err: f64,
    pub min_eigenvalue: f64,
    pub max_steady_residual: Option<f64>,
    pub max_solver_iterations: Option<usize>,
    pub propagation_fallbacks: usize,
}

pub fn diagnostics(result: &SweepResult) -> Diagnostics {
    let mut d = Diagnostics {
        points: result.points.len(),
        converged: 0,
        failed: Vec::new(),
        errors: Vec::new(),
        max_trace_err: 0.0,
        min_eigenvalue: f64::INFINITY,
        max_steady_residual: None,
        max_solver_iterations: None,
        propagation_fallbacks: 0,
    };
    for p in &result.points {
        if p.converged {
            d.converged += 1;
        } else {
            d.failed.push(p.index);
        }
        if let Err(e) = &p.data {
            d.errors.push((p.index, e.clone()));
            continue;
        }
        d.max_trace_err = d.max_trace_err.max(p.max_trace_err);
        d.min_eigenvalue = d.min_eigenvalue.min(p.min_eigenvalue);
        if let Ok(PointData::Steady { residual, iterations, by_propagation, .. }) = &p.data {
            d.max_steady_residual = Some(d.max_steady_residual.unwrap_or(0.0).max(*residual));
            if *by_propagation {
                d.propagation_fallbacks += 1;
            } else {
                d.max_solver_iterations = Some(d.max_solver_iterations.unwrap_or(0).max(*iterations));
            }
        }
    }
    d
}

/// Grid point with the largest pair probability among converged points
/// (steady sweeps and pulse grids).
pub fn best_point(result: &SweepResult) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in result.points.iter().enumerate() {
        if !p.converged {
            continue;
        }
        if let Some(r) = p.record() {
            if best.is_none_or(|(_, v)| r.p11 > v) {
                best = Some((i, r.p11));
            }
        }
    }
    best.map(|(i, _)| i)
}

pub fn manifest(result: &SweepResult, csv_file: &str, verbose: bool) -> serde_json::Value {
    let spec = &result.spec;
    let mut summary = serde_json::Map::new();
    if let Some(i) = best_point(result) {
        let p = &result.points[i];
        let r = p.record().expect("best point has a record");
        let names: Vec<&str> = spec.axes.iter().map(|a| a.name.name()).collect();
        let mut best = json!({
            "index": i,
            "coords": names.iter().zip(&p.coords).map(|(n, c)| (n.to_string(), json!(c))).collect::<serde_json::Map<_, _>>(),
            "P_11": r.p11,
            "g2_plus": r.g2[1],
            "Nplus": r.occupation[1],
        });
        if let Ok(PointData::Harvest { t_max, on_boundary, .. }) = &p.data {
            best["t_max"] = json!(t_max);
            best["t_max_on_boundary"] = json!(on_boundary);
            if let Some(si) = &spec.si {
                let mut conv = json!({
                    "pairs_per_pulse": r.p11,
                    "t_max_s": t_max / si.kappa,
                });
                if let Some(rate) = si.repetition_rate {
                    conv["pair_rate_per_s"] = json!(r.p11 * rate);
                }
                best["si"] = conv;
            }
        }
        summary.insert("best_P_11".into(), best);
    }
    if let Some(si) = &spec.si {
        summary.insert(
            "si".into(),
            json!({
                "kappa_per_s": si.kappa,
                "gamma_per_s": result.resolved.params.gamma * si.kappa,
                "J_per_s": result.resolved.params.j * si.kappa,
                "time_unit_s": 1.0 / si.kappa,
            }),
        );
    }
    json!({
        "software": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "config": spec,
        "resolved": result.resolved,
        "output": { "csv": csv_file, "columns": columns(result, verbose), "verbose": verbose },
        "diagnostics": diagnostics(result),
        "summary": summary,
    })
}

/// Write `<name>.csv` and `<name>.manifest.json` into `dir`.
pub fn write_outputs(result: &SweepResult, dir: &Path, verbose: bool) -> std::io::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let name = result.spec.name.clone().unwrap_or_else(|| result.spec.kind.name().to_string());
    let csv_path = dir.join(format!("{name}.csv"));
    let manifest_path = dir.join(format!("{name}.manifest.json"));
    let file = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    write_csv(result, verbose, file).map_err(std::io::Error::other)?;
    let csv_name = csv_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let m = manifest(result, &csv_name, verbose);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&m).expect("manifest serialises") + "\n")?;
    Ok((csv_path, manifest_path))
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kerrpair::sweep::config::SweepSpec;
use kerrpair::sweep::output::{diagnostics, write_outputs};
use kerrpair::sweep::run::{convergence_report, delta_h_report, run, ComparisonReport};

#[derive(Parser)]
#[command(name = "kerrpair", version, about = "Pair-emission simulator for a three-cavity Kerr circuit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write `<name>.csv` and `<name>.manifest.json`.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the per-mode photon cap.
        #[arg(long)]
        nmax: Option<usize>,
        /// Add strict pair probabilities and diagnostics columns.
        #[arg(long)]
        verbose: bool,
    },
    /// Print the resolved circuit parameters and pump resonances.
    Tune { config: PathBuf },
    /// Rerun one grid point at N_max and N_max + 2.
    Converge {
        config: PathBuf,
        #[arg(long)]
        point: usize,
        #[arg(long)]
        nmax: Option<usize>,
        /// Compare with and without the residual interaction instead.
        #[arg(long)]
        delta_h: bool,
    },
}

const EXIT_FAILED_POINTS: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load(path: &PathBuf, nmax: Option<usize>) -> Result<SweepSpec, ExitCode> {
    let mut spec = SweepSpec::load(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })?;
    if let Some(n) = nmax {
        spec.numerics.n_max = n;
        if let Err(e) = spec.validate() {
            eprintln!("--nmax: {e}");
            return Err(ExitCode::from(EXIT_CONFIG));
        }
    }
    Ok(spec)
}

fn print_report(r: &ComparisonReport) {
    println!("point {} at {:?}: {} vs {}", r.point, r.coords, r.baseline, r.variant);
    if let Some(e) = &r.error {
        println!("  failed: {e}");
    }
    let show = |v: Option<f64>| v.map_or_else(|| "undef".to_string(), |x| format!("{x:.6e}"));
    for e in &r.entries {
        let rel = e.rel_change.map_or_else(|| "undef".to_string(), |x| format!("{x:.3e}"));
        let mark = if e.judged { "" } else { "  (not judged)" };
        println!("  {:<9} {:>14} {:>14}  rel {rel}{mark}", e.name, show(e.baseline), show(e.variant));
    }
    println!(
        "{} (max judged change {:.3e}, threshold {})",
        if r.passed { "PASS" } else { "FAIL" },
        r.max_change(),
        r.threshold
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, out, jobs, nmax, verbose } => {
            let spec = match load(&config, nmax) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let result = match run(&spec, jobs) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let (csv, manifest) = match write_outputs(&result, &out, verbose) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("cannot write output: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let d = diagnostics(&result);
            println!("wrote {} and {}", csv.display(), manifest.display());
            println!("{} of {} points converged", d.converged, d.points);
            if d.failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                for (i, e) in &d.errors {
                    eprintln!("point {i}: {e}");
                }
                eprintln!("unconverged points: {:?}", d.failed);
                ExitCode::from(EXIT_FAILED_POINTS)
            }
        }
        Command::Tune { config } => {
            let spec = match load(&config, None) {
                Ok(s) => s,
                Err(code) => return code,
            };
            match spec.resolve() {
                Ok(r) => {
                    println!("{}", serde_json::to_string_pretty(&r).expect("resolved params serialise"));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Command::Converge { config, point, nmax, delta_h } => {
            let spec = match load(&config, nmax) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let report = if delta_h { delta_h_report(&spec, point) } else { convergence_report(&spec, point) };
            match report {
                Ok(r) => {
                    print_report(&r);
                    if r.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_FAILED_POINTS)
                    }
                }
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
    }
}

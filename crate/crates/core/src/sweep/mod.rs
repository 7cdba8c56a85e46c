//! Declarative parameter sweeps and their CSV/JSON output.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Axis, AxisName, ConfigError, Resolved, SweepKind, SweepSpec, Value};
pub use run::{convergence_report, delta_h_report, run, ComparisonReport, PointResult, SweepResult};

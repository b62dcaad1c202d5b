//! Scenario runner and analysis commands for the collapse-dynamics core.
//!
//! The library side of the `qcollapse` binary: JSON scenario configs, the
//! per-model trajectory drivers, CSV/JSON artifact emission, statistical
//! post-processing, and the quantum-to-classical transition arithmetic.
//!
//! # Artifacts
//!
//! A `run` emits into its output directory (all numeric fields are written
//! with Rust's shortest round-trip float formatting, so identical config and
//! seed give byte-identical bodies):
//!
//! * `events.csv` — one row per collapse/split/combine event:
//!   `trajectory,seq,time,mechanism,wave_functions,produced,particle,center,epsilon,v_pre,v_post,delta_energy`.
//!   List-valued fields are `;`-joined; absent optionals are empty.
//! * `volume.csv` — recorded time series per member:
//!   `trajectory,step,time,wf_id,volume,max_magnitude,norm_squared`.
//! * `entropy.csv` — entropy series per member:
//!   `trajectory,step,time,wf_id,volume,entropy,system_entropy,reference_entropy,post_collapse,post_split`
//!   (flags are `0`/`1`, reference is empty when the config sets none).
//! * `summary.json` — run-level event counts plus, per trajectory, each
//!   surviving member's final volume, norm, configuration-space peak
//!   position, and `basin_mass`: the probability mass within the per-axis
//!   quarter-extent window around that peak (1 − basin_mass is the
//!   cross-branch residual in two-outcome scenarios).
//! * `cost.json` — per-member support memory and the stencil operation
//!   count predicted for one step at that support.
//! * `manifest.json` — config SHA-256, master seed, crate versions, and a
//!   SHA-256 per emitted file.
//!
//! # Exit codes
//!
//! `2`: the config file does not match the documented schema (unreadable
//! JSON, wrong types, unknown fields, or a params section that does not
//! match `model`). `3`: the config parses but violates a named physical or
//! resource constraint (trigger safety, memory budget, positivity, lattice
//! limits). `4`: a numerical failure during the run (degenerate collapse,
//! step-size rejection, failed width search). `1`: filesystem trouble.
//! Errors print a one-line JSON record to stderr. No artifacts are written
//! unless the whole run succeeded.
//!
//! Trajectory `k` of a run draws from an independent stream seeded by a
//! splitmix derivation of `master_seed` and `k`, so any single trajectory
//! can be replayed alone. `QCOLLAPSE_WORKERS` caps the worker threads; the
//! artifacts do not depend on the worker count.

use std::fmt;

pub mod config;
pub mod run;
pub mod stats;
pub mod transition;

/// Failure classes, in one-to-one correspondence with the process exit
/// codes and the `kind` field of the stderr error record.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Config or input file does not match the documented schema.
    Schema(String),
    /// Config is well-formed but violates a named constraint.
    Constraint(String),
    /// The simulation itself failed numerically.
    Numerical(String),
    /// Filesystem or environment trouble.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Constraint(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Schema(_) => "schema",
            CliError::Constraint(_) => "constraint",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Schema(m) | CliError::Constraint(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }

    /// The one-line machine-readable record printed to stderr.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind(), "exit_code": self.exit_code(), "message": self.message() }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Core errors that surface while a simulation is running are numerical
/// failures; errors during scenario construction are mapped to
/// `Constraint` explicitly at the call sites that build states.
impl From<qcollapse_core::error::CoreError> for CliError {
    fn from(e: qcollapse_core::error::CoreError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

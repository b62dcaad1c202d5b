//! Error type shared by every operation in the crate.

use alloc::string::String;
use core::fmt;

/// Failure modes of lattice construction, dynamics, and collapse operations.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A lattice description violated a structural bound (axis counts, cell
    /// budget, mismatched lengths).
    InvalidLattice(String),
    /// An argument was outside its mathematical domain (non-positive
    /// momentum, weight, width, ...).
    Domain(String),
    /// A packet width was too small for the grid to resolve.
    Resolution { sigma: f64, min_sigma: f64 },
    /// Every amplitude is (or became) zero, so no normalized state exists.
    VanishedWaveFunction,
    /// A collapse left less than 1e-300 of squared norm behind; the jump
    /// factor annihilated the state.
    DegenerateCollapse,
    /// The localization width search could not bracket the target volume.
    WidthSearchFailed { target: u64, reached: u64 },
    /// A stochastic step changed the norm so violently the step size must be
    /// reduced.
    StepSize { norm_sq: f64 },
    /// Joining two wave functions would exceed the configured cell budget.
    CombineRefused { required_cells: u64, budget_cells: u64 },
    /// The requested measurement only exists in explicit stencil mode.
    NotMeasurable(String),
    /// A numerical invariant failed at run time (non-real energy, volume cap
    /// breach, fit failure, ...).
    Numerical(String),
    /// A member operation failed inside a registry tick; carries the wave
    /// function's id so multi-system failures stay attributable.
    WaveFunctionContext { id: u64, source: alloc::boxed::Box<CoreError> },
}

impl CoreError {
    /// Wrap with the id of the wave function being processed.
    pub fn for_wave_function(self, id: u64) -> CoreError {
        CoreError::WaveFunctionContext { id, source: alloc::boxed::Box::new(self) }
    }

    /// The underlying error, unwrapping any wave-function context.
    pub fn root(&self) -> &CoreError {
        match self {
            CoreError::WaveFunctionContext { source, .. } => source.root(),
            other => other,
        }
    }
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidLattice(msg) => write!(f, "invalid lattice: {msg}"),
            CoreError::Domain(msg) => write!(f, "domain error: {msg}"),
            CoreError::Resolution { sigma, min_sigma } => write!(
                f,
                "packet width {sigma} is below the resolvable minimum {min_sigma} (2 cells)"
            ),
            CoreError::VanishedWaveFunction => {
                write!(f, "wave function vanished: every amplitude is zero")
            }
            CoreError::DegenerateCollapse => {
                write!(f, "collapse left a squared norm below 1e-300")
            }
            CoreError::WidthSearchFailed { target, reached } => write!(
                f,
                "width search failed: target volume {target}, best reachable {reached}"
            ),
            CoreError::StepSize { norm_sq } => write!(
                f,
                "stochastic step collapsed the squared norm to {norm_sq}; reduce dt"
            ),
            CoreError::CombineRefused { required_cells, budget_cells } => write!(
                f,
                "combine refused: joint lattice needs {required_cells} cells, budget is {budget_cells}"
            ),
            CoreError::NotMeasurable(msg) => write!(f, "not measurable: {msg}"),
            CoreError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            CoreError::WaveFunctionContext { id, source } => {
                write!(f, "wave function {id}: {source}")
            }
        }
    }
}

impl core::error::Error for CoreError {}

//! Typed records of collapse-law events, shared by every mechanism.

use alloc::vec::Vec;

/// Which law produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    GrwHit,
    Csl,
    CcqmLocalize,
    CcqmSplit,
    Combine,
}

impl Mechanism {
    /// Stable lowercase name used in logs and CSV output.
    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::GrwHit => "grw_hit",
            Mechanism::Csl => "csl",
            Mechanism::CcqmLocalize => "ccqm_localize",
            Mechanism::CcqmSplit => "ccqm_split",
            Mechanism::Combine => "combine",
        }
    }
}

/// One discrete event in a collapse history: which law fired, on which wave
/// function(s), where, how sharp, and what it did to volume and energy.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseEvent {
    /// Simulation time the event fired at (stamped by the caller driving the
    /// clock; collapse operations themselves leave it at 0).
    pub time: f64,
    pub mechanism: Mechanism,
    /// Wave functions involved: the collapsed one, both parents of a
    /// combine, or the parent of a split.
    pub wave_functions: Vec<u64>,
    /// Wave functions created by a split or combine.
    pub produced: Vec<u64>,
    /// Hit particle index for single-particle jump factors.
    pub particle: Option<usize>,
    /// Collapse center in physical coordinates (particle position space for
    /// GRW, full configuration space for critical-complexity localization).
    pub center: Option<Vec<f64>>,
    /// Width parameter of the jump factor that was applied.
    pub epsilon: Option<f64>,
    /// Relative volume before the event.
    pub v_pre: u64,
    /// Relative volume after (summed over parts for a split).
    pub v_post: u64,
    /// Energy change across the event when a Hamiltonian was available.
    pub delta_energy: Option<f64>,
}

impl CollapseEvent {
    /// Blank event for the given mechanism; fields are filled by the law that
    /// fires it.
    pub fn new(mechanism: Mechanism) -> Self {
        CollapseEvent {
            time: 0.0,
            mechanism,
            wave_functions: Vec::new(),
            produced: Vec::new(),
            particle: None,
            center: None,
            epsilon: None,
            v_pre: 0,
            v_post: 0,
            delta_energy: None,
        }
    }

    /// Stamp the simulation time, returning the event.
    pub fn at_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }
}

//! Discrete wave functions on configuration-space lattices, unitary stepping,
//! and three objective-collapse laws (GRW hits, CSL diffusion, and
//! critical-complexity localization) together with the complexity and entropy
//! bookkeeping they need.
//!
//! The crate is `no_std` + `alloc`: everything here is pure computation, so it
//! can run anywhere an allocator exists. IO, file formats, and the command
//! line live in the companion `qcollapse-cli` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ccqm;
mod convolve;
pub mod cost;
pub mod csl;
pub mod dynamics;
pub mod entropy;
pub mod error;
pub mod event;
pub mod grw;
pub mod lattice;
pub mod registry;
pub mod rng;
pub mod sampling;
pub mod wavefunction;

pub use error::CoreError;
pub use event::{CollapseEvent, Mechanism};
pub use lattice::{Boundary, LatticeSpec};
pub use wavefunction::{DiscreteWaveFunction, ParticleSpec};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex<f64>;

/// Crate version, for run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Physical constants of a scenario. Defaults are natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Units {
    /// Reduced Planck constant.
    pub hbar: f64,
    /// Boltzmann constant.
    pub boltzmann: f64,
    /// Reference mass m0 that mass ratios are taken against.
    pub reference_mass: f64,
}

impl Default for Units {
    fn default() -> Self {
        Units { hbar: 1.0, boltzmann: 1.0, reference_mass: 1.0 }
    }
}

impl Units {
    /// Planck constant h = 2π ħ.
    pub fn planck(&self) -> f64 {
        2.0 * core::f64::consts::PI * self.hbar
    }
}

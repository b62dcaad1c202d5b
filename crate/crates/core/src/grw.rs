//! Spontaneous-localization dynamics: Poisson-timed Gaussian hits on single
//! particles, with hit centers drawn from the Born-consistent density (the
//! particle's position marginal convolved with the squared jump profile).

use alloc::string::ToString;
use alloc::vec::Vec;

// float intrinsics come from this trait in standalone no_std builds; whenever
// std enters the crate graph (tests, std-enabled consumers) the inherent
// methods shadow it and the import looks unused
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::convolve::gaussian_blur;
use crate::dynamics::Hamiltonian;
use crate::error::CoreError;
use crate::event::{CollapseEvent, Mechanism};
use crate::lattice::{Boundary, LatticeSpec};
use crate::rng::SimRng;
use crate::sampling::sample_discrete;
use crate::wavefunction::{DiscreteWaveFunction, ParticleSpec};
use crate::Units;

/// Hit-process parameters: jump sharpness `alpha` (the squared profile is
/// proportional to exp(-alpha |x - c|^2)) and the per-particle hit rate,
/// optionally scaled by mass relative to the reference mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrwParams {
    pub alpha: f64,
    pub lambda_rate: f64,
    pub mass_proportional: bool,
}

impl GrwParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(CoreError::Domain("alpha must be positive and finite".to_string()));
        }
        if !(self.lambda_rate > 0.0 && self.lambda_rate.is_finite()) {
            return Err(CoreError::Domain("hit rate must be positive and finite".to_string()));
        }
        Ok(())
    }
}

/// Per-particle hit rates.
pub fn particle_rates(
    params: &GrwParams,
    particles: &[ParticleSpec],
    units: &Units,
) -> Vec<f64> {
    particles
        .iter()
        .map(|p| {
            if params.mass_proportional {
                params.lambda_rate * p.mass() / units.reference_mass
            } else {
                params.lambda_rate
            }
        })
        .collect()
}

/// Total hit rate of the state: sum of the per-particle rates.
pub fn total_hit_rate(params: &GrwParams, particles: &[ParticleSpec], units: &Units) -> f64 {
    particle_rates(params, particles, units).iter().sum()
}

/// Mean wait between hits for an aggregate of `particle_count` particles at
/// per-particle rate `lambda_rate`. Plain rate arithmetic, usable at mole
/// scale where no explicit state exists.
pub fn mean_wait_seconds(lambda_rate: f64, particle_count: f64) -> f64 {
    1.0 / (lambda_rate * particle_count)
}

/// Same mean wait expressed in Julian years.
pub fn mean_wait_years(lambda_rate: f64, particle_count: f64) -> f64 {
    const SECONDS_PER_YEAR: f64 = 3.155_76e7;
    mean_wait_seconds(lambda_rate, particle_count) / SECONDS_PER_YEAR
}

/// Draw an exponential wait at the given total rate.
pub fn sample_wait(total_rate: f64, rng: &mut SimRng) -> f64 {
    Exp::new(total_rate).expect("rate must be positive").sample(rng)
}

/// Choose which particle is hit, proportionally to the per-particle rates.
pub fn sample_hit_particle(
    params: &GrwParams,
    particles: &[ParticleSpec],
    units: &Units,
    rng: &mut SimRng,
) -> usize {
    if particles.len() == 1 {
        return 0;
    }
    if !params.mass_proportional {
        return rng.gen_range(0..particles.len());
    }
    let rates = particle_rates(params, particles, units);
    sample_discrete(&rates, rng)
}

/// Density of hit centers for one particle: its position marginal convolved
/// with the squared jump profile (alpha/pi)^(d/2) exp(-alpha |delta|^2).
/// Returned over the particle's own sublattice.
pub fn collapse_center_density(
    psi: &DiscreteWaveFunction,
    particle: usize,
    alpha: f64,
    boundary: Boundary,
) -> Result<(LatticeSpec, Vec<f64>), CoreError> {
    if !(alpha > 0.0) {
        return Err(CoreError::Domain("alpha must be positive".to_string()));
    }
    let marginal = psi.marginal_density(particle);
    let sub = psi.lattice().particle_sublattice(particle);
    let q = alloc::vec![alpha; sub.axis_count()];
    let density = gaussian_blur(&sub, &marginal, &q, boundary);
    Ok((sub, density))
}

/// Draw a hit center from a density over `lattice`, returning the physical
/// coordinates of the drawn cell center.
pub fn sample_center(lattice: &LatticeSpec, density: &[f64], rng: &mut SimRng) -> Vec<f64> {
    let idx = sample_discrete(density, rng);
    let mut coords = alloc::vec![0usize; lattice.axis_count()];
    lattice.coords_of(idx, &mut coords);
    (0..lattice.axis_count()).map(|ax| lattice.position(ax, coords[ax])).collect()
}

/// Apply one hit: multiply the amplitude by the jump profile
/// exp(-alpha |x_particle - center|^2 / 2) on the hit particle's axes and
/// renormalize. Records pre/post support volumes at magnitude threshold
/// `threshold` and, when a Hamiltonian is supplied, the energy change.
pub fn grw_hit(
    psi: &DiscreteWaveFunction,
    particle: usize,
    center: &[f64],
    params: &GrwParams,
    threshold: f64,
    boundary: Boundary,
    hamiltonian: Option<&Hamiltonian>,
) -> Result<(DiscreteWaveFunction, CollapseEvent), CoreError> {
    params.validate()?;
    let lat = psi.lattice();
    let d = lat.dims_per_particle();
    if particle >= lat.particle_count() {
        return Err(CoreError::Domain("hit particle index out of range".to_string()));
    }
    if center.len() != d {
        return Err(CoreError::Domain(
            "hit center must have one coordinate per particle axis".to_string(),
        ));
    }
    let v_pre = psi.relative_volume(threshold);
    let e_pre = match hamiltonian {
        Some(h) => Some(h.energy_expectation(psi)?),
        None => None,
    };

    let mut out = psi.clone();
    let axes: Vec<usize> = (particle * d..(particle + 1) * d).collect();
    let axis_count = lat.axis_count();
    let mut coords = alloc::vec![0usize; axis_count];
    {
        let lat = out.lattice().clone();
        for (idx, z) in out.amplitudes_mut().iter_mut().enumerate() {
            if z.norm_sqr() == 0.0 {
                continue;
            }
            lat.coords_of(idx, &mut coords);
            let mut expo = 0.0;
            for (jd, &ax) in axes.iter().enumerate() {
                let x = lat.position(ax, coords[ax]);
                let delta = lat.displacement(ax, x, center[jd], boundary);
                expo -= 0.5 * params.alpha * delta * delta;
            }
            *z = *z * expo.exp();
        }
    }
    let norm2 = out.norm_squared();
    if !(norm2 > 1e-300) {
        return Err(CoreError::DegenerateCollapse);
    }
    out.normalize()?;

    let v_post = out.relative_volume(threshold);
    let delta_energy = match (hamiltonian, e_pre) {
        (Some(h), Some(e0)) => Some(h.energy_expectation(&out)? - e0),
        _ => None,
    };
    let mut event = CollapseEvent::new(Mechanism::GrwHit);
    event.particle = Some(particle);
    event.center = Some(center.to_vec());
    event.v_pre = v_pre;
    event.v_post = v_post;
    event.delta_energy = delta_energy;
    Ok((out, event))
}

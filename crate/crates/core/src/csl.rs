//! Continuous spontaneous localization on a lattice: a family of smeared
//! density operators drives a stochastic multiplicative evolution whose
//! cooked statistics reduce superpositions at Born-rule frequencies.
//!
//! The linear (raw) equation multiplies the state by
//! exp(sum_x A_x dW_x - gamma sum_x A_x^2 dt) each step, with increments
//! dW_x ~ N(0, gamma dt). Because the operators are diagonal and commute,
//! that map makes the ensemble mean of the raw squared norm exactly constant
//! at any dt. The physical (cooked) measure reweights raw paths by the
//! squared norm; for this one-step map the reweighted distribution
//! factorizes exactly — draw a configuration cell from |psi|^2, then draw
//! each increment from N(2 gamma dt A_x[cell], gamma dt) — so no rejection
//! or path reweighting is ever needed. With a Hamiltonian present the
//! unitary half is split off first and the scheme is Euler–Maruyama order.

use alloc::string::ToString;
use alloc::vec::Vec;

// float intrinsics come from this trait in standalone no_std builds; whenever
// std enters the crate graph (tests, std-enabled consumers) the inherent
// methods shadow it and the import looks unused
#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{step_unitary, Hamiltonian};
use crate::error::CoreError;
use crate::event::{CollapseEvent, Mechanism};
use crate::lattice::{Boundary, LatticeSpec};
use crate::rng::SimRng;
use crate::sampling::{kahan_sum, sample_discrete};
use crate::wavefunction::{DiscreteWaveFunction, ParticleSpec};
use crate::Units;

/// Which single-particle weight multiplies each smearing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CslVariant {
    /// Every particle counts once.
    NumberDensity,
    /// Particles count as m_k / m0.
    MassDensity,
}

/// Coupling strength, smearing sharpness, variant, and stochastic step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CslParams {
    pub gamma: f64,
    pub alpha: f64,
    pub variant: CslVariant,
    pub dt: f64,
}

impl CslParams {
    /// `gamma = 0` is allowed so the zero-coupling limit can be exercised.
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(CoreError::Domain("gamma must be finite and >= 0".to_string()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(CoreError::Domain("alpha must be positive and finite".to_string()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CoreError::Domain("dt must be positive and finite".to_string()));
        }
        Ok(())
    }
}

/// Coupling that matches a hit process of rate `lambda` and sharpness
/// `alpha` in `dims` dimensions: gamma = lambda (4 pi / alpha)^(-dims/2).
pub fn gamma_from_grw(lambda: f64, alpha: f64, dims: usize) -> f64 {
    lambda * (4.0 * core::f64::consts::PI / alpha).powf(-(dims as f64) / 2.0)
}

/// Hard cap on sites x configuration cells so the dense operator family
/// stays desk-scale.
const MAX_OPERATOR_ENTRIES: usize = 1 << 22;

/// Family of smeared density operators, one per single-particle lattice
/// site, each diagonal in the configuration basis:
/// A_x[y] = sum_k c_k (alpha/2pi)^(d/2) exp(-(alpha/2)|y_k - x|^2).
#[derive(Debug, Clone)]
pub struct CslOperators {
    sites: LatticeSpec,
    cells: usize,
    /// Dense entries, site-major: entry(x, c) = ops[x * cells + c].
    ops: Vec<f64>,
    /// Per-cell sum over sites of A_x[c]^2.
    sq_sum: Vec<f64>,
}

impl CslOperators {
    /// Build the family. All particles must share one single-particle grid;
    /// the family is only supported for at most two particles in at most two
    /// dimensions each (it exists for cross-law comparisons, not scale).
    pub fn build(
        lattice: &LatticeSpec,
        particles: &[ParticleSpec],
        params: &CslParams,
        units: &Units,
        boundary: Boundary,
    ) -> Result<CslOperators, CoreError> {
        params.validate()?;
        if particles.len() != lattice.particle_count() {
            return Err(CoreError::Domain("particle list does not match lattice".to_string()));
        }
        if lattice.particle_count() > 2 || lattice.dims_per_particle() > 2 {
            return Err(CoreError::Domain(
                "smeared operator families support at most 2 particles in at most 2 dimensions"
                    .to_string(),
            ));
        }
        let sites = lattice.particle_sublattice(0);
        for k in 1..lattice.particle_count() {
            if !lattice.particle_sublattice(k).same_grid(&sites) {
                return Err(CoreError::Domain(
                    "all particles must share one single-particle grid".to_string(),
                ));
            }
        }
        let cells = lattice.total_cells();
        let site_count = sites.total_cells();
        if site_count.saturating_mul(cells) > MAX_OPERATOR_ENTRIES {
            return Err(CoreError::Domain(alloc::format!(
                "operator family needs {} entries, cap is {}",
                site_count * cells,
                MAX_OPERATOR_ENTRIES
            )));
        }
        let d = lattice.dims_per_particle();
        let np = lattice.particle_count();
        let alpha = params.alpha;
        let prefactor = (alpha / (2.0 * core::f64::consts::PI)).powf(d as f64 / 2.0);
        let weights: Vec<f64> = particles
            .iter()
            .map(|p| match params.variant {
                CslVariant::NumberDensity => 1.0,
                CslVariant::MassDensity => p.mass() / units.reference_mass,
            })
            .collect();

        let mut ops = alloc::vec![0.0f64; site_count * cells];
        let mut cfg_coords = alloc::vec![0usize; lattice.axis_count()];
        let mut site_coords = alloc::vec![0usize; d];
        for x in 0..site_count {
            sites.coords_of(x, &mut site_coords);
            let row = &mut ops[x * cells..(x + 1) * cells];
            for (c, slot) in row.iter_mut().enumerate() {
                lattice.coords_of(c, &mut cfg_coords);
                let mut total = 0.0;
                for k in 0..np {
                    let mut r2 = 0.0;
                    for jd in 0..d {
                        let y = lattice.position(k * d + jd, cfg_coords[k * d + jd]);
                        let xs = sites.position(jd, site_coords[jd]);
                        let delta = sites.displacement(jd, y, xs, boundary);
                        r2 += delta * delta;
                    }
                    total += weights[k] * prefactor * (-0.5 * alpha * r2).exp();
                }
                *slot = total;
            }
        }
        let mut sq_sum = alloc::vec![0.0f64; cells];
        for x in 0..site_count {
            for c in 0..cells {
                let a = ops[x * cells + c];
                sq_sum[c] += a * a;
            }
        }
        Ok(CslOperators { sites, cells, ops, sq_sum })
    }

    pub fn site_lattice(&self) -> &LatticeSpec {
        &self.sites
    }

    pub fn site_count(&self) -> usize {
        self.sites.total_cells()
    }

    /// Diagonal of the operator at site x over configuration cells.
    pub fn entries(&self, x: usize) -> &[f64] {
        &self.ops[x * self.cells..(x + 1) * self.cells]
    }

    /// <A_x> in the given state.
    pub fn expectation(&self, psi: &DiscreteWaveFunction, x: usize) -> f64 {
        let vol = psi.lattice().cell_volume();
        kahan_sum(
            psi.amplitudes()
                .iter()
                .zip(self.entries(x))
                .map(|(z, a)| z.norm_sqr() * vol * a),
        )
    }

    /// sum_x Var(A_x): the reduction diagnostic. Zero exactly on
    /// configuration eigenstates, shrinking to zero along collapsing
    /// trajectories.
    pub fn summed_variance(&self, psi: &DiscreteWaveFunction) -> f64 {
        let vol = psi.lattice().cell_volume();
        let probs: Vec<f64> = psi.amplitudes().iter().map(|z| z.norm_sqr() * vol).collect();
        let mut total = 0.0;
        for x in 0..self.site_count() {
            let row = self.entries(x);
            let mean = kahan_sum(probs.iter().zip(row).map(|(p, a)| p * a));
            let mean_sq = kahan_sum(probs.iter().zip(row).map(|(p, a)| p * a * a));
            total += mean_sq - mean * mean;
        }
        total
    }
}

/// One cooked (physical-measure, normalized) step. Unitary part first when a
/// Hamiltonian is given, then the exact factorized cooked draw: sample a
/// configuration cell from |psi|^2, then each increment from its shifted
/// Gaussian.
pub fn csl_step(
    psi: &DiscreteWaveFunction,
    hamiltonian: Option<&Hamiltonian>,
    ops: &CslOperators,
    params: &CslParams,
    rng: &mut SimRng,
) -> Result<DiscreteWaveFunction, CoreError> {
    params.validate()?;
    let mut state = match hamiltonian {
        Some(h) => step_unitary(psi, h, params.dt)?,
        None => psi.clone(),
    };
    if params.gamma == 0.0 {
        return Ok(state);
    }
    let gdt = params.gamma * params.dt;
    // exact cooked draw
    let weights: Vec<f64> = state.amplitudes().iter().map(|z| z.norm_sqr()).collect();
    let picked = sample_discrete(&weights, rng);
    apply_noise(&mut state, ops, gdt, Some(picked), rng);
    let norm2 = state.norm_squared();
    if !(norm2 > 1e-12) {
        return Err(CoreError::StepSize { norm_sq: norm2 });
    }
    state.normalize()?;
    Ok(state)
}

/// One raw (linear-measure) step: zero-mean increments, no normalization.
/// The ensemble mean of the squared norm under this map is exactly constant,
/// which is what licenses the cooked sampling above.
pub fn csl_step_raw(
    psi: &DiscreteWaveFunction,
    hamiltonian: Option<&Hamiltonian>,
    ops: &CslOperators,
    params: &CslParams,
    rng: &mut SimRng,
) -> Result<DiscreteWaveFunction, CoreError> {
    params.validate()?;
    let mut state = match hamiltonian {
        Some(h) => step_unitary(psi, h, params.dt)?,
        None => psi.clone(),
    };
    if params.gamma == 0.0 {
        return Ok(state);
    }
    let gdt = params.gamma * params.dt;
    apply_noise(&mut state, ops, gdt, None, rng);
    if !state.norm_squared().is_finite() {
        return Err(CoreError::Numerical("raw step produced non-finite norm".to_string()));
    }
    Ok(state)
}

/// Multiply by exp(sum_x A_x dW_x - gamma dt sum_x A_x^2), drawing
/// dW_x ~ N(shift_x, gamma dt) where the shift is 2 gamma dt A_x[cooked cell]
/// or zero for the raw measure.
fn apply_noise(
    state: &mut DiscreteWaveFunction,
    ops: &CslOperators,
    gdt: f64,
    cooked_cell: Option<usize>,
    rng: &mut SimRng,
) {
    let cells = state.amplitudes().len();
    let mut exponent = alloc::vec![0.0f64; cells];
    let std = gdt.sqrt();
    for x in 0..ops.site_count() {
        let row = ops.entries(x);
        let shift = match cooked_cell {
            Some(c) => 2.0 * gdt * row[c],
            None => 0.0,
        };
        let xi: f64 = StandardNormal.sample(rng);
        let dw = shift + std * xi;
        if dw == 0.0 {
            continue;
        }
        for (e, a) in exponent.iter_mut().zip(row) {
            *e += a * dw;
        }
    }
    for ((z, e), sq) in state.amplitudes_mut().iter_mut().zip(&exponent).zip(&ops.sq_sum) {
        *z *= (e - gdt * sq).exp();
    }
}

/// Tag a completed reduction: the caller detects terminal concentration and
/// records one aggregate event for the trajectory.
pub fn reduction_event(
    time: f64,
    v_pre: u64,
    v_post: u64,
    center: Option<Vec<f64>>,
) -> CollapseEvent {
    let mut event = CollapseEvent::new(Mechanism::Csl).at_time(time);
    event.v_pre = v_pre;
    event.v_post = v_post;
    event.center = center;
    event
}

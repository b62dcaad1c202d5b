//! Scenario configuration: the JSON schema, its validation, and the
//! construction of core objects (lattice, particles, potentials, initial
//! states) from a parsed config.
//!
//! Schema errors (exit 2) are anything serde rejects — syntax, types,
//! unknown fields — plus a `params` section that does not match `model`.
//! Everything value-level after that is a named constraint (exit 3).

use serde::Deserialize;

use qcollapse_core::ccqm::{trigger_safety_bound, CcqmParams, SplitCuts};
use qcollapse_core::csl::{CslParams, CslVariant};
use qcollapse_core::dynamics::{
    gaussian_packet, superposed_packets, uniform_box_packet, OneBodyPotential, PacketBranch,
    PairPotential,
};
use qcollapse_core::error::CoreError;
use qcollapse_core::grw::GrwParams;
use qcollapse_core::lattice::{Boundary, LatticeSpec};
use qcollapse_core::wavefunction::{DiscreteWaveFunction, ParticleSpec};
use qcollapse_core::{Units, C64};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Unitary,
    Grw,
    Csl,
    Ccqm,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Unitary => "unitary",
            Model::Grw => "grw",
            Model::Csl => "csl",
            Model::Ccqm => "ccqm",
        }
    }
}

/// A scalar that applies to every axis, or one value per axis.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PerAxis<T> {
    Same(T),
    Each(Vec<T>),
}

impl<T: Copy> PerAxis<T> {
    fn expand(&self, axes: usize, what: &str) -> Result<Vec<T>, CliError> {
        match self {
            PerAxis::Same(v) => Ok(vec![*v; axes]),
            PerAxis::Each(vs) if vs.len() == axes => Ok(vs.clone()),
            PerAxis::Each(vs) => Err(CliError::Constraint(format!(
                "lattice.{what} lists {} entries for {axes} axes",
                vs.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub particles: usize,
    pub dims_per_particle: usize,
    pub cells: PerAxis<usize>,
    #[serde(default = "one_f64")]
    pub cell_size: PerAxis<f64>,
    #[serde(default = "zero_f64")]
    pub origin: PerAxis<f64>,
    #[serde(default)]
    pub boundary: BoundaryConfig,
}

fn one_f64() -> PerAxis<f64> {
    PerAxis::Same(1.0)
}

fn zero_f64() -> PerAxis<f64> {
    PerAxis::Same(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryConfig {
    #[default]
    Periodic,
    Box,
}

impl From<BoundaryConfig> for Boundary {
    fn from(b: BoundaryConfig) -> Boundary {
        match b {
            BoundaryConfig::Periodic => Boundary::Periodic,
            BoundaryConfig::Box => Boundary::Box,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    #[serde(default = "one")]
    pub mass: f64,
    pub label: String,
    #[serde(default)]
    pub identity_class: Option<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitsConfig {
    pub hbar: f64,
    pub boltzmann: f64,
    pub reference_mass: f64,
}

impl Default for UnitsConfig {
    fn default() -> Self {
        UnitsConfig { hbar: 1.0, boltzmann: 1.0, reference_mass: 1.0 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default)]
    pub one_body: OneBodyConfig,
    #[serde(default)]
    pub pair: Option<PairConfig>,
}

/// `none` removes the Hamiltonian entirely (frozen dynamics, for toy models
/// driven by collapse alone); `free` keeps the kinetic term.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OneBodyConfig {
    None,
    #[default]
    Free,
    Harmonic {
        omega: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairConfig {
    SoftenedCoulomb { charge_product: f64, softening: f64 },
}

impl From<&PairConfig> for PairPotential {
    fn from(p: &PairConfig) -> PairPotential {
        match p {
            PairConfig::SoftenedCoulomb { charge_product, softening } => {
                PairPotential::SoftenedCoulomb {
                    charge_product: *charge_product,
                    softening: *softening,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub weight: f64,
    pub center: Vec<f64>,
    #[serde(default)]
    pub momentum: Option<Vec<f64>>,
    pub sigma: Vec<f64>,
}

/// One registry member's initial state. `amplitudes` is the raw escape
/// hatch for toy states (site bases, hand-built superpositions).
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "packet", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Gaussian {
        center: Vec<f64>,
        #[serde(default)]
        momentum: Option<Vec<f64>>,
        sigma: Vec<f64>,
    },
    UniformBox {
        lo: Vec<usize>,
        hi: Vec<usize>,
        #[serde(default)]
        momentum: Option<Vec<f64>>,
    },
    Superposition {
        branches: Vec<BranchConfig>,
    },
    Amplitudes {
        re: Vec<f64>,
        #[serde(default)]
        im: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrwConfig {
    pub alpha: f64,
    pub lambda_rate: f64,
    #[serde(default)]
    pub mass_proportional: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CslConfig {
    pub gamma: f64,
    pub alpha: f64,
    #[serde(default)]
    pub variant: CslVariantConfig,
    /// Evolve under the raw (linear, unnormalized) measure instead of the
    /// cooked one; used to check the norm martingale.
    #[serde(default)]
    pub raw: bool,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CslVariantConfig {
    #[default]
    NumberDensity,
    MassDensity,
}

impl From<CslVariantConfig> for CslVariant {
    fn from(v: CslVariantConfig) -> CslVariant {
        match v {
            CslVariantConfig::NumberDensity => CslVariant::NumberDensity,
            CslVariantConfig::MassDensity => CslVariant::MassDensity,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcqmConfig {
    pub v_c: u64,
    pub target_fraction: f64,
    #[serde(default)]
    pub f0: f64,
    #[serde(default)]
    pub scale_vc_with_n: bool,
    #[serde(default = "one")]
    pub split_coupling: f64,
    #[serde(default = "one")]
    pub combine_coupling: f64,
    #[serde(default)]
    pub symmetric_jump: bool,
    #[serde(default)]
    pub split_cuts: SplitCutsConfig,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCutsConfig {
    #[default]
    SingleVsRest,
    FullEnumeration,
}

impl From<SplitCutsConfig> for SplitCuts {
    fn from(c: SplitCutsConfig) -> SplitCuts {
        match c {
            SplitCutsConfig::SingleVsRest => SplitCuts::SingleVsRest,
            SplitCutsConfig::FullEnumeration => SplitCuts::FullEnumeration,
        }
    }
}

/// Exactly one of these must be present, and it must match `model`
/// (`unitary` takes none). A mismatch is a schema error: the config does
/// not fit the documented shape for its declared model.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default)]
    pub grw: Option<GrwConfig>,
    #[serde(default)]
    pub csl: Option<CslConfig>,
    #[serde(default)]
    pub ccqm: Option<CcqmConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub dt: f64,
    pub steps: u64,
    #[serde(default = "one_u64")]
    pub record_every: u64,
    /// Stop a trajectory after this many events; 0 runs the full schedule.
    #[serde(default)]
    pub max_events: u64,
}

fn one_u64() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ensemble {
    pub trajectories: u64,
    pub master_seed: u64,
}

impl Default for Ensemble {
    fn default() -> Self {
        Ensemble { trajectories: 1, master_seed: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budget {
    /// Total cells across all members' lattices a run may allocate.
    pub max_cells: u64,
    /// Largest joint lattice a combine may allocate.
    pub combine_budget_cells: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_cells: 1 << 24, combine_budget_cells: 1 << 22 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropyConfig {
    /// Apply the identical-particle ln N! correction to system entropy.
    pub identical_correction: bool,
    /// Reference (e.g. coarse-grained) entropy copied into the series.
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub dir: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { dir: "out".to_string() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: Model,
    pub lattice: LatticeConfig,
    pub particles: Vec<ParticleConfig>,
    #[serde(default)]
    pub units: UnitsConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    /// One entry per initial registry member (exactly one unless `ccqm`).
    pub initial: Vec<InitialState>,
    #[serde(default)]
    pub params: ParamsConfig,
    pub schedule: Schedule,
    #[serde(default)]
    pub ensemble: Ensemble,
    #[serde(default)]
    pub budget: Budget,
    /// Magnitude threshold for volume counting and jump truncation in the
    /// unitary/grw/csl drivers; ccqm runs use `params.ccqm.f0` instead.
    #[serde(default)]
    pub f0: f64,
    #[serde(default)]
    pub entropy: EntropyConfig,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ScenarioConfig {
    /// Parse a config from JSON text. Any serde rejection is a schema error.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        config.check_params_section()?;
        Ok(config)
    }

    fn check_params_section(&self) -> Result<(), CliError> {
        let (grw, csl, ccqm) =
            (self.params.grw.is_some(), self.params.csl.is_some(), self.params.ccqm.is_some());
        let expected = match self.model {
            Model::Unitary => (false, false, false),
            Model::Grw => (true, false, false),
            Model::Csl => (false, true, false),
            Model::Ccqm => (false, false, true),
        };
        if (grw, csl, ccqm) != expected {
            return Err(CliError::Schema(format!(
                "model \"{}\" requires exactly the matching params section \
                 (found grw: {grw}, csl: {csl}, ccqm: {ccqm})",
                self.model.name()
            )));
        }
        Ok(())
    }
}

/// Everything a driver needs, built and validated. Constructing this is the
/// "before any run" validation the config contract promises.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ScenarioConfig,
    pub lattice: LatticeSpec,
    pub particles: Vec<ParticleSpec>,
    pub units: Units,
    pub boundary: Boundary,
    /// None when the config asks for frozen dynamics (`one_body: none`).
    pub one_body: Option<OneBodyPotential>,
    pub pair: Option<PairPotential>,
    pub initial: Vec<DiscreteWaveFunction>,
    pub grw: Option<GrwParams>,
    pub csl: Option<CslParams>,
    pub ccqm: Option<CcqmParams>,
    /// Threshold for volume counting in the driver (model-appropriate f0).
    pub f0: f64,
}

/// Core errors raised while building states or parameters from a config are
/// constraint violations: the file parsed, its values don't hold up.
fn constraint(e: CoreError) -> CliError {
    CliError::Constraint(e.to_string())
}

pub fn prepare(config: ScenarioConfig) -> Result<Prepared, CliError> {
    let lat_cfg = &config.lattice;
    let axes = lat_cfg.particles * lat_cfg.dims_per_particle;
    if axes == 0 {
        return Err(CliError::Constraint(
            "lattice.particles and lattice.dims_per_particle must be at least 1".to_string(),
        ));
    }
    let lattice = LatticeSpec::new(
        lat_cfg.particles,
        lat_cfg.dims_per_particle,
        lat_cfg.cells.expand(axes, "cells")?,
        lat_cfg.cell_size.expand(axes, "cell_size")?,
        lat_cfg.origin.expand(axes, "origin")?,
    )
    .map_err(constraint)?;
    let boundary: Boundary = lat_cfg.boundary.into();

    if config.particles.len() != lat_cfg.particles {
        return Err(CliError::Constraint(format!(
            "{} particle entries for a {}-particle lattice",
            config.particles.len(),
            lat_cfg.particles
        )));
    }
    let particles: Vec<ParticleSpec> = config
        .particles
        .iter()
        .map(|p| ParticleSpec::new(p.mass, &p.label, p.identity_class.as_deref()))
        .collect::<Result<_, _>>()
        .map_err(constraint)?;

    let units = Units {
        hbar: config.units.hbar,
        boltzmann: config.units.boltzmann,
        reference_mass: config.units.reference_mass,
    };
    if !(units.hbar > 0.0 && units.boltzmann > 0.0 && units.reference_mass > 0.0) {
        return Err(CliError::Constraint("units must all be positive".to_string()));
    }

    let one_body = match &config.potential.one_body {
        OneBodyConfig::None => None,
        OneBodyConfig::Free => Some(OneBodyPotential::Free),
        OneBodyConfig::Harmonic { omega, center } => {
            Some(OneBodyPotential::Harmonic { omega: *omega, center: center.clone() })
        }
    };
    let pair = config.potential.pair.as_ref().map(PairPotential::from);
    if let Some(p) = &pair {
        p.validate().map_err(constraint)?;
    }

    check_schedule(&config.schedule)?;
    check_members(&config)?;
    check_budget(&config, &lattice)?;

    let initial: Vec<DiscreteWaveFunction> = config
        .initial
        .iter()
        .map(|init| build_state(init, &lattice, &particles, boundary))
        .collect::<Result<_, _>>()?;

    let (grw, csl, ccqm) = build_params(&config, &lattice, boundary)?;
    let f0 = match &ccqm {
        Some(p) => p.f0,
        None => config.f0,
    };
    if !(f0 >= 0.0 && f0.is_finite()) {
        return Err(CliError::Constraint("f0 must be finite and >= 0".to_string()));
    }

    Ok(Prepared {
        config,
        lattice,
        particles,
        units,
        boundary,
        one_body,
        pair,
        initial,
        grw,
        csl,
        ccqm,
        f0,
    })
}

fn check_schedule(s: &Schedule) -> Result<(), CliError> {
    if !(s.dt > 0.0 && s.dt.is_finite()) {
        return Err(CliError::Constraint("schedule.dt must be positive and finite".to_string()));
    }
    if s.steps == 0 {
        return Err(CliError::Constraint("schedule.steps must be at least 1".to_string()));
    }
    if s.record_every == 0 {
        return Err(CliError::Constraint("schedule.record_every must be at least 1".to_string()));
    }
    Ok(())
}

fn check_members(config: &ScenarioConfig) -> Result<(), CliError> {
    match config.model {
        Model::Ccqm => {
            if config.initial.is_empty() {
                return Err(CliError::Constraint(
                    "ccqm runs need at least one initial member".to_string(),
                ));
            }
        }
        _ => {
            if config.initial.len() != 1 {
                return Err(CliError::Constraint(format!(
                    "model \"{}\" evolves exactly one wave function, config lists {}",
                    config.model.name(),
                    config.initial.len()
                )));
            }
        }
    }
    if config.model == Model::Ccqm && matches!(config.potential.one_body, OneBodyConfig::None) {
        return Err(CliError::Constraint(
            "ccqm runs drive every member through a Hamiltonian; \
             potential.one_body \"none\" is only for unitary/grw/csl toys"
                .to_string(),
        ));
    }
    if config.ensemble.trajectories == 0 {
        return Err(CliError::Constraint("ensemble.trajectories must be at least 1".to_string()));
    }
    Ok(())
}

fn check_budget(config: &ScenarioConfig, lattice: &LatticeSpec) -> Result<(), CliError> {
    let member_cells = lattice.total_cells() as u64;
    let total = member_cells.saturating_mul(config.initial.len() as u64);
    if total > config.budget.max_cells {
        return Err(CliError::Constraint(format!(
            "memory budget: {} members x {member_cells} cells = {total} exceeds \
             budget.max_cells {}",
            config.initial.len(),
            config.budget.max_cells
        )));
    }
    Ok(())
}

fn build_state(
    init: &InitialState,
    lattice: &LatticeSpec,
    particles: &[ParticleSpec],
    boundary: Boundary,
) -> Result<DiscreteWaveFunction, CliError> {
    let axes = lattice.axis_count();
    let zeros = vec![0.0; axes];
    match init {
        InitialState::Gaussian { center, momentum, sigma } => gaussian_packet(
            lattice,
            particles,
            center,
            momentum.as_deref().unwrap_or(&zeros),
            sigma,
            boundary,
        )
        .map_err(constraint),
        InitialState::UniformBox { lo, hi, momentum } => {
            uniform_box_packet(lattice, particles, lo, hi, momentum.as_deref().unwrap_or(&zeros))
                .map_err(constraint)
        }
        InitialState::Superposition { branches } => {
            let branches: Vec<PacketBranch> = branches
                .iter()
                .map(|b| PacketBranch {
                    weight: b.weight,
                    center: b.center.clone(),
                    momentum: b.momentum.clone().unwrap_or_else(|| zeros.clone()),
                    sigma: b.sigma.clone(),
                })
                .collect();
            superposed_packets(lattice, particles, &branches, boundary).map_err(constraint)
        }
        InitialState::Amplitudes { re, im } => {
            let cells = lattice.total_cells();
            if re.len() != cells || im.as_ref().is_some_and(|im| im.len() != cells) {
                return Err(CliError::Constraint(format!(
                    "amplitude lists must have exactly {cells} entries"
                )));
            }
            let amps: Vec<C64> = (0..cells)
                .map(|i| C64::new(re[i], im.as_ref().map_or(0.0, |im| im[i])))
                .collect();
            let mut wf =
                DiscreteWaveFunction::new(lattice.clone(), particles.to_vec(), amps)
                    .map_err(constraint)?;
            wf.normalize().map_err(constraint)?;
            Ok(wf)
        }
    }
}

#[allow(clippy::type_complexity)]
fn build_params(
    config: &ScenarioConfig,
    lattice: &LatticeSpec,
    _boundary: Boundary,
) -> Result<(Option<GrwParams>, Option<CslParams>, Option<CcqmParams>), CliError> {
    match config.model {
        Model::Unitary => Ok((None, None, None)),
        Model::Grw => {
            let g = config.params.grw.as_ref().expect("checked by schema");
            let params = GrwParams {
                alpha: g.alpha,
                lambda_rate: g.lambda_rate,
                mass_proportional: g.mass_proportional,
            };
            params.validate().map_err(constraint)?;
            Ok((Some(params), None, None))
        }
        Model::Csl => {
            let c = config.params.csl.as_ref().expect("checked by schema");
            let params = CslParams {
                gamma: c.gamma,
                alpha: c.alpha,
                variant: c.variant.into(),
                dt: config.schedule.dt,
            };
            params.validate().map_err(constraint)?;
            // the smeared operator family is the scaling bottleneck; the
            // core builder enforces the same bound, surface it before a run
            if lattice.particle_count() > 2 || lattice.dims_per_particle() > 2 {
                return Err(CliError::Constraint(
                    "csl supports at most 2 particles in at most 2 dimensions".to_string(),
                ));
            }
            Ok((None, Some(params), None))
        }
        Model::Ccqm => {
            let c = config.params.ccqm.as_ref().expect("checked by schema");
            let params = CcqmParams {
                v_c: c.v_c,
                target_fraction: c.target_fraction,
                f0: c.f0,
                scale_vc_with_n: c.scale_vc_with_n,
                split_coupling: c.split_coupling,
                combine_coupling: c.combine_coupling,
                symmetric_jump: c.symmetric_jump,
                split_cuts: c.split_cuts.into(),
            };
            params.validate().map_err(constraint)?;
            if config.f0 != 0.0 {
                return Err(CliError::Constraint(
                    "ccqm runs read f0 from params.ccqm.f0; drop the top-level f0".to_string(),
                ));
            }
            let bound = trigger_safety_bound(params.f0, lattice.cell_volume());
            if (params.v_c as f64) > bound {
                return Err(CliError::Constraint(format!(
                    "trigger safety: v_c {} exceeds 0.1 / (f0^2 cell_volume) = {bound:.6e}; \
                     a state can sit below the volume trigger with nearly all its mass \
                     in one cell",
                    params.v_c
                )));
            }
            Ok((None, None, Some(params)))
        }
    }
}

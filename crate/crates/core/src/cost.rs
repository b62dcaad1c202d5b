//! Simulation-cost auditing: exact operation counts from the instrumented
//! explicit kernel, support-mode memory accounting, and scaling studies that
//! classify how cost grows with particle number — geometrically for one
//! joint wave function, linearly for a capped registry of separate ones.
//!
//! An "operation" is one complex multiply-add group in the stencil update;
//! counts come from running the kernel, never from wall clocks, so they are
//! machine-independent and deterministic.

use alloc::string::ToString;
use alloc::vec::Vec;

// float intrinsics come from this trait in standalone no_std builds; whenever
// std enters the crate graph (tests, std-enabled consumers) the inherent
// methods shadow it and the import looks unused
#[allow(unused_imports)]
use num_traits::Float;

use crate::ccqm::CcqmParams;
use crate::dynamics::{Hamiltonian, OneBodyPotential};
use crate::error::CoreError;
use crate::lattice::{Boundary, LatticeSpec};
use crate::registry::{RegistryConfig, WaveFunctionRegistry};
use crate::rng::trajectory_rng;
use crate::wavefunction::{DiscreteWaveFunction, ParticleSpec};
use crate::Units;

/// Which stepping family a cost question refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// Unconditionally stable split-Cayley stepping; solves tridiagonal
    /// systems, so there is no per-active-cell count to report.
    Implicit,
    /// Counted forward-Euler stencil over active cells only.
    Explicit,
}

/// How cost grows with particle number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Linear,
    Polynomial,
    Exponential,
}

impl Classification {
    pub fn name(&self) -> &'static str {
        match self {
            Classification::Linear => "linear",
            Classification::Polynomial => "polynomial",
            Classification::Exponential => "exponential",
        }
    }
}

/// Closed-form stencil count: one potential group plus two neighbor groups
/// per axis, for each active cell.
pub fn stencil_ops(active_cells: u64, axes: usize) -> u64 {
    active_cells * (2 * axes as u64 + 1)
}

/// Analytic spin-configuration factor 2^N, reported as the exponent; spin
/// dynamics itself is out of scope.
pub fn spin_factor_log2(particle_count: usize) -> u32 {
    particle_count as u32
}

/// Analytic potential-matrix factor 2^(2N) over spin configurations,
/// reported as the exponent.
pub fn potential_matrix_factor_log2(particle_count: usize) -> u32 {
    2 * particle_count as u32
}

/// Exact operation count for one explicit step of `psi` under `h`, measured
/// by running the counted kernel on a scratch copy. Implicit mode has no
/// countable per-cell kernel and is refused.
pub fn measure_step_cost(
    psi: &DiscreteWaveFunction,
    h: &Hamiltonian,
    mode: StepMode,
) -> Result<u64, CoreError> {
    match mode {
        StepMode::Implicit => Err(CoreError::NotMeasurable(
            "implicit stepping solves tridiagonal systems; use the predicted form".to_string(),
        )),
        StepMode::Explicit => {
            let mut scratch = psi.clone();
            let dt = 0.5 * h.suggested_max_dt();
            Ok(h.step_explicit_in_place(&mut scratch, dt))
        }
    }
}

/// Cost audit of one scenario size.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub particle_count: usize,
    /// Support-mode state memory in cells (summed over registry members in
    /// registry mode).
    pub memory_cells: u64,
    /// Measured operations for one step (per tick, summed over members, in
    /// registry mode).
    pub ops_per_step: u64,
    /// The winning fit's value at this N.
    pub predicted_ops: f64,
    pub classification: Classification,
}

/// A family of cost reports with the fitted growth law.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStudy {
    pub reports: Vec<CostReport>,
    /// Power-law exponent of memory vs N from the ln-ln fit.
    pub growth_exponent: f64,
    /// Per-particle geometric ratio from the exponential fit, when that fit
    /// wins.
    pub geometric_ratio: Option<f64>,
    pub classification: Classification,
}

/// Least squares y = a + b x; returns (a, b, r_squared).
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let e = y - (a + b * x);
        ss_res += e * e;
        ss_tot += (y - my) * (y - my);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (a, b, r2)
}

/// Pick between a power law (linear in ln-ln) and a geometric law (linear in
/// ln vs N) for the memory series, then grade the power-law slope.
fn classify(ns: &[usize], memory: &[u64]) -> (Classification, f64, Option<f64>) {
    let xs_n: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let xs_ln: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = memory.iter().map(|&m| (m.max(1) as f64).ln()).collect();
    let (_, b_exp, r2_exp) = linear_fit(&xs_n, &ys);
    let (_, b_pow, r2_pow) = linear_fit(&xs_ln, &ys);
    if r2_exp > r2_pow && b_exp > 0.0 {
        (Classification::Exponential, b_pow, Some(b_exp.exp()))
    } else if b_pow <= 1.2 {
        (Classification::Linear, b_pow, None)
    } else {
        (Classification::Polynomial, b_pow, None)
    }
}

fn fit_predictions(ns: &[usize], ops: &[u64], classification: Classification) -> Vec<f64> {
    let ys: Vec<f64> = ops.iter().map(|&m| (m.max(1) as f64).ln()).collect();
    match classification {
        Classification::Exponential => {
            let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
            let (a, b, _) = linear_fit(&xs, &ys);
            ns.iter().map(|&n| (a + b * n as f64).exp()).collect()
        }
        _ => {
            let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
            let (a, b, _) = linear_fit(&xs, &ys);
            ns.iter().map(|&n| (a + b * (n as f64).ln()).exp()).collect()
        }
    }
}

fn study_from_series(
    ns: &[usize],
    memory: Vec<u64>,
    ops: Vec<u64>,
) -> Result<ScalingStudy, CoreError> {
    if ns.len() < 3 {
        return Err(CoreError::Numerical(alloc::format!(
            "scaling fit needs at least 3 sizes, got {}",
            ns.len()
        )));
    }
    let (classification, growth_exponent, geometric_ratio) = classify(ns, &memory);
    let predictions = fit_predictions(ns, &ops, classification);
    let reports = ns
        .iter()
        .zip(memory)
        .zip(ops)
        .zip(predictions)
        .map(|(((&n, memory_cells), ops_per_step), predicted_ops)| CostReport {
            particle_count: n,
            memory_cells,
            ops_per_step,
            predicted_ops,
            classification,
        })
        .collect();
    Ok(ScalingStudy { reports, growth_exponent, geometric_ratio, classification })
}

/// Grow one joint wave function: N particles, each confined to `v_s` cells
/// of a shared axis, so support-mode memory is exactly v_s^N and the stencil
/// cost follows. Feasibility caps N at 4.
pub fn single_wavefunction_study(v_s: u64, ns: &[usize]) -> Result<ScalingStudy, CoreError> {
    if v_s < 2 {
        return Err(CoreError::Domain("per-particle support must be at least 2".to_string()));
    }
    let mut memory = Vec::new();
    let mut ops = Vec::new();
    for &n in ns {
        if n == 0 || n > 4 {
            return Err(CoreError::Domain(alloc::format!(
                "single-wavefunction mode supports 1..=4 particles, got {n}"
            )));
        }
        let cells_per_axis = (2 * v_s) as usize;
        let lat = LatticeSpec::uniform(n, 1, cells_per_axis, 1.0, 0.0)?;
        let particles: Vec<ParticleSpec> = (0..n)
            .map(|k| ParticleSpec::new(1.0, &alloc::format!("p{k}"), None))
            .collect::<Result<_, _>>()?;
        let axes = lat.axis_count();
        let wf = crate::dynamics::uniform_box_packet(
            &lat,
            &particles,
            &alloc::vec![0usize; axes],
            &alloc::vec![v_s as usize; axes],
            &alloc::vec![0.0; axes],
        )?;
        let h = Hamiltonian::free(lat, &particles, 1.0, Boundary::Periodic)?;
        memory.push(wf.relative_volume(0.0));
        ops.push(measure_step_cost(&wf, &h, StepMode::Explicit)?);
    }
    study_from_series(ns, memory, ops)
}

/// Run a registry of N separate weakly-coupled packets under the volume cap
/// and audit peak total memory and steady-state per-tick cost. Memory is the
/// peak over ticks of the summed member volumes; ops average the counted
/// kernel over the second half of the run.
pub fn registry_study(
    ns: &[usize],
    params: &CcqmParams,
    ticks: usize,
    dt: f64,
    master_seed: u64,
) -> Result<ScalingStudy, CoreError> {
    params.validate()?;
    if ticks < 2 {
        return Err(CoreError::Domain("registry study needs at least 2 ticks".to_string()));
    }
    let mut memory = Vec::new();
    let mut ops = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        if n == 0 {
            return Err(CoreError::Domain("registry study needs at least 1 particle".to_string()));
        }
        let config = RegistryConfig::default();
        let units = Units::default();
        let mut reg = WaveFunctionRegistry::new(config);
        let lat = LatticeSpec::uniform(1, 1, 128, 1.0, 0.0)?;
        for k in 0..n {
            let spec = ParticleSpec::new(1.0, &alloc::format!("p{k}"), None)?;
            let wf = crate::dynamics::gaussian_packet(
                &lat,
                &[spec],
                &[64.0],
                &[0.0],
                &[3.0],
                Boundary::Periodic,
            )?;
            reg.add_wave_function(wf)?;
        }
        let mut rng = trajectory_rng(master_seed, i as u64);
        let mut peak_memory = 0u64;
        let mut tail_ops = 0u64;
        let mut tail_ticks = 0u64;
        for t in 0..ticks {
            reg.tick(params, dt, &mut rng)?;
            let mut total_v = 0u64;
            let mut tick_ops = 0u64;
            for (_, wf) in reg.iter() {
                let v = wf.relative_volume(params.f0);
                let threshold = params.trigger_threshold(wf.lattice().particle_count());
                if v > threshold {
                    return Err(CoreError::Numerical(
                        "registry study observed a member above the cap".to_string(),
                    ));
                }
                total_v += v;
                let h = Hamiltonian::build(
                    wf.lattice().clone(),
                    wf.particles(),
                    &units,
                    Boundary::Periodic,
                    &OneBodyPotential::Free,
                    None,
                )?;
                tick_ops += measure_step_cost(wf, &h, StepMode::Explicit)?;
            }
            peak_memory = peak_memory.max(total_v);
            if t >= ticks / 2 {
                tail_ops += tick_ops;
                tail_ticks += 1;
            }
        }
        memory.push(peak_memory);
        ops.push(tail_ops / tail_ticks.max(1));
    }
    study_from_series(ns, memory, ops)
}

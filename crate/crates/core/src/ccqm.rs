//! Critical-complexity collapse law: a wave function whose relative volume
//! reaches a critical value either splits into weakly-interacting parts or
//! localizes under a configuration-space Gaussian jump factor whose width is
//! chosen so the surviving volume is a set fraction of the pre-collapse
//! volume. Separately-evolving wave functions can also combine into a joint
//! state at a rate set by their interaction strength.
//!
//! Ordering convention: the collapse center is sampled first, from the
//! pre-collapse density blurred at a provisional width; the final width is
//! then found by bisection for that fixed center. This keeps the center
//! statistics testable against a closed-form density while the width search
//! stays deterministic.

use alloc::string::ToString;
use alloc::vec::Vec;

// float intrinsics come from this trait in standalone no_std builds; whenever
// std enters the crate graph (tests, std-enabled consumers) the inherent
// methods shadow it and the import looks unused
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::convolve::gaussian_blur;
use crate::dynamics::{Hamiltonian, PairPotential};
use crate::error::CoreError;
use crate::event::{CollapseEvent, Mechanism};
use crate::grw::sample_center;
use crate::lattice::Boundary;
use crate::rng::SimRng;
use crate::sampling::kahan_sum;
use crate::wavefunction::{class_permutations, DiscreteWaveFunction};
use crate::C64;

/// Which bipartitions a triggered wave function may split along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitCuts {
    /// One particle against the rest, for each particle. Bounds the search
    /// at N cuts.
    SingleVsRest,
    /// Every bipartition; only permitted for up to four particles.
    FullEnumeration,
}

/// Parameters of the critical-complexity law.
#[derive(Debug, Clone, PartialEq)]
pub struct CcqmParams {
    /// Critical relative volume; collapse triggers at or above it.
    pub v_c: u64,
    /// Target post-collapse volume as a fraction of the pre-collapse volume,
    /// strictly between 0 and 1.
    pub target_fraction: f64,
    /// Base magnitude: amplitudes at or below it count as empty cells.
    pub f0: f64,
    /// Trigger at N * v_c instead of v_c for an N-particle wave function.
    pub scale_vc_with_n: bool,
    /// Split fires with probability exp(-g * I); this is g.
    pub split_coupling: f64,
    /// Combine fires with probability 1 - exp(-c * I * dt); this is c.
    pub combine_coupling: f64,
    /// Symmetrize the jump factor over identity-class permutations so the
    /// collapsed state keeps its exchange symmetry.
    pub symmetric_jump: bool,
    pub split_cuts: SplitCuts,
}

impl Default for CcqmParams {
    fn default() -> Self {
        CcqmParams {
            v_c: 1 << 20,
            target_fraction: 0.5,
            f0: 0.0,
            scale_vc_with_n: false,
            split_coupling: 1.0,
            combine_coupling: 1.0,
            symmetric_jump: false,
            split_cuts: SplitCuts::SingleVsRest,
        }
    }
}

impl CcqmParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.v_c < 2 {
            return Err(CoreError::Domain("critical volume must be an integer > 1".to_string()));
        }
        if !(self.target_fraction > 0.0 && self.target_fraction < 1.0) {
            return Err(CoreError::Domain(
                "target fraction must lie strictly between 0 and 1".to_string(),
            ));
        }
        if !(self.f0 >= 0.0 && self.f0.is_finite()) {
            return Err(CoreError::Domain("base magnitude must be finite and >= 0".to_string()));
        }
        if !(self.split_coupling >= 0.0 && self.combine_coupling >= 0.0) {
            return Err(CoreError::Domain("couplings must be nonnegative".to_string()));
        }
        Ok(())
    }

    /// Trigger threshold for an n-particle wave function.
    pub fn trigger_threshold(&self, particle_count: usize) -> u64 {
        if self.scale_vc_with_n {
            self.v_c.saturating_mul(particle_count as u64)
        } else {
            self.v_c
        }
    }
}

/// Largest critical volume a configuration may use at base magnitude `f0` on
/// cells of volume `cell_volume`: v_c <= 0.1 / (f0^2 cellvol). Beyond it a
/// spreading packet's magnitude can fall below f0 everywhere before the
/// trigger fires, vanishing the state instead of collapsing it. Unbounded
/// when f0 = 0.
pub fn trigger_safety_bound(f0: f64, cell_volume: f64) -> f64 {
    if f0 == 0.0 {
        f64::INFINITY
    } else {
        0.1 / (f0 * f0 * cell_volume)
    }
}

/// True when the state's relative volume has reached the trigger threshold.
pub fn check_trigger(psi: &DiscreteWaveFunction, params: &CcqmParams) -> bool {
    psi.relative_volume(params.f0) >= params.trigger_threshold(psi.lattice().particle_count())
}

/// Density of collapse centers over configuration cells: |psi|^2 convolved
/// with the squared jump factor exp(-epsilon |delta|^2).
pub fn ccqm_center_density(
    psi: &DiscreteWaveFunction,
    epsilon: f64,
    boundary: Boundary,
) -> Result<Vec<f64>, CoreError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(CoreError::Domain("center-density width must be positive".to_string()));
    }
    let lat = psi.lattice();
    let density: Vec<f64> = psi.amplitudes().iter().map(|z| z.norm_sqr()).collect();
    let q = alloc::vec![epsilon; lat.axis_count()];
    Ok(gaussian_blur(lat, &density, &q, boundary))
}

/// Provisional width for center sampling: a Gaussian wide enough that the
/// target fraction of a support of half-extent R would survive,
/// eps0 = (F^(-2/D) - 1) / R^2 with D the configuration dimension. Only a
/// scale estimate; the real width comes from the bisection afterwards.
pub fn provisional_epsilon(
    psi: &DiscreteWaveFunction,
    params: &CcqmParams,
) -> Result<f64, CoreError> {
    let lat = psi.lattice();
    let axes = lat.axis_count();
    let mut lo = alloc::vec![usize::MAX; axes];
    let mut hi = alloc::vec![0usize; axes];
    let mut coords = alloc::vec![0usize; axes];
    let mut any = false;
    for (idx, z) in psi.amplitudes().iter().enumerate() {
        if z.norm() > params.f0 {
            any = true;
            lat.coords_of(idx, &mut coords);
            for ax in 0..axes {
                lo[ax] = lo[ax].min(coords[ax]);
                hi[ax] = hi[ax].max(coords[ax]);
            }
        }
    }
    if !any {
        return Err(CoreError::VanishedWaveFunction);
    }
    let mut r = 0.0f64;
    for ax in 0..axes {
        let a = lat.cell_size()[ax];
        let half = 0.5 * ((hi[ax] - lo[ax] + 1) as f64) * a;
        r = r.max(half);
    }
    let d = axes as f64;
    Ok((params.target_fraction.powf(-2.0 / d) - 1.0) / (r * r))
}

/// Multiply by the configuration-space Gaussian jump factor centered at
/// `center` with width parameter `epsilon` (exponent -epsilon |x - c|^2 / 2),
/// renormalize, zero every cell at or below `f0`, and renormalize again.
/// With `symmetric` set the factor is the sum over identity-class
/// permutations of the center blocks, which commutes with exchange symmetry.
pub fn apply_jump(
    psi: &DiscreteWaveFunction,
    center: &[f64],
    epsilon: f64,
    symmetric: bool,
    f0: f64,
    boundary: Boundary,
) -> Result<DiscreteWaveFunction, CoreError> {
    let lat = psi.lattice().clone();
    let axes = lat.axis_count();
    if center.len() != axes {
        return Err(CoreError::Domain(
            "jump center must have one coordinate per configuration axis".to_string(),
        ));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(CoreError::Domain("jump width must be finite and >= 0".to_string()));
    }
    let mut out = psi.clone();
    if epsilon > 0.0 {
        let d = lat.dims_per_particle();
        let centers: Vec<Vec<f64>> = if symmetric {
            let classes = psi.identity_classes()?;
            let perms = class_permutations(lat.particle_count(), &classes)?;
            perms
                .iter()
                .map(|perm| {
                    let mut c = alloc::vec![0.0; axes];
                    for (k, &src) in perm.iter().enumerate() {
                        for j in 0..d {
                            c[k * d + j] = center[src * d + j];
                        }
                    }
                    c
                })
                .collect()
        } else {
            alloc::vec![center.to_vec()]
        };
        let mut coords = alloc::vec![0usize; axes];
        let mut exponents = alloc::vec![0.0f64; centers.len()];
        for (idx, z) in out.amplitudes_mut().iter_mut().enumerate() {
            if z.norm_sqr() == 0.0 {
                continue;
            }
            lat.coords_of(idx, &mut coords);
            for (e, c) in exponents.iter_mut().zip(&centers) {
                let mut acc = 0.0;
                for ax in 0..axes {
                    let x = lat.position(ax, coords[ax]);
                    let delta = lat.displacement(ax, x, c[ax], boundary);
                    acc += delta * delta;
                }
                *e = 0.5 * epsilon * acc;
            }
            // sum of exp(-e) over permuted centers, shifted to keep the
            // leading term exact
            let min_e = exponents.iter().copied().fold(f64::INFINITY, f64::min);
            let total: f64 = exponents.iter().map(|e| (-(e - min_e)).exp()).sum();
            *z = *z * (-min_e).exp() * total;
        }
    }
    let norm2 = out.norm_squared();
    if !(norm2 > 1e-300) {
        return Err(CoreError::DegenerateCollapse);
    }
    out.normalize()?;
    out.zero_at_or_below(f0);
    out.normalize()?;
    Ok(out)
}

/// Width search: the smallest epsilon whose post-jump volume does not exceed
/// ceil(F * v_pre) — equivalently the largest achievable surviving volume
/// under the target. Bisection on a monotone integer-valued objective, at
/// most 64 refinement steps after an upward bracket search. Returns 0 when
/// the target already admits the whole state.
pub fn choose_epsilon(
    psi: &DiscreteWaveFunction,
    center: &[f64],
    params: &CcqmParams,
    boundary: Boundary,
) -> Result<f64, CoreError> {
    params.validate()?;
    let v_pre = psi.relative_volume(params.f0);
    let target = (params.target_fraction * v_pre as f64).ceil() as u64;
    if v_pre <= target {
        return Ok(0.0);
    }
    // For the plain (non-symmetric) kernel the post-jump volume can be
    // counted without materializing the jumped state: a cell survives the
    // normalize / threshold / renormalize pipeline iff
    //   |psi|^2 e^{-eps d^2} > f0^2 * norm^2(eps),
    // so one pass over cached (|psi|^2, d^2) pairs per probe replaces a full
    // clone-multiply-normalize-count cycle. Differences from the applied
    // path are a few ulps, which only matters for cells sitting exactly on
    // the threshold.
    let mut fast = if params.symmetric_jump {
        None
    } else {
        let lat = psi.lattice();
        let axes = lat.axis_count();
        if center.len() != axes {
            return Err(CoreError::Domain(
                "jump center must have one coordinate per configuration axis".to_string(),
            ));
        }
        let mut coords = alloc::vec![0usize; axes];
        let mut cells = Vec::new();
        for (idx, z) in psi.amplitudes().iter().enumerate() {
            let m2 = z.norm_sqr();
            if m2 == 0.0 {
                continue;
            }
            lat.coords_of(idx, &mut coords);
            let mut acc = 0.0;
            for ax in 0..axes {
                let x = lat.position(ax, coords[ax]);
                let delta = lat.displacement(ax, x, center[ax], boundary);
                acc += delta * delta;
            }
            cells.push((acc, m2));
        }
        // ascending distance lets each probe stop at the radius where the
        // kernel weight underflows to exactly 0.0 (the dropped cells would
        // contribute nothing and can never survive)
        cells.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
        let buf = alloc::vec![0.0f64; cells.len()];
        Some((cells, buf, lat.cell_volume()))
    };
    let mut volume_at = |eps: f64| -> Result<u64, CoreError> {
        if let Some((cells, buf, cell_volume)) = fast.as_mut() {
            let cut = if eps > 0.0 {
                cells.partition_point(|&(d, _)| eps * d <= 760.0)
            } else {
                cells.len()
            };
            let live = &cells[..cut];
            let buf = &mut buf[..cut];
            for (b, &(d, _)) in buf.iter_mut().zip(live.iter()) {
                *b = (-eps * d).exp();
            }
            let norm2 = *cell_volume
                * kahan_sum(live.iter().zip(buf.iter()).map(|((_, a), e)| a * e));
            if !(norm2 > 1e-300) {
                return Ok(0);
            }
            let threshold = params.f0 * params.f0 * norm2;
            return Ok(live
                .iter()
                .zip(buf.iter())
                .filter(|((_, a), e)| *a * *e > threshold)
                .count() as u64);
        }
        match apply_jump(psi, center, eps, params.symmetric_jump, params.f0, boundary) {
            Ok(state) => Ok(state.relative_volume(params.f0)),
            Err(CoreError::DegenerateCollapse) | Err(CoreError::VanishedWaveFunction) => Ok(0),
            Err(other) => Err(other),
        }
    };

    let mut lo = 0.0f64;
    let mut hi = provisional_epsilon(psi, params)?.max(1e-12);
    let mut v_hi = volume_at(hi)?;
    let mut grow = 0;
    while v_hi > target {
        lo = hi;
        hi *= 4.0;
        v_hi = volume_at(hi)?;
        grow += 1;
        if grow > 60 {
            return Err(CoreError::WidthSearchFailed { target, reached: v_hi });
        }
    }
    if v_hi == target {
        return Ok(hi);
    }
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        let v_mid = volume_at(mid)?;
        if v_mid <= target {
            hi = mid;
            v_hi = v_mid;
            if v_hi == target {
                break;
            }
        } else {
            lo = mid;
        }
    }
    if v_hi == 0 {
        return Err(CoreError::WidthSearchFailed { target, reached: 0 });
    }
    Ok(hi)
}

/// One full localization: sample a center from the provisional-width
/// density, bisect the width for that center, and apply the jump. Returns
/// the collapsed state and its event record (time left at 0 for the caller
/// to stamp).
pub fn ccqm_localize(
    psi: &DiscreteWaveFunction,
    params: &CcqmParams,
    boundary: Boundary,
    hamiltonian: Option<&Hamiltonian>,
    rng: &mut SimRng,
) -> Result<(DiscreteWaveFunction, CollapseEvent), CoreError> {
    params.validate()?;
    let v_pre = psi.relative_volume(params.f0);
    let e_pre = match hamiltonian {
        Some(h) => Some(h.energy_expectation(psi)?),
        None => None,
    };
    let eps0 = provisional_epsilon(psi, params)?;
    let density = ccqm_center_density(psi, eps0, boundary)?;
    let center = sample_center(psi.lattice(), &density, rng);
    let epsilon = choose_epsilon(psi, &center, params, boundary)?;
    let out = apply_jump(psi, &center, epsilon, params.symmetric_jump, params.f0, boundary)?;
    let v_post = out.relative_volume(params.f0);
    let mut event = CollapseEvent::new(Mechanism::CcqmLocalize);
    event.center = Some(center);
    event.epsilon = Some(epsilon);
    event.v_pre = v_pre;
    event.v_post = v_post;
    event.delta_energy = match (hamiltonian, e_pre) {
        (Some(h), Some(e0)) => Some(h.energy_expectation(&out)? - e0),
        _ => None,
    };
    Ok((out, event))
}

/// Candidate bipartitions, each given as the particle indices of one part
/// (the part not containing the remainder).
pub fn candidate_cuts(particle_count: usize, mode: SplitCuts) -> Result<Vec<Vec<usize>>, CoreError> {
    if particle_count < 2 {
        return Ok(Vec::new());
    }
    match mode {
        SplitCuts::SingleVsRest => {
            let upper = if particle_count == 2 { 1 } else { particle_count };
            Ok((0..upper).map(|k| alloc::vec![k]).collect())
        }
        SplitCuts::FullEnumeration => {
            if particle_count > 4 {
                return Err(CoreError::Domain(
                    "full bipartition enumeration is limited to 4 particles".to_string(),
                ));
            }
            let full = (1usize << particle_count) - 1;
            let mut cuts = Vec::new();
            for mask in 1..full {
                if mask & 1 == 0 {
                    continue; // canonical side contains particle 0
                }
                let part: Vec<usize> =
                    (0..particle_count).filter(|k| mask >> k & 1 == 1).collect();
                cuts.push(part);
            }
            Ok(cuts)
        }
    }
}

/// Interaction strength across a bipartition: the sum over cross pairs of
/// |E[V_pair(x_i - x_j)]| under the product of the current single-particle
/// marginals. Zero when no pair potential is configured.
pub fn interaction_across_cut(
    psi: &DiscreteWaveFunction,
    part: &[usize],
    pair: Option<&PairPotential>,
) -> Result<f64, CoreError> {
    let pair = match pair {
        Some(p) => p,
        None => return Ok(0.0),
    };
    pair.validate()?;
    let lat = psi.lattice();
    let n = lat.particle_count();
    let in_part = |k: usize| part.contains(&k);
    let mut total = 0.0;
    for i in 0..n {
        if !in_part(i) {
            continue;
        }
        for j in 0..n {
            if in_part(j) {
                continue;
            }
            total += marginal_pair_expectation(psi, i, psi, j, pair).abs();
        }
    }
    Ok(total)
}

/// Interaction strength between two separate wave functions: sum over all
/// cross pairs of |E[V_pair]| under the product of their single-particle
/// marginals.
pub fn interaction_between(
    a: &DiscreteWaveFunction,
    b: &DiscreteWaveFunction,
    pair: Option<&PairPotential>,
) -> Result<f64, CoreError> {
    let pair = match pair {
        Some(p) => p,
        None => return Ok(0.0),
    };
    pair.validate()?;
    if a.lattice().dims_per_particle() != b.lattice().dims_per_particle() {
        return Err(CoreError::Domain("interaction across unequal dimensionality".to_string()));
    }
    let mut total = 0.0;
    for i in 0..a.lattice().particle_count() {
        for j in 0..b.lattice().particle_count() {
            total += marginal_pair_expectation(a, i, b, j, pair).abs();
        }
    }
    Ok(total)
}

/// E[V_pair(x_i - y_j)] with x_i drawn from `a`'s particle-i marginal and
/// y_j from `b`'s particle-j marginal (plain coordinate differences).
fn marginal_pair_expectation(
    a: &DiscreteWaveFunction,
    i: usize,
    b: &DiscreteWaveFunction,
    j: usize,
    pair: &PairPotential,
) -> f64 {
    let gi = a.marginal_density(i);
    let gj = b.marginal_density(j);
    let sub_i = a.lattice().particle_sublattice(i);
    let sub_j = b.lattice().particle_sublattice(j);
    let d = sub_i.axis_count();
    let (vol_i, vol_j) = (sub_i.cell_volume(), sub_j.cell_volume());
    let mut ci = alloc::vec![0usize; d];
    let mut cj = alloc::vec![0usize; d];
    let mut acc = 0.0;
    for (ii, &pi) in gi.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        sub_i.coords_of(ii, &mut ci);
        for (jj, &pj) in gj.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            sub_j.coords_of(jj, &mut cj);
            let mut r2 = 0.0;
            for ax in 0..d {
                let dx = sub_i.position(ax, ci[ax]) - sub_j.position(ax, cj[ax]);
                r2 += dx * dx;
            }
            acc += pi * pj * pair.eval_r2(r2) * vol_i * vol_j;
        }
    }
    acc
}

/// Result of a split attempt: either the original state (not fired) or two
/// parts, plus the particle indices of the first part.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub fired: bool,
    pub parts: Vec<DiscreteWaveFunction>,
    /// Particle indices (in the parent) of parts[0] when fired.
    pub first_part: Vec<usize>,
}

/// Attempt to split a triggered wave function along its candidate cuts, in
/// order; each cut fires with probability exp(-g * I). Parts keep their
/// exact joint marginal distributions — magnitudes are square roots of the
/// part marginals, phases come from the parent's conditional slice at the
/// most likely configuration of the complement, so an exact product state
/// splits into its exact factors (up to a global phase).
pub fn try_split(
    psi: &DiscreteWaveFunction,
    params: &CcqmParams,
    pair: Option<&PairPotential>,
    rng: &mut SimRng,
) -> Result<SplitOutcome, CoreError> {
    params.validate()?;
    let n = psi.lattice().particle_count();
    let cuts = candidate_cuts(n, params.split_cuts)?;
    for cut in cuts {
        let strength = interaction_across_cut(psi, &cut, pair)?;
        let p = (-params.split_coupling * strength).exp();
        // degenerate probabilities skip the draw so an isolated system's
        // stream does not depend on how many bystanders share the registry
        if p >= 1.0 || (p > 0.0 && rng.gen::<f64>() < p) {
            let complement: Vec<usize> = (0..n).filter(|k| !cut.contains(k)).collect();
            let part_a = marginal_part_state(psi, &cut)?;
            let part_b = marginal_part_state(psi, &complement)?;
            return Ok(SplitOutcome {
                fired: true,
                parts: alloc::vec![part_a, part_b],
                first_part: cut,
            });
        }
    }
    Ok(SplitOutcome { fired: false, parts: alloc::vec![psi.clone()], first_part: Vec::new() })
}

/// Build one part of a split: magnitude from the subset's joint marginal,
/// phase from the parent at the complement's modal configuration.
fn marginal_part_state(
    psi: &DiscreteWaveFunction,
    subset: &[usize],
) -> Result<DiscreteWaveFunction, CoreError> {
    let lat = psi.lattice();
    let n = lat.particle_count();
    let d = lat.dims_per_particle();
    let (sub_lat, density) = psi.subset_marginal_density(subset);
    let complement: Vec<usize> = (0..n).filter(|k| !subset.contains(k)).collect();

    // modal configuration of the complement for the phase slice
    let mut comp_coords: Vec<usize> = Vec::new();
    if !complement.is_empty() {
        let (comp_lat, comp_density) = psi.subset_marginal_density(&complement);
        let mode = comp_density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("densities are finite"))
            .map(|(i, _)| i)
            .unwrap_or(0);
        comp_coords = alloc::vec![0usize; comp_lat.axis_count()];
        comp_lat.coords_of(mode, &mut comp_coords);
    }

    let strides = lat.strides();
    let mut amps = alloc::vec![C64::new(0.0, 0.0); sub_lat.total_cells()];
    let mut sub_coords = alloc::vec![0usize; sub_lat.axis_count()];
    for (idx, slot) in amps.iter_mut().enumerate() {
        let g = density[idx];
        if g == 0.0 {
            continue;
        }
        sub_lat.coords_of(idx, &mut sub_coords);
        // assemble the parent's flat index at (subset = here, complement = mode)
        let mut full_idx = 0usize;
        for (slot_k, &k) in subset.iter().enumerate() {
            for j in 0..d {
                full_idx += sub_coords[slot_k * d + j] * strides[k * d + j];
            }
        }
        for (slot_k, &k) in complement.iter().enumerate() {
            for j in 0..d {
                full_idx += comp_coords[slot_k * d + j] * strides[k * d + j];
            }
        }
        let parent = psi.amplitudes()[full_idx];
        let phase = if parent.norm_sqr() > 0.0 { parent.arg() } else { 0.0 };
        *slot = C64::from_polar(g.sqrt(), phase);
    }
    let particles: Vec<_> = subset.iter().map(|&k| psi.particles()[k].clone()).collect();
    let mut part = DiscreteWaveFunction::new(sub_lat, particles, amps)?;
    part.normalize()?;
    Ok(part)
}

/// Attempt to combine two wave functions into their joint product, fired
/// with probability 1 - exp(-c * I * dt). The joint state is symmetrized
/// when an identity class spans both inputs. Refuses (as an error carrying
/// the sizes) when the joint lattice exceeds `budget_cells`.
pub fn try_combine(
    a: &DiscreteWaveFunction,
    b: &DiscreteWaveFunction,
    params: &CcqmParams,
    pair: Option<&PairPotential>,
    dt: f64,
    budget_cells: u64,
    rng: &mut SimRng,
) -> Result<Option<DiscreteWaveFunction>, CoreError> {
    params.validate()?;
    let required = a.lattice().total_cells() as u64 * b.lattice().total_cells() as u64;
    if required > budget_cells {
        return Err(CoreError::CombineRefused { required_cells: required, budget_cells });
    }
    let strength = interaction_between(a, b, pair)?;
    let p = 1.0 - (-params.combine_coupling * strength * dt).exp();
    let fires = p >= 1.0 || (p > 0.0 && rng.gen::<f64>() < p);
    if !fires {
        return Ok(None);
    }
    let joint = a.tensor_product(b)?;
    let overlap = a
        .particles()
        .iter()
        .filter_map(|p| p.identity_class())
        .any(|name| b.particles().iter().any(|q| q.identity_class() == Some(name)));
    let joint = if overlap {
        joint.symmetrized(crate::wavefunction::Exchange::Symmetric)?
    } else {
        joint
    };
    Ok(Some(joint))
}

/// v_c = 10^(e * M) for M particles each confined to 10^e cells, reported as
/// the exponent.
pub fn critical_volume_exponent(per_particle_exponent: u32, particles: u32) -> u64 {
    per_particle_exponent as u64 * particles as u64
}

/// Per-particle spread exponent when `particle_count` particles share the
/// trigger: each must reach 10^(vc_exponent / particle_count). Exact integer
/// division required.
pub fn spread_exponent_when_shared(
    vc_exponent: u64,
    particle_count: u64,
) -> Result<u64, CoreError> {
    if particle_count == 0 || vc_exponent % particle_count != 0 {
        return Err(CoreError::Domain(alloc::format!(
            "spread exponent {vc_exponent} does not divide evenly among {particle_count} particles"
        )));
    }
    Ok(vc_exponent / particle_count)
}

/// Linear spread of one particle, as a power of ten in centimetres: cells
/// split evenly across `dims` axes, each cell of side 10^cell_exponent_cm.
pub fn spread_distance_exponent_cm(
    spread_exponent: u64,
    dims: u32,
    cell_exponent_cm: i64,
) -> Result<i64, CoreError> {
    if dims == 0 || spread_exponent % dims as u64 != 0 {
        return Err(CoreError::Domain(alloc::format!(
            "cell exponent {spread_exponent} does not divide evenly across {dims} axes"
        )));
    }
    Ok((spread_exponent / dims as u64) as i64 + cell_exponent_cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{gaussian_packet, superposed_packets, uniform_box_packet, PacketBranch};
    use crate::lattice::LatticeSpec;
    use crate::rng::trajectory_rng;
    use crate::wavefunction::ParticleSpec;

    fn particle() -> ParticleSpec {
        ParticleSpec::new(1.0, "p", None).unwrap()
    }

    fn default_params() -> CcqmParams {
        CcqmParams::default()
    }

    #[test]
    fn trigger_compares_volume_to_threshold() {
        let lat = LatticeSpec::uniform(1, 1, 64, 1.0, 0.0).unwrap();
        let params = CcqmParams { v_c: 32, ..default_params() };
        let wide = uniform_box_packet(&lat, &[particle()], &[0], &[33], &[0.0]).unwrap();
        let narrow = uniform_box_packet(&lat, &[particle()], &[0], &[16], &[0.0]).unwrap();
        assert!(check_trigger(&wide, &params));
        assert!(!check_trigger(&narrow, &params));
    }

    #[test]
    fn scaled_trigger_multiplies_by_particle_count() {
        let lat = LatticeSpec::uniform(2, 1, 16, 1.0, 0.0).unwrap();
        let params = CcqmParams { v_c: 32, scale_vc_with_n: true, ..default_params() };
        // 8 x 8 = 64 cells of support: at v_c = 32 a 2-particle state needs 64
        let wf = uniform_box_packet(
            &lat,
            &[particle(), particle()],
            &[0, 0],
            &[8, 8],
            &[0.0, 0.0],
        )
        .unwrap();
        assert!(check_trigger(&wf, &params));
        let smaller = uniform_box_packet(
            &lat,
            &[particle(), particle()],
            &[0, 0],
            &[8, 7],
            &[0.0, 0.0],
        )
        .unwrap();
        assert!(!check_trigger(&smaller, &params));
    }

    #[test]
    fn transition_exponents_match_the_log_arithmetic() {
        // M particles confined to 10^30 cells each trigger at 10^(30 M);
        // M/2 particles sharing that trigger must spread to the square, M/3
        // to the cube; in three dimensions with 10^-15 cm cells those spreads
        // are 10^5 cm and 10^15 cm
        let m = 12u32;
        let vc_exp = critical_volume_exponent(30, m);
        assert_eq!(vc_exp, 360);
        let half = spread_exponent_when_shared(vc_exp, m as u64 / 2).unwrap();
        let third = spread_exponent_when_shared(vc_exp, m as u64 / 3).unwrap();
        assert_eq!(half, 60);
        assert_eq!(third, 90);
        assert_eq!(spread_distance_exponent_cm(half, 3, -15).unwrap(), 5);
        assert_eq!(spread_distance_exponent_cm(third, 3, -15).unwrap(), 15);
        assert!(spread_exponent_when_shared(vc_exp, 7).is_err());
    }

    #[test]
    fn safety_bound_scales_inversely_with_threshold_mass() {
        assert_eq!(trigger_safety_bound(0.0, 1.0), f64::INFINITY);
        let b = trigger_safety_bound(0.02, 1.0);
        assert!((b - 250.0).abs() < 1e-9);
    }

    #[test]
    fn center_density_of_a_point_state_is_the_squared_kernel() {
        let lat = LatticeSpec::uniform(1, 1, 32, 1.0, 0.0).unwrap();
        let mut amps = alloc::vec![C64::new(0.0, 0.0); 32];
        amps[10] = C64::new(1.0, 0.0);
        let wf = DiscreteWaveFunction::new(lat.clone(), alloc::vec![particle()], amps)
            .unwrap()
            .normalized()
            .unwrap();
        let eps = 0.3;
        let density = ccqm_center_density(&wf, eps, Boundary::Periodic).unwrap();
        // ratios must follow exp(-eps d^2) exactly
        for cell in [11usize, 13, 16] {
            let d = cell as f64 - 10.0;
            let expect = (-eps * d * d).exp();
            let got = density[cell] / density[10];
            assert!((got - expect).abs() < 1e-12, "cell {cell}: {got} vs {expect}");
        }
    }

    #[test]
    fn center_density_of_a_uniform_ring_state_is_uniform() {
        let lat = LatticeSpec::uniform(1, 1, 48, 1.0, 0.0).unwrap();
        let wf = uniform_box_packet(&lat, &[particle()], &[0], &[48], &[0.0]).unwrap();
        let density = ccqm_center_density(&wf, 0.5, Boundary::Periodic).unwrap();
        let first = density[0];
        for &v in &density {
            assert!((v - first).abs() < 1e-12 * first);
        }
    }

    #[test]
    fn center_density_preserves_branch_mass() {
        let lat = LatticeSpec::uniform(1, 1, 512, 1.0, 0.0).unwrap();
        let wf = superposed_packets(
            &lat,
            &[particle()],
            &[
                PacketBranch {
                    weight: 0.64,
                    center: alloc::vec![128.0],
                    momentum: alloc::vec![0.0],
                    sigma: alloc::vec![12.0],
                },
                PacketBranch {
                    weight: 0.36,
                    center: alloc::vec![384.0],
                    momentum: alloc::vec![0.0],
                    sigma: alloc::vec![12.0],
                },
            ],
            Boundary::Periodic,
        )
        .unwrap();
        let density = ccqm_center_density(&wf, 0.01, Boundary::Periodic).unwrap();
        let vol = lat.cell_volume();
        let left: f64 = density[..256].iter().sum::<f64>() * vol;
        assert!((left - 0.64).abs() < 1e-3, "left-branch center mass {left}");
    }

    #[test]
    fn width_search_matches_an_exhaustive_scan() {
        // uniform 100-cell state, center mid-support, F = 0.5, f0 = 0: the
        // surviving volume is set by amplitude underflow and the bisection
        // must land on the largest volume <= 50, matching a brute-force grid
        // scan within one cell
        let lat = LatticeSpec::uniform(1, 1, 100, 1.0, 0.0).unwrap();
        let wf = uniform_box_packet(&lat, &[particle()], &[0], &[100], &[0.0]).unwrap();
        let params = CcqmParams { v_c: 50, target_fraction: 0.5, f0: 0.0, ..default_params() };
        let center = alloc::vec![50.0];
        let eps = choose_epsilon(&wf, &center, &params, Boundary::Box).unwrap();
        let v_bisect = apply_jump(&wf, &center, eps, false, 0.0, Boundary::Box)
            .unwrap()
            .relative_volume(0.0);

        // independent scan: count cells whose multiplied amplitude stays
        // strictly positive after underflow
        let amp = wf.amplitudes()[0].norm(); // uniform magnitude
        let mut best_scan = 0u64;
        let mut e = 0.05f64;
        while e < 40.0 {
            let mut count = 0u64;
            for i in 0..100 {
                let dx = (i as f64 + 0.5) - 50.0;
                if amp * (-0.5 * e * dx * dx).exp() > 0.0 {
                    count += 1;
                }
            }
            if count <= 50 && count > best_scan {
                best_scan = count;
            }
            e *= 1.01;
        }
        assert!(
            v_bisect + 1 >= best_scan && v_bisect <= 50,
            "bisection volume {v_bisect}, scan best {best_scan}"
        );
    }

    #[test]
    fn width_search_reports_failure_when_no_width_fits() {
        // two equidistant cells from a midpoint center fall below the floor
        // together, so no width yields a volume in [1, target]
        let lat = LatticeSpec::uniform(1, 1, 2, 1.0, 0.0).unwrap();
        let wf = uniform_box_packet(&lat, &[particle()], &[0], &[2], &[0.0]).unwrap();
        let params = CcqmParams { v_c: 2, target_fraction: 0.4, f0: 0.0, ..default_params() };
        let err = choose_epsilon(&wf, &[1.0], &params, Boundary::Box);
        assert!(matches!(err, Err(CoreError::WidthSearchFailed { target: 1, reached: 0 })));
    }

    #[test]
    fn near_unit_fraction_keeps_the_state() {
        let lat = LatticeSpec::uniform(1, 1, 100, 1.0, 0.0).unwrap();
        let wf = uniform_box_packet(&lat, &[particle()], &[0], &[100], &[0.0]).unwrap();
        let params = CcqmParams { v_c: 50, target_fraction: 0.995, f0: 0.0, ..default_params() };
        let eps = choose_epsilon(&wf, &alloc::vec![50.0], &params, Boundary::Box).unwrap();
        assert_eq!(eps, 0.0);
        let out = apply_jump(&wf, &alloc::vec![50.0], eps, false, 0.0, Boundary::Box).unwrap();
        assert_eq!(out.relative_volume(0.0), 100);
    }

    #[test]
    fn ring_packet_collapses_to_one_segment_of_target_size() {
        // a packet spread over the whole ring collapses to a single
        // contiguous segment of roughly half its volume
        let lat = LatticeSpec::uniform(1, 1, 256, 1.0, 0.0).unwrap();
        let wf = uniform_box_packet(&lat, &[particle()], &[0], &[256], &[0.0]).unwrap();
        let params = CcqmParams {
            v_c: 200,
            target_fraction: 0.5,
            f0: 0.02,
            ..default_params()
        };
        let mut rng = trajectory_rng(0xcc9, 0);
        let (post, event) = ccqm_localize(&wf, &params, Boundary::Periodic, None, &mut rng).unwrap();
        assert_eq!(event.v_pre, 256);
        let target = (0.5 * 256.0f64).ceil() as u64;
        assert!(event.v_post <= target + 1, "v_post {} vs target {target}", event.v_post);
        assert!(event.v_post >= target / 2, "v_post {} suspiciously small", event.v_post);
        assert!((post.norm_squared() - 1.0).abs() < 1e-12);
        // contiguity on the ring: occupied cells form one wrapped run
        let occupied: Vec<bool> =
            post.amplitudes().iter().map(|z| z.norm() > params.f0).collect();
        let transitions = (0..256)
            .filter(|&i| occupied[i] != occupied[(i + 1) % 256])
            .count();
        assert_eq!(transitions, 2, "support is not a single segment");
    }

    #[test]
    fn branch_survival_follows_center_density_mass() {
        let lat = LatticeSpec::uniform(1, 1, 256, 1.0, 0.0).unwrap();
        let wf = superposed_packets(
            &lat,
            &[particle()],
            &[
                PacketBranch {
                    weight: 0.64,
                    center: alloc::vec![64.0],
                    momentum: alloc::vec![0.0],
                    sigma: alloc::vec![8.0],
                },
                PacketBranch {
                    weight: 0.36,
                    center: alloc::vec![192.0],
                    momentum: alloc::vec![0.0],
                    sigma: alloc::vec![8.0],
                },
            ],
            Boundary::Periodic,
        )
        .unwrap();
        let params = CcqmParams { v_c: 16, target_fraction: 0.5, f0: 0.01, ..default_params() };
        // oracle: left-half mass of the sampling density at the provisional width
        let eps0 = provisional_epsilon(&wf, &params).unwrap();
        let density = ccqm_center_density(&wf, eps0, Boundary::Periodic).unwrap();
        let vol = lat.cell_volume();
        let total: f64 = density.iter().sum::<f64>() * vol;
        let p_left: f64 = density[..128].iter().sum::<f64>() * vol / total;

        let trials = 2000usize;
        let mut left = 0usize;
        for t in 0..trials {
            let mut rng = trajectory_rng(0xcc9_b0b, t as u64);
            let (post, event) =
                ccqm_localize(&wf, &params, Boundary::Periodic, None, &mut rng).unwrap();
            let target = (0.5 * event.v_pre as f64).ceil() as u64;
            assert!(event.v_post <= target + 1);
            let mass_left: f64 =
                post.amplitudes()[..128].iter().map(|z| z.norm_sqr()).sum::<f64>() * vol;
            if mass_left > 0.5 {
                left += 1;
            }
        }
        let freq = left as f64 / trials as f64;
        let sigma = (p_left * (1.0 - p_left) / trials as f64).sqrt();
        assert!(
            (freq - p_left).abs() <= 3.0 * sigma,
            "left survival {freq} vs density mass {p_left} (3 sigma {})",
            3.0 * sigma
        );
    }

    #[test]
    fn symmetric_jump_preserves_exchange_symmetry() {
        let lat = LatticeSpec::uniform(2, 1, 24, 1.0, 0.0).unwrap();
        let bosons = alloc::vec![
            ParticleSpec::new(1.0, "b1", Some("boson")).unwrap(),
            ParticleSpec::new(1.0, "b2", Some("boson")).unwrap(),
        ];
        let raw = gaussian_packet(
            &lat,
            &bosons,
            &[8.0, 16.0],
            &[0.0, 0.0],
            &[2.5, 2.5],
            Boundary::Periodic,
        )
        .unwrap();
        let sym = raw.symmetrized(crate::wavefunction::Exchange::Symmetric).unwrap();
        assert!(sym.exchange_defect(0, 1).unwrap() < 1e-12);

        // an off-diagonal center breaks symmetry for the plain jump but not
        // for the symmetrized one
        let center = alloc::vec![8.0, 16.0];
        let plain = apply_jump(&sym, &center, 0.2, false, 0.0, Boundary::Periodic).unwrap();
        assert!(plain.exchange_defect(0, 1).unwrap() > 1e-3);
        let kept = apply_jump(&sym, &center, 0.2, true, 0.0, Boundary::Periodic).unwrap();
        assert!(kept.exchange_defect(0, 1).unwrap() < 1e-10);
    }

    #[test]
    fn product_state_splits_into_its_exact_factors() {
        let lat_a = LatticeSpec::uniform(1, 1, 32, 1.0, 0.0).unwrap();
        let f_a = gaussian_packet(&lat_a, &[particle()], &[10.0], &[0.7], &[3.0], Boundary::Periodic)
            .unwrap();
        let f_b = gaussian_packet(&lat_a, &[particle()], &[22.0], &[-0.4], &[2.5], Boundary::Periodic)
            .unwrap();
        let joint = f_a.tensor_product(&f_b).unwrap();
        let params = CcqmParams { split_coupling: 0.0, ..default_params() };
        let mut rng = trajectory_rng(0x5b111, 0);
        let outcome = try_split(&joint, &params, None, &mut rng).unwrap();
        assert!(outcome.fired);
        assert_eq!(outcome.parts.len(), 2);
        // compare with the factors up to a global phase, via fidelity
        for (part, factor) in outcome.parts.iter().zip([&f_a, &f_b]) {
            let vol = part.lattice().cell_volume();
            let overlap: C64 = part
                .amplitudes()
                .iter()
                .zip(factor.amplitudes())
                .map(|(p, f)| p.conj() * f)
                .sum::<C64>()
                * vol;
            assert!(
                (overlap.norm() - 1.0).abs() < 1e-9,
                "fidelity to factor {} off unity",
                overlap.norm()
            );
        }
    }

    #[test]
    fn strong_coupling_blocks_splits() {
        let lat = LatticeSpec::uniform(2, 1, 12, 1.0, 0.0).unwrap();
        let wf = gaussian_packet(
            &lat,
            &[particle(), particle()],
            &[5.0, 7.0],
            &[0.0, 0.0],
            &[2.0, 2.0],
            Boundary::Periodic,
        )
        .unwrap();
        let pair = PairPotential::SoftenedCoulomb { charge_product: 5.0, softening: 1.0 };
        let params = CcqmParams { split_coupling: 1e6, ..default_params() };
        let mut rng = trajectory_rng(0x5b112, 0);
        let outcome = try_split(&wf, &params, Some(&pair), &mut rng).unwrap();
        assert!(!outcome.fired);
        assert_eq!(outcome.parts.len(), 1);
        assert_eq!(outcome.parts[0].amplitudes(), wf.amplitudes());
    }

    #[test]
    fn cut_interaction_matches_a_brute_force_double_sum() {
        let lat = LatticeSpec::uniform(2, 1, 8, 0.5, 0.0).unwrap();
        let wf = gaussian_packet(
            &lat,
            &[particle(), particle()],
            &[1.5, 2.5],
            &[0.0, 0.0],
            &[1.0, 1.0],
            Boundary::Box,
        )
        .unwrap();
        let pair = PairPotential::SoftenedCoulomb { charge_product: 1.3, softening: 0.4 };
        let got = interaction_across_cut(&wf, &[0], Some(&pair)).unwrap();
        let g0 = wf.marginal_density(0);
        let g1 = wf.marginal_density(1);
        let mut expect = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                let dx = (i as f64 - j as f64) * 0.5;
                expect += g0[i] * g1[j] * 1.3 / (dx * dx + 0.16f64).sqrt() * 0.25;
            }
        }
        assert!((got - expect.abs()).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn cut_enumeration_covers_each_bipartition_once() {
        let single = candidate_cuts(2, SplitCuts::SingleVsRest).unwrap();
        assert_eq!(single, alloc::vec![alloc::vec![0usize]]);
        let single3 = candidate_cuts(3, SplitCuts::SingleVsRest).unwrap();
        assert_eq!(single3.len(), 3);
        let full3 = candidate_cuts(3, SplitCuts::FullEnumeration).unwrap();
        // 2^(3-1) - 1 = 3 bipartitions
        assert_eq!(full3.len(), 3);
        for cut in &full3 {
            assert!(cut.contains(&0));
        }
        let full4 = candidate_cuts(4, SplitCuts::FullEnumeration).unwrap();
        assert_eq!(full4.len(), 7);
        assert!(candidate_cuts(5, SplitCuts::FullEnumeration).is_err());
        assert!(candidate_cuts(1, SplitCuts::SingleVsRest).unwrap().is_empty());
    }

    #[test]
    fn zero_combine_coupling_never_combines() {
        let lat = LatticeSpec::uniform(1, 1, 16, 1.0, 0.0).unwrap();
        let a = gaussian_packet(&lat, &[particle()], &[8.0], &[0.0], &[2.0], Boundary::Periodic)
            .unwrap();
        let b = a.clone();
        let params = CcqmParams { combine_coupling: 0.0, ..default_params() };
        let pair = PairPotential::SoftenedCoulomb { charge_product: 1.0, softening: 0.5 };
        let mut rng = trajectory_rng(0xc0b, 0);
        for _ in 0..50 {
            let joint =
                try_combine(&a, &b, &params, Some(&pair), 1.0, 1 << 20, &mut rng).unwrap();
            assert!(joint.is_none());
        }
    }

    #[test]
    fn combine_respects_the_cell_budget() {
        let lat = LatticeSpec::uniform(1, 1, 2048, 1.0, 0.0).unwrap();
        let a = gaussian_packet(&lat, &[particle()], &[1024.0], &[0.0], &[16.0], Boundary::Periodic)
            .unwrap();
        let b = a.clone();
        let params = default_params();
        let mut rng = trajectory_rng(0xc0b, 1);
        let err = try_combine(&a, &b, &params, None, 1.0, 1 << 20, &mut rng);
        assert!(matches!(
            err,
            Err(CoreError::CombineRefused { required_cells: 4194304, budget_cells: 1048576 })
        ));
    }

    #[test]
    fn combining_distinguishable_packets_preserves_marginals() {
        let lat = LatticeSpec::uniform(1, 1, 20, 1.0, 0.0).unwrap();
        let a = gaussian_packet(&lat, &[particle()], &[6.0], &[0.3], &[2.0], Boundary::Periodic)
            .unwrap();
        let b = gaussian_packet(&lat, &[particle()], &[14.0], &[0.0], &[2.0], Boundary::Periodic)
            .unwrap();
        // force the fire with an always-overlapping interaction and huge c
        let pair = PairPotential::SoftenedCoulomb { charge_product: 10.0, softening: 1.0 };
        let params = CcqmParams { combine_coupling: 1e9, ..default_params() };
        let mut rng = trajectory_rng(0xc0b, 2);
        let joint = try_combine(&a, &b, &params, Some(&pair), 1.0, 1 << 20, &mut rng)
            .unwrap()
            .expect("combine must fire at enormous coupling");
        let ga = joint.marginal_density(0);
        let gb = joint.marginal_density(1);
        for i in 0..20 {
            assert!((ga[i] - a.amplitudes()[i].norm_sqr()).abs() < 1e-12);
            assert!((gb[i] - b.amplitudes()[i].norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn combining_an_identity_class_symmetrizes_the_product() {
        let lat = LatticeSpec::uniform(1, 1, 20, 1.0, 0.0).unwrap();
        let spec = |label: &str| ParticleSpec::new(1.0, label, Some("boson")).unwrap();
        let a = gaussian_packet(&lat, &[spec("b1")], &[8.0], &[0.0], &[2.2], Boundary::Periodic)
            .unwrap();
        let b = gaussian_packet(&lat, &[spec("b2")], &[12.0], &[0.0], &[2.2], Boundary::Periodic)
            .unwrap();
        let pair = PairPotential::SoftenedCoulomb { charge_product: 10.0, softening: 1.0 };
        let params = CcqmParams { combine_coupling: 1e9, ..default_params() };
        let mut rng = trajectory_rng(0xc0b, 3);
        let joint = try_combine(&a, &b, &params, Some(&pair), 1.0, 1 << 20, &mut rng)
            .unwrap()
            .expect("combine must fire at enormous coupling");
        assert!(joint.exchange_defect(0, 1).unwrap() < 1e-10);
    }

    #[test]
    fn parameter_validation_rejects_nonsense() {
        let mut p = default_params();
        p.v_c = 1;
        assert!(p.validate().is_err());
        let mut p = default_params();
        p.target_fraction = 1.0;
        assert!(p.validate().is_err());
        let mut p = default_params();
        p.split_coupling = -1.0;
        assert!(p.validate().is_err());
    }
}

//! Discrete wave functions: complex amplitudes on the cells of a
//! configuration-space lattice, with magnitude/phase quantization, relative
//! volume, and exchange-symmetry operations.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_complex::Complex;
use num_traits::Float;

use crate::error::CoreError;
use crate::lattice::LatticeSpec;
use crate::sampling::kahan_sum;
use crate::C64;

/// One particle: its mass, a human-readable label, and an optional identity
/// class. Particles sharing a class are treated as identical (exchangeable).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSpec {
    mass: f64,
    label: String,
    identity_class: Option<String>,
}

impl ParticleSpec {
    pub fn new(mass: f64, label: &str, identity_class: Option<&str>) -> Result<Self, CoreError> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(CoreError::Domain(alloc::format!("particle mass {mass} must be > 0")));
        }
        Ok(ParticleSpec {
            mass,
            label: label.to_string(),
            identity_class: identity_class.map(|s| s.to_string()),
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn identity_class(&self) -> Option<&str> {
        self.identity_class.as_deref()
    }
}

/// Which exchange character a symmetrization should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exchange {
    Symmetric,
    Antisymmetric,
}

/// Most permutations `symmetrized` will enumerate (7! is refused).
const MAX_PERMUTATIONS: usize = 5040;

/// A wave function sampled on a lattice: magnitude-and-phase amplitudes per
/// cell, plus the base magnitude f0 and base phase theta0 the discrete model
/// quantizes against (both 0 = quantization off).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteWaveFunction {
    lattice: LatticeSpec,
    particles: Vec<ParticleSpec>,
    amps: Vec<C64>,
    base_magnitude: f64,
    base_phase: f64,
}

impl DiscreteWaveFunction {
    /// Wrap raw amplitudes. The amplitude vector must match the lattice and
    /// the particle list must match the lattice's particle count.
    pub fn new(
        lattice: LatticeSpec,
        particles: Vec<ParticleSpec>,
        amps: Vec<C64>,
    ) -> Result<Self, CoreError> {
        if particles.len() != lattice.particle_count() {
            return Err(CoreError::Domain(alloc::format!(
                "{} particle specs for a {}-particle lattice",
                particles.len(),
                lattice.particle_count()
            )));
        }
        if amps.len() != lattice.total_cells() {
            return Err(CoreError::Domain(alloc::format!(
                "{} amplitudes for a {}-cell lattice",
                amps.len(),
                lattice.total_cells()
            )));
        }
        Ok(DiscreteWaveFunction { lattice, particles, amps, base_magnitude: 0.0, base_phase: 0.0 })
    }

    /// Set the base magnitude and base phase this state quantizes against.
    /// theta0 must be zero or evenly divide the full circle.
    pub fn with_quantization(mut self, f0: f64, theta0: f64) -> Result<Self, CoreError> {
        validate_quantization(f0, theta0)?;
        self.base_magnitude = f0;
        self.base_phase = theta0;
        Ok(self)
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn particles(&self) -> &[ParticleSpec] {
        &self.particles
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn base_magnitude(&self) -> f64 {
        self.base_magnitude
    }

    pub fn base_phase(&self) -> f64 {
        self.base_phase
    }

    /// Total squared norm: sum of |psi|^2 times the cell volume.
    pub fn norm_squared(&self) -> f64 {
        self.lattice.cell_volume() * kahan_sum(self.amps.iter().map(|z| z.norm_sqr()))
    }

    /// Largest cell magnitude.
    pub fn max_magnitude(&self) -> f64 {
        let m2 = self.amps.iter().fold(0.0f64, |m, z| m.max(z.norm_sqr()));
        m2.sqrt()
    }

    /// Scale so the squared norm is exactly 1 (within a few ulps). Errors on
    /// an all-zero or non-finite state.
    pub fn normalize(&mut self) -> Result<(), CoreError> {
        let n2 = self.norm_squared();
        if n2 == 0.0 {
            return Err(CoreError::VanishedWaveFunction);
        }
        if !n2.is_finite() {
            return Err(CoreError::Numerical(alloc::format!("norm^2 is {n2}")));
        }
        let inv = 1.0 / n2.sqrt();
        for z in &mut self.amps {
            *z *= inv;
        }
        Ok(())
    }

    /// Normalized copy.
    pub fn normalized(&self) -> Result<Self, CoreError> {
        let mut out = self.clone();
        out.normalize()?;
        Ok(out)
    }

    /// Count cells whose magnitude strictly exceeds f0 (ties count as
    /// below). With f0 = 0 this counts the support: every nonzero cell.
    pub fn relative_volume(&self, f0: f64) -> u64 {
        let threshold = f0 * f0;
        self.amps.iter().filter(|z| z.norm_sqr() > threshold).count() as u64
    }

    /// State complexity 2^s * v for `spin_half_count` spin-1/2 factors.
    pub fn state_complexity(&self, spin_half_count: u32, f0: f64) -> u128 {
        (1u128 << spin_half_count) * self.relative_volume(f0) as u128
    }

    /// Zero every cell whose magnitude does not strictly exceed f0. Does not
    /// renormalize.
    pub(crate) fn zero_at_or_below(&mut self, f0: f64) {
        let threshold = f0 * f0;
        for z in &mut self.amps {
            if z.norm_sqr() <= threshold {
                *z = Complex::new(0.0, 0.0);
            }
        }
    }

    /// Snap magnitudes down to multiples of f0 (cells below f0 become exactly
    /// zero) and, when theta0 > 0, phases to the nearest multiple of theta0.
    /// Does not renormalize. Re-quantizing the result is a bit-for-bit no-op.
    pub fn quantize(&self, f0: f64, theta0: f64) -> Result<Self, CoreError> {
        validate_quantization(f0, theta0)?;
        let mut out = self.clone();
        out.base_magnitude = f0;
        out.base_phase = theta0;
        if f0 == 0.0 && theta0 == 0.0 {
            return Ok(out);
        }
        for z in out.amps.iter_mut() {
            *z = quantize_amplitude(*z, f0, theta0);
        }
        Ok(out)
    }

    /// Probability density of particle `k`'s position: other particles
    /// summed out. Integrates to the squared norm over `k`'s sub-lattice.
    pub fn marginal_density(&self, k: usize) -> Vec<f64> {
        let (_, density) = self.subset_marginal_density(&[k]);
        density
    }

    /// Joint probability density of a subset of particles (given in order),
    /// with the complement summed out. Returns the subset's lattice and the
    /// density over it.
    pub fn subset_marginal_density(&self, subset: &[usize]) -> (LatticeSpec, Vec<f64>) {
        assert!(!subset.is_empty(), "marginal of an empty subset");
        let mut sub = self.lattice.particle_sublattice(subset[0]);
        for &k in &subset[1..] {
            sub = sub
                .join(&self.lattice.particle_sublattice(k))
                .expect("subset of a valid lattice stays within budget");
        }
        let d = self.lattice.dims_per_particle();
        let sub_strides = sub.strides().to_vec();
        let mut density = alloc::vec![0.0f64; sub.total_cells()];
        let complement_volume = self.lattice.cell_volume() / sub.cell_volume();
        let axes = self.lattice.axis_count();
        let mut coords = alloc::vec![0usize; axes];
        for (idx, z) in self.amps.iter().enumerate() {
            let p = z.norm_sqr();
            if p == 0.0 {
                advance(&mut coords, self.lattice.cells_per_axis());
                let _ = idx;
                continue;
            }
            let mut sub_idx = 0usize;
            for (slot, &k) in subset.iter().enumerate() {
                for j in 0..d {
                    sub_idx += coords[k * d + j] * sub_strides[slot * d + j];
                }
            }
            density[sub_idx] += p * complement_volume;
            advance(&mut coords, self.lattice.cells_per_axis());
        }
        (sub, density)
    }

    /// Mean and variance of the position coordinate along one axis under
    /// |psi|^2 (plain moments; on a ring they are meaningful while the
    /// packet stays away from the seam).
    pub fn axis_moments(&self, axis: usize) -> (f64, f64) {
        let n = self.lattice.cells_per_axis()[axis];
        let stride = self.lattice.strides()[axis];
        let mut line_mass = alloc::vec![0.0f64; n];
        for (idx, z) in self.amps.iter().enumerate() {
            line_mass[(idx / stride) % n] += z.norm_sqr();
        }
        let vol = self.lattice.cell_volume();
        let total = kahan_sum(line_mass.iter().copied()) * vol;
        let mut mean = 0.0;
        for (i, &m) in line_mass.iter().enumerate() {
            mean += self.lattice.position(axis, i) * m * vol;
        }
        mean /= total;
        let mut var = 0.0;
        for (i, &m) in line_mass.iter().enumerate() {
            let dx = self.lattice.position(axis, i) - mean;
            var += dx * dx * m * vol;
        }
        (mean, var / total)
    }

    /// Tensor product: `self`'s particles followed by `other`'s on the joined
    /// lattice.
    pub fn tensor_product(&self, other: &Self) -> Result<Self, CoreError> {
        let joint = self.lattice.join(&other.lattice)?;
        let mut particles = self.particles.clone();
        particles.extend_from_slice(&other.particles);
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for &a in &self.amps {
            for &b in &other.amps {
                amps.push(a * b);
            }
        }
        let mut out = DiscreteWaveFunction::new(joint, particles, amps)?;
        out.base_magnitude = self.base_magnitude;
        out.base_phase = self.base_phase;
        Ok(out)
    }

    /// Apply a particle permutation: the result evaluated at particle blocks
    /// (x_0, ..) equals `self` evaluated at (x_perm[0], ..). Permuted
    /// particles must live on identical grids.
    pub fn permute_particles(&self, perm: &[usize]) -> Result<Self, CoreError> {
        let np = self.lattice.particle_count();
        if perm.len() != np {
            return Err(CoreError::Domain("permutation length != particle count".to_string()));
        }
        let mut seen = alloc::vec![false; np];
        for &p in perm {
            if p >= np || seen[p] {
                return Err(CoreError::Domain("not a permutation".to_string()));
            }
            seen[p] = true;
        }
        for (j, &i) in perm.iter().enumerate() {
            if i != j {
                let a = self.lattice.particle_sublattice(j);
                let b = self.lattice.particle_sublattice(i);
                if !a.same_grid(&b) {
                    return Err(CoreError::Domain(alloc::format!(
                        "particles {j} and {i} live on different grids"
                    )));
                }
            }
        }
        let d = self.lattice.dims_per_particle();
        let axes = self.lattice.axis_count();
        let mut out = alloc::vec![C64::new(0.0, 0.0); self.amps.len()];
        let mut coords = alloc::vec![0usize; axes];
        let mut src = alloc::vec![0usize; axes];
        for idx in 0..self.amps.len() {
            self.lattice.coords_of(idx, &mut coords);
            for j in 0..np {
                for jd in 0..d {
                    src[j * d + jd] = coords[perm[j] * d + jd];
                }
            }
            out[idx] = self.amps[self.lattice.index_of(&src)];
        }
        let mut wf = self.clone();
        wf.amps = out;
        Ok(wf)
    }

    /// Relative L2 distance between the state and itself with particles
    /// `i`, `j` exchanged: 0 for exchange-symmetric states.
    pub fn exchange_defect(&self, i: usize, j: usize) -> Result<f64, CoreError> {
        let mut perm: Vec<usize> = (0..self.lattice.particle_count()).collect();
        perm.swap(i, j);
        let swapped = self.permute_particles(&perm)?;
        let vol = self.lattice.cell_volume();
        let diff2 = vol
            * kahan_sum(
                self.amps.iter().zip(&swapped.amps).map(|(a, b)| (a - b).norm_sqr()),
            );
        let n2 = self.norm_squared();
        if n2 == 0.0 {
            return Err(CoreError::VanishedWaveFunction);
        }
        Ok((diff2 / n2).sqrt())
    }

    /// Project onto the chosen exchange character over every identity class
    /// (particles sharing an `identity_class` name) and renormalize. Errors
    /// if the projection vanishes (e.g. antisymmetrizing a symmetric state)
    /// or the permutation count exceeds 7!-1.
    pub fn symmetrized(&self, exchange: Exchange) -> Result<Self, CoreError> {
        let classes = self.identity_classes()?;
        let perms = class_permutations(self.lattice.particle_count(), &classes)?;
        if perms.len() == 1 {
            return self.normalized();
        }
        let mut acc = alloc::vec![C64::new(0.0, 0.0); self.amps.len()];
        for perm in &perms {
            let sign = match exchange {
                Exchange::Symmetric => 1.0,
                Exchange::Antisymmetric => {
                    if permutation_parity_odd(perm) {
                        -1.0
                    } else {
                        1.0
                    }
                }
            };
            let permuted = self.permute_particles(perm)?;
            for (a, b) in acc.iter_mut().zip(&permuted.amps) {
                *a += sign * b;
            }
        }
        let mut out = self.clone();
        out.amps = acc;
        out.normalize()?;
        Ok(out)
    }

    /// Identity classes as groups of particle indices (size >= 2 only).
    /// Particles in one class must share mass and grid.
    pub(crate) fn identity_classes(&self) -> Result<Vec<Vec<usize>>, CoreError> {
        let mut classes: Vec<(String, Vec<usize>)> = Vec::new();
        for (k, p) in self.particles.iter().enumerate() {
            if let Some(name) = p.identity_class() {
                match classes.iter_mut().find(|(n, _)| n == name) {
                    Some((_, members)) => members.push(k),
                    None => classes.push((name.to_string(), alloc::vec![k])),
                }
            }
        }
        let mut out = Vec::new();
        for (name, members) in classes {
            if members.len() < 2 {
                continue;
            }
            let first = members[0];
            for &k in &members[1..] {
                if self.particles[k].mass() != self.particles[first].mass() {
                    return Err(CoreError::Domain(alloc::format!(
                        "identity class {name} mixes masses"
                    )));
                }
                if !self
                    .lattice
                    .particle_sublattice(k)
                    .same_grid(&self.lattice.particle_sublattice(first))
                {
                    return Err(CoreError::Domain(alloc::format!(
                        "identity class {name} mixes grids"
                    )));
                }
            }
            out.push(members);
        }
        Ok(out)
    }
}

/// Advance a coordinate odometer one cell in flattened (last axis fastest)
/// order.
fn advance(coords: &mut [usize], dims: &[usize]) {
    for ax in (0..coords.len()).rev() {
        coords[ax] += 1;
        if coords[ax] < dims[ax] {
            return;
        }
        coords[ax] = 0;
    }
}

fn validate_quantization(f0: f64, theta0: f64) -> Result<(), CoreError> {
    if !(f0 >= 0.0) || !f0.is_finite() {
        return Err(CoreError::Domain(alloc::format!("base magnitude {f0} must be >= 0")));
    }
    if !(theta0 >= 0.0) || !theta0.is_finite() {
        return Err(CoreError::Domain(alloc::format!("base phase {theta0} must be >= 0")));
    }
    if theta0 > 0.0 {
        let turns = 2.0 * core::f64::consts::PI / theta0;
        if (turns - turns.round()).abs() > 1e-9 || turns < 1.0 {
            return Err(CoreError::Domain(alloc::format!(
                "base phase {theta0} must evenly divide the full circle"
            )));
        }
    }
    Ok(())
}

/// Quantize one amplitude. The keep-bits guards make a second application
/// return identical bits, which the discrete model relies on.
fn quantize_amplitude(z: C64, f0: f64, theta0: f64) -> C64 {
    let m = z.norm();
    let target = if f0 > 0.0 {
        // Tolerant floor: a magnitude within ~1e-12 relative of a level
        // counts as on it, so re-derived magnitudes do not slip a level.
        let n = Float::floor(m / f0 * (1.0 + 1e-12));
        if n <= 0.0 {
            return C64::new(0.0, 0.0);
        }
        n * f0
    } else {
        if m == 0.0 {
            return C64::new(0.0, 0.0);
        }
        m
    };
    if theta0 == 0.0 {
        if m == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if ((m - target) / target).abs() <= 1e-9 {
            return z; // already on a level
        }
        return z * (target / m);
    }
    let theta = z.arg();
    let k = Float::round(theta / theta0);
    let snapped = k * theta0;
    let on_magnitude = f0 == 0.0 || ((m - target) / target).abs() <= 1e-9;
    if on_magnitude && (theta - snapped).abs() <= 1e-9 {
        return z; // already on the magnitude/phase grid
    }
    C64::from_polar(target, snapped)
}


/// All permutations that permute only within the given classes; identity
/// elsewhere.
pub(crate) fn class_permutations(
    particle_count: usize,
    classes: &[Vec<usize>],
) -> Result<Vec<Vec<usize>>, CoreError> {
    let mut count: usize = 1;
    for class in classes {
        count = count.saturating_mul(factorial(class.len()));
        if count > MAX_PERMUTATIONS {
            return Err(CoreError::Domain(
                "identity classes too large to symmetrize (more than 7! permutations)"
                    .to_string(),
            ));
        }
    }
    let identity: Vec<usize> = (0..particle_count).collect();
    let mut perms = alloc::vec![identity];
    for class in classes {
        let orders = all_orders(class);
        let mut next = Vec::with_capacity(perms.len() * orders.len());
        for base in &perms {
            for order in &orders {
                let mut p = base.clone();
                for (slot, &val) in class.iter().zip(order) {
                    p[*slot] = val;
                }
                next.push(p);
            }
        }
        perms = next;
    }
    Ok(perms)
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Every ordering of `items` (recursive enumeration; counts are tiny).
fn all_orders(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return alloc::vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (i, &head) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in all_orders(&rest) {
            let mut v = alloc::vec![head];
            v.append(&mut tail);
            out.push(v);
        }
    }
    out
}

fn permutation_parity_odd(perm: &[usize]) -> bool {
    let mut seen = alloc::vec![false; perm.len()];
    let mut odd = false;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut at = start;
        while !seen[at] {
            seen[at] = true;
            at = perm[at];
            len += 1;
        }
        if len % 2 == 0 {
            odd = !odd;
        }
    }
    odd
}

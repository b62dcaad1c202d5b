//! Unitary dynamics: Hamiltonians on configuration-space lattices, implicit
//! norm-preserving stepping, an explicit stencil mode for locality checks and
//! operation counting, packet construction, and mean-field potentials.
//!
//! One implicit step applies a palindromic factor sequence — half a potential
//! phase, half a Cayley kinetic step per axis out and back, the full middle
//! axis once, half a phase again. Every factor is exactly unitary and the
//! palindrome makes `step(-dt)` the exact inverse of `step(dt)`, so norm
//! conservation and reversibility hold to roundoff at any dt.

use alloc::string::ToString;
use alloc::vec::Vec;

use num_complex::Complex;
// float intrinsics come from this trait in standalone no_std builds; whenever
// std enters the crate graph (tests, std-enabled consumers) the inherent
// methods shadow it and the import looks unused
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::CoreError;
use crate::lattice::{Boundary, LatticeSpec};
use crate::sampling::kahan_sum;
use crate::wavefunction::{DiscreteWaveFunction, ParticleSpec};
use crate::{Units, C64};

/// One-body potential shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum OneBodyPotential {
    Free,
    /// Per-particle well 1/2 m omega^2 |x - c|^2. `center` is per axis;
    /// `None` puts the well at the domain midpoint.
    Harmonic { omega: f64, center: Option<Vec<f64>> },
}

/// Two-body potential shapes, used both inside a wave function and for the
/// mean-field coupling between wave functions.
#[derive(Debug, Clone, PartialEq)]
pub enum PairPotential {
    /// q1 q2 / sqrt(r^2 + s^2); `softening` s > 0 keeps the same-cell value
    /// finite.
    SoftenedCoulomb { charge_product: f64, softening: f64 },
}

impl PairPotential {
    /// Potential at squared separation r^2.
    pub fn eval_r2(&self, r2: f64) -> f64 {
        match self {
            PairPotential::SoftenedCoulomb { charge_product, softening } => {
                charge_product / (r2 + softening * softening).sqrt()
            }
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        match self {
            PairPotential::SoftenedCoulomb { softening, .. } => {
                if !(*softening > 0.0) {
                    return Err(CoreError::Domain(
                        "softening length must be > 0".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Kinetic-plus-diagonal-potential Hamiltonian on a lattice. The kinetic term
/// is the standard second-difference stencil per axis; the potential is the
/// static part plus an optional external (mean-field) part swapped in
/// between steps.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    lattice: LatticeSpec,
    /// hbar^2 / (2 m a^2) per axis.
    kinetic_coeff: Vec<f64>,
    potential: Vec<f64>,
    external: Option<Vec<f64>>,
    boundary: Boundary,
    hbar: f64,
}

impl Hamiltonian {
    pub fn new(
        lattice: LatticeSpec,
        particles: &[ParticleSpec],
        hbar: f64,
        boundary: Boundary,
        potential: Vec<f64>,
    ) -> Result<Self, CoreError> {
        if particles.len() != lattice.particle_count() {
            return Err(CoreError::Domain("particle list does not match lattice".to_string()));
        }
        if potential.len() != lattice.total_cells() {
            return Err(CoreError::Domain(alloc::format!(
                "potential has {} entries for a {}-cell lattice",
                potential.len(),
                lattice.total_cells()
            )));
        }
        if !(hbar > 0.0) {
            return Err(CoreError::Domain("hbar must be > 0".to_string()));
        }
        let d = lattice.dims_per_particle();
        let kinetic_coeff = (0..lattice.axis_count())
            .map(|ax| {
                let a = lattice.cell_size()[ax];
                hbar * hbar / (2.0 * particles[ax / d].mass() * a * a)
            })
            .collect();
        Ok(Hamiltonian { lattice, kinetic_coeff, potential, external: None, boundary, hbar })
    }

    /// Free Hamiltonian (zero potential).
    pub fn free(
        lattice: LatticeSpec,
        particles: &[ParticleSpec],
        hbar: f64,
        boundary: Boundary,
    ) -> Result<Self, CoreError> {
        let zeros = alloc::vec![0.0; lattice.total_cells()];
        Hamiltonian::new(lattice, particles, hbar, boundary, zeros)
    }

    /// Build from potential shapes: one-body wells plus every internal pair
    /// interaction.
    pub fn build(
        lattice: LatticeSpec,
        particles: &[ParticleSpec],
        units: &Units,
        boundary: Boundary,
        one_body: &OneBodyPotential,
        pair: Option<&PairPotential>,
    ) -> Result<Self, CoreError> {
        let mut v = build_one_body_potential(&lattice, particles, one_body)?;
        if let Some(p) = pair {
            let vp = build_pair_potential(&lattice, p)?;
            for (a, b) in v.iter_mut().zip(vp) {
                *a += b;
            }
        }
        Hamiltonian::new(lattice, particles, units.hbar, boundary, v)
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Swap the external (mean-field) potential contribution.
    pub fn set_external_potential(&mut self, v: Option<Vec<f64>>) -> Result<(), CoreError> {
        if let Some(ref ext) = v {
            if ext.len() != self.lattice.total_cells() {
                return Err(CoreError::Domain(
                    "external potential does not match lattice".to_string(),
                ));
            }
        }
        self.external = v;
        Ok(())
    }

    fn potential_at(&self, idx: usize) -> f64 {
        self.potential[idx]
            + match &self.external {
                Some(ext) => ext[idx],
                None => 0.0,
            }
    }

    /// Largest dt below the explicit-stability-style guideline
    /// min_axes(m a^2 / hbar); implicit stepping stays stable above it but
    /// accuracy decays, so callers may warn.
    pub fn suggested_max_dt(&self) -> f64 {
        let mut bound = f64::INFINITY;
        for &c in &self.kinetic_coeff {
            bound = bound.min(self.hbar / (2.0 * c));
        }
        bound
    }

    /// Apply the Hamiltonian stencil to every cell.
    pub fn apply(&self, psi: &DiscreteWaveFunction) -> Vec<C64> {
        let amps = psi.amplitudes();
        let mut out: Vec<C64> =
            amps.iter().enumerate().map(|(i, z)| self.potential_at(i) * z).collect();
        for axis in 0..self.lattice.axis_count() {
            let n = self.lattice.cells_per_axis()[axis];
            let c = self.kinetic_coeff[axis];
            self.lattice.for_each_line(axis, |base, stride| {
                for i in 0..n {
                    let here = amps[base + i * stride];
                    let left = if i > 0 {
                        amps[base + (i - 1) * stride]
                    } else if self.boundary == Boundary::Periodic {
                        amps[base + (n - 1) * stride]
                    } else {
                        Complex::new(0.0, 0.0)
                    };
                    let right = if i + 1 < n {
                        amps[base + (i + 1) * stride]
                    } else if self.boundary == Boundary::Periodic {
                        amps[base]
                    } else {
                        Complex::new(0.0, 0.0)
                    };
                    out[base + i * stride] -= c * (left - 2.0 * here + right);
                }
            });
        }
        out
    }

    /// <psi|H|psi> using the same difference operators as the stepper. The
    /// value must be real; a significant imaginary residue is reported as a
    /// numerical failure.
    pub fn energy_expectation(&self, psi: &DiscreteWaveFunction) -> Result<f64, CoreError> {
        let h_psi = self.apply(psi);
        let vol = self.lattice.cell_volume();
        let re = kahan_sum(
            psi.amplitudes().iter().zip(&h_psi).map(|(z, hz)| (z.conj() * hz).re),
        ) * vol;
        let im = kahan_sum(
            psi.amplitudes().iter().zip(&h_psi).map(|(z, hz)| (z.conj() * hz).im),
        ) * vol;
        let scale = kahan_sum(
            psi.amplitudes().iter().zip(&h_psi).map(|(z, hz)| (z.conj() * hz).norm()),
        ) * vol;
        if im.abs() > 1e-10 * scale.abs().max(1.0) {
            return Err(CoreError::Numerical(alloc::format!(
                "energy expectation has imaginary residue {im:e}"
            )));
        }
        Ok(re)
    }

    /// One implicit norm-preserving step, in place.
    pub fn step_in_place(
        &self,
        psi: &mut DiscreteWaveFunction,
        dt: f64,
    ) -> Result<(), CoreError> {
        if psi.lattice() != &self.lattice {
            return Err(CoreError::Domain("state lattice does not match Hamiltonian".to_string()));
        }
        if !(dt.is_finite()) || dt == 0.0 {
            return Err(CoreError::Domain(alloc::format!("dt {dt} must be finite and nonzero")));
        }
        let axes = self.lattice.axis_count();
        self.apply_phase(psi, 0.5 * dt);
        for ax in 0..axes.saturating_sub(1) {
            self.apply_cayley_axis(psi, ax, 0.5 * dt)?;
        }
        self.apply_cayley_axis(psi, axes - 1, dt)?;
        for ax in (0..axes.saturating_sub(1)).rev() {
            self.apply_cayley_axis(psi, ax, 0.5 * dt)?;
        }
        self.apply_phase(psi, 0.5 * dt);
        Ok(())
    }

    /// Multiply by exp(-i V tau / hbar).
    fn apply_phase(&self, psi: &mut DiscreteWaveFunction, tau: f64) {
        let scale = -tau / self.hbar;
        let has_potential =
            self.external.is_some() || self.potential.iter().any(|&v| v != 0.0);
        if !has_potential {
            return;
        }
        let potential = &self.potential;
        let external = self.external.as_deref();
        for (idx, z) in psi.amplitudes_mut().iter_mut().enumerate() {
            let v = potential[idx] + external.map_or(0.0, |e| e[idx]);
            if v != 0.0 {
                *z *= C64::from_polar(1.0, scale * v);
            }
        }
    }

    /// Cayley step of one axis' kinetic term for time tau:
    /// (1 + i tau K / 2 hbar)^-1 (1 - i tau K / 2 hbar).
    fn apply_cayley_axis(
        &self,
        psi: &mut DiscreteWaveFunction,
        axis: usize,
        tau: f64,
    ) -> Result<(), CoreError> {
        let c = self.kinetic_coeff[axis];
        if c == 0.0 {
            return Ok(());
        }
        let n = self.lattice.cells_per_axis()[axis];
        let lambda = tau * c / (2.0 * self.hbar);
        // A = I - i lambda D2 (to invert): diag 1 + 2 i lambda, off -i lambda.
        // RHS operator B = conj(A) applied with the same boundary.
        let diag = C64::new(1.0, 2.0 * lambda);
        let off = C64::new(0.0, -lambda);
        let periodic = self.boundary == Boundary::Periodic;

        if periodic && n == 2 {
            // Two-cell ring: both neighbors are the same cell, couple doubly.
            let d2 = C64::new(1.0, 4.0 * lambda);
            let o2 = C64::new(0.0, -2.0 * lambda);
            let det = d2 * d2 - o2 * o2;
            let amps = psi.amplitudes_mut();
            self.lattice.for_each_line(axis, |base, stride| {
                let p0 = amps[base];
                let p1 = amps[base + stride];
                let r0 = d2.conj() * p0 + o2.conj() * p1;
                let r1 = o2.conj() * p0 + d2.conj() * p1;
                amps[base] = (d2 * r0 - o2 * r1) / det;
                amps[base + stride] = (d2 * r1 - o2 * r0) / det;
            });
            return Ok(());
        }

        // Thomas elimination coefficients are constant along every line of
        // the axis; precompute them once.
        let solver = TridiagSolver::prepare(n, diag, off, periodic);
        let mut rhs = alloc::vec![C64::new(0.0, 0.0); n];
        let mut line = alloc::vec![C64::new(0.0, 0.0); n];
        let amps = psi.amplitudes_mut();
        let bdiag = diag.conj();
        let boff = off.conj();
        self.lattice.for_each_line(axis, |base, stride| {
            for i in 0..n {
                line[i] = amps[base + i * stride];
            }
            for i in 0..n {
                let left = if i > 0 {
                    line[i - 1]
                } else if periodic {
                    line[n - 1]
                } else {
                    Complex::new(0.0, 0.0)
                };
                let right = if i + 1 < n {
                    line[i + 1]
                } else if periodic {
                    line[0]
                } else {
                    Complex::new(0.0, 0.0)
                };
                rhs[i] = bdiag * line[i] + boff * (left + right);
            }
            solver.solve(&mut rhs, &mut line);
            for i in 0..n {
                amps[base + i * stride] = line[i];
            }
        });
        Ok(())
    }

    /// One explicit Euler stencil step, in place, updating exactly the cells
    /// whose current amplitude is nonzero; returns the number of multiply-add
    /// groups performed: active_cells * (2 * axes + 1). Non-unitary by
    /// construction — this mode exists for locality checks and operation
    /// counting, not production evolution.
    pub fn step_explicit_in_place(&self, psi: &mut DiscreteWaveFunction, dt: f64) -> u64 {
        let axes = self.lattice.axis_count();
        let cells = self.lattice.total_cells();
        let old = psi.amplitudes().to_vec();
        let factor = C64::new(0.0, -dt / self.hbar);
        let strides = self.lattice.strides().to_vec();
        let dims = self.lattice.cells_per_axis().to_vec();
        let periodic = self.boundary == Boundary::Periodic;
        let mut ops: u64 = 0;
        let amps = psi.amplitudes_mut();
        for idx in 0..cells {
            let here = old[idx];
            if here.norm_sqr() == 0.0 {
                continue;
            }
            // potential term: 1 multiply-add group
            let mut h = self.potential_at(idx) * here;
            ops += 1;
            for ax in 0..axes {
                // 2 groups per axis: each neighbor difference feeds one
                // fused multiply-add against the axis coefficient
                let n = dims[ax];
                let s = strides[ax];
                let i = (idx / s) % n;
                let left = if i > 0 {
                    old[idx - s]
                } else if periodic {
                    old[idx + (n - 1) * s]
                } else {
                    Complex::new(0.0, 0.0)
                };
                let right = if i + 1 < n {
                    old[idx + s]
                } else if periodic {
                    old[idx - (n - 1) * s]
                } else {
                    Complex::new(0.0, 0.0)
                };
                h -= self.kinetic_coeff[ax] * (left - 2.0 * here + right);
                ops += 2;
            }
            amps[idx] = here + factor * h;
        }
        ops
    }
}

/// Precomputed constant-coefficient tridiagonal solver (plain Thomas for box
/// lines, Sherman–Morrison-corrected Thomas for rings).
struct TridiagSolver {
    n: usize,
    off: C64,
    /// Super-diagonal coefficients after forward elimination.
    cp: Vec<C64>,
    /// Inverse pivots after forward elimination.
    inv_den: Vec<C64>,
    /// Ring correction state: z = T'^-1 u and the v-vector tail weight.
    ring: Option<(Vec<C64>, C64)>,
}

impl TridiagSolver {
    fn prepare(n: usize, diag: C64, off: C64, periodic: bool) -> TridiagSolver {
        let gamma = -diag;
        let b0 = if periodic { diag - gamma } else { diag };
        let blast = if periodic { diag - off * off / gamma } else { diag };
        let mut cp = alloc::vec![C64::new(0.0, 0.0); n];
        let mut inv_den = alloc::vec![C64::new(0.0, 0.0); n];
        let mut den = b0;
        inv_den[0] = 1.0 / den;
        cp[0] = off * inv_den[0];
        for i in 1..n {
            let b = if i + 1 == n { blast } else { diag };
            den = b - off * cp[i - 1];
            inv_den[i] = 1.0 / den;
            if i + 1 < n {
                cp[i] = off * inv_den[i];
            }
        }
        let mut solver = TridiagSolver { n, off, cp, inv_den, ring: None };
        if periodic {
            let mut u = alloc::vec![C64::new(0.0, 0.0); n];
            u[0] = gamma;
            u[n - 1] = off;
            let mut z = alloc::vec![C64::new(0.0, 0.0); n];
            solver.solve(&mut u, &mut z);
            solver.ring = Some((z, off / gamma));
        }
        solver
    }

    /// Solve into `out`, consuming `rhs` as scratch.
    fn solve(&self, rhs: &mut [C64], out: &mut [C64]) {
        let n = self.n;
        rhs[0] *= self.inv_den[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.off * rhs[i - 1]) * self.inv_den[i];
        }
        out[n - 1] = rhs[n - 1];
        for i in (0..n - 1).rev() {
            out[i] = rhs[i] - self.cp[i] * out[i + 1];
        }
        if let Some((z, v_tail)) = &self.ring {
            let vy = out[0] + *v_tail * out[n - 1];
            let vz = z[0] + *v_tail * z[n - 1];
            let factor = vy / (1.0 + vz);
            for i in 0..n {
                out[i] -= factor * z[i];
            }
        }
    }
}

/// One implicit norm-preserving step, returning a new state.
pub fn step_unitary(
    psi: &DiscreteWaveFunction,
    h: &Hamiltonian,
    dt: f64,
) -> Result<DiscreteWaveFunction, CoreError> {
    let mut out = psi.clone();
    h.step_in_place(&mut out, dt)?;
    Ok(out)
}

/// One explicit stencil step, returning the new state and the exact
/// multiply-add count.
pub fn step_explicit(
    psi: &DiscreteWaveFunction,
    h: &Hamiltonian,
    dt: f64,
) -> (DiscreteWaveFunction, u64) {
    let mut out = psi.clone();
    let ops = h.step_explicit_in_place(&mut out, dt);
    (out, ops)
}

/// One-body potential over the lattice.
pub fn build_one_body_potential(
    lattice: &LatticeSpec,
    particles: &[ParticleSpec],
    one_body: &OneBodyPotential,
) -> Result<Vec<f64>, CoreError> {
    let cells = lattice.total_cells();
    match one_body {
        OneBodyPotential::Free => Ok(alloc::vec![0.0; cells]),
        OneBodyPotential::Harmonic { omega, center } => {
            if !(*omega > 0.0) {
                return Err(CoreError::Domain("harmonic omega must be > 0".to_string()));
            }
            let axes = lattice.axis_count();
            let d = lattice.dims_per_particle();
            let centers: Vec<f64> = match center {
                Some(c) => {
                    if c.len() != axes {
                        return Err(CoreError::Domain(
                            "harmonic center length must match axis count".to_string(),
                        ));
                    }
                    c.clone()
                }
                None => (0..axes)
                    .map(|ax| lattice.origin()[ax] + 0.5 * lattice.axis_length(ax))
                    .collect(),
            };
            let mut v = alloc::vec![0.0; cells];
            let mut coords = alloc::vec![0usize; axes];
            for (idx, slot) in v.iter_mut().enumerate() {
                lattice.coords_of(idx, &mut coords);
                let mut acc = 0.0;
                for ax in 0..axes {
                    let dx = lattice.position(ax, coords[ax]) - centers[ax];
                    acc += 0.5 * particles[ax / d].mass() * omega * omega * dx * dx;
                }
                *slot = acc;
            }
            Ok(v)
        }
    }
}

/// Sum of the pair potential over every particle pair inside the lattice,
/// evaluated on plain coordinate differences.
pub fn build_pair_potential(
    lattice: &LatticeSpec,
    pair: &PairPotential,
) -> Result<Vec<f64>, CoreError> {
    pair.validate()?;
    let np = lattice.particle_count();
    let d = lattice.dims_per_particle();
    let cells = lattice.total_cells();
    let mut v = alloc::vec![0.0; cells];
    if np < 2 {
        return Ok(v);
    }
    let axes = lattice.axis_count();
    let mut coords = alloc::vec![0usize; axes];
    for (idx, slot) in v.iter_mut().enumerate() {
        lattice.coords_of(idx, &mut coords);
        let mut acc = 0.0;
        for i in 0..np {
            for j in (i + 1)..np {
                let mut r2 = 0.0;
                for jd in 0..d {
                    let xi = lattice.position(i * d + jd, coords[i * d + jd]);
                    let xj = lattice.position(j * d + jd, coords[j * d + jd]);
                    r2 += (xi - xj) * (xi - xj);
                }
                acc += pair.eval_r2(r2);
            }
        }
        *slot = acc;
    }
    Ok(v)
}

/// Mean-field potential that `source`'s particle exerts over `target`'s
/// lattice: V(x) = sum_y V_pair(x_t, y_s) g_source(y) cellvol, constant along
/// every axis that does not belong to `target_particle`.
pub fn mean_field_potential(
    target: &DiscreteWaveFunction,
    target_particle: usize,
    source: &DiscreteWaveFunction,
    source_particle: usize,
    pair: &PairPotential,
) -> Result<Vec<f64>, CoreError> {
    pair.validate()?;
    let t_lat = target.lattice();
    let s_lat = source.lattice();
    let d = t_lat.dims_per_particle();
    if s_lat.dims_per_particle() != d {
        return Err(CoreError::Domain("mean-field dimensionality mismatch".to_string()));
    }
    let g = source.marginal_density(source_particle);
    let s_sub = s_lat.particle_sublattice(source_particle);
    let t_sub = t_lat.particle_sublattice(target_particle);
    let s_vol = s_sub.cell_volume();

    // table over the target particle's position cells
    let mut table = alloc::vec![0.0f64; t_sub.total_cells()];
    let mut tc = alloc::vec![0usize; d];
    let mut sc = alloc::vec![0usize; d];
    for (ti, slot) in table.iter_mut().enumerate() {
        t_sub.coords_of(ti, &mut tc);
        let mut acc = 0.0;
        for (si, &gy) in g.iter().enumerate() {
            if gy == 0.0 {
                continue;
            }
            s_sub.coords_of(si, &mut sc);
            let mut r2 = 0.0;
            for jd in 0..d {
                let dx = t_sub.position(jd, tc[jd]) - s_sub.position(jd, sc[jd]);
                r2 += dx * dx;
            }
            acc += pair.eval_r2(r2) * gy * s_vol;
        }
        *slot = acc;
    }

    // broadcast along the other axes of the target lattice
    let axes = t_lat.axis_count();
    let sub_strides = t_sub.strides().to_vec();
    let mut v = alloc::vec![0.0f64; t_lat.total_cells()];
    let mut coords = alloc::vec![0usize; axes];
    for (idx, slot) in v.iter_mut().enumerate() {
        t_lat.coords_of(idx, &mut coords);
        let mut ti = 0usize;
        for jd in 0..d {
            ti += coords[target_particle * d + jd] * sub_strides[jd];
        }
        *slot = table[ti];
    }
    Ok(v)
}

/// One branch of a packet superposition: a product of per-particle Gaussians
/// with one center/momentum entry per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketBranch {
    pub weight: f64,
    pub center: Vec<f64>,
    pub momentum: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Normalized Gaussian packet: position spread `sigma` per axis (the standard
/// deviation of |psi|^2) and phase exp(i p.x). Every sigma must be at least
/// two cells wide or the grid cannot resolve the packet.
pub fn gaussian_packet(
    lattice: &LatticeSpec,
    particles: &[ParticleSpec],
    center: &[f64],
    momentum: &[f64],
    sigma: &[f64],
    boundary: Boundary,
) -> Result<DiscreteWaveFunction, CoreError> {
    superposed_packets(
        lattice,
        particles,
        &[PacketBranch {
            weight: 1.0,
            center: center.to_vec(),
            momentum: momentum.to_vec(),
            sigma: sigma.to_vec(),
        }],
        boundary,
    )
}

/// Normalized superposition sum_b sqrt(w_b) G_b of Gaussian product packets.
pub fn superposed_packets(
    lattice: &LatticeSpec,
    particles: &[ParticleSpec],
    branches: &[PacketBranch],
    boundary: Boundary,
) -> Result<DiscreteWaveFunction, CoreError> {
    if branches.is_empty() {
        return Err(CoreError::Domain("at least one branch required".to_string()));
    }
    let axes = lattice.axis_count();
    let hbar_phase = 1.0; // momenta are wave numbers in units of 1/length x hbar
    for b in branches {
        if b.center.len() != axes || b.momentum.len() != axes || b.sigma.len() != axes {
            return Err(CoreError::Domain(
                "branch center/momentum/sigma must have one entry per axis".to_string(),
            ));
        }
        if !(b.weight >= 0.0) {
            return Err(CoreError::Domain("branch weight must be >= 0".to_string()));
        }
        for ax in 0..axes {
            let min_sigma = 2.0 * lattice.cell_size()[ax];
            if !(b.sigma[ax] >= min_sigma) {
                return Err(CoreError::Resolution { sigma: b.sigma[ax], min_sigma });
            }
        }
    }
    let cells = lattice.total_cells();
    let mut amps = alloc::vec![C64::new(0.0, 0.0); cells];
    let mut coords = alloc::vec![0usize; axes];
    for b in branches {
        if b.weight == 0.0 {
            continue;
        }
        // normalize the branch on the lattice before weighting
        let mut branch = alloc::vec![C64::new(0.0, 0.0); cells];
        for (idx, slot) in branch.iter_mut().enumerate() {
            lattice.coords_of(idx, &mut coords);
            let mut log_mag = 0.0;
            let mut phase = 0.0;
            for ax in 0..axes {
                let x = lattice.position(ax, coords[ax]);
                let dx = lattice.displacement(ax, x, b.center[ax], boundary);
                log_mag -= dx * dx / (4.0 * b.sigma[ax] * b.sigma[ax]);
                phase += b.momentum[ax] * x / hbar_phase;
            }
            *slot = C64::from_polar(log_mag.exp(), phase);
        }
        let norm2 = lattice.cell_volume() * kahan_sum(branch.iter().map(|z| z.norm_sqr()));
        let scale = (b.weight / norm2).sqrt();
        for (a, z) in amps.iter_mut().zip(&branch) {
            *a += scale * z;
        }
    }
    let mut wf = DiscreteWaveFunction::new(lattice.clone(), particles.to_vec(), amps)?;
    wf.normalize()?;
    Ok(wf)
}

/// Normalized state with uniform magnitude on the coordinate box
/// `lo[ax] <= i < hi[ax]` and plane-wave phase exp(i p.x); zero elsewhere.
pub fn uniform_box_packet(
    lattice: &LatticeSpec,
    particles: &[ParticleSpec],
    lo: &[usize],
    hi: &[usize],
    momentum: &[f64],
) -> Result<DiscreteWaveFunction, CoreError> {
    let axes = lattice.axis_count();
    if lo.len() != axes || hi.len() != axes || momentum.len() != axes {
        return Err(CoreError::Domain(
            "lo/hi/momentum must have one entry per axis".to_string(),
        ));
    }
    for ax in 0..axes {
        if !(lo[ax] < hi[ax] && hi[ax] <= lattice.cells_per_axis()[ax]) {
            return Err(CoreError::Domain(alloc::format!(
                "box bounds [{}, {}) invalid on axis {ax}",
                lo[ax],
                hi[ax]
            )));
        }
    }
    let mut amps = alloc::vec![C64::new(0.0, 0.0); lattice.total_cells()];
    let mut coords = alloc::vec![0usize; axes];
    for (idx, slot) in amps.iter_mut().enumerate() {
        lattice.coords_of(idx, &mut coords);
        let inside = (0..axes).all(|ax| coords[ax] >= lo[ax] && coords[ax] < hi[ax]);
        if inside {
            let mut phase = 0.0;
            for ax in 0..axes {
                phase += momentum[ax] * lattice.position(ax, coords[ax]);
            }
            *slot = C64::from_polar(1.0, phase);
        }
    }
    let mut wf = DiscreteWaveFunction::new(lattice.clone(), particles.to_vec(), amps)?;
    wf.normalize()?;
    Ok(wf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;

    fn particle() -> ParticleSpec {
        ParticleSpec::new(1.0, "p", None).unwrap()
    }

    fn ring(cells: usize) -> LatticeSpec {
        LatticeSpec::uniform(1, 1, cells, 1.0, 0.0).unwrap()
    }

    #[test]
    fn packet_rejects_unresolvable_sigma() {
        let lat = ring(64);
        let err = gaussian_packet(&lat, &[particle()], &[32.0], &[0.0], &[1.5], Boundary::Periodic);
        assert!(matches!(err, Err(CoreError::Resolution { .. })));
    }

    #[test]
    fn packet_momentum_matches_spectral_oracle() {
        // <p> from a direct discrete Fourier transform must match the
        // requested momentum within 1%.
        let lat = ring(256);
        let p0 = 2.0 * core::f64::consts::PI * 12.0 / 256.0; // ring-commensurate
        let wf = gaussian_packet(&lat, &[particle()], &[128.0], &[p0], &[9.0], Boundary::Periodic)
            .unwrap();
        let n = 256usize;
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            let mut f = C64::new(0.0, 0.0);
            for (i, z) in wf.amplitudes().iter().enumerate() {
                let ang = -2.0 * core::f64::consts::PI * (j as f64) * (i as f64) / (n as f64);
                f += z * C64::from_polar(1.0, ang);
            }
            let jj = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            let k = 2.0 * core::f64::consts::PI * jj / (n as f64);
            num += k * f.norm_sqr();
            den += f.norm_sqr();
        }
        let p_measured = num / den;
        assert!(
            (p_measured - p0).abs() <= 0.01 * p0.abs(),
            "<p> = {p_measured}, wanted {p0}"
        );
    }

    #[test]
    fn step_preserves_norm_and_reverses() {
        let lat = ring(128);
        let h = Hamiltonian::free(lat.clone(), &[particle()], 1.0, Boundary::Periodic).unwrap();
        let wf = gaussian_packet(&lat, &[particle()], &[64.0], &[0.4], &[6.0], Boundary::Periodic)
            .unwrap();
        let mut evolved = wf.clone();
        for _ in 0..50 {
            h.step_in_place(&mut evolved, 0.3).unwrap();
            assert!((evolved.norm_squared() - 1.0).abs() < 1e-10);
        }
        for _ in 0..50 {
            h.step_in_place(&mut evolved, -0.3).unwrap();
        }
        let max_err = wf
            .amplitudes()
            .iter()
            .zip(evolved.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-8, "reversal defect {max_err}");
    }

    #[test]
    fn box_walls_also_preserve_norm() {
        let lat = ring(96);
        let h = Hamiltonian::free(lat.clone(), &[particle()], 1.0, Boundary::Box).unwrap();
        let mut wf =
            gaussian_packet(&lat, &[particle()], &[48.0], &[0.7], &[5.0], Boundary::Box).unwrap();
        for _ in 0..200 {
            h.step_in_place(&mut wf, 0.2).unwrap();
            assert!((wf.norm_squared() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn plane_wave_is_stationary_with_exact_cayley_phase() {
        // A ring plane wave is an eigenstate: one step multiplies it by a
        // global phase and leaves |psi| unchanged, which pins down the
        // periodic corner handling exactly.
        let n = 64usize;
        let lat = ring(n);
        let h = Hamiltonian::free(lat.clone(), &[particle()], 1.0, Boundary::Periodic).unwrap();
        let k = 2.0 * core::f64::consts::PI * 5.0 / n as f64;
        let amps: Vec<C64> = (0..n)
            .map(|i| C64::from_polar(1.0, k * lat.position(0, i)))
            .collect();
        let wf = DiscreteWaveFunction::new(lat, alloc::vec![particle()], amps)
            .unwrap()
            .normalized()
            .unwrap();
        let dt = 0.37;
        let stepped = step_unitary(&wf, &h, dt).unwrap();
        // stencil eigenvalue of the kinetic term
        let energy = 2.0 * 0.5 * (1.0 - k.cos());
        let lambda = dt * energy / 2.0;
        let expected = C64::new(1.0, -lambda) / C64::new(1.0, lambda);
        for (a, b) in wf.amplitudes().iter().zip(stepped.amplitudes()) {
            let ratio = b / a;
            assert!((ratio - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn free_packet_disperses_at_the_analytic_rate() {
        let lat = ring(512);
        let h = Hamiltonian::free(lat.clone(), &[particle()], 1.0, Boundary::Periodic).unwrap();
        let sigma0 = 10.0;
        let mut wf =
            gaussian_packet(&lat, &[particle()], &[256.0], &[0.0], &[sigma0], Boundary::Periodic)
                .unwrap();
        let dt = 0.5;
        let steps = 800;
        for s in 1..=steps {
            h.step_in_place(&mut wf, dt).unwrap();
            if s % 200 == 0 {
                let t = s as f64 * dt;
                let predicted = sigma0 * sigma0 + (t / (2.0 * sigma0)).powi(2);
                let (_, var) = wf.axis_moments(0);
                assert!(
                    (var - predicted).abs() <= 0.01 * predicted,
                    "t={t}: var {var} vs {predicted}"
                );
            }
        }
    }

    #[test]
    fn plane_wave_energy_matches_quadratic_dispersion() {
        let n = 256usize;
        let lat = ring(n);
        let h = Hamiltonian::free(lat.clone(), &[particle()], 1.0, Boundary::Periodic).unwrap();
        let k = 2.0 * core::f64::consts::PI * 4.0 / n as f64;
        let amps: Vec<C64> =
            (0..n).map(|i| C64::from_polar(1.0, k * lat.position(0, i))).collect();
        let wf = DiscreteWaveFunction::new(lat, alloc::vec![particle()], amps)
            .unwrap()
            .normalized()
            .unwrap();
        let e = h.energy_expectation(&wf).unwrap();
        let e_free = k * k / 2.0;
        assert!((e - e_free).abs() <= 0.02 * e_free, "E {e} vs p^2/2m {e_free}");
    }

    #[test]
    fn harmonic_ground_state_is_stationary() {
        let lat = LatticeSpec::uniform(1, 1, 128, 0.25, 0.0).unwrap();
        let omega = 0.4;
        let h = Hamiltonian::build(
            lat.clone(),
            &[particle()],
            &Units::default(),
            Boundary::Box,
            &OneBodyPotential::Harmonic { omega, center: None },
            None,
        )
        .unwrap();
        // ground state: sigma^2 = hbar / (2 m omega)
        let sigma = (1.0 / (2.0 * omega)).sqrt();
        let mid = 0.5 * lat.axis_length(0);
        let wf =
            gaussian_packet(&lat, &[particle()], &[mid], &[0.0], &[sigma], Boundary::Box).unwrap();
        let e = h.energy_expectation(&wf).unwrap();
        assert!((e - 0.5 * omega).abs() <= 0.02 * 0.5 * omega, "E0 {e} vs {}", 0.5 * omega);
        // one period of evolution returns the density to itself cellwise
        let period = 2.0 * core::f64::consts::PI / omega;
        let steps = 2000usize;
        let dt = period / steps as f64;
        let mut evolved = wf.clone();
        for _ in 0..steps {
            h.step_in_place(&mut evolved, dt).unwrap();
        }
        let drift = wf
            .amplitudes()
            .iter()
            .zip(evolved.amplitudes())
            .map(|(a, b)| (a.norm() - b.norm()).abs())
            .fold(0.0f64, f64::max);
        assert!(drift <= 1e-4, "cellwise magnitude drift {drift}");
    }

    #[test]
    fn explicit_mode_counts_and_respects_locality() {
        let lat = ring(32);
        let h = Hamiltonian::free(lat.clone(), &[particle()], 1.0, Boundary::Periodic).unwrap();
        let wf = gaussian_packet(&lat, &[particle()], &[16.0], &[0.0], &[4.0], Boundary::Periodic)
            .unwrap();
        let active = wf.relative_volume(0.0);
        let (_, ops) = step_explicit(&wf, &h, 1e-3);
        assert_eq!(ops, active * (2 * 1 + 1));
        // perturb one cell of a fully supported state; the change may reach
        // only the cell and its two axis neighbors in one step
        let (base, _) = step_explicit(&wf, &h, 1e-3);
        let mut poked = wf.clone();
        poked.amplitudes_mut()[7] += C64::new(1e-3, 0.0);
        let (poked_step, _) = step_explicit(&poked, &h, 1e-3);
        for i in 0..32 {
            let delta = (poked_step.amplitudes()[i] - base.amplitudes()[i]).norm();
            let neighbor = [6usize, 7, 8].contains(&i);
            if neighbor {
                assert!(delta > 0.0);
            } else {
                assert_eq!(delta, 0.0, "explicit influence leaked to cell {i}");
            }
        }
    }

    #[test]
    fn implicit_influence_decays_with_distance() {
        let n = 128usize;
        let lat = ring(n);
        let h = Hamiltonian::free(lat.clone(), &[particle()], 1.0, Boundary::Periodic).unwrap();
        let flat = uniform_box_packet(&lat, &[particle()], &[0], &[n], &[0.0]).unwrap();
        let mut poked = flat.clone();
        poked.amplitudes_mut()[64] += C64::new(0.1, 0.0);
        let a = step_unitary(&flat, &h, 0.2).unwrap();
        let b = step_unitary(&poked, &h, 0.2).unwrap();
        let delta: Vec<f64> =
            (0..n).map(|i| (a.amplitudes()[i] - b.amplitudes()[i]).norm()).collect();
        assert!(delta[64] > 1e-3);
        assert!(delta[74] < delta[69]);
        assert!(delta[84] < delta[74]);
        assert!(delta[96] < 1e-10, "far-field influence {}", delta[96]);
    }

    #[test]
    fn mean_field_matches_brute_force() {
        let lat_a = LatticeSpec::uniform(1, 1, 12, 0.5, 0.0).unwrap();
        let lat_b = LatticeSpec::uniform(1, 1, 10, 0.5, 3.0).unwrap();
        let a = gaussian_packet(&lat_a, &[particle()], &[3.0], &[0.0], &[1.2], Boundary::Box)
            .unwrap();
        let b = gaussian_packet(&lat_b, &[particle()], &[5.5], &[0.0], &[1.1], Boundary::Box)
            .unwrap();
        let pair = PairPotential::SoftenedCoulomb { charge_product: 0.8, softening: 0.3 };
        let v = mean_field_potential(&a, 0, &b, 0, &pair).unwrap();
        // independent brute force over both grids
        for i in 0..12 {
            let x = lat_a.position(0, i);
            let mut expect = 0.0;
            for j in 0..10 {
                let y = lat_b.position(0, j);
                let gy = b.amplitudes()[j].norm_sqr();
                expect += 0.8 / ((x - y) * (x - y) + 0.09f64).sqrt() * gy * 0.5;
            }
            assert!((v[i] - expect).abs() < 1e-12, "cell {i}: {} vs {expect}", v[i]);
        }
    }

    #[test]
    fn dt_guideline_scales_with_mass_and_cell() {
        let lat = LatticeSpec::uniform(1, 1, 16, 0.5, 0.0).unwrap();
        let p = ParticleSpec::new(2.0, "heavy", None).unwrap();
        let h = Hamiltonian::free(lat, &[p], 1.0, Boundary::Periodic).unwrap();
        // m a^2 / hbar = 2 * 0.25 = 0.5
        assert!((h.suggested_max_dt() - 0.5).abs() < 1e-12);
    }
}

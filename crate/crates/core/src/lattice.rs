//! Configuration-space lattices: N particles in d dimensions flattened into a
//! single dN-axis grid of cells.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::CoreError;

/// Hard ceiling on the number of cells in one lattice.
pub const MAX_CELLS: u64 = 1 << 31;

/// Boundary condition applied along every axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Axes wrap: neighbor of the last cell is the first cell.
    Periodic,
    /// Hard walls: the wave function is zero outside the grid.
    Box,
}

/// Geometry of a configuration-space lattice. Axis `k*d + j` is coordinate
/// `j` of particle `k`; all axes of one particle share a cell size.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    particle_count: usize,
    dims_per_particle: usize,
    cells_per_axis: Vec<usize>,
    cell_size: Vec<f64>,
    origin: Vec<f64>,
    strides: Vec<usize>,
    total_cells: usize,
}

impl LatticeSpec {
    /// Validate and build a lattice. `cells_per_axis`, `cell_size`, and
    /// `origin` must each have `particle_count * dims_per_particle` entries,
    /// every axis at least 2 cells wide, the cell total at most 2^31, and the
    /// axes of each particle sharing one cell size.
    pub fn new(
        particle_count: usize,
        dims_per_particle: usize,
        cells_per_axis: Vec<usize>,
        cell_size: Vec<f64>,
        origin: Vec<f64>,
    ) -> Result<Self, CoreError> {
        if particle_count == 0 {
            return Err(CoreError::InvalidLattice("particle_count must be >= 1".to_string()));
        }
        if !(1..=3).contains(&dims_per_particle) {
            return Err(CoreError::InvalidLattice(
                "dims_per_particle must be 1, 2, or 3".to_string(),
            ));
        }
        let axes = particle_count * dims_per_particle;
        if cells_per_axis.len() != axes || cell_size.len() != axes || origin.len() != axes {
            return Err(CoreError::InvalidLattice(alloc::format!(
                "expected {axes} entries per axis array, got {}/{}/{}",
                cells_per_axis.len(),
                cell_size.len(),
                origin.len()
            )));
        }
        let mut total: u64 = 1;
        for (ax, &n) in cells_per_axis.iter().enumerate() {
            if n < 2 {
                return Err(CoreError::InvalidLattice(alloc::format!(
                    "axis {ax} has {n} cells; need at least 2"
                )));
            }
            total = total.saturating_mul(n as u64);
            if total > MAX_CELLS {
                return Err(CoreError::InvalidLattice(alloc::format!(
                    "cell count exceeds the 2^31 ceiling ({MAX_CELLS})"
                )));
            }
        }
        for (ax, &a) in cell_size.iter().enumerate() {
            if !(a > 0.0) || !a.is_finite() {
                return Err(CoreError::InvalidLattice(alloc::format!(
                    "axis {ax} cell size {a} must be positive and finite"
                )));
            }
        }
        for k in 0..particle_count {
            let base = k * dims_per_particle;
            let a0 = cell_size[base];
            for j in 1..dims_per_particle {
                if cell_size[base + j] != a0 {
                    return Err(CoreError::InvalidLattice(alloc::format!(
                        "particle {k} axes disagree on cell size ({a0} vs {})",
                        cell_size[base + j]
                    )));
                }
            }
        }
        let mut strides = alloc::vec![1usize; axes];
        for ax in (0..axes.saturating_sub(1)).rev() {
            strides[ax] = strides[ax + 1] * cells_per_axis[ax + 1];
        }
        Ok(LatticeSpec {
            particle_count,
            dims_per_particle,
            cells_per_axis,
            cell_size,
            origin,
            strides,
            total_cells: total as usize,
        })
    }

    /// One particle in `dims` dimensions with a uniform grid.
    pub fn uniform(
        particle_count: usize,
        dims_per_particle: usize,
        cells: usize,
        cell_size: f64,
        origin: f64,
    ) -> Result<Self, CoreError> {
        let axes = particle_count * dims_per_particle;
        LatticeSpec::new(
            particle_count,
            dims_per_particle,
            alloc::vec![cells; axes],
            alloc::vec![cell_size; axes],
            alloc::vec![origin; axes],
        )
    }

    pub fn particle_count(&self) -> usize {
        self.particle_count
    }

    pub fn dims_per_particle(&self) -> usize {
        self.dims_per_particle
    }

    pub fn axis_count(&self) -> usize {
        self.particle_count * self.dims_per_particle
    }

    pub fn total_cells(&self) -> usize {
        self.total_cells
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells_per_axis
    }

    pub fn cell_size(&self) -> &[f64] {
        &self.cell_size
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Volume of one configuration-space cell (product of all cell sizes).
    pub fn cell_volume(&self) -> f64 {
        self.cell_size.iter().product()
    }

    /// Axes belonging to particle `k`.
    pub fn particle_axes(&self, k: usize) -> core::ops::Range<usize> {
        let base = k * self.dims_per_particle;
        base..base + self.dims_per_particle
    }

    /// Cell size shared by the axes of particle `k`.
    pub fn particle_cell_size(&self, k: usize) -> f64 {
        self.cell_size[k * self.dims_per_particle]
    }

    /// Volume of one cell of particle `k`'s position space.
    pub fn particle_cell_volume(&self, k: usize) -> f64 {
        let mut v = 1.0;
        for ax in self.particle_axes(k) {
            v *= self.cell_size[ax];
        }
        v
    }

    /// Flattened index of a coordinate tuple.
    pub fn index_of(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.axis_count());
        coords.iter().zip(&self.strides).map(|(&c, &s)| c * s).sum()
    }

    /// Write the coordinate tuple of flattened index `idx` into `out`.
    pub fn coords_of(&self, idx: usize, out: &mut [usize]) {
        debug_assert_eq!(out.len(), self.axis_count());
        let mut rem = idx;
        for ax in 0..self.axis_count() {
            out[ax] = rem / self.strides[ax];
            rem %= self.strides[ax];
        }
    }

    /// Coordinate of cell `i` along `axis` (cell centers).
    pub fn position(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + (i as f64 + 0.5) * self.cell_size[axis]
    }

    /// Physical length of `axis`.
    pub fn axis_length(&self, axis: usize) -> f64 {
        self.cells_per_axis[axis] as f64 * self.cell_size[axis]
    }

    /// Displacement `x - y` along `axis`, wrapped to the nearest image when
    /// the boundary is periodic.
    pub fn displacement(&self, axis: usize, x: f64, y: f64, boundary: Boundary) -> f64 {
        let mut dx = x - y;
        if boundary == Boundary::Periodic {
            let length = self.axis_length(axis);
            dx -= length * num_traits::Float::round(dx / length);
        }
        dx
    }

    /// Visit every 1D line along `axis` as `(base_index, stride)`; a line's
    /// cells sit at `base + i*stride` for `i` in `0..cells_per_axis[axis]`.
    pub fn for_each_line(&self, axis: usize, mut f: impl FnMut(usize, usize)) {
        let n = self.cells_per_axis[axis];
        let stride = self.strides[axis];
        let inner = stride;
        let outer = self.total_cells / (n * stride);
        for o in 0..outer {
            let block = o * n * stride;
            for i in 0..inner {
                f(block + i, stride);
            }
        }
    }

    /// Sub-lattice holding only particle `k`'s axes.
    pub fn particle_sublattice(&self, k: usize) -> LatticeSpec {
        let axes = self.particle_axes(k);
        LatticeSpec::new(
            1,
            self.dims_per_particle,
            self.cells_per_axis[axes.clone()].to_vec(),
            self.cell_size[axes.clone()].to_vec(),
            self.origin[axes].to_vec(),
        )
        .expect("sub-lattice of a valid lattice is valid")
    }

    /// Join two lattices into the configuration space of all particles of
    /// `self` followed by all particles of `other`. Requires matching
    /// dimensionality and respects the cell ceiling.
    pub fn join(&self, other: &LatticeSpec) -> Result<LatticeSpec, CoreError> {
        if self.dims_per_particle != other.dims_per_particle {
            return Err(CoreError::InvalidLattice(
                "cannot join lattices with different dims_per_particle".to_string(),
            ));
        }
        let mut cells = self.cells_per_axis.clone();
        cells.extend_from_slice(&other.cells_per_axis);
        let mut sizes = self.cell_size.clone();
        sizes.extend_from_slice(&other.cell_size);
        let mut origin = self.origin.clone();
        origin.extend_from_slice(&other.origin);
        LatticeSpec::new(
            self.particle_count + other.particle_count,
            self.dims_per_particle,
            cells,
            sizes,
            origin,
        )
    }

    /// True when the two lattices have identical per-particle grids, so
    /// particles can be exchanged between them.
    pub fn same_grid(&self, other: &LatticeSpec) -> bool {
        self.dims_per_particle == other.dims_per_particle
            && self.cells_per_axis == other.cells_per_axis
            && self.cell_size == other.cell_size
            && self.origin == other.origin
    }
}

/// Cell sizes from the de Broglie rule `a_i = β h / p_i`, one entry per
/// momentum scale. Errors on non-positive momenta or β outside (0, 1].
pub fn cell_sizes_from_debroglie(
    mean_momenta: &[f64],
    beta: f64,
    planck_h: f64,
) -> Result<Vec<f64>, CoreError> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(CoreError::Domain(alloc::format!("beta {beta} outside (0, 1]")));
    }
    if !(planck_h > 0.0) {
        return Err(CoreError::Domain(alloc::format!("planck constant {planck_h} must be > 0")));
    }
    mean_momenta
        .iter()
        .map(|&p| {
            if p > 0.0 && p.is_finite() {
                Ok(beta * planck_h / p)
            } else {
                Err(CoreError::Domain(alloc::format!("momentum scale {p} must be > 0")))
            }
        })
        .collect()
}

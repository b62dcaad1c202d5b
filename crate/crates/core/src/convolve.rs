//! Separable Gaussian convolutions on lattice-shaped arrays.
//!
//! A d-dimensional Gaussian kernel factorizes per axis, so a blur over the
//! whole lattice is a sequence of 1D passes, each O(n) per cell instead of
//! O(cells) per cell. Ring axes use the nearest periodic image only; the
//! neglected wrap terms are below double precision whenever the kernel width
//! is a few times smaller than the ring, which validation upstream enforces
//! in practice.

use alloc::vec::Vec;

// float intrinsics come from this trait in standalone no_std builds; whenever
// std enters the crate graph (tests, std-enabled consumers) the inherent
// methods shadow it and the import looks unused
#[allow(unused_imports)]
use num_traits::Float;

use crate::lattice::{Boundary, LatticeSpec};

/// Blur `data` with the product kernel prod_ax sqrt(q_ax/pi) exp(-q_ax d^2),
/// discretized at cell centers and weighted by cell size, so a normalized
/// density stays normalized up to tail truncation. One `q` entry per axis;
/// `q > 0` required.
pub(crate) fn gaussian_blur(
    lattice: &LatticeSpec,
    data: &[f64],
    q_per_axis: &[f64],
    boundary: Boundary,
) -> Vec<f64> {
    assert_eq!(data.len(), lattice.total_cells());
    assert_eq!(q_per_axis.len(), lattice.axis_count());
    let mut cur = data.to_vec();
    let mut next = alloc::vec![0.0f64; data.len()];
    let pi = core::f64::consts::PI;
    for axis in 0..lattice.axis_count() {
        let q = q_per_axis[axis];
        assert!(q > 0.0, "kernel exponent must be positive");
        let n = lattice.cells_per_axis()[axis];
        let a = lattice.cell_size()[axis];
        let norm = (q / pi).sqrt() * a;
        let kernel: Vec<f64> = (0..n)
            .map(|dist| {
                let dist = if boundary == Boundary::Periodic {
                    dist.min(n - dist)
                } else {
                    dist
                };
                let delta = dist as f64 * a;
                norm * (-q * delta * delta).exp()
            })
            .collect();
        next.iter_mut().for_each(|x| *x = 0.0);
        lattice.for_each_line(axis, |base, stride| {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, &w) in cur.iter().skip(base).step_by(stride).take(n).enumerate() {
                    if w != 0.0 {
                        let dist = if i >= j { i - j } else { j - i };
                        acc += kernel[dist] * w;
                    }
                }
                next[base + i * stride] = acc;
            }
        });
        core::mem::swap(&mut cur, &mut next);
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_matches_direct_double_sum() {
        let lat = LatticeSpec::uniform(1, 2, 9, 0.7, 0.0).unwrap();
        let mut data = alloc::vec![0.0; 81];
        data[3 * 9 + 5] = 0.6;
        data[7 * 9 + 1] = 0.4;
        let q = [0.9, 1.4];
        let blurred = gaussian_blur(&lat, &data, &q, Boundary::Periodic);
        let pi = core::f64::consts::PI;
        for i0 in 0..9usize {
            for i1 in 0..9usize {
                let mut expect = 0.0;
                for j0 in 0..9usize {
                    for j1 in 0..9usize {
                        let w = data[j0 * 9 + j1];
                        if w == 0.0 {
                            continue;
                        }
                        let d0 = (i0 as isize - j0 as isize).unsigned_abs().min(9 - (i0 as isize - j0 as isize).unsigned_abs()) as f64 * 0.7;
                        let d1 = (i1 as isize - j1 as isize).unsigned_abs().min(9 - (i1 as isize - j1 as isize).unsigned_abs()) as f64 * 0.7;
                        expect += w
                            * (q[0] / pi).sqrt() * 0.7 * (-q[0] * d0 * d0).exp()
                            * (q[1] / pi).sqrt() * 0.7 * (-q[1] * d1 * d1).exp();
                    }
                }
                let got = blurred[i0 * 9 + i1];
                assert!((got - expect).abs() < 1e-12, "cell ({i0},{i1}): {got} vs {expect}");
            }
        }
    }

    #[test]
    fn blur_conserves_mass_away_from_walls() {
        let lat = LatticeSpec::uniform(1, 1, 64, 1.0, 0.0).unwrap();
        let mut data = alloc::vec![0.0; 64];
        data[32] = 1.0; // unit mass, cell size 1
        let blurred = gaussian_blur(&lat, &data, &[0.25], Boundary::Periodic);
        let total: f64 = blurred.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "mass after blur {total}");
    }
}

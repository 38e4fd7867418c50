use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::DensityGrid;

/// Fraction of the grid maximum below which local maxima are ignored.
pub const MODE_THRESHOLD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

/// Cell-volume-weighted norm of `a − b`. `Linf` is the plain maximum.
pub fn grid_error(a: &DensityGrid, b: &DensityGrid, norm: Norm) -> Result<f64> {
    if a.spec != b.spec || a.values.len() != b.values.len() {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.spec.axes, b.spec.axes)));
    }
    let v = a.spec.cell_volume();
    let diffs = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs());
    Ok(match norm {
        Norm::L1 => diffs.sum::<f64>() * v,
        Norm::L2 => (diffs.map(|d| d * d).sum::<f64>() * v).sqrt(),
        Norm::Linf => diffs.fold(0.0, f64::max),
    })
}

/// Number of cells strictly greater than every neighbour (including
/// diagonals; missing neighbours at the boundary are skipped) and above
/// [`MODE_THRESHOLD`] times the grid maximum. A single-node axis has no
/// neighbours along it, so a slice grid counts modes within the slice.
pub fn count_modes(grid: &DensityGrid) -> usize {
    let spec = &grid.spec;
    let max = grid.max();
    if !(max > 0.0) {
        return 0;
    }
    let floor = MODE_THRESHOLD * max;
    let d = spec.dimension();
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut c| {
            (0..d)
                .map(|_| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    o
                })
                .collect()
        })
        .filter(|o: &Vec<i64>| o.iter().any(|&v| v != 0))
        .collect();
    (0..grid.values.len())
        .filter(|&i| {
            let v = grid.values[i];
            if v <= floor {
                return false;
            }
            let idx = spec.unravel(i);
            offsets.iter().all(|off| {
                let mut nb = Vec::with_capacity(d);
                for ((&ix, &o), axis) in idx.iter().zip(off).zip(&spec.axes) {
                    let j = ix as i64 + o;
                    if j < 0 || j >= axis.count as i64 {
                        return true;
                    }
                    nb.push(j as usize);
                }
                v > grid.values[spec.ravel(&nb)]
            })
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{Axis, GridSpec};
    use nalgebra::DVector;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn gauss(x: &DVector<f64>, c: f64) -> f64 {
        (-((x[0] - c).powi(2) + x[1] * x[1]) / 2.0).exp() / (2.0 * PI)
    }

    fn bimodal() -> DensityGrid {
        GridSpec::cube(2, -5.0, 5.0, 101)
            .unwrap()
            .evaluate(|x| 0.5 * gauss(x, -2.0) + 0.5 * gauss(x, 2.0))
    }

    #[test]
    fn identical_grids_have_zero_error() {
        let g = bimodal();
        for n in [Norm::L1, Norm::L2, Norm::Linf] {
            assert_eq!(grid_error(&g, &g, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn shifted_grid_linf_tracks_gradient() {
        let spec = GridSpec::cube(2, -5.0, 5.0, 201).unwrap();
        let h = spec.axes[0].step();
        let a = spec.evaluate(|x| gauss(x, 0.0));
        let b = spec.evaluate(|x| gauss(x, h));
        // max |∂p/∂x₁| of the standard bivariate normal is e^{-1/2}/(2π) at x₁ = ±1
        let bound = (-0.5f64).exp() / (2.0 * PI) * h;
        let linf = grid_error(&a, &b, Norm::Linf).unwrap();
        assert!((linf / bound - 1.0).abs() < 0.1, "{linf} vs {bound}");
    }

    #[test]
    fn doubled_grid_l1_is_one() {
        let a = GridSpec::cube(2, -6.0, 6.0, 121).unwrap().evaluate(|x| gauss(x, 0.0));
        let b = a.scaled(2.0);
        assert!((grid_error(&a, &b, Norm::L1).unwrap() - 1.0).abs() < 0.02);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = GridSpec::cube(2, -1.0, 1.0, 5).unwrap().evaluate(|_| 1.0);
        let b = GridSpec::cube(2, -1.0, 1.0, 6).unwrap().evaluate(|_| 1.0);
        assert!(matches!(grid_error(&a, &b, Norm::L2), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn modes_of_bimodal_and_slices() {
        assert_eq!(count_modes(&bimodal()), 2);
        let slice = GridSpec::new(vec![Axis::new(0.0, 0.0, 1), Axis::new(-5.0, 5.0, 101)])
            .unwrap()
            .evaluate(|x| gauss(x, 0.0));
        assert_eq!(count_modes(&slice), 1);
    }

    #[test]
    fn flat_plateau_is_not_a_mode() {
        let g = GridSpec::cube(1, 0.0, 1.0, 5).unwrap().evaluate(|_| 1.0);
        assert_eq!(count_modes(&g), 0);
    }

    proptest! {
        #[test]
        fn mode_count_is_scale_invariant(c in 0.01f64..100.0) {
            let g = bimodal();
            prop_assert_eq!(count_modes(&g.scaled(c)), count_modes(&g));
        }
    }
}

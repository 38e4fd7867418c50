use super::lds::generate_halton;
use super::RepPointSet;
use crate::distribution::DistributionSpec;
use crate::error::{Error, Result};

/// Number of Halton probe points used above two dimensions.
pub const PROBE_COUNT: usize = 10_000;

/// Kolmogorov–Smirnov distance between the empirical CDF of a point set and
/// the target CDF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FDiscrepancy {
    pub value: f64,
    /// `false` when `value` is a lower bound from a finite candidate set.
    pub exact: bool,
}

fn to_unit(points: &RepPointSet, target: &DistributionSpec) -> Result<Vec<Vec<f64>>> {
    let sampler = target.sampler()?;
    let marginals = sampler.independent_marginals();
    points
        .points
        .iter()
        .map(|p| {
            if p.len() != marginals.len() {
                return Err(Error::DimensionMismatch {
                    expected: marginals.len(),
                    actual: p.len(),
                });
            }
            let z = sampler.to_independent(p);
            Ok(marginals.iter().zip(z.iter()).map(|(m, &v)| m.cdf(v)).collect())
        })
        .collect()
}

fn exact_1d(u: &mut [f64]) -> f64 {
    u.sort_by(f64::total_cmp);
    let k = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / k - v).max(v - i as f64 / k))
        .fold(0.0, f64::max)
}

/// Sweeps every staircase corner (closed and left-limit) in `O(K²)`.
fn exact_2d(u: &[Vec<f64>]) -> f64 {
    let k = u.len() as f64;
    let mut pts: Vec<(f64, f64)> = u.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    ys.push(1.0);
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    xs.push(1.0);
    xs.dedup();

    let mut worst: f64 = 0.0;
    let mut below: Vec<f64> = Vec::with_capacity(pts.len());
    let mut next = 0;
    for &v in &xs {
        // points with x < v: left-limit corners
        let mut idx = 0;
        for &w in &ys {
            while idx < below.len() && below[idx] < w {
                idx += 1;
            }
            worst = worst.max(v * w - idx as f64 / k);
        }
        while next < pts.len() && pts[next].0 <= v {
            let y = pts[next].1;
            let at = below.partition_point(|&b| b <= y);
            below.insert(at, y);
            next += 1;
        }
        // points with x <= v: closed corners
        let mut idx = 0;
        for &w in &ys {
            while idx < below.len() && below[idx] <= w {
                idx += 1;
            }
            worst = worst.max(idx as f64 / k - v * w);
        }
    }
    worst
}

fn lower_bound_nd(u: &[Vec<f64>]) -> Result<f64> {
    let k = u.len() as f64;
    let q = u[0].len();
    let count = |t: &[f64], strict: bool| {
        u.iter()
            .filter(|p| p.iter().zip(t).all(|(a, b)| if strict { a < b } else { a <= b }))
            .count() as f64
    };
    let mut worst: f64 = 0.0;
    for p in u {
        let volume: f64 = p.iter().product();
        worst = worst.max(count(p, false) / k - volume);
        worst = worst.max(volume - count(p, true) / k);
    }
    for t in generate_halton(PROBE_COUNT, q, 0)?.points {
        let volume: f64 = t.iter().product();
        worst = worst.max((count(&t, false) / k - volume).abs());
    }
    Ok(worst)
}

/// F-discrepancy of `points` against `target`.
///
/// Points are first mapped to the unit cube through the marginal CDFs (a
/// Gaussian target is whitened first). The supremum is exact in one and two
/// dimensions. Above that it is taken over the points, their left limits and
/// [`PROBE_COUNT`] Halton probes, which gives a lower bound.
pub fn f_discrepancy(points: &RepPointSet, target: &DistributionSpec) -> Result<FDiscrepancy> {
    if points.is_empty() {
        return Err(Error::invalid("points", "empty point set"));
    }
    let mut u = to_unit(points, target)?;
    Ok(match target.dimension() {
        1 => {
            let mut flat: Vec<f64> = u.iter_mut().map(|p| p[0]).collect();
            FDiscrepancy {
                value: exact_1d(&mut flat),
                exact: true,
            }
        }
        2 => FDiscrepancy {
            value: exact_2d(&u),
            exact: true,
        },
        _ => FDiscrepancy {
            value: lower_bound_nd(&u)?,
            exact: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::Marginal;
    use crate::rep_points::{lds_rep_points, Generator, Provenance};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn set_1d(values: &[f64], target: &DistributionSpec) -> RepPointSet {
        RepPointSet::new(
            values.iter().map(|&v| DVector::from_element(1, v)).collect(),
            Provenance::Custom,
            target.clone(),
        )
    }

    #[test]
    fn median_point_has_half() {
        let t = DistributionSpec::standard_normal(1);
        let d = f_discrepancy(&set_1d(&[0.0], &t), &t).unwrap();
        assert_relative_eq!(d.value, 0.5, epsilon = 1e-15);
        assert!(d.exact);
    }

    #[test]
    fn midpoint_quantiles_give_half_over_k() {
        let m = Marginal::Exponential { rate: 1.5 };
        let t = DistributionSpec::independent(vec![m.clone()]);
        let values: Vec<f64> = (1..=10)
            .map(|i| m.inverse_cdf((2 * i - 1) as f64 / 20.0).unwrap())
            .collect();
        assert_relative_eq!(
            f_discrepancy(&set_1d(&values, &t), &t).unwrap().value,
            0.05,
            epsilon = 1e-12
        );
    }

    #[test]
    fn duplicated_point() {
        let t = DistributionSpec::standard_normal(1);
        let x = 0.7;
        let f = Marginal::standard_normal().cdf(x);
        let d = f_discrepancy(&set_1d(&[x; 7], &t), &t).unwrap().value;
        assert_relative_eq!(d, f.max(1.0 - f), epsilon = 1e-12);
    }

    fn brute_2d(u: &[Vec<f64>]) -> f64 {
        let k = u.len() as f64;
        let mut xs: Vec<f64> = u.iter().map(|p| p[0]).collect();
        let mut ys: Vec<f64> = u.iter().map(|p| p[1]).collect();
        xs.push(1.0);
        ys.push(1.0);
        let mut worst: f64 = 0.0;
        for &v in &xs {
            for &w in &ys {
                let closed = u.iter().filter(|p| p[0] <= v && p[1] <= w).count() as f64;
                let open = u.iter().filter(|p| p[0] < v && p[1] < w).count() as f64;
                worst = worst.max(closed / k - v * w).max(v * w - open / k);
            }
        }
        worst
    }

    #[test]
    fn sweep_matches_brute_force() {
        let t = DistributionSpec::standard_normal(2);
        for (generator, n) in [(Generator::Random, 37), (Generator::Glp, 89), (Generator::Halton, 50)] {
            let set = lds_rep_points(generator, n, &t, 4).unwrap();
            let u = to_unit(&set, &t).unwrap();
            assert_relative_eq!(exact_2d(&u), brute_2d(&u), epsilon = 1e-14);
        }
    }

    #[test]
    fn higher_dimension_is_a_lower_bound() {
        let t = DistributionSpec::standard_normal(3);
        let set = lds_rep_points(Generator::Halton, 40, &t, 0).unwrap();
        let d = f_discrepancy(&set, &t).unwrap();
        assert!(!d.exact);
        assert!(d.value > 0.0 && d.value < 1.0);
    }
}

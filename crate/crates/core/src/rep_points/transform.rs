use std::f64::consts::PI;

use nalgebra::DVector;

use super::lds::{generate_glp, generate_halton, generate_random};
use super::{Generator, Provenance, RepPointSet, UnitPointSet};
use crate::distribution::DistributionSpec;
use crate::error::{Error, Result};

fn box_muller(u: &[f64], q: usize) -> Result<DVector<f64>> {
    let mut z = Vec::with_capacity(q + 1);
    for (pair, chunk) in u.chunks(2).enumerate() {
        let (u1, u2) = (chunk[0], chunk[1]);
        if !(u1 > 0.0 && u1 <= 1.0) {
            return Err(Error::NumericalInversion {
                quantile: u1,
                coordinate: 2 * pair,
            });
        }
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        z.push(r * c);
        z.push(r * s);
    }
    z.truncate(q);
    Ok(DVector::from_vec(z))
}

/// Maps unit-cube points onto the target.
///
/// Independent marginals use the coordinatewise inverse CDF. A multivariate
/// Gaussian uses Box–Muller pairs followed by `mean + L z`; for odd `q` the
/// unit set must carry one extra coordinate, which is consumed by the last
/// pair and discarded.
pub fn transform_to_target(unit: &UnitPointSet, target: &DistributionSpec) -> Result<RepPointSet> {
    target.validate()?;
    let q = target.dimension();
    if unit.is_empty() {
        return Err(Error::invalid("unit", "empty point set"));
    }
    let points = match target {
        DistributionSpec::IndependentMarginals { marginals } => {
            if unit.dimension() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    actual: unit.dimension(),
                });
            }
            unit.points
                .iter()
                .map(|u| {
                    let coords = marginals
                        .iter()
                        .zip(u)
                        .enumerate()
                        .map(|(j, (m, &uj))| {
                            m.inverse_cdf(uj).map_err(|_| Error::NumericalInversion {
                                quantile: uj,
                                coordinate: j,
                            })
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok(DVector::from_vec(coords))
                })
                .collect::<Result<Vec<_>>>()?
        }
        DistributionSpec::MultivariateGaussian { .. } => {
            let expected = q + q % 2;
            if unit.dimension() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual: unit.dimension(),
                });
            }
            let (mean, l) = target.gaussian_parts()?;
            unit.points
                .iter()
                .map(|u| Ok(&mean + &l * box_muller(u, q)?))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(RepPointSet::new(
        points,
        Provenance::LdsTransform {
            generator: unit.generator,
            seed: None,
        },
        target.clone(),
    ))
}

/// Generates a unit set of the right width for `target`, shifts lattice
/// points off the cube boundary, and transforms it.
///
/// `seed` is only used by [`Generator::Random`].
pub fn lds_rep_points(generator: Generator, count: usize, target: &DistributionSpec, seed: u64) -> Result<RepPointSet> {
    let q = target.dimension();
    let width = match target {
        DistributionSpec::MultivariateGaussian { .. } => q + q % 2,
        DistributionSpec::IndependentMarginals { .. } => q,
    };
    let unit = match generator {
        Generator::Glp => generate_glp(count, width)?.centered(),
        Generator::Halton => generate_halton(count, width, 0)?,
        Generator::Random => generate_random(count, width, seed)?,
    };
    let mut set = transform_to_target(&unit, target)?;
    set.provenance = Provenance::LdsTransform {
        generator: unit.generator,
        seed: (generator == Generator::Random).then_some(seed),
    };
    Ok(set)
}

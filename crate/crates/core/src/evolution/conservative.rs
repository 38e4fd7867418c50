use log::debug;
use nalgebra::DVector;
use rayon::prelude::*;

use super::{assemble, sha256_hex, EvolutionTrace};
use crate::cubature::{cubature_points, moments_from_images};
use crate::dynamics::FlowMap;
use crate::error::{Error, Result};
use crate::mixture::MixtureModel;

/// Block layout `Z = [Y, W, X]` of an augmented state: random parameters,
/// excitation variables and response.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentedState {
    pub parameters: usize,
    pub excitation: usize,
    pub response: usize,
}

impl AugmentedState {
    pub fn dimension(&self) -> usize {
        self.parameters + self.excitation + self.response
    }

    pub fn concat(&self, y: &DVector<f64>, w: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        for (len, want) in [
            (y.len(), self.parameters),
            (w.len(), self.excitation),
            (x.len(), self.response),
        ] {
            if len != want {
                return Err(Error::DimensionMismatch {
                    expected: want,
                    actual: len,
                });
            }
        }
        Ok(DVector::from_iterator(
            self.dimension(),
            y.iter().chain(w.iter()).chain(x.iter()).copied(),
        ))
    }

    /// `(Y, W, X)` views of `z`.
    pub fn split(&self, z: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        if z.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: z.len(),
            });
        }
        let a = self.parameters;
        let b = a + self.excitation;
        Ok((
            z.rows(0, a).into_owned(),
            z.rows(a, self.excitation).into_owned(),
            z.rows(b, self.response).into_owned(),
        ))
    }
}

/// Conservative evolution: each of the `2q` cubature nodes of every input
/// component is run through the deterministic flow once, and the images at
/// each requested time give that component's mean and covariance.
pub fn evolve_conservative(flow: &dyn FlowMap, input: &MixtureModel, times: &[f64]) -> Result<EvolutionTrace> {
    if input.dimension() != flow.input_dimension() {
        return Err(Error::DimensionMismatch {
            expected: flow.input_dimension(),
            actual: input.dimension(),
        });
    }
    if times.is_empty() {
        return Err(Error::invalid("times", "no output times"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times[0] < flow.start_time() {
        return Err(Error::invalid(
            "times",
            "must be strictly increasing and not before the start time",
        ));
    }
    // images[k][node][time]
    let images: Vec<Vec<Vec<DVector<f64>>>> = input
        .components()
        .par_iter()
        .enumerate()
        .map(|(k, c)| {
            cubature_points(c)
                .points
                .iter()
                .map(|p| flow.trajectory(p, times))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_component(k))
        })
        .collect::<Result<Vec<_>>>()?;
    let q = input.dimension();
    let weights = vec![1.0 / (2 * q) as f64; 2 * q];
    let mut snapshots = Vec::with_capacity(times.len());
    let mut floored = 0;
    for ti in 0..times.len() {
        let moments = images
            .iter()
            .map(|nodes| {
                let at: Vec<DVector<f64>> = nodes.iter().map(|traj| traj[ti].clone()).collect();
                moments_from_images(&at, &weights)
            })
            .collect();
        let (model, hit) = assemble(&input.weights(), moments)?;
        floored += hit;
        snapshots.push(model);
    }
    if floored > 0 {
        debug!("covariance floor applied {floored} times during conservative evolution");
    }
    let provenance = sha256_hex(format!("conservative|{}|{times:?}", serde_json::to_string(input)?).as_bytes());
    Ok(EvolutionTrace {
        times: times.to_vec(),
        snapshots,
        provenance,
        evaluations_per_snapshot: 2 * q * input.len(),
        floor_activations: floored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{LinearField, OdeFlow};
    use crate::mixture::GaussianComponent;
    use nalgebra::DMatrix;

    fn input() -> MixtureModel {
        let means = [DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![-0.5, 0.8])];
        let covs = [
            DMatrix::from_row_slice(2, 2, &[0.3, 0.05, 0.05, 0.2]),
            DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.1]),
        ];
        MixtureModel::equal_weights(&means, &covs).unwrap()
    }

    #[test]
    fn zero_field_keeps_the_input() {
        let flow = OdeFlow::new(LinearField::new(DMatrix::zeros(2, 2)), 0.0, 0.1);
        let trace = evolve_conservative(&flow, &input(), &[0.5, 1.0, 2.0]).unwrap();
        for snap in &trace.snapshots {
            for (a, b) in snap.components().iter().zip(input().components()) {
                assert!((a.mean() - b.mean()).amax() < 1e-12);
                assert!((a.covariance() - b.covariance()).amax() < 1e-12);
            }
        }
        assert_eq!(trace.evaluations_per_snapshot, 8);
    }

    #[test]
    fn linear_flow_follows_matrix_exponential() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]);
        let flow = OdeFlow::new(LinearField::new(j.clone()), 0.0, 1e-3);
        let times = [0.5, 1.0];
        let trace = evolve_conservative(&flow, &input(), &times).unwrap();
        for (snap, &t) in trace.snapshots.iter().zip(&times) {
            let phi = (&j * t).exp();
            for (out, c) in snap.components().iter().zip(input().components()) {
                assert!((out.mean() - &phi * c.mean()).amax() < 1e-9);
                let cov = &phi * c.covariance() * phi.transpose();
                assert!((out.covariance() - cov).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn weights_are_untouched() {
        let c1 = GaussianComponent::standard(2).with_weight(0.25);
        let c2 = GaussianComponent::standard(2).with_weight(0.75);
        let m = MixtureModel::new(vec![c1, c2]).unwrap();
        let flow = OdeFlow::new(LinearField::new(DMatrix::identity(2, 2) * -0.1), 0.0, 0.05);
        let trace = evolve_conservative(&flow, &m, &[0.1, 0.2]).unwrap();
        assert!(trace.snapshots.iter().all(|s| s.weights() == vec![0.25, 0.75]));
    }

    #[test]
    fn augmented_state_blocks() {
        let layout = AugmentedState {
            parameters: 2,
            excitation: 1,
            response: 3,
        };
        let z = layout
            .concat(
                &DVector::from_vec(vec![1.0, 2.0]),
                &DVector::from_vec(vec![3.0]),
                &DVector::from_vec(vec![4.0, 5.0, 6.0]),
            )
            .unwrap();
        assert_eq!(z.len(), 6);
        let (y, w, x) = layout.split(&z).unwrap();
        assert_eq!((y[1], w[0], x[2]), (2.0, 3.0, 6.0));
    }
}

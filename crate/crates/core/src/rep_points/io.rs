use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{Provenance, RepPointSet};
use crate::distribution::DistributionSpec;
use crate::error::{Error, Result};

/// Sidecar metadata written next to a rep-point CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepPointMeta {
    pub provenance: Provenance,
    pub count: usize,
    pub dimension: usize,
    pub target: DistributionSpec,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes one point per row under a `theta_1,…,theta_q` header, plus a JSON
/// sidecar (same stem, `.json` extension) holding the provenance and target.
pub fn write_rep_points(set: &RepPointSet, path: &Path) -> Result<()> {
    let q = set.dimension();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=q).map(|j| format!("theta_{j}")))?;
    for p in &set.points {
        w.write_record(p.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    let meta = RepPointMeta {
        provenance: set.provenance.clone(),
        count: set.len(),
        dimension: q,
        target: set.target.clone(),
    };
    serde_json::to_writer_pretty(File::create(sidecar(path))?, &meta)?;
    Ok(())
}

/// Reads a file written by [`write_rep_points`], sidecar included.
pub fn read_rep_points_csv(path: &Path) -> Result<RepPointSet> {
    let meta: RepPointMeta = serde_json::from_reader(File::open(sidecar(path))?)?;
    let mut r = csv::Reader::from_path(path)?;
    let mut points = Vec::with_capacity(meta.count);
    for record in r.records() {
        let record = record?;
        let values = record
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::invalid("rep_points", format!("bad number: {e}")))?;
        if values.len() != meta.dimension {
            return Err(Error::DimensionMismatch {
                expected: meta.dimension,
                actual: values.len(),
            });
        }
        points.push(DVector::from_vec(values));
    }
    let mut set = RepPointSet::new(points, meta.provenance, meta.target);
    set.cluster_covariances = None;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rep_points::{lds_rep_points, Generator};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("points.csv");
        let target = DistributionSpec::standard_normal(2);
        let set = lds_rep_points(Generator::Glp, 89, &target, 0).unwrap();
        write_rep_points(&set, &path).unwrap();
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("theta_1,theta_2\n"));
        let back = read_rep_points_csv(&path).unwrap();
        assert_eq!(back.points, set.points);
        assert_eq!(back.provenance, set.provenance);
    }
}

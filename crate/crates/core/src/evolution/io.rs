use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{assemble_density, EvolutionTrace};
use crate::error::{Error, Result};
use crate::mixture::{GridSpec, MixtureModel};

/// Contents of `meta.json` in a trace directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub provenance: String,
    pub times: Vec<f64>,
    pub evaluations_per_snapshot: usize,
    pub floor_activations: usize,
}

/// Writes `meta.json` and `snapshot_<i>.json` for every snapshot into `dir`
/// (created if missing). With a grid, `grid_<i>.csv` is written as well.
pub fn write_trace(trace: &EvolutionTrace, dir: &Path, grid: Option<&GridSpec>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = TraceMeta {
        provenance: trace.provenance.clone(),
        times: trace.times.clone(),
        evaluations_per_snapshot: trace.evaluations_per_snapshot,
        floor_activations: trace.floor_activations,
    };
    serde_json::to_writer_pretty(fs::File::create(dir.join("meta.json"))?, &meta)?;
    for (i, snap) in trace.snapshots.iter().enumerate() {
        snap.write_json(&dir.join(format!("snapshot_{i}.json")))?;
        if let Some(g) = grid {
            assemble_density(trace, i, g)?.write_csv(&dir.join(format!("grid_{i}.csv")))?;
        }
    }
    Ok(())
}

/// Reads a directory written by [`write_trace`].
pub fn read_trace(dir: &Path) -> Result<EvolutionTrace> {
    let meta: TraceMeta = serde_json::from_reader(fs::File::open(dir.join("meta.json"))?)?;
    let snapshots = (0..meta.times.len())
        .map(|i| MixtureModel::read_json(&dir.join(format!("snapshot_{i}.json"))))
        .collect::<Result<Vec<_>>>()?;
    if let Some(s) = snapshots.iter().find(|s| s.len() != snapshots[0].len()) {
        return Err(Error::invalid(
            "snapshots",
            format!("component count changes from {} to {}", snapshots[0].len(), s.len()),
        ));
    }
    Ok(EvolutionTrace {
        times: meta.times,
        snapshots,
        provenance: meta.provenance,
        evaluations_per_snapshot: meta.evaluations_per_snapshot,
        floor_activations: meta.floor_activations,
    })
}

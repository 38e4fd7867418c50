//! Declarative runner for the four bundled experiments.
//!
//! A run reads an [`ExperimentConfig`] (a preset overridden by a JSON
//! document), executes the pipeline, and writes into one directory:
//!
//! | file | contents |
//! |---|---|
//! | `manifest.json` | resolved config, version, seed |
//! | `summary.json` | headline metrics, byte-identical across repeated runs |
//! | `statistics.csv` | mixture mean and covariance per reported time |
//! | `*.csv` / `*.bin` | density grids (mixture, exact, KDE, error) |

mod config;
mod describe;
mod runners;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::mixture::{Axis, DensityGrid, GridSpec, MixtureModel};

pub use config::{
    deep_merge, preset, DuffingConfig, ExampleId, ExperimentConfig, FrameConfig, GridFormat, KdeConfig, OutputConfig,
    RepPointConfig, RepPointMethod, SliceConfig,
};
pub use describe::describe;

/// Settings that do not change results.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides the config's grid format.
    pub grid_format: Option<GridFormat>,
    /// Recorded in the manifest when known.
    pub git_revision: Option<String>,
}

/// Machine-readable outcome of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub example: ExampleId,
    pub seed: u64,
    pub components: usize,
    /// Dynamics evaluations per snapshot or step of the mixture method.
    pub evaluations_per_snapshot: usize,
    pub metrics: BTreeMap<String, Value>,
    pub artifacts: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    git_revision: Option<&'a str>,
    seed: u64,
    config: &'a ExperimentConfig,
}

/// Where a run writes: the explicit directory, else the config's, else
/// `<root>/<example>` (root defaulting to `meso-runs`).
pub fn resolve_output_dir(config: &ExperimentConfig, explicit: Option<&Path>, root: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| root.unwrap_or(Path::new("meso-runs")).join(config.example.as_str()))
}

/// Runs the experiment and writes its artifacts into `dir`.
pub fn run(config: &ExperimentConfig, dir: &Path, options: &RunOptions) -> Result<Summary> {
    config.validate()?;
    fs::create_dir_all(dir)?;
    let format = options.grid_format.unwrap_or(config.output.grid_format);
    let manifest = Manifest {
        tool: "meso",
        version: env!("CARGO_PKG_VERSION"),
        git_revision: options.git_revision.as_deref(),
        seed: config.seed,
        config,
    };
    serde_json::to_writer_pretty(fs::File::create(dir.join("manifest.json"))?, &manifest)?;
    let mut out = Artifacts {
        dir: dir.to_path_buf(),
        format,
        written: vec!["manifest.json".into()],
    };
    let (metrics, components, evaluations) = match config.example {
        ExampleId::Example1 | ExampleId::Example2 => runners::static_example(config, &mut out)?,
        ExampleId::Example3 => runners::duffing_example(config, &mut out)?,
        ExampleId::Example4 => runners::frame_example(config, &mut out)?,
    };
    out.written.push("summary.json".into());
    let summary = Summary {
        example: config.example,
        seed: config.seed,
        components,
        evaluations_per_snapshot: evaluations,
        metrics,
        artifacts: out.written,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(dir.join("summary.json"), text)?;
    Ok(summary)
}

pub(crate) struct Artifacts {
    dir: PathBuf,
    format: GridFormat,
    written: Vec<String>,
}

impl Artifacts {
    fn grid(&mut self, name: &str, grid: &DensityGrid) -> Result<()> {
        let file = match self.format {
            GridFormat::Csv => format!("{name}.csv"),
            GridFormat::Binary => format!("{name}.bin"),
        };
        match self.format {
            GridFormat::Csv => grid.write_csv(&self.dir.join(&file))?,
            GridFormat::Binary => grid.write_binary(&self.dir.join(&file))?,
        }
        self.written.push(file);
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }
}

/// Writes `time, mean_i…, cov_ij…` rows (upper triangle of the covariance).
pub(crate) fn write_statistics(path: &Path, rows: &[(f64, DVector<f64>, DMatrix<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = rows.first().map_or(0, |r| r.1.len());
    let mut header = vec!["time".to_string()];
    header.extend((1..=n).map(|i| format!("mean_x{i}")));
    for i in 1..=n {
        for j in i..=n {
            header.push(format!("cov_x{i}x{j}"));
        }
    }
    w.write_record(&header)?;
    for (t, mean, cov) in rows {
        let mut rec = vec![t.to_string()];
        rec.extend(mean.iter().map(f64::to_string));
        for i in 0..n {
            for j in i..n {
                rec.push(cov[(i, j)].to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `±5` mixture standard deviations around the mixture mean, 200 nodes per
/// axis.
pub fn auto_grid(model: &MixtureModel) -> Result<GridSpec> {
    let (mean, cov) = model.moments();
    let axes = (0..mean.len())
        .map(|j| {
            let s = cov[(j, j)].max(0.0).sqrt().max(1e-12 * (1.0 + mean[j].abs()));
            Axis::new(mean[j] - 5.0 * s, mean[j] + 5.0 * s, 200)
        })
        .collect();
    GridSpec::new(axes)
}

/// Same grid with `axis` pinned at `value`.
pub fn slice_grid(grid: &GridSpec, axis: usize, value: f64) -> Result<GridSpec> {
    let mut axes = grid.axes.clone();
    axes[axis] = Axis::point(value);
    GridSpec::new(axes)
}

/// Integrates a 2-D grid over the other axis, leaving the density of
/// `axis` on its nodes.
pub fn marginal(grid: &DensityGrid, axis: usize) -> Result<DensityGrid> {
    let spec = &grid.spec;
    let keep = spec.axes[axis];
    let other = spec.axes[1 - axis].step();
    let mut values = vec![0.0; keep.count];
    for (i, v) in grid.values.iter().enumerate() {
        values[spec.unravel(i)[axis]] += v * other;
    }
    DensityGrid::new(GridSpec::new(vec![keep])?, values)
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::GaussianComponent;

    #[test]
    fn marginal_of_product_density() {
        let spec = GridSpec::cube(2, -6.0, 6.0, 121).unwrap();
        let g = spec.evaluate(|x| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() / (2.0 * std::f64::consts::PI));
        let m = marginal(&g, 0).unwrap();
        assert!((m.integral() - 1.0).abs() < 1e-6);
        assert!((m.values[60] - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn auto_grid_spans_five_sigma() {
        let m = MixtureModel::new(vec![GaussianComponent::standard(2)]).unwrap();
        let g = auto_grid(&m).unwrap();
        assert_eq!(g.axes[0].min, -5.0);
        assert_eq!(g.axes[1].count, 200);
    }

    #[test]
    fn output_dir_precedence() {
        let mut c = ExperimentConfig::preset(ExampleId::Example1);
        let root = Path::new("/r");
        assert_eq!(resolve_output_dir(&c, None, Some(root)), Path::new("/r/example1"));
        c.output.dir = Some("cfg".into());
        assert_eq!(resolve_output_dir(&c, None, Some(root)), Path::new("cfg"));
        assert_eq!(
            resolve_output_dir(&c, Some(Path::new("cli")), Some(root)),
            Path::new("cli")
        );
    }
}

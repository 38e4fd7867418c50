use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::distribution::{DistributionSpec, Marginal};
use crate::dynamics::{DuffingParams, FrameOutput, FrameParams, DUFFING_NOISE_INTENSITY};
use crate::error::{Error, Result};
use crate::evolution::MarkovConfig;
use crate::mixture::{GridSpec, HomogeneousScale, KernelPolicy};
use crate::rep_points::Generator;

/// The four bundled experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleId {
    Example1,
    Example2,
    Example3,
    Example4,
}

impl ExampleId {
    pub const ALL: [ExampleId; 4] = [
        ExampleId::Example1,
        ExampleId::Example2,
        ExampleId::Example3,
        ExampleId::Example4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExampleId::Example1 => "example1",
            ExampleId::Example2 => "example2",
            ExampleId::Example3 => "example3",
            ExampleId::Example4 => "example4",
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExampleId::ALL.into_iter().find(|id| id.as_str() == s).ok_or_else(|| {
            Error::invalid(
                "example",
                format!("unknown example `{s}` (expected example1 to example4)"),
            )
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepPointMethod {
    Glp,
    Halton,
    Random,
    Kmeans,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepPointConfig {
    pub method: RepPointMethod,
    pub count: usize,
    /// Auxiliary sample size for k-means (default `200 K`).
    #[serde(default)]
    pub auxiliary_count: Option<usize>,
}

/// Grid slice with one axis pinned, used for mode counting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    pub axis: usize,
    pub value: f64,
}

/// Kernel density baseline. Without a fixed bandwidth the one with the
/// lowest grid MSE against the exact density is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdeConfig {
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub sweep: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuffingConfig {
    pub params: DuffingParams,
    pub noise_intensity: f64,
    pub markov: MarkovConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    #[serde(default)]
    pub params: FrameParams,
    /// Ground-motion CSV (`t,accel`); the built-in synthetic record when absent.
    #[serde(default)]
    pub record: Option<PathBuf>,
    #[serde(default)]
    pub output: FrameOutput,
    pub step: f64,
    /// Statistics are reported every `interval` seconds up to `end_time`.
    pub interval: f64,
    pub end_time: f64,
    /// Times at which full density grids are written.
    #[serde(default)]
    pub density_times: Vec<f64>,
    /// Size of the QMC comparison cloud (GLP points); 0 disables it.
    pub qmc_count: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridFormat {
    #[default]
    Csv,
    Binary,
}

impl FromStr for GridFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(GridFormat::Csv),
            "binary" => Ok(GridFormat::Binary),
            other => Err(Error::invalid(
                "grid_format",
                format!("expected csv or binary, got `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub grid_format: GridFormat,
}

/// Fully resolved experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub example: ExampleId,
    /// Seed for every stochastic stage (rep-points, EM, noise).
    pub seed: u64,
    pub input: DistributionSpec,
    pub rep_points: RepPointConfig,
    pub kernel: KernelPolicy,
    /// Density grid; when absent it is fitted to ±5 standard deviations of
    /// the output mixture with 200 nodes per axis.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub slice: Option<SliceConfig>,
    #[serde(default)]
    pub kde: Option<KdeConfig>,
    #[serde(default)]
    pub duffing: Option<DuffingConfig>,
    #[serde(default)]
    pub frame: Option<FrameConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Default configuration of an example, as JSON.
pub fn preset(id: ExampleId) -> Value {
    let glp = |count: usize| json!({ "method": "glp", "count": count });
    let ise = serde_json::to_value(KernelPolicy::Homogeneous {
        scale: HomogeneousScale::ise_optimal(),
    })
    .expect("kernel policy serializes");
    let std_normal = serde_json::to_value(DistributionSpec::standard_normal(2)).expect("spec serializes");
    let axis = |min: f64, max: f64, count: usize| json!({ "min": min, "max": max, "count": count });
    match id {
        ExampleId::Example1 => json!({
            "example": "example1",
            "seed": 2021,
            "input": std_normal,
            "rep_points": glp(89),
            "kernel": ise,
            "grid": { "axes": [axis(-15.0, 15.0, 601), axis(-15.0, 15.0, 601)] },
            "kde": { "sweep": [0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0] },
        }),
        ExampleId::Example2 => json!({
            "example": "example2",
            "seed": 2021,
            "input": std_normal,
            "rep_points": glp(89),
            "kernel": ise,
            "grid": { "axes": [axis(0.0, 4.0, 81), axis(-4.0, 4.0, 161)] },
            "slice": { "axis": 0, "value": 1.0 },
            "kde": { "bandwidth": 0.8 },
        }),
        ExampleId::Example3 => json!({
            "example": "example3",
            "seed": 2021,
            "input": serde_json::to_value(DistributionSpec::independent(vec![
                Marginal::Normal { mean: 0.0, std: 0.5f64.sqrt() },
                Marginal::Normal { mean: 0.0, std: 0.5f64.sqrt() },
            ])).expect("spec serializes"),
            "rep_points": glp(350),
            "kernel": ise,
            "grid": { "axes": [axis(-6.0, 6.0, 241), axis(-6.0, 6.0, 241)] },
            "duffing": {
                "params": DuffingParams::default(),
                "noise_intensity": DUFFING_NOISE_INTENSITY,
                "markov": {
                    "start_time": 0.0,
                    "dt": 0.015,
                    "end_time": 30.0,
                    "substeps": 3,
                    "noise_pairs": 20,
                    "snapshot_every": 100,
                },
            },
        }),
        ExampleId::Example4 => json!({
            "example": "example4",
            "seed": 2021,
            "input": serde_json::to_value(DistributionSpec::independent(vec![
                Marginal::Normal { mean: 3.0e10, std: 3.0e9 },
                Marginal::Normal { mean: 2.0, std: 0.2 },
            ])).expect("spec serializes"),
            "rep_points": glp(89),
            "kernel": ise,
            "frame": {
                "step": 0.005,
                "interval": 0.1,
                "end_time": 20.0,
                "density_times": [5.0, 10.0, 15.0],
                "qmc_count": 377,
            },
        }),
    }
}

/// Recursive merge: objects merge key by key; anything else in `patch`
/// replaces `base`. An object whose `kind`, `rule` or `method` tag differs
/// replaces the base object whole, since its fields belong to another
/// variant.
pub fn deep_merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            let retagged = ["kind", "rule", "method"]
                .iter()
                .any(|t| p.get(*t).is_some_and(|v| b.get(*t).is_some_and(|bv| bv != v)));
            if retagged {
                *b = p;
                return;
            }
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if !v.is_null() => deep_merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

impl ExperimentConfig {
    pub fn preset(id: ExampleId) -> Self {
        let config: Self = serde_json::from_value(preset(id)).expect("presets are valid");
        let seed = config.seed;
        config.with_seed(seed)
    }

    /// Parses a config document: its `example` names the preset, which the
    /// document's remaining fields override.
    pub fn from_json(text: &str) -> Result<Self> {
        let config = Self::parse(text)?;
        config.validate()?;
        Ok(config)
    }

    fn parse(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text)
            .map_err(|e| Error::Validation(vec![format!("config is not valid JSON: {e}")]))?;
        let id = match user.get("example").and_then(Value::as_str) {
            Some(s) => s
                .parse::<ExampleId>()
                .map_err(|e| Error::Validation(vec![format!("example: {e}")]))?,
            None => {
                return Err(Error::Validation(vec![
                    "example: missing (expected example1 to example4)".into(),
                ]))
            }
        };
        let mut merged = preset(id);
        deep_merge(&mut merged, user);
        let config: ExperimentConfig =
            serde_json::from_value(merged).map_err(|e| Error::Validation(vec![format!("schema: {e}")]))?;
        let seed = config.seed;
        Ok(config.with_seed(seed))
    }

    /// Sets the run seed and copies it into every stochastic stage: the
    /// ISE scan, the EM auxiliary sample and the Markov noise streams.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        match &mut self.kernel {
            KernelPolicy::Homogeneous {
                scale: HomogeneousScale::IseOptimal { seed: s, .. },
            } => *s = seed,
            KernelPolicy::Adaptive { em } => em.seed = seed,
            _ => {}
        }
        if let Some(d) = &mut self.duffing {
            d.markov.seed = seed;
        }
        self
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::parse(&text)?;
        if let Some(frame) = &mut config.frame {
            if let Some(record) = &frame.record {
                if record.is_relative() {
                    let base = path.parent().unwrap_or(Path::new("."));
                    frame.record = Some(base.join(record));
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Checks every field and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        if let Err(e) = self.input.validate() {
            check(false, format!("input: {e}"));
        } else {
            check(
                self.input.dimension() == 2,
                format!("input: expected a 2-dimensional input, got {}", self.input.dimension()),
            );
        }
        let k = self.rep_points.count;
        check(k >= 1, "rep_points.count: must be at least 1".into());
        if self.rep_points.method == RepPointMethod::Kmeans {
            if let Some(m) = self.rep_points.auxiliary_count {
                check(
                    m >= crate::rep_points::MIN_AUXILIARY_RATIO * k,
                    format!(
                        "rep_points.auxiliary_count: need at least {} for K = {k}",
                        crate::rep_points::MIN_AUXILIARY_RATIO * k
                    ),
                );
            }
        } else {
            check(
                self.rep_points.auxiliary_count.is_none(),
                "rep_points.auxiliary_count: only used by the kmeans method".into(),
            );
        }
        match &self.kernel {
            KernelPolicy::Homogeneous {
                scale: HomogeneousScale::Fixed { sigma },
            } => check(
                *sigma > 0.0 && sigma.is_finite(),
                format!("kernel.scale.sigma: must be positive, got {sigma}"),
            ),
            KernelPolicy::Homogeneous {
                scale: HomogeneousScale::IseOptimal { samples, .. },
            } => check(*samples > 0, "kernel.scale.samples: must be positive".into()),
            KernelPolicy::Adaptive { em } => {
                check(
                    em.tolerance_per_point > 0.0,
                    "kernel.em.tolerance_per_point: must be positive".into(),
                );
                check(
                    em.max_iterations > 0,
                    "kernel.em.max_iterations: must be positive".into(),
                );
            }
            _ => {}
        }
        if let Some(g) = &self.grid {
            if let Err(e) = g.validate() {
                check(false, format!("grid: {e}"));
            }
            check(
                g.dimension() == 2,
                format!("grid: expected 2 axes, got {}", g.dimension()),
            );
        } else {
            check(
                self.example == ExampleId::Example4,
                "grid: required for this example".into(),
            );
        }
        if let Some(s) = &self.slice {
            check(s.axis < 2, format!("slice.axis: must be 0 or 1, got {}", s.axis));
            check(s.value.is_finite(), "slice.value: must be finite".into());
        }
        if let Some(kde) = &self.kde {
            if let Some(h) = kde.bandwidth {
                check(
                    h > 0.0 && h.is_finite(),
                    format!("kde.bandwidth: must be positive, got {h}"),
                );
            } else {
                check(
                    !kde.sweep.is_empty(),
                    "kde.sweep: needs candidates when no bandwidth is fixed".into(),
                );
            }
            check(
                kde.sweep.iter().all(|&h| h > 0.0 && h.is_finite()),
                "kde.sweep: bandwidths must be positive".into(),
            );
            check(
                matches!(self.example, ExampleId::Example1 | ExampleId::Example2),
                "kde: only examples 1 and 2 have a KDE baseline".into(),
            );
        }
        match (&self.duffing, self.example) {
            (Some(d), ExampleId::Example3) => {
                let m = &d.markov;
                check(
                    d.noise_intensity >= 0.0,
                    "duffing.noise_intensity: must be non-negative".into(),
                );
                check(d.params.zeta > 0.0, "duffing.params.zeta: must be positive".into());
                check(d.params.omega0 > 0.0, "duffing.params.omega0: must be positive".into());
                check(
                    m.noise_pairs >= 1,
                    "duffing.markov.noise_pairs: must be at least 1".into(),
                );
                check(m.substeps >= 1, "duffing.markov.substeps: must be at least 1".into());
                check(
                    m.snapshot_every >= 1,
                    "duffing.markov.snapshot_every: must be at least 1".into(),
                );
                if let Err(e) = crate::dynamics::step_count(m.start_time, m.end_time, m.dt) {
                    check(false, format!("duffing.markov: {e}"));
                } else {
                    check(
                        m.end_time > m.start_time,
                        "duffing.markov.end_time: must exceed start_time".into(),
                    );
                }
            }
            (None, ExampleId::Example3) => check(false, "duffing: required for example3".into()),
            (Some(_), _) => check(false, "duffing: only used by example3".into()),
            (None, _) => {}
        }
        match (&self.frame, self.example) {
            (Some(f), ExampleId::Example4) => {
                if let Err(e) = f.params.validate() {
                    check(false, format!("frame.params: {e}"));
                }
                check(f.step > 0.0, "frame.step: must be positive".into());
                check(f.interval > 0.0, "frame.interval: must be positive".into());
                check(f.end_time > 0.0, "frame.end_time: must be positive".into());
                if f.step > 0.0 && f.interval > 0.0 {
                    check(
                        crate::dynamics::step_count(0.0, f.interval, f.step).is_ok(),
                        "frame.interval: must be a whole number of steps".into(),
                    );
                    check(
                        crate::dynamics::step_count(0.0, f.end_time, f.interval).is_ok(),
                        "frame.end_time: must be a whole number of intervals".into(),
                    );
                }
                for t in &f.density_times {
                    let on_grid = f.interval > 0.0
                        && *t > 0.0
                        && *t <= f.end_time
                        && crate::dynamics::step_count(0.0, *t, f.interval).is_ok();
                    check(
                        on_grid,
                        format!("frame.density_times: {t} is not one of the reported times"),
                    );
                }
                if let Some(r) = &f.record {
                    check(r.exists(), format!("frame.record: file {} does not exist", r.display()));
                }
                check(
                    f.output != FrameOutput::FullState || self.grid.is_none(),
                    "frame.output: density grids need a 1- or 2-dimensional output".into(),
                );
            }
            (None, ExampleId::Example4) => check(false, "frame: required for example4".into()),
            (Some(_), _) => check(false, "frame: only used by example4".into()),
            (None, _) => {}
        }
        if self.example == ExampleId::Example4 {
            check(self.slice.is_none(), "slice: not used by example4".into());
            if let Some(f) = &self.frame {
                check(
                    f.output == FrameOutput::TopDisplacementVelocity,
                    "frame.output: example4 reports top displacement and velocity".into(),
                );
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub(crate) fn generator(&self) -> Option<Generator> {
        match self.rep_points.method {
            RepPointMethod::Glp => Some(Generator::Glp),
            RepPointMethod::Halton => Some(Generator::Halton),
            RepPointMethod::Random => Some(Generator::Random),
            RepPointMethod::Kmeans => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for id in ExampleId::ALL {
            ExperimentConfig::preset(id).validate().unwrap();
        }
    }

    #[test]
    fn seed_reaches_every_stage() {
        let c = ExperimentConfig::from_json(r#"{"example": "example3", "seed": 5}"#).unwrap();
        assert_eq!(c.duffing.unwrap().markov.seed, 5);
        assert!(matches!(
            c.kernel,
            KernelPolicy::Homogeneous {
                scale: HomogeneousScale::IseOptimal { seed: 5, .. }
            }
        ));
    }

    #[test]
    fn override_merges_into_preset() {
        let c = ExperimentConfig::from_json(r#"{"example": "example1", "rep_points": {"count": 144}}"#).unwrap();
        assert_eq!(c.rep_points.count, 144);
        assert_eq!(c.rep_points.method, RepPointMethod::Glp);
        assert_eq!(c.seed, 2021);
    }

    #[test]
    fn retagged_variant_replaces() {
        let c = ExperimentConfig::from_json(r#"{"example": "example2", "kernel": {"kind": "inscribed"}}"#).unwrap();
        assert_eq!(c.kernel, KernelPolicy::Inscribed);
    }

    #[test]
    fn zero_components_named_in_error() {
        let err = ExperimentConfig::from_json(r#"{"example": "example1", "rep_points": {"count": 0}}"#).unwrap_err();
        assert!(err.to_string().contains("rep_points.count"), "{err}");
    }

    #[test]
    fn all_violations_reported() {
        let err = ExperimentConfig::from_json(
            r#"{"example": "example2", "rep_points": {"count": 0}, "kde": {"bandwidth": -1.0}, "slice": {"axis": 5, "value": 1.0}}"#,
        )
        .unwrap_err();
        let Error::Validation(list) = err else {
            panic!("expected validation error")
        };
        assert_eq!(list.len(), 3, "{list:?}");
    }

    #[test]
    fn unknown_example_and_field() {
        assert!(ExperimentConfig::from_json(r#"{"example": "example9"}"#).is_err());
        let err = ExperimentConfig::from_json(r#"{"example": "example1", "colour": 3}"#).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }
}

use std::collections::BTreeMap;
use std::sync::Arc;

use log::info;
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use super::{auto_grid, marginal, num, slice_grid, write_statistics, Artifacts, ExperimentConfig};
use crate::baselines::{
    count_modes, grid_error, kde_bandwidth_sweep, kde_density, propagate_samples, Norm, SampleCloud,
};
use crate::dynamics::{
    arias_window, duffing_model, linear_map_model, nonlinear_map_model, synthetic_record, AnalyticOracle,
    DynamicalModel, FrameFlow, GroundMotionRecord, StaticMap, SYNTHETIC_SEED,
};
use crate::error::{Error, Result};
use crate::evolution::{evolve_conservative, evolve_markov, evolve_static, write_trace};
use crate::mixture::{build_mixture, density_grid, BuildReport, DensityGrid, GridSpec, MixtureModel};
use crate::rep_points::{kmeans_rep_points, lds_rep_points, Generator, KMeansConfig, RepPointSet};

type Outcome = (BTreeMap<String, Value>, usize, usize);

fn input_mixture(config: &ExperimentConfig) -> Result<(RepPointSet, MixtureModel, BuildReport)> {
    let k = config.rep_points.count;
    let points = match config.generator() {
        Some(g) => lds_rep_points(g, k, &config.input, config.seed)?,
        None => kmeans_rep_points(
            &config.input,
            k,
            config.rep_points.auxiliary_count.unwrap_or(200 * k),
            config.seed,
            KMeansConfig::default(),
        )?,
    };
    let (mixture, report) = build_mixture(&points, &config.kernel)?;
    info!("input mixture: {} components, report {report:?}", mixture.len());
    Ok((points, mixture, report))
}

fn build_metrics(report: &BuildReport, metrics: &mut BTreeMap<String, Value>) {
    if let Some(s) = report.scale {
        metrics.insert("kernel_scale".into(), num(s));
    }
    metrics.insert("duplicates_removed".into(), json!(report.duplicates_removed));
    if let Some(em) = &report.em {
        metrics.insert("em_iterations".into(), json!(em.iterations));
        metrics.insert("em_converged".into(), json!(em.converged));
    }
}

/// Relative `L∞` (against the peak) and `L2` (against the norm) errors.
fn error_metrics(
    prefix: &str,
    est: &DensityGrid,
    exact: &DensityGrid,
    metrics: &mut BTreeMap<String, Value>,
) -> Result<()> {
    let zero = DensityGrid::new(exact.spec.clone(), vec![0.0; exact.values.len()])?;
    let linf = grid_error(est, exact, Norm::Linf)?;
    let l2 = grid_error(est, exact, Norm::L2)?;
    let l1 = grid_error(est, exact, Norm::L1)?;
    metrics.insert(format!("{prefix}linf_error"), num(linf));
    metrics.insert(format!("{prefix}linf_relative"), num(linf / exact.max()));
    metrics.insert(
        format!("{prefix}l2_relative"),
        num(l2 / grid_error(exact, &zero, Norm::L2)?),
    );
    metrics.insert(format!("{prefix}l1_error"), num(l1));
    Ok(())
}

fn difference(a: &DensityGrid, b: &DensityGrid) -> Result<DensityGrid> {
    DensityGrid::new(
        a.spec.clone(),
        a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
    )
}

/// Exact density as compared against a grid. The nonlinear-map density has
/// an inverse-square-root singularity on `x₁ = |x₂|`, so there the value at
/// a node is its average over the node's `x₂` cell, which has the closed form
/// `x₁ e^{−x₁²/2} [asin(b/x₁) − asin(a/x₁)] / (π (b − a))`.
fn exact_density<'a>(oracle: &'a AnalyticOracle, grid: &GridSpec) -> impl Fn(&DVector<f64>) -> f64 + Sync + 'a {
    let h = grid.axes.get(1).map_or(0.0, |a| a.step());
    move |x: &DVector<f64>| match oracle {
        AnalyticOracle::NonlinearMap if h > 0.0 => {
            let x1 = x[0];
            if x1 <= 0.0 {
                return 0.0;
            }
            let a = (x[1] - 0.5 * h).clamp(-x1, x1);
            let b = (x[1] + 0.5 * h).clamp(-x1, x1);
            x1 * (-0.5 * x1 * x1).exp() * ((b / x1).asin() - (a / x1).asin()) / (std::f64::consts::PI * h)
        }
        _ => oracle.density(x),
    }
}

/// Examples I and II: static maps of a standard normal input.
pub(super) fn static_example(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome> {
    let (map, oracle): (Arc<dyn StaticMap>, AnalyticOracle) = match config.example {
        super::ExampleId::Example1 => {
            let (m, o) = linear_map_model();
            (Arc::new(m), o)
        }
        _ => {
            let (m, o) = nonlinear_map_model();
            (Arc::new(m), o)
        }
    };
    let (points, input, report) = input_mixture(config)?;
    let output = evolve_static(&*map, &input)?;
    output.write_json(&out.path("mixture.json"))?;
    let grid = match &config.grid {
        Some(g) => g.clone(),
        None => auto_grid(&output)?,
    };
    let meso = density_grid(&output, &grid)?;
    let exact_at = exact_density(&oracle, &grid);
    let exact = grid.evaluate(&exact_at);
    out.grid("meso", &meso)?;
    out.grid("exact", &exact)?;
    out.grid("error", &difference(&meso, &exact)?)?;
    let (mean, cov) = output.moments();
    write_statistics(&out.path("statistics.csv"), &[(0.0, mean, cov)])?;

    let mut metrics = BTreeMap::new();
    build_metrics(&report, &mut metrics);
    error_metrics("", &meso, &exact, &mut metrics)?;
    metrics.insert("integral".into(), num(meso.integral()));
    let meso_x1 = marginal(&meso, 0)?;
    let exact_x1 = marginal(&exact, 0)?;
    metrics.insert("x1_meso_modes".into(), json!(count_modes(&meso_x1)));
    metrics.insert("x1_exact_modes".into(), json!(count_modes(&exact_x1)));

    let kde_grid = if let Some(kde) = &config.kde {
        let generator = config.generator().unwrap_or(Generator::Random);
        let cloud = SampleCloud::from_rep_points(&points, generator)?;
        let pushed = propagate_samples(&DynamicalModel::Static(map.clone()), &cloud, &[])?;
        let cloud = &pushed.clouds[0];
        let bandwidth = match kde.bandwidth {
            Some(h) => h,
            None => {
                let scores = kde_bandwidth_sweep(cloud, &kde.sweep, &grid, &exact_at)?;
                metrics.insert(
                    "kde_sweep".into(),
                    Value::Array(
                        scores
                            .iter()
                            .map(|s| json!({ "bandwidth": num(s.bandwidth), "mse": num(s.mse) }))
                            .collect(),
                    ),
                );
                scores
                    .iter()
                    .min_by(|a, b| a.mse.total_cmp(&b.mse))
                    .map(|s| s.bandwidth)
                    .expect("validated non-empty sweep")
            }
        };
        let g = kde_density(cloud, bandwidth, &grid)?;
        out.grid("kde", &g)?;
        metrics.insert("kde_bandwidth".into(), num(bandwidth));
        metrics.insert("x1_kde_modes".into(), json!(count_modes(&marginal(&g, 0)?)));
        error_metrics("kde_", &g, &exact, &mut metrics)?;
        Some((cloud.clone(), bandwidth))
    } else {
        None
    };

    if let Some(slice) = &config.slice {
        let sg = slice_grid(&grid, slice.axis, slice.value)?;
        let meso_s = density_grid(&output, &sg)?;
        let exact_s = sg.evaluate(&exact_at);
        out.grid("slice_meso", &meso_s)?;
        out.grid("slice_exact", &exact_s)?;
        metrics.insert("slice_meso_modes".into(), json!(count_modes(&meso_s)));
        metrics.insert("slice_exact_modes".into(), json!(count_modes(&exact_s)));
        if let Some((cloud, h)) = &kde_grid {
            let kde_s = kde_density(cloud, *h, &sg)?;
            out.grid("slice_kde", &kde_s)?;
            metrics.insert("slice_kde_modes".into(), json!(count_modes(&kde_s)));
        }
    }
    let evaluations = 2 * input.dimension() * input.len();
    Ok((metrics, input.len(), evaluations))
}

/// Example III: Markov evolution of the noisy Duffing oscillator.
pub(super) fn duffing_example(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome> {
    let d = config
        .duffing
        .as_ref()
        .ok_or_else(|| Error::invalid("duffing", "missing"))?;
    let (sde, oracle) = duffing_model(d.params, d.noise_intensity)?;
    let (_, input, report) = input_mixture(config)?;
    let trace = evolve_markov(&sde, &input, &d.markov)?;
    write_trace(&trace, &out.path("trace"), None)?;
    let rows: Vec<_> = trace
        .snapshots
        .iter()
        .zip(&trace.times)
        .map(|(s, &t)| {
            let (m, c) = s.moments();
            (t, m, c)
        })
        .collect();
    write_statistics(&out.path("statistics.csv"), &rows)?;

    let last = trace.last().expect("trace has the initial snapshot");
    let grid = match &config.grid {
        Some(g) => g.clone(),
        None => auto_grid(last)?,
    };
    let meso = density_grid(last, &grid)?;
    out.grid("meso_final", &meso)?;
    let mut metrics = BTreeMap::new();
    build_metrics(&report, &mut metrics);
    metrics.insert("final_time".into(), num(*trace.times.last().expect("non-empty")));
    metrics.insert("integral".into(), num(meso.integral()));
    metrics.insert("floor_activations".into(), json!(trace.floor_activations));
    let (_, cov) = last.moments();
    metrics.insert("x1_variance".into(), num(cov[(0, 0)]));
    metrics.insert("x2_variance".into(), num(cov[(1, 1)]));
    let meso_x1 = marginal(&meso, 0)?;
    out.grid("meso_final_x1", &meso_x1)?;
    metrics.insert("x1_modes".into(), json!(count_modes(&meso_x1)));
    if let Some(oracle) = oracle {
        let exact = grid.evaluate(|x| oracle.density(x));
        out.grid("exact_stationary", &exact)?;
        out.grid("error_final", &difference(&meso, &exact)?)?;
        error_metrics("", &meso, &exact, &mut metrics)?;
        metrics.insert("exact_x1_modes".into(), json!(count_modes(&marginal(&exact, 0)?)));
    }
    Ok((metrics, input.len(), trace.evaluations_per_snapshot))
}

/// Example IV: conservative evolution of the hysteretic frame, compared with
/// a QMC cloud through the same integrator.
pub(super) fn frame_example(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome> {
    let f = config
        .frame
        .as_ref()
        .ok_or_else(|| Error::invalid("frame", "missing"))?;
    let record = match &f.record {
        Some(p) => GroundMotionRecord::read_csv(p)?,
        None => synthetic_record(SYNTHETIC_SEED),
    };
    let flow = Arc::new(FrameFlow::new(f.params.clone(), record.clone(), f.output, f.step)?);
    let n = crate::dynamics::step_count(0.0, f.end_time, f.interval)?;
    let times: Vec<f64> = (1..=n).map(|i| i as f64 * f.interval).collect();
    let (_, input, report) = input_mixture(config)?;
    let trace = evolve_conservative(&*flow, &input, &times)?;
    write_trace(&trace, &out.path("trace"), None)?;
    let rows: Vec<(f64, DVector<f64>, DMatrix<f64>)> = trace
        .snapshots
        .iter()
        .zip(&times)
        .map(|(s, &t)| {
            let (m, c) = s.moments();
            (t, m, c)
        })
        .collect();
    write_statistics(&out.path("statistics.csv"), &rows)?;

    let mut metrics = BTreeMap::new();
    build_metrics(&report, &mut metrics);
    metrics.insert("floor_activations".into(), json!(trace.floor_activations));
    let (w0, w1) = arias_window(&record, 0.05, 0.95);
    metrics.insert("window_start".into(), num(w0));
    metrics.insert("window_end".into(), num(w1));
    let meso_std: Vec<f64> = rows.iter().map(|r| r.2[(0, 0)].max(0.0).sqrt()).collect();
    metrics.insert(
        "peak_top_displacement_std".into(),
        num(meso_std.iter().copied().fold(0.0, f64::max)),
    );

    if f.qmc_count > 0 {
        let cloud = SampleCloud::qmc(Generator::Glp, f.qmc_count, &config.input, config.seed)?;
        let pushed = propagate_samples(&DynamicalModel::Flow(flow.clone()), &cloud, &times)?;
        let qmc_rows: Vec<_> = pushed
            .clouds
            .iter()
            .zip(&times)
            .map(|(c, &t)| {
                let (m, cov) = c.moments();
                (t, m, cov)
            })
            .collect();
        write_statistics(&out.path("qmc_statistics.csv"), &qmc_rows)?;
        let rel: Vec<f64> = qmc_rows
            .iter()
            .zip(&meso_std)
            .filter(|(r, _)| r.0 >= w0 && r.0 <= w1)
            .map(|(r, &s)| {
                let q = r.2[(0, 0)].max(0.0).sqrt();
                (s - q).abs() / q
            })
            .collect();
        metrics.insert("qmc_samples".into(), json!(pushed.clouds[0].len()));
        metrics.insert("qmc_failures".into(), json!(pushed.failures));
        metrics.insert(
            "std_max_relative_error".into(),
            num(rel.iter().copied().fold(0.0, f64::max)),
        );
        metrics.insert(
            "std_mean_relative_error".into(),
            num(rel.iter().sum::<f64>() / rel.len().max(1) as f64),
        );
    }

    for &t in &f.density_times {
        let i = times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.max(1.0))
            .ok_or_else(|| Error::invalid("frame.density_times", format!("{t} is not a reported time")))?;
        let snap = &trace.snapshots[i];
        let grid: GridSpec = match &config.grid {
            Some(g) => g.clone(),
            None => auto_grid(snap)?,
        };
        out.grid(&format!("meso_t{t}"), &density_grid(snap, &grid)?)?;
    }
    Ok((metrics, input.len(), trace.evaluations_per_snapshot))
}

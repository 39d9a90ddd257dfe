use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::config::{ExperimentConfig, ExperimentKind};
use super::record::{write_atomic, Overrides, ResultRecord, ARTIFACT_VERSION};
use crate::annealed::{
    annealed_given_path_fk, annealed_given_path_field, annealed_given_path_mc, annealed_total_fk, annealed_total_mc,
    pascal_check, soft_range_identity_check, strategy_probabilities, FkWindow, Method, Model, StrategyInput,
    SurvivalEstimate,
};
use crate::error::{Error, Result};
use crate::gibbs::{
    conditioned_statistic, fluctuation_probabilities, sample_ensemble, sample_ensemble_auto, EnsembleSpec,
    EscalationPolicy, FluctuationSummary, Functional,
};
use crate::harness::{exp_moment_experiment, thin_tail_experiment, MomentFunctional};
use crate::par;
use crate::rng::RngStream;
use crate::walk::{sample_path_or_constant, LatticePath};

const FK_TIME_TOLERANCE: f64 = 1e-9;

/// `⌈t^{1/3}⌉` without floating-point round-off at perfect cubes.
pub fn ceil_cbrt(t: f64) -> i64 {
    let mut r = t.cbrt().round().max(1.0) as i64;
    while ((r as f64).powi(3)) < t {
        r += 1;
    }
    while r > 1 && (((r - 1) as f64).powi(3)) >= t {
        r -= 1;
    }
    r
}

/// Deterministic zig-zags for the Pascal check: amplitude `⌈i√t/n⌉`,
/// step intervals alternating 1 and 1/2.
pub fn pascal_paths(n: u32, t: f64) -> Result<Vec<LatticePath>> {
    (1..=n)
        .map(|i| {
            let amplitude = (i as f64 * t.sqrt() / n as f64).ceil() as i64;
            let step = if i % 2 == 1 { 1.0 } else { 0.5 };
            LatticePath::zigzag(amplitude, step, t)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct ModelEcho {
    kappa: f64,
    rho: f64,
    nu: f64,
    #[serde(with = "crate::serde_f64")]
    gamma: f64,
    walk_kernel: String,
    trap_kernel: String,
}

impl ModelEcho {
    fn new(m: &Model) -> Self {
        Self {
            kappa: m.kappa,
            rho: m.rho,
            nu: m.nu,
            gamma: m.gamma,
            walk_kernel: m.walk_kernel.name().to_string(),
            trap_kernel: m.trap_kernel.name().to_string(),
        }
    }
}

/// Payload and CSV side files produced by one experiment.
struct Output {
    payload: serde_json::Value,
    csv: Vec<(String, Vec<u8>)>,
}

fn csv_bytes<R: Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn grid_label(t: f64) -> String {
    format!("{t}").replace('.', "p")
}

/// Run one experiment and persist its record (and CSV side files) under
/// the output directory. Nothing is written if the run fails.
pub fn run(config: &ExperimentConfig, raw: serde_json::Value, overrides: &Overrides) -> Result<(ResultRecord, PathBuf)> {
    config.validate()?;
    let seed = overrides.seed.unwrap_or(config.seed);
    if let Some(w) = overrides.workers.or(config.workers) {
        par::set_workers(w);
    }
    let out_dir = overrides
        .out_dir
        .clone()
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let started = Instant::now();
    let output = execute(config, seed)?;
    let wall_time = started.elapsed().as_secs_f64();

    let kind = config.experiment.as_str();
    let stem = format!("{kind}-{seed}");
    let mut side_files = Vec::new();
    if config.write_csv() {
        for (suffix, bytes) in &output.csv {
            let name = format!("{stem}{suffix}.csv");
            write_atomic(&out_dir.join(&name), bytes)?;
            side_files.push(name);
        }
    }
    let record = ResultRecord {
        experiment: kind.to_string(),
        config: raw,
        overrides: overrides.clone(),
        artifact_version: ARTIFACT_VERSION.to_string(),
        seed,
        wall_time,
        payload: output.payload,
        side_files,
    };
    let path = out_dir.join(ResultRecord::file_name(kind, seed));
    write_atomic(&path, serde_json::to_string_pretty(&record)?.as_bytes())?;
    Ok((record, path))
}

/// Compute an experiment's payload without touching the file system.
pub fn execute_payload(config: &ExperimentConfig, seed: u64) -> Result<serde_json::Value> {
    execute(config, seed).map(|o| o.payload)
}

fn execute(config: &ExperimentConfig, seed: u64) -> Result<Output> {
    let model = config.model()?;
    let stream = RngStream::new(seed, config.experiment as u64);
    match config.experiment {
        ExperimentKind::SurvivalSweep => survival_sweep(config, &model, seed, stream),
        ExperimentKind::ConditionedPaths => conditioned_paths(config, &model, stream),
        ExperimentKind::ThinPoints => thin_points(config, &model, stream),
        ExperimentKind::Holes => holes(config, &model, stream),
        ExperimentKind::Identities => identities(config, &model, stream),
        ExperimentKind::StrategyBound => strategy_bound(config, &model, stream),
    }
}

#[derive(Debug, Clone, Serialize)]
struct SurvivalRow {
    method: Method,
    params: ModelEcho,
    t: f64,
    log_survival: f64,
    std_error: f64,
    neg_log_ci: (f64, f64),
    bias_bound: f64,
    replicas: u64,
    inner_replicas: u64,
    truncation_eps: f64,
    seed: u64,
    wall_time: f64,
}

fn survival_sweep(config: &ExperimentConfig, model: &Model, seed: u64, stream: RngStream) -> Result<Output> {
    let outer = config.replicas.outer.unwrap_or(200);
    let inner = config.replicas.inner.unwrap_or(1000);
    let fk = config.params.method == Some(Method::FeynmanKac);
    let mut rows = Vec::new();
    for (k, &t) in config.t_grid.iter().enumerate() {
        let started = Instant::now();
        let sub = stream.substream(k as u64);
        let total = if fk {
            annealed_total_fk(model, t, outer, config.window_eps, FK_TIME_TOLERANCE, sub)?
        } else {
            annealed_total_mc(model, t, outer, inner, sub)?
        };
        rows.push(SurvivalRow {
            method: total.estimate.method,
            params: ModelEcho::new(model),
            t,
            log_survival: total.estimate.log_value,
            std_error: total.estimate.log_std_error,
            neg_log_ci: total.neg_log_ci,
            bias_bound: total.bias_bound,
            replicas: total.outer_replicas,
            inner_replicas: total.inner_replicas,
            truncation_eps: total.estimate.truncation_eps,
            seed,
            wall_time: started.elapsed().as_secs_f64(),
        });
    }
    let csv = csv_bytes(
        &["t", "neg_log_Z", "se", "method"],
        // `+ 0.0` turns −0 into 0.
        rows.iter().map(|r| (r.t, -r.log_survival + 0.0, r.std_error, r.method.as_str())),
    )?;
    Ok(Output {
        payload: json!({ "rows": rows }),
        csv: vec![(String::new(), csv)],
    })
}

fn conditioned_paths(config: &ExperimentConfig, model: &Model, stream: RngStream) -> Result<Output> {
    let p = &config.params;
    let alpha = p.alpha.unwrap_or(0.3);
    let epsilon = p.epsilon.unwrap_or(0.01);
    let n_paths = config.replicas.paths.unwrap_or(1000) as usize;
    let mut rows = Vec::new();
    let mut csv = Vec::new();
    for (k, &t) in config.t_grid.iter().enumerate() {
        let sub = stream.substream(k as u64);
        let (ensemble, steps) = match p.weight_method {
            Some(weight_method) => {
                let spec = EnsembleSpec {
                    t,
                    n_paths,
                    fields_per_path: config.replicas.fields_per_path.unwrap_or(1),
                    weight_method,
                    window_eps: config.window_eps,
                };
                (sample_ensemble(model, &spec, sub)?, Vec::new())
            }
            None => {
                let policy = EscalationPolicy {
                    n_paths,
                    target_ess: p.target_ess.unwrap_or(50.0),
                    initial_fields: config.replicas.fields_per_path.unwrap_or(1),
                    max_paths: config.replicas.max_paths.unwrap_or(64_000) as usize,
                    window_eps: config.window_eps,
                    ..EscalationPolicy::default()
                };
                sample_ensemble_auto(model, t, &policy, sub)?
            }
        };
        let fl = fluctuation_probabilities(&ensemble, alpha, epsilon)?;
        let sup = conditioned_statistic(&ensemble, Functional::SupNorm)?;
        let holes = conditioned_statistic(&ensemble, Functional::HoleVolume)?;
        let summary = FluctuationSummary::new(&ensemble, &fl);
        rows.push(json!({
            "summary": summary,
            "small_threshold": fl.small_threshold,
            "large_threshold": fl.large_threshold,
            "weight_method": ensemble.weight_method,
            "n_paths": ensemble.len(),
            "low_ess": ensemble.low_ess,
            "escalation": steps,
            "sup_norm": sup,
            "hole_volume": holes,
        }));
        let f_gamma = if model.gamma.is_finite() && model.gamma > 0.0 { model.gamma } else { 1.0 };
        let mut bytes = Vec::new();
        ensemble.write_csv(&mut bytes, f_gamma)?;
        csv.push((format!("-t{}", grid_label(t)), bytes));
    }
    Ok(Output {
        payload: json!({ "alpha": alpha, "epsilon": epsilon, "rows": rows }),
        csv,
    })
}

fn thin_points(config: &ExperimentConfig, model: &Model, stream: RngStream) -> Result<Output> {
    let m = config.params.m.unwrap_or(1.0);
    let replicas = config.replicas.paths.unwrap_or(10_000);
    let mut reports = Vec::new();
    let mut csv = Vec::new();
    for (k, &t) in config.t_grid.iter().enumerate() {
        let r = thin_tail_experiment(&model.walk_kernel, model.kappa, t, m, model.gamma, replicas, stream.substream(k as u64))?;
        let mut bytes = Vec::new();
        r.write_csv(&mut bytes)?;
        csv.push((format!("-t{}", grid_label(t)), bytes));
        reports.push(json!({ "t": t, "m": m, "report": r }));
    }
    Ok(Output {
        payload: json!({ "reports": reports }),
        csv,
    })
}

fn holes(config: &ExperimentConfig, model: &Model, stream: RngStream) -> Result<Output> {
    let functional = match config.params.functional.as_deref() {
        Some("f_gamma") => MomentFunctional::FGamma(model.gamma),
        _ => MomentFunctional::HoleVolume,
    };
    let table = exp_moment_experiment(
        functional,
        &model.walk_kernel,
        model.kappa,
        config.params.c.unwrap_or(0.05),
        &config.t_grid,
        config.replicas.paths.unwrap_or(10_000),
        config.params.c_max.unwrap_or(10.0),
        stream,
    )?;
    let csv = csv_bytes(
        &["t", "lambda_t", "mean_exp", "mean_exp_se", "mean", "mean_se"],
        table.rows.iter().map(|r| (r.t, r.lambda_t, r.mean_exp, r.mean_exp_se, r.mean, r.mean_se)),
    )?;
    Ok(Output {
        payload: serde_json::to_value(&table)?,
        csv: vec![(String::new(), csv)],
    })
}

/// Worst relative gap of the soft-range identity over `n` sampled paths.
pub fn soft_range_identity_suite(model: &Model, t: f64, n: u64, stream: RngStream) -> Result<(f64, u64)> {
    let gaps = par::try_map(n as usize, |i| {
        let x = sample_path_or_constant(&model.walk_kernel, model.kappa, 0, t, &mut stream.substream(i as u64).rng())?;
        let (lhs, rhs) = soft_range_identity_check(&x, model.gamma)?;
        Ok::<_, Error>((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE))
    })?;
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    let failures = gaps.iter().filter(|&&g| g > 1e-12).count() as u64;
    Ok((worst, failures))
}

/// The three routes to `Z^γ_{t,X}` on one path with a shared window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossMethod {
    pub field_mc: SurvivalEstimate,
    pub range_mc: SurvivalEstimate,
    pub feynman_kac: SurvivalEstimate,
    pub agree: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn cross_method(
    model: &Model,
    x: &LatticePath,
    half_width: i64,
    window_eps: f64,
    field_replicas: u64,
    inner_replicas: u64,
    stream: RngStream,
) -> Result<CrossMethod> {
    let fk = annealed_given_path_fk(
        x,
        model.nu,
        model.rho,
        &model.trap_kernel,
        model.gamma,
        FkWindow::Fixed { half_width, epsilon: window_eps },
        1e-10,
    )?;
    let range = annealed_given_path_mc(x, model.nu, model.rho, &model.trap_kernel, model.gamma, inner_replicas, stream.substream(0))?;
    let field = annealed_given_path_field(
        x,
        model.nu,
        model.rho,
        &model.trap_kernel,
        model.gamma,
        Some(half_width),
        window_eps,
        field_replicas,
        stream.substream(1),
    )?;
    let agree = fk.agrees_with(&range, 3.0) && fk.agrees_with(&field, 3.0) && range.agrees_with(&field, 3.0);
    Ok(CrossMethod {
        field_mc: field,
        range_mc: range,
        feynman_kac: fk,
        agree,
    })
}

fn identities(config: &ExperimentConfig, model: &Model, stream: RngStream) -> Result<Output> {
    let t = config.t_grid.first().copied().unwrap_or(50.0);
    let n = config.replicas.paths.unwrap_or(1000);
    let (worst, failures) = soft_range_identity_suite(model, t, n, stream.substream(0))?;
    let mut payload = json!({
        "soft_range_identity": {
            "t": t,
            "paths": n,
            "worst_relative_gap": worst,
            "failures": failures,
            "passed": failures == 0,
        }
    });
    let count = config.params.pascal_paths.unwrap_or(0);
    if count > 0 {
        let paths = pascal_paths(count, t)?;
        let report = pascal_check(
            &paths,
            &model.trap_kernel,
            model.rho,
            model.gamma,
            config.replicas.inner.unwrap_or(10_000),
            stream.substream(1),
        )?;
        payload["pascal"] = serde_json::to_value(&report)?;
    }
    if let Some(tc) = config.params.cross_check_t {
        let x = sample_path_or_constant(&model.walk_kernel, model.kappa, 0, tc, &mut stream.substream(2).rng())?;
        let c = cross_method(
            model,
            &x,
            config.params.cross_check_half_width.unwrap_or(32),
            config.window_eps,
            config.replicas.outer.unwrap_or(20_000),
            config.replicas.inner.unwrap_or(4000),
            stream.substream(3),
        )?;
        payload["cross_method"] = serde_json::to_value(&c)?;
    }
    Ok(Output { payload, csv: Vec::new() })
}

fn strategy_bound(config: &ExperimentConfig, model: &Model, stream: RngStream) -> Result<Output> {
    let replicas = config.replicas.paths.unwrap_or(10_000);
    let compare = config.params.compare_total.unwrap_or(true);
    let mut rows = Vec::new();
    for (k, &t) in config.t_grid.iter().enumerate() {
        let radius = config.params.radius.unwrap_or_else(|| ceil_cbrt(t));
        let input = StrategyInput {
            radius,
            t,
            nu: model.nu,
            rho: model.rho,
            kappa: model.kappa,
            walk_kernel: &model.walk_kernel,
            trap_kernel: &model.trap_kernel,
        };
        let sub = stream.substream(k as u64);
        let report = strategy_probabilities(&input, replicas, sub.substream(0))?;
        let mut row = json!({ "t": t, "radius": radius, "report": report });
        if compare {
            let total = annealed_total_mc(
                model,
                t,
                config.replicas.outer.unwrap_or(200),
                config.replicas.inner.unwrap_or(1000),
                sub.substream(1),
            )?;
            let upper = total.estimate.value + 3.0 * total.estimate.std_error;
            let bound = report.log_lower_bound.exp();
            row["total"] = serde_json::to_value(&total)?;
            row["lower_bound_holds"] = json!(bound <= upper);
        }
        rows.push(row);
    }
    Ok(Output {
        payload: json!({ "rows": rows }),
        csv: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_roots() {
        assert_eq!(ceil_cbrt(64.0), 4);
        assert_eq!(ceil_cbrt(27.0), 3);
        assert_eq!(ceil_cbrt(28.0), 4);
        assert_eq!(ceil_cbrt(100.0), 5);
        assert_eq!(ceil_cbrt(0.5), 1);
    }

    #[test]
    fn pascal_amplitudes_reach_sqrt_t() {
        let p = pascal_paths(20, 100.0).unwrap();
        assert_eq!(p.len(), 20);
        assert_eq!(crate::walk::sup_norm(&p[19]), 10.0);
        assert_eq!(crate::walk::sup_norm(&p[0]), 1.0);
    }
}

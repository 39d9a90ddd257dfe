use serde::{Deserialize, Serialize};

use super::engine::{superposed_range, SiteScratch};
use super::estimate::{Method, SurvivalEstimate};
use crate::error::{invalid, Error, Result};
use crate::par;
use crate::rng::RngStream;
use crate::stats::{bootstrap_percentile, log_sum_exp, Summary};
use crate::trap::{generate_field, WindowPolicy};
use crate::walk::{check_horizon, sample_path_or_constant, sup_norm, JumpKernel, LatticePath};

/// Largest tolerated exp-of-mean bias factor before inner replicas are
/// increased.
pub const MAX_BIAS_FACTOR: f64 = 1.01;

/// Resamples for the `−ln Z_t` interval of [`annealed_total_mc`].
pub const TOTAL_BOOTSTRAP_RESAMPLES: usize = 1000;

/// Inner replica counts are never grown beyond this.
pub const MAX_INNER_REPLICAS: u64 = 1 << 24;

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("γ = {gamma} must lie in [0, ∞]")))
    }
}

pub(crate) fn check_nu(nu: f64) -> Result<()> {
    if nu >= 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("ν = {nu} must be finite and ≥ 0")))
    }
}

pub(crate) fn check_trap_rate(rho: f64) -> Result<()> {
    if rho >= 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("trap rate ρ = {rho} must be finite and ≥ 0")))
    }
}

/// Validate every parameter of a model.
pub(crate) fn check_model(model: &Model) -> Result<()> {
    check_nu(model.nu)?;
    check_trap_rate(model.rho)?;
    check_gamma(model.gamma)?;
    check_symmetric(&model.trap_kernel)?;
    if !(model.kappa >= 0.0 && model.kappa.is_finite()) {
        return Err(invalid(format!("walk rate κ = {} must be finite and ≥ 0", model.kappa)));
    }
    Ok(())
}

pub(crate) fn check_symmetric(kernel: &JumpKernel) -> Result<()> {
    if kernel.is_symmetric() {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!("trap kernel {} is not symmetric", kernel.name())))
    }
}

/// Monte Carlo estimate of `E^Y[R]`, where `R` is `|Range(Y+X)|` for
/// γ = ∞ and `Σ_x (1 − e^{−γ L^{Y+X}(x)})` otherwise.
pub fn expected_superposed_range(
    x_path: &LatticePath,
    rho: f64,
    trap_kernel: &JumpKernel,
    gamma: f64,
    replicas: u64,
    stream: RngStream,
) -> Summary {
    superposed_range_batch(x_path, rho, trap_kernel, gamma, 0, replicas, stream)
}

fn superposed_range_batch(
    x_path: &LatticePath,
    rho: f64,
    trap_kernel: &JumpKernel,
    gamma: f64,
    from: u64,
    to: u64,
    stream: RngStream,
) -> Summary {
    par::map_init(
        (to - from) as usize,
        SiteScratch::default,
        |scratch, i| {
            let mut rng = stream.substream(from + i as u64).rng();
            superposed_range(x_path, trap_kernel, rho, gamma, &mut rng, scratch)
        },
    )
    .into_iter()
    .collect()
}

/// `Z^γ_{t,X} ≈ exp{−ν m̂}` with `m̂` the Monte Carlo mean of the (soft)
/// range of `Y + X` over `inner_replicas` trap walks.
///
/// The clock of the soft range is integrated out per `Y` path. The
/// estimate is biased upward by at most the reported `bias_bound`; inner
/// replicas are increased until that factor is ≤ [`MAX_BIAS_FACTOR`].
pub fn annealed_given_path_mc(
    x_path: &LatticePath,
    nu: f64,
    rho: f64,
    trap_kernel: &JumpKernel,
    gamma: f64,
    inner_replicas: u64,
    stream: RngStream,
) -> Result<SurvivalEstimate> {
    check_nu(nu)?;
    check_trap_rate(rho)?;
    check_gamma(gamma)?;
    check_symmetric(trap_kernel)?;
    if inner_replicas < 2 {
        return Err(invalid("annealed_given_path_mc needs at least 2 inner replicas"));
    }
    let method = if gamma.is_infinite() {
        Method::HardRangeMc
    } else {
        Method::SoftRangeMc
    };
    if nu == 0.0 || gamma == 0.0 || x_path.horizon() == 0.0 {
        let mut e = SurvivalEstimate::exact_one(method);
        e.replicas = inner_replicas;
        e.bias_bound = Some(1.0);
        return Ok(e);
    }

    let mut n = inner_replicas;
    let mut summary = superposed_range_batch(x_path, rho, trap_kernel, gamma, 0, n, stream);
    let ln_cap = MAX_BIAS_FACTOR.ln();
    let needed = |s: &Summary| (nu * nu * s.variance() / (2.0 * ln_cap)).ceil() as u64;
    while nu * nu * summary.variance() / (2.0 * n as f64) > ln_cap && n < MAX_INNER_REPLICAS {
        let target = needed(&summary).clamp(n + 1, MAX_INNER_REPLICAS);
        let more = superposed_range_batch(x_path, rho, trap_kernel, gamma, n, target, stream);
        summary.merge(&more);
        n = target;
    }
    let mut e = SurvivalEstimate::from_log(method, -nu * summary.mean, nu * summary.std_error(), n);
    e.bias_bound = Some((nu * nu * summary.variance() / (2.0 * n as f64)).exp());
    Ok(e)
}

/// `Z^γ_{t,X}` as the average exact quenched weight over `replicas`
/// independent trap fields. The window is the smallest certified one, or
/// `[-half_width, half_width]` when given (which must itself be certified).
#[allow(clippy::too_many_arguments)]
pub fn annealed_given_path_field(
    x_path: &LatticePath,
    nu: f64,
    rho: f64,
    trap_kernel: &JumpKernel,
    gamma: f64,
    half_width: Option<i64>,
    epsilon: f64,
    replicas: u64,
    stream: RngStream,
) -> Result<SurvivalEstimate> {
    check_nu(nu)?;
    check_gamma(gamma)?;
    if replicas < 2 {
        return Err(invalid("field Monte Carlo needs at least 2 replicas"));
    }
    let base = sup_norm(x_path) as i64;
    let policy = match half_width {
        Some(w) => WindowPolicy::fixed(base, w, nu, rho, trap_kernel, x_path.horizon(), epsilon)?,
        None => WindowPolicy::certify(base, nu, rho, trap_kernel, x_path.horizon(), epsilon)?,
    };
    let weights = par::try_map(replicas as usize, |i| {
        let mut field = generate_field(nu, rho, trap_kernel, policy, x_path.horizon(), stream.substream(i as u64))?;
        field.quenched_weight(x_path, gamma).map(|w| w.value)
    })?;
    let s: Summary = weights.into_iter().collect();
    let mut e = SurvivalEstimate {
        method: Method::FieldMc,
        value: s.mean,
        std_error: s.std_error(),
        log_value: s.mean.ln(),
        log_std_error: if s.mean > 0.0 { s.std_error() / s.mean } else { f64::INFINITY },
        replicas,
        truncation_eps: policy.certified_bound,
        bias_bound: None,
    };
    if nu == 0.0 || gamma == 0.0 {
        e = SurvivalEstimate::exact_one(Method::FieldMc);
        e.replicas = replicas;
    }
    Ok(e)
}

/// Model parameters shared by the annealed estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub walk_kernel: JumpKernel,
    pub kappa: f64,
    pub nu: f64,
    pub rho: f64,
    pub trap_kernel: JumpKernel,
    pub gamma: f64,
}

impl Model {
    /// Nearest-neighbour walks and traps with `κ = ρ = ν = 1`.
    pub fn ssrw(gamma: f64) -> Self {
        Self {
            walk_kernel: JumpKernel::ssrw(),
            kappa: 1.0,
            nu: 1.0,
            rho: 1.0,
            trap_kernel: JumpKernel::ssrw(),
            gamma,
        }
    }
}

/// Estimate of the fully annealed `Z_t^γ = E^X[Z^γ_{t,X}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalSurvival {
    pub t: f64,
    pub estimate: SurvivalEstimate,
    pub neg_log_z: f64,
    /// 95% bootstrap percentile interval for `−ln Z_t` over outer paths.
    pub neg_log_ci: (f64, f64),
    /// Largest per-path exp-of-mean bias factor.
    pub bias_bound: f64,
    pub outer_replicas: u64,
    pub inner_replicas: u64,
}

/// Outer average over free `X` paths of [`annealed_given_path_mc`].
pub fn annealed_total_mc(
    model: &Model,
    t: f64,
    outer_replicas: u64,
    inner_replicas: u64,
    stream: RngStream,
) -> Result<TotalSurvival> {
    check_horizon(t)?;
    check_model(model)?;
    if outer_replicas < 2 {
        return Err(invalid("annealed_total_mc needs at least 2 outer replicas"));
    }
    let per_path = par::try_map(outer_replicas as usize, |i| {
        let i = i as u64;
        let x = sample_path_or_constant(
            &model.walk_kernel,
            model.kappa,
            0,
            t,
            &mut stream.substream(2 * i).rng(),
        )?;
        annealed_given_path_mc(
            &x,
            model.nu,
            model.rho,
            &model.trap_kernel,
            model.gamma,
            inner_replicas,
            stream.substream(2 * i + 1),
        )
    })?;
    let logs: Vec<f64> = per_path.iter().map(|e| e.log_value).collect();
    let method = if model.gamma.is_infinite() {
        Method::HardRangeMc
    } else {
        Method::SoftRangeMc
    };
    let mut total = total_from_logs(method, t, &logs, stream.substream(u64::MAX));
    let bias_bound = per_path
        .iter()
        .filter_map(|e| e.bias_bound)
        .fold(1.0, f64::max);
    total.estimate.bias_bound = Some(bias_bound);
    total.bias_bound = bias_bound;
    total.inner_replicas = per_path.iter().map(|e| e.replicas).max().unwrap_or(inner_replicas);
    Ok(total)
}

/// Average per-path survival given on the log scale: `ln Z = ln mean e^{l_i}`
/// with a delta-method standard error and a bootstrap interval for `−ln Z`.
pub(crate) fn total_from_logs(method: Method, t: f64, logs: &[f64], stream: RngStream) -> TotalSurvival {
    let n = logs.len() as f64;
    let log_z = log_sum_exp(logs) - n.ln();
    let rel: Summary = logs.iter().map(|l| (l - log_z).exp()).collect();
    let estimate = SurvivalEstimate::from_log(method, log_z, rel.std_error(), logs.len() as u64);
    let mut rng = stream.rng();
    let mut buf = Vec::with_capacity(logs.len());
    let neg_log_ci = bootstrap_percentile(logs.len(), TOTAL_BOOTSTRAP_RESAMPLES, 0.05, &mut rng, |idx| {
        buf.clear();
        buf.extend(idx.iter().map(|&i| logs[i]));
        -(log_sum_exp(&buf) - n.ln())
    });
    TotalSurvival {
        t,
        estimate,
        neg_log_z: -log_z,
        neg_log_ci,
        bias_bound: 1.0,
        outer_replicas: logs.len() as u64,
        inner_replicas: 0,
    }
}

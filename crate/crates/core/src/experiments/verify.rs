use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::run::{ceil_cbrt, cross_method, pascal_paths, soft_range_identity_suite};
use crate::annealed::{
    annealed_given_path_fk, annealed_given_path_field, annealed_given_path_mc, annealed_total_fk, annealed_total_mc,
    pascal_check, strategy_probabilities, FkWindow, Model, StrategyInput, TotalSurvival,
};
use crate::error::Result;
use crate::gibbs::{
    conditioned_statistic, fluctuation_probabilities, sample_ensemble, sample_ensemble_auto, EnsembleSpec,
    EscalationPolicy, Fluctuations, Functional, Weighted,
};
use crate::harness::{exp_moment_experiment, local_time_zero_check, thin_tail_experiment, MomentFunctional};
use crate::rng::RngStream;
use crate::walk::{hole_volume, sample_path, JumpKernel};

pub const DEFAULT_SEED: u64 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Fast,
    Full,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fast" => Ok(Suite::Fast),
            "full" => Ok(Suite::Full),
            other => Err(format!("unknown suite {other:?} (fast|full)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    /// Short human-readable summary of the measured values.
    pub measured: String,
    pub details: serde_json::Value,
    pub runtime: f64,
    pub budget: f64,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {:<28} {}  {}  ({:.1}s of {:.0}s)",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.measured,
            self.runtime,
            self.budget
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub seed: u64,
    pub outcomes: Vec<CriterionOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> Vec<&CriterionOutcome> {
        self.outcomes.iter().filter(|o| !o.passed).collect()
    }
}

/// A criterion's verdict before timing is attached.
#[derive(Debug, Clone)]
pub struct Check {
    pub passed: bool,
    pub measured: String,
    pub details: serde_json::Value,
}

fn timed(id: u32, name: &str, budget: f64, f: impl FnOnce() -> Result<Check>) -> CriterionOutcome {
    let started = Instant::now();
    let check = f().unwrap_or_else(|e| Check {
        passed: false,
        measured: format!("error: {e}"),
        details: json!({ "error": e.to_string() }),
    });
    let runtime = started.elapsed().as_secs_f64();
    CriterionOutcome {
        id,
        name: name.to_string(),
        passed: check.passed && runtime <= budget,
        measured: check.measured,
        details: check.details,
        runtime,
        budget,
    }
}

fn criterion_stream(seed: u64, id: u32) -> RngStream {
    RngStream::new(seed, 0x5eed_0000 + id as u64)
}

/// Run the acceptance criteria. The fast suite skips criterion 9.
pub fn verify(suite: Suite, seed: u64) -> VerifyReport {
    verify_with(suite, seed, |_| {})
}

type Job = (u32, &'static str, f64, fn(RngStream) -> Result<Check>);

const JOBS: [Job; 10] = [
    (1, "annealed decay constant", 600.0, |s| decay_constant_check(DECAY_CONSTANT, s)),
    (2, "cross-method agreement", 120.0, cross_method_check),
    (3, "soft-range identity", 30.0, identity_check),
    (4, "pascal principle", 180.0, pascal_principle_check),
    (5, "strategy lower bound", 300.0, strategy_check),
    (6, "local time at zero", 180.0, local_time_check),
    (7, "hole volume moments", 300.0, hole_moment_check),
    (8, "thin point tail", 180.0, thin_tail_check),
    (9, "fluctuation window decay", 1800.0, fluctuation_check),
    (10, "trivial exactness", 30.0, exactness_check),
];

/// Run a single criterion by number.
pub fn run_criterion(id: u32, seed: u64) -> Option<CriterionOutcome> {
    let &(id, name, budget, f) = JOBS.iter().find(|j| j.0 == id)?;
    Some(timed(id, name, budget, || f(criterion_stream(seed, id))))
}

/// As [`verify`], calling `progress` after each criterion.
pub fn verify_with(suite: Suite, seed: u64, mut progress: impl FnMut(&CriterionOutcome)) -> VerifyReport {
    let mut outcomes = Vec::new();
    for id in JOBS.iter().map(|j| j.0) {
        if id == 9 && suite == Suite::Fast {
            continue;
        }
        let o = run_criterion(id, seed).expect("known criterion");
        progress(&o);
        outcomes.push(o);
    }
    VerifyReport { suite, seed, outcomes }
}

/// `√(8/π)`, the decay constant for `ρ = ν = 1`.
pub const DECAY_CONSTANT: f64 = 1.595_769_121_605_730_7;

/// `(−ln Z_t)/√t` at `t ∈ {32, 64, 128}` must increase and end inside
/// `[0.8, 1.0]·target`.
pub fn decay_constant_check(target: f64, stream: RngStream) -> Result<Check> {
    let model = Model::ssrw(f64::INFINITY);
    let grid = [32.0, 64.0, 128.0];
    let mut totals: Vec<TotalSurvival> = Vec::new();
    for (k, &t) in grid.iter().enumerate() {
        totals.push(annealed_total_mc(&model, t, 500, 4000, stream.substream(k as u64))?);
    }
    let ratios: Vec<f64> = totals.iter().map(|r| r.neg_log_z / r.t.sqrt()).collect();
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    let last = ratios[2];
    let window = (0.8 * target, target);
    let in_window = last >= window.0 && last <= window.1;
    Ok(Check {
        passed: increasing && in_window,
        measured: format!(
            "ratios {:.4} {:.4} {:.4}; increasing={increasing}; t=128 in [{:.3}, {:.3}]={in_window}",
            ratios[0], ratios[1], ratios[2], window.0, window.1
        ),
        details: json!({ "t": grid, "ratio": ratios, "target": target, "totals": totals }),
    })
}

fn cross_method_check(stream: RngStream) -> Result<Check> {
    let x = sample_path(&JumpKernel::ssrw(), 1.0, 0, 8.0, &mut stream.substream(0).rng())?;
    let mut parts = Vec::new();
    let mut details = Vec::new();
    let mut passed = true;
    for (k, gamma) in [0.5, f64::INFINITY].into_iter().enumerate() {
        let model = Model::ssrw(gamma);
        let c = cross_method(&model, &x, 32, 1e-6, 20_000, 4000, stream.substream(1 + k as u64))?;
        passed &= c.agree;
        parts.push(format!(
            "γ={gamma}: fk {:.6} range {:.6}±{:.6} field {:.6}±{:.6}",
            c.feynman_kac.value, c.range_mc.value, c.range_mc.std_error, c.field_mc.value, c.field_mc.std_error
        ));
        details.push(json!({ "gamma": if gamma.is_finite() { json!(gamma) } else { json!("inf") }, "estimates": c }));
    }
    Ok(Check { passed, measured: parts.join("; "), details: json!(details) })
}

fn identity_check(stream: RngStream) -> Result<Check> {
    let (worst, failures) = soft_range_identity_suite(&Model::ssrw(1.0), 50.0, 1000, stream)?;
    Ok(Check {
        passed: failures == 0,
        measured: format!("worst relative gap {worst:.2e} over 1000 paths"),
        details: json!({ "worst_relative_gap": worst, "failures": failures }),
    })
}

fn pascal_principle_check(stream: RngStream) -> Result<Check> {
    let paths = pascal_paths(20, 100.0)?;
    let mut passed = true;
    let mut parts = Vec::new();
    let mut reports = Vec::new();
    for (k, gamma) in [1.0, f64::INFINITY].into_iter().enumerate() {
        let r = pascal_check(&paths, &JumpKernel::ssrw(), 1.0, gamma, 10_000, stream.substream(k as u64))?;
        let min_z = r.rows.iter().map(|r| r.z).fold(f64::INFINITY, f64::min);
        let top = r.rows.last().map(|r| r.z).unwrap_or(0.0);
        passed &= !r.any_violation() && top > 3.0;
        parts.push(format!("γ={gamma}: min z {min_z:.2}, largest amplitude z {top:.1}"));
        reports.push(r);
    }
    Ok(Check { passed, measured: parts.join("; "), details: json!(reports) })
}

fn strategy_check(stream: RngStream) -> Result<Check> {
    let ssrw = JumpKernel::ssrw();
    let input = |radius, t| StrategyInput {
        radius,
        t,
        nu: 1.0,
        rho: 1.0,
        kappa: 1.0,
        walk_kernel: &ssrw,
        trap_kernel: &ssrw,
    };
    let exact = (-5.0f64).exp();
    let small = strategy_probabilities(&input(2, 10.0), 200, stream.substream(0))?;
    let p_e_ok = ((small.p_e - exact) / exact).abs() <= 1e-12;

    let mid = strategy_probabilities(&input(ceil_cbrt(100.0), 100.0), 10_000, stream.substream(1))?;
    let identity_ok = mid.range_identity_holds(3.0);

    let t = 64.0;
    let low = strategy_probabilities(&input(ceil_cbrt(t), t), 10_000, stream.substream(2))?;
    let total = annealed_total_mc(&Model::ssrw(f64::INFINITY), t, 200, 2000, stream.substream(3))?;
    let bound = low.log_lower_bound.exp();
    let upper = total.estimate.value + 3.0 * total.estimate.std_error;
    let bound_ok = bound <= upper;
    Ok(Check {
        passed: p_e_ok && identity_ok && bound_ok,
        measured: format!(
            "P_E={:.6e} (exact {exact:.6e}); −ln P_F {:.3} vs range {:.3}±{:.3}; bound {:.3e} ≤ Z {:.3e}+3SE: {bound_ok}",
            small.p_e,
            mid.p_f.neg_log(),
            mid.range_route.0,
            mid.range_route.1,
            bound,
            total.estimate.value
        ),
        details: json!({ "p_e": small, "identity": mid, "lower_bound": low, "total": total }),
    })
}

fn local_time_check(stream: RngStream) -> Result<Check> {
    let r = local_time_zero_check(&JumpKernel::ssrw(), 1.0, 1.0, 400.0, 1_000_000, stream)?;
    Ok(Check {
        passed: (0.85..=1.15).contains(&r.ratio),
        measured: format!("ratio {:.4} ± {:.4}", r.ratio, r.ratio_se),
        details: json!(r),
    })
}

fn hole_moment_check(stream: RngStream) -> Result<Check> {
    let table = exp_moment_experiment(
        MomentFunctional::HoleVolume,
        &JumpKernel::two_step(),
        1.0,
        0.05,
        &[1e2, 1e3, 1e4],
        20_000,
        10.0,
        stream,
    )?;
    let ci = table.log_fit.map(|f| f.quadratic_ci);
    let ci_has_zero = ci.is_some_and(|(lo, hi)| lo <= 0.0 && 0.0 <= hi);
    let bounded = table.max_estimate <= 10.0 && !table.exploded;
    let means: Vec<String> = table.rows.iter().map(|r| format!("{:.3}", r.mean)).collect();
    Ok(Check {
        passed: bounded && ci_has_zero,
        measured: format!(
            "max E[exp(λG)] {:.4}; E[G] {}; quadratic CI {}",
            table.max_estimate,
            means.join(" "),
            ci.map_or("none".to_string(), |(a, b)| format!("({a:.4}, {b:.4})"))
        ),
        details: json!(table),
    })
}

fn thin_tail_check(stream: RngStream) -> Result<Check> {
    let r = thin_tail_experiment(&JumpKernel::ssrw(), 1.0, 100.0, 1.0, 1.0, 100_000, stream)?;
    Ok(Check {
        passed: r.verdict,
        measured: format!(
            "c {:.3}, slope CI ({:.3}, {:.3}), {} thresholds",
            r.fitted_c,
            r.slope_ci.0,
            r.slope_ci.1,
            r.thresholds.len()
        ),
        details: json!(r),
    })
}

/// Nonincreasing along the grid up to `k` combined standard errors.
pub fn nonincreasing_within(values: &[Weighted], k: f64) -> bool {
    values
        .windows(2)
        .all(|w| w[1].value <= w[0].value + k * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt())
}

fn fluctuation_check(stream: RngStream) -> Result<Check> {
    let model = Model::ssrw(f64::INFINITY);
    let policy = EscalationPolicy::default();
    let grid = [100.0, 400.0, 1600.0];
    let mut rows: Vec<(Fluctuations, f64, usize)> = Vec::new();
    let mut details = Vec::new();
    for (k, &t) in grid.iter().enumerate() {
        let (e, steps) = sample_ensemble_auto(&model, t, &policy, stream.substream(k as u64))?;
        let fl = fluctuation_probabilities(&e, 0.3, 0.01)?;
        details.push(json!({ "t": t, "ess": e.ess, "n_paths": e.len(), "fluctuations": fl, "escalation": steps }));
        rows.push((fl, e.ess, e.len()));
    }
    let small: Vec<Weighted> = rows.iter().map(|r| r.0.p_small).collect();
    let large: Vec<Weighted> = rows.iter().map(|r| r.0.p_large).collect();
    let ess_ok = rows.iter().all(|r| r.1 >= policy.target_ess);
    let passed = ess_ok && nonincreasing_within(&small, 2.0) && nonincreasing_within(&large, 2.0);
    let fmt = |v: &[Weighted]| v.iter().map(|w| format!("{:.3}", w.value)).collect::<Vec<_>>().join(" ");
    let ess: Vec<String> = rows.iter().map(|r| format!("{:.0}/{}", r.1, r.2)).collect();
    Ok(Check {
        passed,
        measured: format!("p_small {}; p_large {}; ess/paths {}", fmt(&small), fmt(&large), ess.join(" ")),
        details: json!(details),
    })
}

fn exactness_check(stream: RngStream) -> Result<Check> {
    let ssrw = JumpKernel::ssrw();
    let mut failures = Vec::new();
    let x = sample_path(&ssrw, 1.0, 0, 10.0, &mut stream.substream(0).rng())?;
    for (nu, gamma) in [(0.0, f64::INFINITY), (0.0, 1.0), (1.0, 0.0)] {
        let model = Model { nu, ..Model::ssrw(gamma) };
        let ests = [
            annealed_given_path_mc(&x, nu, 1.0, &ssrw, gamma, 100, stream.substream(1))?,
            annealed_given_path_field(&x, nu, 1.0, &ssrw, gamma, None, 1e-6, 10, stream.substream(2))?,
            annealed_given_path_fk(&x, nu, 1.0, &ssrw, gamma, FkWindow::Certified { epsilon: 1e-6 }, 1e-9)?,
            annealed_total_mc(&model, 10.0, 20, 100, stream.substream(3))?.estimate,
            annealed_total_fk(&model, 10.0, 5, 1e-6, 1e-9, stream.substream(4))?.estimate,
        ];
        for e in ests {
            if e.value != 1.0 || e.log_value != 0.0 {
                failures.push(format!("ν={nu} γ={gamma} {}: {}", e.method.as_str(), e.value));
            }
        }
    }
    let mut max_holes = 0;
    for i in 0..1000 {
        let p = sample_path(&ssrw, 1.0, 0, 100.0, &mut stream.substream(10 + i).rng())?;
        max_holes = max_holes.max(hole_volume(&p));
    }
    if max_holes != 0 {
        failures.push(format!("nearest-neighbour hole volume {max_holes}"));
    }
    let spec = EnsembleSpec {
        t: 20.0,
        n_paths: 200,
        fields_per_path: 1,
        weight_method: crate::annealed::Method::FeynmanKac,
        window_eps: 1e-6,
    };
    let e = sample_ensemble(&Model { nu: 1.0, ..Model::ssrw(1.0) }, &spec, stream.substream(5))?;
    let one = conditioned_statistic(&e, Functional::One)?;
    if one.value != 1.0 {
        failures.push(format!("constant-1 statistic {}", one.value));
    }
    Ok(Check {
        passed: failures.is_empty(),
        measured: if failures.is_empty() { "all exact".into() } else { failures.join("; ") },
        details: json!({ "failures": failures }),
    })
}

use serde::{Deserialize, Serialize};

use super::estimate::{Method, SurvivalEstimate};
use super::mc::{check_nu, check_symmetric, check_trap_rate};
use crate::error::{invalid, Result};
use crate::par;
use crate::rng::RngStream;
use crate::stats::{wilson_se, Summary};
use crate::trap::WindowPolicy;
use crate::walk::{check_horizon, range_stats, sample_path_or_constant, JumpKernel, JumpStream};

/// Outside traps are simulated out to the distance where the expected
/// number of late arrivals is below this.
const OUTSIDE_CUTOFF: f64 = 1e-8;

/// Model inputs for the ball strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyInput<'a> {
    pub radius: i64,
    pub t: f64,
    pub nu: f64,
    pub rho: f64,
    pub kappa: f64,
    pub walk_kernel: &'a JumpKernel,
    pub trap_kernel: &'a JumpKernel,
}

/// Probabilities of the three events of the ball strategy: the ball `B_R`
/// starts empty of traps (`E`), no outside trap enters it by `t` (`F`),
/// and `X` stays inside it (`G`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub radius: i64,
    pub t: f64,
    pub p_e: f64,
    pub log_p_e: f64,
    pub p_f: SurvivalEstimate,
    pub p_g: SurvivalEstimate,
    /// `ln(P_E·P_F·P_G)` and its standard error.
    #[serde(with = "crate::serde_f64")]
    pub log_lower_bound: f64,
    #[serde(with = "crate::serde_f64")]
    pub log_lower_bound_se: f64,
    /// Range route: `ν(E|Range(Y)| − 1)` with its standard error. Equal to
    /// `−ln P_F` for nearest-neighbour traps.
    pub range_route: (f64, f64),
    /// Mean hole volume of a trap path: the gap between the range route
    /// and `−ln P_F` for kernels with longer jumps.
    pub trap_hole_mean: f64,
    pub outside_sites: u64,
    pub replicas: u64,
}

impl StrategyReport {
    /// Whether `−ln P_F` and the range route agree within `k` combined SE.
    pub fn range_identity_holds(&self, k: f64) -> bool {
        let (v, se) = self.range_route;
        let diff = (self.p_f.neg_log() - v).abs();
        diff <= k * (se.powi(2) + self.p_f.log_std_error.powi(2)).sqrt()
    }
}

/// Does a trap started `distance` sites to the right of the ball land in
/// it before `t`?
fn trap_enters<R: rand::Rng + ?Sized>(kernel: &JumpKernel, rho: f64, t: f64, radius: i64, distance: i64, rng: &mut R) -> bool {
    let mut pos = radius + distance;
    for (_, d) in JumpStream::new(kernel, rho, t, rng) {
        pos += d;
        if pos.abs() <= radius {
            return true;
        }
    }
    false
}

fn stays_inside<R: rand::Rng + ?Sized>(kernel: &JumpKernel, kappa: f64, t: f64, radius: i64, rng: &mut R) -> bool {
    let mut pos = 0i64;
    for (_, d) in JumpStream::new(kernel, kappa, t, rng) {
        pos += d;
        if pos.abs() > radius {
            return false;
        }
    }
    true
}

/// Estimate the ball-strategy probabilities. `P_E` is closed form;
/// `P_F` uses stratified hitting simulation over outside start sites; `P_G`
/// is a confinement frequency.
pub fn strategy_probabilities(input: &StrategyInput<'_>, replicas: u64, stream: RngStream) -> Result<StrategyReport> {
    let StrategyInput { radius, t, nu, rho, kappa, walk_kernel, trap_kernel } = *input;
    if radius < 1 {
        return Err(invalid(format!("ball radius R = {radius} must be ≥ 1")));
    }
    check_horizon(t)?;
    check_nu(nu)?;
    check_trap_rate(rho)?;
    check_symmetric(trap_kernel)?;
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(invalid(format!("walk rate κ = {kappa} must be finite and ≥ 0")));
    }
    if replicas < 2 {
        return Err(invalid("strategy_probabilities needs at least 2 replicas"));
    }

    let log_p_e = -nu * (2 * radius + 1) as f64;

    // P_F: by symmetry both sides contribute equally.
    let outside_sites = if nu == 0.0 || rho == 0.0 || t == 0.0 {
        0
    } else {
        let policy = WindowPolicy::certify(0, nu, rho, trap_kernel, t, OUTSIDE_CUTOFF)?;
        policy.margin.max(1) as u64
    };
    let f_stream = stream.substream(0);
    let per_site = par::map(outside_sites as usize, |k| {
        let site = f_stream.substream(k as u64);
        let hits = (0..replicas)
            .filter(|&i| trap_enters(trap_kernel, rho, t, radius, k as i64 + 1, &mut site.substream(i).rng()))
            .count() as u64;
        let p = hits as f64 / replicas as f64;
        (p, p * (1.0 - p) / (replicas - 1) as f64)
    });
    let hit_sum: f64 = per_site.iter().map(|p| p.0).sum();
    let hit_var: f64 = per_site.iter().map(|p| p.1).sum();
    let mut p_f = SurvivalEstimate::from_log(Method::HittingMc, -2.0 * nu * hit_sum, 2.0 * nu * hit_var.sqrt(), replicas);
    p_f.truncation_eps = if outside_sites > 0 { OUTSIDE_CUTOFF } else { 0.0 };

    // P_G.
    let p_g = if kappa == 0.0 || t == 0.0 {
        let mut e = SurvivalEstimate::exact_one(Method::ConfinementMc);
        e.replicas = replicas;
        e
    } else {
        let g_stream = stream.substream(1);
        let inside = par::map(replicas as usize, |i| {
            stays_inside(walk_kernel, kappa, t, radius, &mut g_stream.substream(i as u64).rng())
        })
        .into_iter()
        .filter(|&b| b)
        .count() as u64;
        let p = inside as f64 / replicas as f64;
        let se = wilson_se(inside, replicas);
        SurvivalEstimate {
            method: Method::ConfinementMc,
            value: p,
            std_error: se,
            log_value: p.ln(),
            log_std_error: if p > 0.0 { se / p } else { f64::INFINITY },
            replicas,
            truncation_eps: 0.0,
            bias_bound: None,
        }
    };

    // Range route and hole diagnostic from independent trap paths.
    let r_stream = stream.substream(2);
    let stats = par::try_map(replicas as usize, |i| {
        let y = sample_path_or_constant(trap_kernel, rho, 0, t, &mut r_stream.substream(i as u64).rng())?;
        let r = range_stats(&y);
        Ok::<_, crate::error::Error>((r.size as f64, r.holes() as f64))
    })?;
    let range: Summary = stats.iter().map(|s| s.0).collect();
    let holes: Summary = stats.iter().map(|s| s.1).collect();

    let log_lower_bound = log_p_e + p_f.log_value + p_g.log_value;
    let log_lower_bound_se = (p_f.log_std_error.powi(2) + p_g.log_std_error.powi(2)).sqrt();
    Ok(StrategyReport {
        radius,
        t,
        p_e: log_p_e.exp(),
        log_p_e,
        p_f,
        p_g,
        log_lower_bound,
        log_lower_bound_se,
        range_route: (nu * (range.mean - 1.0), nu * range.std_error()),
        trap_hole_mean: holes.mean,
        outside_sites,
        replicas,
    })
}

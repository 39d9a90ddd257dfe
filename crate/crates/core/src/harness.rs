//! Empirical checks of tail, moment and local-time bounds with unspecified
//! constants: the constants are fitted, and only their existence on the
//! sampled grid is tested.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par;
use crate::rng::RngStream;
use crate::stats::{ols, weighted_poly_fit, wilson_se, Summary, Z95};
use crate::walk::{
    check_finite_gamma, check_horizon, local_time, local_time_functional, range_stats, sample_path_or_constant,
    thin_count, JumpKernel, JumpStream,
};

/// Tail points estimated from fewer hits than this are not used to fit
/// the slope (they still have to lie under the fitted line).
const MIN_FIT_HITS: u64 = 10;

/// Empirical log-tail of a nonnegative integer statistic with a fitted
/// exponential bound `ln P(S ≥ a) ≤ intercept + slope·a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub thresholds: Vec<f64>,
    #[serde(with = "crate::serde_f64::vec")]
    pub empirical_log_tail: Vec<f64>,
    /// Wilson standard error of each tail probability.
    pub tail_se: Vec<f64>,
    /// `(slope, intercept)` of the fitted bound line in `(a, ln P)`.
    pub bound_line: (f64, f64),
    /// 95% confidence interval of the least-squares slope.
    pub slope_ci: (f64, f64),
    /// `c` in `C e^{−c e^{−γM} a/(1∨ln t)}`, from the slope.
    pub fitted_c: f64,
    pub fitted_big_c: f64,
    pub replicas: u64,
    pub monotone: bool,
    /// Paths where `e^{−γM}|𝒯_{t,M}| > F_t^γ` (always 0).
    pub linkage_violations: u64,
    pub verdict: bool,
}

impl TailReport {
    /// CSV `a,log_tail,se` (the SE is on the probability scale).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["a", "log_tail", "se"])?;
        for i in 0..self.thresholds.len() {
            w.serialize((self.thresholds[i], self.empirical_log_tail[i], self.tail_se[i]))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tail report for integer samples. `scale` converts the fitted slope into
/// the reported `c` (`c = −slope·scale`).
pub fn tail_report(samples: &[u64], scale: f64, linkage_violations: u64) -> TailReport {
    let n = samples.len() as u64;
    let max = samples.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0u64; max as usize + 2];
    for &s in samples {
        counts[s as usize] += 1;
    }
    // hits[a] = #{S ≥ a}
    let mut hits = vec![0u64; max as usize + 2];
    for a in (0..=max as usize).rev() {
        hits[a] = hits[a + 1] + counts[a];
    }
    let thresholds: Vec<f64> = (1..=max).map(|a| a as f64).collect();
    let tail: Vec<u64> = (1..=max as usize).map(|a| hits[a]).collect();
    let log_tail: Vec<f64> = tail.iter().map(|&h| (h as f64 / n as f64).ln()).collect();
    let tail_se: Vec<f64> = tail.iter().map(|&h| wilson_se(h, n)).collect();
    let monotone = log_tail.windows(2).all(|w| w[1] <= w[0]);

    // Fit on the upper half of the well-estimated tail.
    let usable: Vec<usize> = (0..tail.len()).filter(|&i| tail[i] >= MIN_FIT_HITS).collect();
    let start = usable.len() / 2;
    let fit_idx = &usable[start..];
    let fit = if fit_idx.len() >= 3 {
        let x: Vec<f64> = fit_idx.iter().map(|&i| thresholds[i]).collect();
        let y: Vec<f64> = fit_idx.iter().map(|&i| log_tail[i]).collect();
        ols(&x, &y)
    } else {
        None
    };
    let (slope, slope_ci) = match fit {
        Some(f) => (f.slope, (f.slope - Z95 * f.slope_se, f.slope + Z95 * f.slope_se)),
        None => (f64::NAN, (f64::NAN, f64::NAN)),
    };
    // Smallest intercept that keeps every observed point under the line.
    let intercept = if slope.is_finite() {
        thresholds
            .iter()
            .zip(&log_tail)
            .map(|(a, l)| l - slope * a)
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        f64::NAN
    };
    let under_line = slope.is_finite()
        && thresholds.iter().zip(&log_tail).zip(&tail_se).all(|((a, l), se)| {
            let line = (intercept + slope * a).exp();
            l.exp() <= line + 2.0 * se
        });
    let fitted_c = -slope * scale;
    TailReport {
        thresholds,
        empirical_log_tail: log_tail,
        tail_se,
        bound_line: (slope, intercept),
        slope_ci,
        fitted_c,
        fitted_big_c: intercept.exp(),
        replicas: n,
        monotone,
        linkage_violations,
        verdict: monotone && fitted_c > 0.0 && under_line && linkage_violations == 0,
    }
}

/// Tail of the number of `M`-thin points `|𝒯_{t,M}|` over free paths.
pub fn thin_tail_experiment(
    kernel: &JumpKernel,
    kappa: f64,
    t: f64,
    m: f64,
    gamma: f64,
    replicas: u64,
    stream: RngStream,
) -> Result<TailReport> {
    check_horizon(t)?;
    check_finite_gamma(gamma)?;
    if !kernel.variance().is_finite() {
        return Err(invalid("thin-point tails need a kernel with finite variance"));
    }
    if replicas < 2 {
        return Err(invalid("thin_tail_experiment needs at least 2 replicas"));
    }
    let results = par::try_map(replicas as usize, |i| {
        let x = sample_path_or_constant(kernel, kappa, 0, t, &mut stream.substream(i as u64).rng())?;
        let profile = local_time(&x);
        let thin = thin_count(&profile, m)?;
        let f = local_time_functional(&profile, gamma)?;
        let violated = (-gamma * m).exp() * thin as f64 > f * (1.0 + 1e-12);
        Ok::<_, Error>((thin as u64, violated))
    })?;
    let samples: Vec<u64> = results.iter().map(|r| r.0).collect();
    let violations = results.iter().filter(|r| r.1).count() as u64;
    let scale = 1.0f64.max(t.ln()) * (gamma * m).exp();
    Ok(tail_report(&samples, scale, violations))
}

/// Functionals for [`exp_moment_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentFunctional {
    /// `F_t^γ`.
    FGamma(f64),
    /// Hole volume `G_t`.
    HoleVolume,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: f64,
    /// `c/(1∨ln t)`.
    pub lambda_t: f64,
    pub mean_exp: f64,
    pub mean_exp_se: f64,
    pub mean: f64,
    pub mean_se: f64,
}

/// Quadratic least-squares fit of a mean against `ln t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrowthFit {
    /// Coefficients of `1, ln t, (ln t)²`.
    pub coefficients: [f64; 3],
    pub std_errors: [f64; 3],
    /// 95% interval of the quadratic coefficient.
    pub quadratic_ci: (f64, f64),
    pub at_most_logarithmic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub functional: MomentFunctional,
    pub c: f64,
    pub rows: Vec<MomentRow>,
    pub max_estimate: f64,
    /// Some estimate or its standard error exceeded `c_max`.
    pub exploded: bool,
    pub c_max: f64,
    pub log_fit: Option<LogGrowthFit>,
}

/// Fit `mean ≈ b0 + b1 ln t + b2 (ln t)²` weighted by the standard errors.
pub fn log_growth_fit(t: &[f64], mean: &[f64], se: &[f64]) -> Option<LogGrowthFit> {
    let x: Vec<f64> = t.iter().map(|t| t.ln()).collect();
    // Exact zeros (e.g. nearest-neighbour holes) have no noise to weight by.
    let floor = se.iter().copied().filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1.0 };
    let se: Vec<f64> = se.iter().map(|&s| if s > 0.0 { s } else { floor }).collect();
    let (coef, coef_se) = weighted_poly_fit(&x, mean, &se, 2)?;
    let ci = (coef[2] - Z95 * coef_se[2], coef[2] + Z95 * coef_se[2]);
    Some(LogGrowthFit {
        coefficients: [coef[0], coef[1], coef[2]],
        std_errors: [coef_se[0], coef_se[1], coef_se[2]],
        quadratic_ci: ci,
        at_most_logarithmic: ci.0 <= 0.0,
    })
}

/// `E[exp{λ_t · functional}]` with `λ_t = c/(1∨ln t)` over a grid of
/// horizons.
#[allow(clippy::too_many_arguments)]
pub fn exp_moment_experiment(
    functional: MomentFunctional,
    kernel: &JumpKernel,
    kappa: f64,
    c: f64,
    t_grid: &[f64],
    replicas: u64,
    c_max: f64,
    stream: RngStream,
) -> Result<MomentTable> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid(format!("moment rate c = {c} must be positive")));
    }
    if replicas < 2 {
        return Err(invalid("exp_moment_experiment needs at least 2 replicas"));
    }
    match functional {
        MomentFunctional::FGamma(g) => check_finite_gamma(g)?,
        MomentFunctional::HoleVolume => {
            if kernel.exp_moment().is_none() {
                return Err(Error::NoExponentialMoment(format!(
                    "{}: hole-volume moments cannot hold for kernels with power-law tails",
                    kernel.name()
                )));
            }
        }
    }
    let mut rows = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        check_horizon(t)?;
        let lambda_t = c / 1.0f64.max(t.ln());
        let sub = stream.substream(k as u64);
        let values = par::try_map(replicas as usize, |i| {
            let x = sample_path_or_constant(kernel, kappa, 0, t, &mut sub.substream(i as u64).rng())?;
            match functional {
                MomentFunctional::FGamma(g) => local_time_functional(&local_time(&x), g),
                MomentFunctional::HoleVolume => Ok(range_stats(&x).holes() as f64),
            }
        })?;
        let plain: Summary = values.iter().copied().collect();
        let tilted: Summary = values.iter().map(|v| (lambda_t * v).exp()).collect();
        rows.push(MomentRow {
            t,
            lambda_t,
            mean_exp: tilted.mean,
            mean_exp_se: tilted.std_error(),
            mean: plain.mean,
            mean_se: plain.std_error(),
        });
    }
    let max_estimate = rows.iter().map(|r| r.mean_exp).fold(f64::NEG_INFINITY, f64::max);
    let exploded = rows.iter().any(|r| r.mean_exp > c_max || r.mean_exp_se > c_max || !r.mean_exp.is_finite());
    let log_fit = if functional == MomentFunctional::HoleVolume && rows.len() >= 3 {
        let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let mean: Vec<f64> = rows.iter().map(|r| r.mean).collect();
        let se: Vec<f64> = rows.iter().map(|r| r.mean_se).collect();
        log_growth_fit(&t, &mean, &se)
    } else {
        None
    };
    Ok(MomentTable {
        functional,
        c,
        rows,
        max_estimate,
        exploded,
        c_max,
        log_fit,
    })
}

/// Local time at 0 of a walk started at `start`, streamed without storing
/// the path.
fn streamed_local_time_at_zero<R: Rng + ?Sized>(
    kernel: &JumpKernel,
    kappa: f64,
    t: f64,
    start: i64,
    rng: &mut R,
) -> f64 {
    let mut pos = start;
    let mut last = 0.0;
    let mut total = 0.0;
    for (s, d) in JumpStream::new(kernel, kappa, t, rng) {
        if pos == 0 {
            total += s - last;
        }
        pos += d;
        last = s;
    }
    if pos == 0 {
        total += t - last;
    }
    total
}

/// Empirical `E_0[e^{−γL_t(0)}]` against its asymptote
/// `(σ/γ)·√(2κ/(πt))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeRatio {
    pub t: f64,
    pub empirical: f64,
    pub empirical_se: f64,
    pub asymptote: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub replicas: u64,
}

pub fn local_time_zero_check(
    kernel: &JumpKernel,
    kappa: f64,
    gamma: f64,
    t: f64,
    replicas: u64,
    stream: RngStream,
) -> Result<LocalTimeRatio> {
    check_finite_gamma(gamma)?;
    check_horizon(t)?;
    if !(kappa > 0.0 && kappa.is_finite()) || t == 0.0 {
        return Err(invalid("local_time_zero_check needs κ > 0 and t > 0"));
    }
    if kernel.mean().abs() > 1e-12 {
        return Err(invalid("local_time_zero_check needs a zero-mean kernel"));
    }
    if replicas < 2 {
        return Err(invalid("local_time_zero_check needs at least 2 replicas"));
    }
    let values = par::map(replicas as usize, |i| {
        let l = streamed_local_time_at_zero(kernel, kappa, t, 0, &mut stream.substream(i as u64).rng());
        (-gamma * l).exp()
    });
    let s: Summary = values.into_iter().collect();
    let asymptote = kernel.sigma() / gamma * (2.0 * kappa / (std::f64::consts::PI * t)).sqrt();
    Ok(LocalTimeRatio {
        t,
        empirical: s.mean,
        empirical_se: s.std_error(),
        asymptote,
        ratio: s.mean / asymptote,
        ratio_se: s.std_error() / asymptote,
        replicas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingRow {
    pub t: f64,
    /// `P_z(τ_0 ≥ t)`.
    pub probability: f64,
    pub probability_se: f64,
    /// `P_z(τ_0 ≥ t)·√t/|z|`.
    pub statistic: f64,
    pub statistic_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTable {
    pub z: i64,
    pub rows: Vec<HittingRow>,
    /// Largest over smallest statistic on the grid.
    pub spread: f64,
    /// `spread ≤ max_spread`.
    pub bounded: bool,
    pub max_spread: f64,
}

fn survives_until<R: Rng + ?Sized>(kernel: &JumpKernel, kappa: f64, t: f64, z: i64, rng: &mut R) -> bool {
    let mut pos = z;
    for (_, d) in JumpStream::new(kernel, kappa, t, rng) {
        pos += d;
        if pos == 0 {
            return false;
        }
    }
    true
}

/// `P_z(τ_0 ≥ t)·√t/|z|` on a grid of horizons; bounded means the largest
/// and smallest values differ by at most a factor `max_spread`.
pub fn hitting_tail_check(
    kernel: &JumpKernel,
    kappa: f64,
    z: i64,
    t_grid: &[f64],
    replicas: u64,
    max_spread: f64,
    stream: RngStream,
) -> Result<HittingTable> {
    if z == 0 {
        return Err(invalid("start z must be nonzero"));
    }
    if kernel.span() != 1 {
        return Err(invalid(format!("kernel {} is not irreducible on ℤ", kernel.name())));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(invalid("walk rate κ must be positive"));
    }
    if replicas < 2 {
        return Err(invalid("hitting_tail_check needs at least 2 replicas"));
    }
    let mut rows = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        check_horizon(t)?;
        let sub = stream.substream(k as u64);
        let alive = par::map(replicas as usize, |i| survives_until(kernel, kappa, t, z, &mut sub.substream(i as u64).rng()))
            .into_iter()
            .filter(|&b| b)
            .count() as u64;
        let p = alive as f64 / replicas as f64;
        let se = wilson_se(alive, replicas);
        let scale = t.sqrt() / z.unsigned_abs() as f64;
        rows.push(HittingRow {
            t,
            probability: p,
            probability_se: se,
            statistic: p * scale,
            statistic_se: se * scale,
        });
    }
    let max = rows.iter().map(|r| r.statistic).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.statistic).fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { max / min } else { f64::INFINITY };
    Ok(HittingTable {
        z,
        rows,
        spread,
        bounded: spread <= max_spread,
        max_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_report_of_geometric_samples_is_valid() {
        let mut rng = RngStream::new(1, 0).rng();
        let samples: Vec<u64> = (0..20_000)
            .map(|_| {
                let mut k = 0;
                while rng.random::<f64>() < 0.5 {
                    k += 1;
                }
                k
            })
            .collect();
        let r = tail_report(&samples, 1.0, 0);
        assert!(r.monotone && r.verdict);
        assert!((r.bound_line.0 + 2f64.ln()).abs() < 0.2, "{:?}", r.bound_line);
    }

    #[test]
    fn nearest_neighbour_holes_have_unit_moments() {
        let t = exp_moment_experiment(
            MomentFunctional::HoleVolume,
            &JumpKernel::ssrw(),
            1.0,
            0.05,
            &[10.0, 100.0, 1000.0],
            50,
            10.0,
            RngStream::new(1, 0),
        )
        .unwrap();
        assert!(t.rows.iter().all(|r| r.mean_exp == 1.0 && r.mean == 0.0));
    }

    #[test]
    fn heavy_tailed_holes_are_rejected() {
        let k = JumpKernel::power_law(2.5, 100).unwrap();
        let r = exp_moment_experiment(MomentFunctional::HoleVolume, &k, 1.0, 0.05, &[10.0], 10, 10.0, RngStream::new(1, 0));
        assert!(matches!(r, Err(Error::NoExponentialMoment(_))));
    }

    #[test]
    fn local_time_needs_finite_gamma() {
        let k = JumpKernel::ssrw();
        assert!(local_time_zero_check(&k, 1.0, f64::INFINITY, 10.0, 10, RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn streamed_local_time_matches_profile() {
        let k = JumpKernel::ssrw();
        for i in 0..20 {
            let s = RngStream::new(3, i);
            let path = crate::walk::sample_path(&k, 1.0, 0, 30.0, &mut s.rng()).unwrap();
            let streamed = streamed_local_time_at_zero(&k, 1.0, 30.0, 0, &mut s.rng());
            assert!((streamed - local_time(&path).get(0)).abs() < 1e-9);
        }
    }

    #[test]
    fn hitting_statistic_is_symmetric() {
        let k = JumpKernel::ssrw();
        let a = hitting_tail_check(&k, 1.0, 3, &[50.0], 4000, 2.0, RngStream::new(1, 0)).unwrap();
        let b = hitting_tail_check(&k, 1.0, -3, &[50.0], 4000, 2.0, RngStream::new(2, 0)).unwrap();
        let (x, y) = (a.rows[0], b.rows[0]);
        assert!((x.statistic - y.statistic).abs() <= 3.0 * (x.statistic_se.hypot(y.statistic_se)));
    }
}

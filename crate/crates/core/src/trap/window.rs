use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::walk::JumpKernel;

/// Largest margin [`WindowPolicy::certify`] will accept.
pub const DEFAULT_MAX_MARGIN: u64 = 1 << 22;

/// Finite window `[−(base+margin), base+margin]` for the Poisson trap
/// system, with a certified bound on the expected number of traps from
/// outside the window that reach `[−base, base]` before the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub base: i64,
    pub margin: i64,
    /// Requested bound ε.
    pub tail_bound: f64,
    /// Bound actually achieved by `margin` (≤ `tail_bound`).
    pub certified_bound: f64,
}

impl WindowPolicy {
    /// Smallest margin whose Chernoff tail bound is at most `epsilon`.
    pub fn certify(
        base: i64,
        nu: f64,
        rho: f64,
        trap_kernel: &JumpKernel,
        horizon: f64,
        epsilon: f64,
    ) -> Result<Self> {
        Self::certify_with_limit(base, nu, rho, trap_kernel, horizon, epsilon, DEFAULT_MAX_MARGIN)
    }

    pub fn certify_with_limit(
        base: i64,
        nu: f64,
        rho: f64,
        trap_kernel: &JumpKernel,
        horizon: f64,
        epsilon: f64,
        max_margin: u64,
    ) -> Result<Self> {
        if base < 0 {
            return Err(invalid(format!("window base {base} must be ≥ 0")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid(format!("tail bound ε = {epsilon} must lie in (0, 1)")));
        }
        if !(nu >= 0.0 && nu.is_finite()) || !(rho >= 0.0 && rho.is_finite()) {
            return Err(invalid("ν and ρ must be finite and ≥ 0"));
        }
        if nu == 0.0 {
            return Ok(Self {
                base,
                margin: 0,
                tail_bound: epsilon,
                certified_bound: 0.0,
            });
        }
        let target = (epsilon / nu).ln();
        let ok = |m: u64| log_outside_reach(trap_kernel, rho, horizon, m).map(|v| v <= target);

        if ok(0)? {
            return Ok(Self::finish(base, 0, nu, rho, trap_kernel, horizon, epsilon));
        }
        // Exponential search then bisection; the bound is decreasing in m.
        let mut hi = 1u64;
        while !ok(hi)? {
            if hi > 1 << 40 {
                return Err(Error::MarginUnachievable {
                    needed: u64::MAX,
                    limit: max_margin,
                    epsilon,
                });
            }
            hi *= 2;
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if hi > max_margin {
            return Err(Error::MarginUnachievable {
                needed: hi,
                limit: max_margin,
                epsilon,
            });
        }
        Ok(Self::finish(base, hi, nu, rho, trap_kernel, horizon, epsilon))
    }

    fn finish(base: i64, margin: u64, nu: f64, rho: f64, k: &JumpKernel, horizon: f64, epsilon: f64) -> Self {
        let log = if nu == 0.0 {
            f64::NEG_INFINITY
        } else {
            log_outside_reach(k, rho, horizon, margin).unwrap_or(f64::NEG_INFINITY)
        };
        Self {
            base,
            margin: margin as i64,
            tail_bound: epsilon,
            certified_bound: nu * log.exp(),
        }
    }

    /// A given window `[−half_width, half_width]`, checked against
    /// `epsilon`.
    #[allow(clippy::too_many_arguments)]
    pub fn fixed(
        base: i64,
        half_width: i64,
        nu: f64,
        rho: f64,
        trap_kernel: &JumpKernel,
        horizon: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let required = Self::certify(base, nu, rho, trap_kernel, horizon, epsilon)?;
        if half_width < required.half_width() {
            return Err(Error::WindowTooSmall {
                given: half_width,
                required: required.half_width(),
            });
        }
        Ok(Self::finish(base, (half_width - base) as u64, nu, rho, trap_kernel, horizon, epsilon))
    }

    pub fn half_width(&self) -> i64 {
        self.base + self.margin
    }
}

fn exp_rate(kernel: &JumpKernel) -> Result<f64> {
    kernel
        .exp_moment()
        .map(|m| m.rate)
        .ok_or_else(|| Error::NoExponentialMoment(kernel.name().to_string()))
}

/// `ln` of `ρt·(max(M(λ), M(−λ)) − 1)`-tilted Chernoff exponent.
fn log_mgf_term(kernel: &JumpKernel, rho: f64, horizon: f64, lambda: f64) -> f64 {
    rho * horizon * (kernel.mgf(lambda).max(kernel.mgf(-lambda)) - 1.0)
}

/// Golden-section minimum of a convex function on `[lo, hi]`.
fn minimize_convex(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd).min(f(hi))
}

/// Upper bound (log scale) on the probability that a walk with kernel
/// `kernel` and rate `rho` is ever displaced by at least `distance` in one
/// given direction before `horizon`. Doob's maximal inequality applied to
/// the exponential martingale, optimized over `λ ∈ (0, λ*]`.
pub fn log_reach_probability(kernel: &JumpKernel, rho: f64, horizon: f64, distance: u64) -> Result<f64> {
    let cap = exp_rate(kernel)?;
    let d = distance as f64;
    let v = minimize_convex(|l| -l * d + log_mgf_term(kernel, rho, horizon, l), 1e-12, cap);
    Ok(v.min(0.0))
}

/// Log of the bound on `Σ_{|y| > base+m} P_y(trap reaches [−base, base])`.
pub fn log_outside_reach(kernel: &JumpKernel, rho: f64, horizon: f64, margin: u64) -> Result<f64> {
    let cap = exp_rate(kernel)?;
    let first = (margin + 1) as f64;
    Ok(std::f64::consts::LN_2
        + minimize_convex(
            |l| -l * first + log_mgf_term(kernel, rho, horizon, l) - (-(-l).exp()).ln_1p(),
            1e-12,
            cap,
        ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_is_minimal() {
        let k = JumpKernel::ssrw();
        let p = WindowPolicy::certify(3, 1.0, 1.0, &k, 8.0, 1e-6).unwrap();
        assert!(p.certified_bound <= 1e-6);
        let m = p.margin as u64;
        assert!(m > 0);
        let prev = log_outside_reach(&k, 1.0, 8.0, m - 1).unwrap().exp();
        assert!(prev > 1e-6);
    }

    #[test]
    fn no_traps_needs_no_margin() {
        let p = WindowPolicy::certify(5, 0.0, 1.0, &JumpKernel::ssrw(), 100.0, 1e-9).unwrap();
        assert_eq!(p.margin, 0);
    }

    #[test]
    fn missing_exponential_moment_is_a_configuration_error() {
        let k = JumpKernel::power_law(3.0, 50).unwrap();
        assert!(matches!(
            WindowPolicy::certify(0, 1.0, 1.0, &k, 10.0, 1e-6),
            Err(Error::NoExponentialMoment(_))
        ));
    }

    #[test]
    fn unreachable_bound_names_needed_margin() {
        let err = WindowPolicy::certify_with_limit(0, 1.0, 1.0, &JumpKernel::ssrw(), 10_000.0, 1e-9, 10)
            .unwrap_err();
        match err {
            Error::MarginUnachievable { needed, limit, .. } => {
                assert!(needed > limit);
                assert_eq!(limit, 10);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn reach_bound_dominates_simulation() {
        // Brute force: fraction of SSRW paths (rate 1, t = 4) whose running
        // minimum reaches −5.
        use crate::rng::RngStream;
        use crate::walk::sample_path;
        let k = JumpKernel::ssrw();
        let n = 40_000;
        let hits = (0..n)
            .filter(|&i| {
                let p = sample_path(&k, 1.0, 0, 4.0, &mut RngStream::new(9, i).rng()).unwrap();
                let hit = p.visited().any(|x| x <= -5);
                hit
            })
            .count();
        let bound = log_reach_probability(&k, 1.0, 4.0, 5).unwrap().exp();
        assert!((hits as f64 / n as f64) <= bound, "{hits} vs {bound}");
    }
}

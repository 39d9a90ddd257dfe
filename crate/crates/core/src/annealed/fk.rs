use serde::{Deserialize, Serialize};

use super::estimate::{Method, SurvivalEstimate};
use super::mc::{check_gamma, check_model, check_nu, check_symmetric, check_trap_rate, total_from_logs, Model, TotalSurvival};
use crate::par;
use crate::rng::RngStream;
use crate::error::{invalid, Error, Result};
use crate::trap::{log_outside_reach, log_reach_probability, WindowPolicy};
use crate::walk::{check_horizon, sample_path_or_constant, sup_norm, JumpKernel, LatticePath};

/// Largest `Λ·τ` handled by one uniformization step.
const MAX_CHUNK_MASS: f64 = 30.0;
/// Per-step Poisson tail is never requested below this.
const MIN_STEP_TOLERANCE: f64 = 1e-15;
/// Windows are never grown beyond this half-width.
const MAX_HALF_WIDTH: i64 = 1 << 20;

/// How the deterministic solver chooses its window `[−W, W]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FkWindow {
    /// Smallest `W` whose truncation bound is at most `epsilon`.
    Certified { epsilon: f64 },
    /// Given `W`; fails if its truncation bound exceeds `epsilon`.
    Fixed { half_width: i64, epsilon: f64 },
}

/// Bound on `|ln Z_W − ln Z|` from replacing the trap system by the traps
/// started in `[−W, W]`, each treated as harmless once it leaves.
pub fn fk_window_bound(
    nu: f64,
    rho: f64,
    trap_kernel: &JumpKernel,
    horizon: f64,
    base: i64,
    half_width: i64,
) -> Result<f64> {
    if half_width < base {
        return Ok(f64::INFINITY);
    }
    if nu == 0.0 || rho == 0.0 {
        return Ok(0.0);
    }
    let m = (half_width - base) as u64;
    let outside = log_outside_reach(trap_kernel, rho, horizon, m)?.exp();
    let back = log_reach_probability(trap_kernel, rho, horizon, m + 1)?.exp();
    Ok(nu * (outside + (2 * half_width + 1) as f64 * 2.0 * back))
}

fn certified_half_width(nu: f64, rho: f64, kernel: &JumpKernel, horizon: f64, base: i64, epsilon: f64) -> Result<i64> {
    let ok = |w: i64| fk_window_bound(nu, rho, kernel, horizon, base, w).map(|b| b <= epsilon);
    if ok(base)? {
        return Ok(base);
    }
    let mut step = 1i64;
    while !ok(base + step)? {
        step *= 2;
        if base + step > MAX_HALF_WIDTH {
            return Err(Error::MarginUnachievable {
                needed: u64::MAX,
                limit: (MAX_HALF_WIDTH - base) as u64,
                epsilon,
            });
        }
    }
    let (mut lo, mut hi) = (step / 2, step);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(base + mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(base + hi)
}

/// Backward solver for one trap against a fixed `X` path.
struct Solver<'a> {
    offsets: &'a [(i64, f64)],
    pad: usize,
    half_width: i64,
    rho: f64,
    gamma: f64,
    /// Values on `[−W−pad, W+pad]`; the padding holds the ghost value 1.
    u: Vec<f64>,
    next: Vec<f64>,
    acc: Vec<f64>,
    step_tolerance: f64,
    /// Accumulated Poisson tail mass (sup-norm error on `u`).
    tail: f64,
}

impl Solver<'_> {
    fn index(&self, site: i64) -> Option<usize> {
        (site.abs() <= self.half_width).then(|| (site + self.half_width) as usize + self.pad)
    }

    fn interior(&self) -> std::ops::Range<usize> {
        self.pad..self.u.len() - self.pad
    }

    /// `next ← B u` on the interior, with `B = I + A/Λ`.
    fn step(&mut self, lambda: f64, kill: Option<usize>) {
        let range = self.interior();
        let stay = 1.0 - self.rho / lambda;
        let move_weight = self.rho / lambda;
        for i in range.clone() {
            let mut s = 0.0;
            for &(d, p) in self.offsets {
                s += p * self.u[(i as i64 + d) as usize];
            }
            self.next[i] = stay * self.u[i] + move_weight * s;
        }
        if let Some(k) = kill {
            if self.gamma.is_infinite() {
                self.next[k] = 0.0;
            } else {
                self.next[k] -= self.gamma / lambda * self.u[k];
            }
        }
        std::mem::swap(&mut self.u, &mut self.next);
    }

    /// Propagate `u` backward across an interval of length `tau` with the
    /// walk `X` sitting at `site`.
    fn propagate(&mut self, tau: f64, site: i64) {
        if tau <= 0.0 {
            return;
        }
        let kill = self.index(site);
        if kill.is_none() && self.rho == 0.0 {
            return;
        }
        let lambda = if self.gamma.is_infinite() || kill.is_none() {
            self.rho
        } else {
            self.rho + self.gamma
        };
        if lambda == 0.0 {
            return;
        }
        if self.gamma.is_infinite() {
            if let Some(k) = kill {
                self.u[k] = 0.0;
            }
        }
        let chunks = (lambda * tau / MAX_CHUNK_MASS).ceil().max(1.0);
        let dt = tau / chunks;
        for _ in 0..chunks as u64 {
            self.chunk(lambda * dt, lambda, kill);
        }
    }

    fn chunk(&mut self, mass: f64, lambda: f64, kill: Option<usize>) {
        let range = self.interior();
        let mut pmf = (-mass).exp();
        let mut cumulative = pmf;
        for i in range.clone() {
            self.acc[i] = pmf * self.u[i];
        }
        let mut k = 0u64;
        while 1.0 - cumulative > self.step_tolerance && pmf > 0.0 || (k as f64) < mass {
            k += 1;
            self.step(lambda, kill);
            pmf *= mass / k as f64;
            cumulative += pmf;
            for i in range.clone() {
                self.acc[i] += pmf * self.u[i];
            }
            if k > 10_000 {
                break;
            }
        }
        self.tail += (1.0 - cumulative).max(0.0);
        for i in range {
            self.u[i] = self.acc[i];
        }
    }
}

/// Deterministic `Z^γ_{t,X}` from the single-trap Feynman–Kac equation.
///
/// With `u(s, y)` the probability that a trap at `y` at time `s` spares
/// `X` on `[s, t]`, averaging out the Poisson initial condition gives
/// `Z = exp{ν Σ_y (u(0, y) − 1)}`. `u` is propagated backward over the
/// constant stretches of `X` by uniformization; the generator is
/// `ρ(P − I) − γ δ_{X_s}`. `time_tolerance` bounds the contribution of the
/// truncated Poisson series to `ln Z`.
pub fn annealed_given_path_fk(
    x_path: &LatticePath,
    nu: f64,
    rho: f64,
    trap_kernel: &JumpKernel,
    gamma: f64,
    window: FkWindow,
    time_tolerance: f64,
) -> Result<SurvivalEstimate> {
    check_nu(nu)?;
    check_trap_rate(rho)?;
    check_gamma(gamma)?;
    check_symmetric(trap_kernel)?;
    if !(time_tolerance > 0.0) {
        return Err(invalid("time tolerance must be > 0"));
    }
    let horizon = x_path.horizon();
    if nu == 0.0 || gamma == 0.0 || horizon == 0.0 {
        return Ok(SurvivalEstimate::exact_one(Method::FeynmanKac));
    }
    let base = sup_norm(x_path) as i64;
    let (half_width, window_eps) = match window {
        FkWindow::Certified { epsilon } => {
            check_epsilon(epsilon)?;
            let w = certified_half_width(nu, rho, trap_kernel, horizon, base, epsilon)?;
            (w, fk_window_bound(nu, rho, trap_kernel, horizon, base, w)?)
        }
        FkWindow::Fixed { half_width, epsilon } => {
            check_epsilon(epsilon)?;
            let bound = fk_window_bound(nu, rho, trap_kernel, horizon, base, half_width)?;
            if bound > epsilon {
                let required = certified_half_width(nu, rho, trap_kernel, horizon, base, epsilon)?;
                return Err(Error::WindowTooSmall {
                    given: half_width,
                    required,
                });
            }
            (half_width, bound)
        }
    };

    let sites = (2 * half_width + 1) as usize;
    let pad = trap_kernel.max_jump() as usize;
    let segments: Vec<(f64, f64, i64)> = x_path.segments().collect();
    let chunk_count: f64 = segments
        .iter()
        .map(|&(a, b, _)| ((rho + if gamma.is_finite() { gamma } else { 0.0 }) * (b - a) / MAX_CHUNK_MASS).ceil().max(1.0))
        .sum();
    let step_tolerance = (time_tolerance / (nu * sites as f64 * chunk_count)).max(MIN_STEP_TOLERANCE);
    let len = sites + 2 * pad;
    let mut solver = Solver {
        offsets: trap_kernel.offsets(),
        pad,
        half_width,
        rho,
        gamma,
        u: vec![1.0; len],
        next: vec![1.0; len],
        acc: vec![1.0; len],
        step_tolerance,
        tail: 0.0,
    };
    for &(from, to, site) in segments.iter().rev() {
        solver.propagate(to - from, site);
    }
    let deficit: f64 = solver.interior().map(|i| 1.0 - solver.u[i]).sum();
    let time_eps = nu * sites as f64 * solver.tail;
    let mut e = SurvivalEstimate::from_log(Method::FeynmanKac, -nu * deficit, 0.0, 0);
    e.truncation_eps = window_eps + time_eps;
    Ok(e)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("window tolerance ε = {epsilon} must lie in (0, 1)")))
    }
}

/// Half-width the certified solver would use for `x_path`.
pub fn fk_half_width(
    x_path: &LatticePath,
    nu: f64,
    rho: f64,
    trap_kernel: &JumpKernel,
    epsilon: f64,
) -> Result<i64> {
    check_epsilon(epsilon)?;
    let base = sup_norm(x_path) as i64;
    certified_half_width(nu, rho, trap_kernel, x_path.horizon(), base, epsilon)
}

/// The window policy matching a certified solver window, for field
/// simulations meant to be compared with it.
pub fn fk_policy(x_path: &LatticePath, nu: f64, rho: f64, trap_kernel: &JumpKernel, epsilon: f64) -> Result<WindowPolicy> {
    WindowPolicy::certify(sup_norm(x_path) as i64, nu, rho, trap_kernel, x_path.horizon(), epsilon)
}

/// `Z_t` as the outer average over free paths of the deterministic
/// per-path value. Path `i` uses substream `i`.
pub fn annealed_total_fk(
    model: &Model,
    t: f64,
    outer_replicas: u64,
    epsilon: f64,
    time_tolerance: f64,
    stream: RngStream,
) -> Result<TotalSurvival> {
    check_horizon(t)?;
    check_model(model)?;
    if outer_replicas < 2 {
        return Err(invalid("annealed_total_fk needs at least 2 outer replicas"));
    }
    let per_path = par::try_map(outer_replicas as usize, |i| {
        let x = sample_path_or_constant(&model.walk_kernel, model.kappa, 0, t, &mut stream.substream(i as u64).rng())?;
        annealed_given_path_fk(
            &x,
            model.nu,
            model.rho,
            &model.trap_kernel,
            model.gamma,
            FkWindow::Certified { epsilon },
            time_tolerance,
        )
    })?;
    let logs: Vec<f64> = per_path.iter().map(|e| e.log_value).collect();
    let mut total = total_from_logs(Method::FeynmanKac, t, &logs, stream.substream(u64::MAX));
    total.estimate.truncation_eps = per_path.iter().map(|e| e.truncation_eps).fold(0.0, f64::max);
    Ok(total)
}

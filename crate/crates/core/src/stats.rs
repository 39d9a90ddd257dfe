//! Small statistics toolkit shared by the estimators: mergeable moment
//! accumulators, Wilson intervals, bootstrap, least-squares fits and a
//! two-sample Kolmogorov–Smirnov distance.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Running mean/variance (Welford), mergeable across workers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Summary {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Summary) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance; zero with fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Summary {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Summary::default();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    if successes == 0 || successes == n {
        let nf = n as f64;
        let edge = nf / (nf + z * z);
        return if successes == 0 { (0.0, 1.0 - edge) } else { (edge, 1.0) };
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Wilson-score standard error: half-width of the z = 1 interval.
pub fn wilson_se(successes: u64, n: u64) -> f64 {
    let (lo, hi) = wilson_interval(successes, n, 1.0);
    0.5 * (hi - lo)
}

/// `ln Σ exp(x_i)` without overflow. Empty input gives `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Standard deviation of `stat` over `resamples` nonparametric bootstrap
/// resamples of `0..n` (indices drawn with replacement). Non-finite
/// draws are skipped.
pub fn bootstrap_se<R, F>(n: usize, resamples: usize, rng: &mut R, mut stat: F) -> f64
where
    R: Rng + ?Sized,
    F: FnMut(&[usize]) -> f64,
{
    let draws = bootstrap_draws(n, resamples, rng, &mut stat);
    draws
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .collect::<Summary>()
        .variance()
        .sqrt()
}

/// Percentile interval `(lo, hi)` at level `1 - alpha` of the bootstrap
/// distribution of `stat`.
pub fn bootstrap_percentile<R, F>(
    n: usize,
    resamples: usize,
    alpha: f64,
    rng: &mut R,
    mut stat: F,
) -> (f64, f64)
where
    R: Rng + ?Sized,
    F: FnMut(&[usize]) -> f64,
{
    let mut draws = bootstrap_draws(n, resamples, rng, &mut stat);
    draws.retain(|x| x.is_finite());
    if draws.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    draws.sort_by(f64::total_cmp);
    (quantile_sorted(&draws, alpha / 2.0), quantile_sorted(&draws, 1.0 - alpha / 2.0))
}

fn bootstrap_draws<R, F>(n: usize, resamples: usize, rng: &mut R, stat: &mut F) -> Vec<f64>
where
    R: Rng + ?Sized,
    F: FnMut(&[usize]) -> f64,
{
    if n == 0 {
        return Vec::new();
    }
    let mut idx = vec![0usize; n];
    (0..resamples)
        .map(|_| {
            for slot in idx.iter_mut() {
                *slot = rng.random_range(0..n);
            }
            stat(&idx)
        })
        .collect()
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Ordinary least-squares line with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_se, intercept_se) = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, yi)| (yi - intercept - slope * xi).powi(2))
            .sum();
        let s2 = rss / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Some(LineFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
    })
}

/// Polynomial fit `y ≈ Σ_k c_k x^k` weighted by known per-point standard
/// errors. Returns `(coefficients, coefficient standard errors)`; the
/// errors come from the measurement variances, so an exactly determined
/// fit still carries a meaningful uncertainty.
pub fn weighted_poly_fit(x: &[f64], y: &[f64], se: &[f64], degree: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let p = degree + 1;
    if x.len() < p || x.len() != y.len() || x.len() != se.len() {
        return None;
    }
    let mut normal = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    for ((&xi, &yi), &si) in x.iter().zip(y).zip(se) {
        if !(si > 0.0) {
            return None;
        }
        let w = 1.0 / (si * si);
        let powers: Vec<f64> = (0..p).map(|k| xi.powi(k as i32)).collect();
        for a in 0..p {
            rhs[a] += w * powers[a] * yi;
            for b in 0..p {
                normal[a][b] += w * powers[a] * powers[b];
            }
        }
    }
    let inv = invert(normal)?;
    let coef = (0..p)
        .map(|a| (0..p).map(|b| inv[a][b] * rhs[b]).sum())
        .collect();
    let ses = (0..p).map(|a| inv[a][a].max(0.0).sqrt()).collect();
    Some((coef, ses))
}

/// Gauss–Jordan inverse with partial pivoting.
fn invert(mut a: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[i][j] -= f * a[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Two-sample Kolmogorov–Smirnov distance `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sided weighted Mann–Whitney comparison of two samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Weighted estimate of `P(A < B) + P(A = B)/2`.
    pub statistic: f64,
    /// `(statistic − 1/2)/sd` with the null variance evaluated at the
    /// effective sample sizes; large values mean `A` is stochastically
    /// smaller than `B`.
    pub z: f64,
}

/// Weighted Mann–Whitney statistic; weights need not be normalized.
pub fn weighted_mann_whitney(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> MannWhitney {
    let norm = |w: &[f64]| {
        let s: f64 = w.iter().sum();
        let v: Vec<f64> = w.iter().map(|x| x / s).collect();
        let ess = 1.0 / v.iter().map(|x| x * x).sum::<f64>();
        (v, ess)
    };
    let (va, ess_a) = norm(wa);
    let (vb, ess_b) = norm(wb);
    let mut bs: Vec<(f64, f64)> = b.iter().copied().zip(vb).collect();
    bs.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Suffix sums of B's weight above each value, and tie masses.
    let mut above = vec![0.0; bs.len() + 1];
    for i in (0..bs.len()).rev() {
        above[i] = above[i + 1] + bs[i].1;
    }
    let mut statistic = 0.0;
    for (&x, &w) in a.iter().zip(&va) {
        let lo = bs.partition_point(|p| p.0 < x);
        let hi = bs.partition_point(|p| p.0 <= x);
        let ties = above[lo] - above[hi];
        statistic += w * (above[hi] + 0.5 * ties);
    }
    let sd = ((ess_a + ess_b + 1.0) / (12.0 * ess_a * ess_b)).sqrt();
    MannWhitney {
        statistic,
        z: (statistic - 0.5) / sd,
    }
}

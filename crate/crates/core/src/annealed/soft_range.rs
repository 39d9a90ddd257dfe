use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{invalid, Result};
use crate::walk::{check_finite_gamma, local_time, local_time_functional, LatticePath, LocalTimeProfile};

/// Arrival times of an independent rate-γ Poisson clock on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftClock {
    pub rate: f64,
    pub horizon: f64,
    pub points: Vec<f64>,
}

impl SoftClock {
    pub fn sample<R: Rng + ?Sized>(rate: f64, horizon: f64, rng: &mut R) -> Result<Self> {
        check_finite_gamma(rate)?;
        let mut points = Vec::new();
        let mut t = 0.0;
        loop {
            let e: f64 = Exp1.sample(rng);
            t += e / rate;
            if t > horizon {
                break;
            }
            points.push(t);
        }
        Ok(Self { rate, horizon, points })
    }
}

/// `{f(J_k) : J_k ≤ t}`, sorted and deduplicated.
pub fn soft_range(path: &LatticePath, clock: &SoftClock) -> Result<Vec<i64>> {
    if clock.horizon < path.horizon() {
        return Err(invalid("clock horizon shorter than path horizon"));
    }
    let mut sites: Vec<i64> = clock
        .points
        .iter()
        .take_while(|&&j| j <= path.horizon())
        .map(|&j| path.position_at(j))
        .collect();
    sites.sort_unstable();
    sites.dedup();
    Ok(sites)
}

/// `E^N|SoftRange|` for a fixed path: each visited site is caught by the
/// clock with probability `1 − e^{−γ L_t(x)}`.
pub fn expected_soft_range(profile: &LocalTimeProfile, gamma: f64) -> Result<f64> {
    check_finite_gamma(gamma)?;
    Ok(profile.times().map(|t| -(-gamma * t).exp_m1()).sum())
}

/// Both sides of `F_t^γ(f) = |Range(f)| − E^N|SoftRange(f)|`, each computed
/// from the path's local-time profile.
pub fn soft_range_identity_check(path: &LatticePath, gamma: f64) -> Result<(f64, f64)> {
    let profile = local_time(path);
    let lhs = local_time_functional(&profile, gamma)?;
    let rhs = profile.support_size() as f64 - expected_soft_range(&profile, gamma)?;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn empty_clock_gives_empty_soft_range() {
        let clock = SoftClock {
            rate: 1.0,
            horizon: 5.0,
            points: vec![],
        };
        let p = LatticePath::from_jumps(0, 5.0, [(1.0, 1)]).unwrap();
        assert!(soft_range(&p, &clock).unwrap().is_empty());
    }

    #[test]
    fn constant_path_soft_range_is_start() {
        let clock = SoftClock {
            rate: 1.0,
            horizon: 5.0,
            points: vec![0.3, 2.0, 4.9],
        };
        assert_eq!(soft_range(&LatticePath::constant(7, 5.0), &clock).unwrap(), vec![7]);
    }

    #[test]
    fn short_clock_is_rejected() {
        let clock = SoftClock {
            rate: 1.0,
            horizon: 1.0,
            points: vec![],
        };
        assert!(soft_range(&LatticePath::constant(0, 2.0), &clock).is_err());
    }

    #[test]
    fn clock_points_are_sorted_and_inside() {
        let c = SoftClock::sample(3.0, 10.0, &mut RngStream::new(1, 2).rng()).unwrap();
        assert!(c.points.windows(2).all(|w| w[0] < w[1]));
        assert!(c.points.iter().all(|&p| p > 0.0 && p <= 10.0));
    }

    #[test]
    fn identity_on_small_examples() {
        let (l, r) = soft_range_identity_check(&LatticePath::constant(0, 2.0), 1.0).unwrap();
        assert!((l - (-2f64).exp()).abs() < 1e-15 && (r - (-2f64).exp()).abs() < 1e-15);
        let p = LatticePath::from_jumps(0, 2.0, [(1.0, 1)]).unwrap();
        let (l, r) = soft_range_identity_check(&p, 2f64.ln()).unwrap();
        assert!((l - 1.0).abs() < 1e-15 && (r - 1.0).abs() < 1e-15);
    }
}

use serde::{Deserialize, Serialize};

use super::engine::{superposed_range, SiteScratch};
use super::mc::{check_gamma, check_symmetric, check_trap_rate};
use crate::error::{invalid, Result};
use crate::par;
use crate::rng::RngStream;
use crate::stats::Summary;
use crate::walk::{JumpKernel, LatticePath};

/// Paired estimate of `E|SoftRange(Y+X)| − E|SoftRange(Y)|` for one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PascalRow {
    pub delta: f64,
    pub std_error: f64,
    /// `delta / std_error`; 0 when both vanish.
    pub z: f64,
    /// `delta < −3·std_error`.
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PascalReport {
    #[serde(with = "crate::serde_f64")]
    pub gamma: f64,
    pub replicas: u64,
    pub rows: Vec<PascalRow>,
}

impl PascalReport {
    pub fn any_violation(&self) -> bool {
        self.rows.iter().any(|r| r.violation)
    }
}

/// Check that perturbing a symmetric trap walk by each fixed path does not
/// decrease its expected (soft) range. Both terms share the same `Y`
/// realization per replica.
pub fn pascal_check(
    x_paths: &[LatticePath],
    trap_kernel: &JumpKernel,
    rho: f64,
    gamma: f64,
    replicas: u64,
    stream: RngStream,
) -> Result<PascalReport> {
    check_symmetric(trap_kernel)?;
    check_trap_rate(rho)?;
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Err(invalid("γ must be > 0 for a nonempty soft range"));
    }
    if trap_kernel.span() != 1 {
        return Err(invalid(format!("trap kernel {} is not irreducible on ℤ", trap_kernel.name())));
    }
    if replicas < 2 {
        return Err(invalid("pascal_check needs at least 2 replicas"));
    }
    let rows = x_paths
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let sub = stream.substream(j as u64);
            let origin = LatticePath::constant(0, x.horizon());
            let shifted = x.start() != 0;
            let diffs = par::map_init(replicas as usize, SiteScratch::default, |scratch, i| {
                let r = sub.substream(i as u64);
                let with = superposed_range(x, trap_kernel, rho, gamma, &mut r.rng(), scratch);
                let without = if shifted || x.num_jumps() > 0 {
                    superposed_range(&origin, trap_kernel, rho, gamma, &mut r.rng(), scratch)
                } else {
                    with
                };
                with - without
            });
            let s: Summary = diffs.into_iter().collect();
            let se = s.std_error();
            let z = if se > 0.0 { s.mean / se } else { 0.0 };
            PascalRow {
                delta: s.mean,
                std_error: se,
                z,
                violation: s.mean < -3.0 * se,
            }
        })
        .collect();
    Ok(PascalReport { gamma, replicas, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_path_cancels_exactly() {
        let x = LatticePath::constant(0, 20.0);
        let r = pascal_check(&[x], &JumpKernel::ssrw(), 1.0, 1.0, 100, RngStream::new(1, 0)).unwrap();
        assert_eq!(r.rows[0].delta, 0.0);
        assert_eq!(r.rows[0].std_error, 0.0);
    }

    #[test]
    fn zigzag_increases_range() {
        let x = LatticePath::zigzag(5, 1.0, 50.0).unwrap();
        for gamma in [1.0, f64::INFINITY] {
            let r = pascal_check(std::slice::from_ref(&x), &JumpKernel::ssrw(), 1.0, gamma, 2000, RngStream::new(2, 0)).unwrap();
            assert!(r.rows[0].z > 3.0, "{:?}", r.rows[0]);
        }
    }

    #[test]
    fn rejects_periodic_kernel() {
        let k = JumpKernel::new([(2, 0.5), (-2, 0.5)]).unwrap();
        let x = LatticePath::constant(0, 1.0);
        assert!(pascal_check(&[x], &k, 1.0, 1.0, 10, RngStream::new(1, 0)).is_err());
    }
}

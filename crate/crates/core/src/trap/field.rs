use std::io::Write;

use rand_distr::{Distribution, Poisson};

use super::window::WindowPolicy;
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::walk::{check_horizon, coincidence_time, sample_path_or_constant, JumpKernel, LatticePath};

/// Poisson system of independent traps on a finite window.
///
/// Counts `N_y` are drawn eagerly; each trap's trajectory is generated on
/// first use from its own substream, so the realization does not depend
/// on access order.
#[derive(Debug, Clone)]
pub struct TrapField {
    nu: f64,
    rho: f64,
    kernel: JumpKernel,
    policy: WindowPolicy,
    horizon: f64,
    counts: Vec<u32>,
    trap_sites: Vec<i64>,
    trajectories: Vec<Option<LatticePath>>,
    /// Trap indices by increasing distance of their start from the origin.
    nearest_first: Vec<usize>,
    stream: RngStream,
}

/// Result of [`TrapField::quenched_weight`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuenchedWeight {
    /// `exp{−γ ∫ ξ(s, X_s) ds}`; for γ = ∞ the survival indicator.
    pub value: f64,
    /// `∫₀ᵗ ξ(s, X_s) ds` (for γ = ∞ evaluation stops at the first contact).
    pub exposure: f64,
    /// The path left `[−base, base]`, so the truncation bound does not apply.
    pub escaped: bool,
}

/// Draw counts and (lazily) trajectories for a trap field.
pub fn generate_field(
    nu: f64,
    rho: f64,
    trap_kernel: &JumpKernel,
    policy: WindowPolicy,
    horizon: f64,
    stream: RngStream,
) -> Result<TrapField> {
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(invalid(format!("trap intensity ν = {nu} must be finite and ≥ 0")));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(invalid(format!("trap rate ρ = {rho} must be finite and ≥ 0")));
    }
    check_horizon(horizon)?;
    if !trap_kernel.is_symmetric() {
        return Err(Error::InvalidKernel("trap kernel must be symmetric".into()));
    }
    let half = policy.half_width();
    let sites = (2 * half + 1) as usize;
    let mut counts = vec![0u32; sites];
    let mut trap_sites = Vec::new();
    if nu > 0.0 {
        let poisson = Poisson::new(nu).map_err(|e| invalid(e.to_string()))?;
        let mut rng = stream.substream(0).rng();
        for (i, c) in counts.iter_mut().enumerate() {
            let n: f64 = poisson.sample(&mut rng);
            *c = n as u32;
            let y = i as i64 - half;
            trap_sites.extend(std::iter::repeat_n(y, *c as usize));
        }
    }
    let trajectories = vec![None; trap_sites.len()];
    let nearest_first = nearest_first(&trap_sites);
    Ok(TrapField {
        nu,
        rho,
        kernel: trap_kernel.clone(),
        policy,
        horizon,
        counts,
        trap_sites,
        trajectories,
        nearest_first,
        stream,
    })
}

fn nearest_first(sites: &[i64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by_key(|&i| (sites[i].abs(), i));
    order
}

impl TrapField {
    /// Field with explicitly given trap trajectories (each must cover
    /// `horizon`). Useful for hand-built test instances.
    pub fn from_trajectories(policy: WindowPolicy, horizon: f64, trajectories: Vec<LatticePath>) -> Result<Self> {
        let half = policy.half_width();
        let mut counts = vec![0u32; (2 * half + 1) as usize];
        let mut trap_sites = Vec::with_capacity(trajectories.len());
        for tr in &trajectories {
            if tr.horizon() < horizon {
                return Err(invalid("trajectory shorter than the field horizon"));
            }
            let y = tr.start();
            if y.abs() > half {
                return Err(invalid(format!("trap start {y} outside window ±{half}")));
            }
            counts[(y + half) as usize] += 1;
            trap_sites.push(y);
        }
        let nearest_first = nearest_first(&trap_sites);
        Ok(Self {
            nu: f64::NAN,
            rho: 0.0,
            kernel: JumpKernel::ssrw(),
            policy,
            horizon,
            counts,
            trap_sites,
            trajectories: trajectories.into_iter().map(Some).collect(),
            nearest_first,
            stream: RngStream::new(0, 0),
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn policy(&self) -> &WindowPolicy {
        &self.policy
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn trap_count(&self) -> usize {
        self.trap_sites.len()
    }

    /// `N_y`; zero outside the window.
    pub fn count(&self, site: i64) -> u32 {
        let half = self.policy.half_width();
        if site.abs() > half {
            0
        } else {
            self.counts[(site + half) as usize]
        }
    }

    pub fn counts(&self) -> impl Iterator<Item = (i64, u32)> + '_ {
        let half = self.policy.half_width();
        self.counts
            .iter()
            .enumerate()
            .map(move |(i, &c)| (i as i64 - half, c))
    }

    /// Trajectory of trap `index`, generated on first access.
    pub fn trajectory(&mut self, index: usize) -> &LatticePath {
        if self.trajectories[index].is_none() {
            let mut rng = self.stream.substream(index as u64 + 1).rng();
            let path = sample_path_or_constant(
                &self.kernel,
                self.rho,
                self.trap_sites[index],
                self.horizon,
                &mut rng,
            )
            .expect("rate and horizon validated at construction");
            self.trajectories[index] = Some(path);
        }
        self.trajectories[index].as_ref().unwrap()
    }

    /// `ξ(t, x)`: number of traps at `x` at time `t`.
    pub fn occupancy(&mut self, t: f64, x: i64) -> Result<u32> {
        if t > self.horizon {
            return Err(invalid(format!("time {t} beyond field horizon {}", self.horizon)));
        }
        let mut n = 0;
        for i in 0..self.trap_count() {
            if self.trajectory(i).position_at(t) == x {
                n += 1;
            }
        }
        Ok(n)
    }

    /// Exact `exp{−γ ∫₀ᵗ ξ(s, X_s) ds}` by merging the jump times of `X`
    /// with those of each trap.
    pub fn quenched_weight(&mut self, x_path: &LatticePath, gamma: f64) -> Result<QuenchedWeight> {
        if !(gamma >= 0.0) {
            return Err(invalid(format!("γ = {gamma} must lie in [0, ∞]")));
        }
        if x_path.horizon() > self.horizon {
            return Err(invalid("path horizon exceeds field horizon"));
        }
        let (xlo, xhi) = x_path.min_max();
        let base = self.policy.base;
        let escaped = xlo < -base || xhi > base;
        let mut exposure = 0.0;
        if gamma > 0.0 {
            for k in 0..self.trap_count() {
                let tr = self.trajectory(self.nearest_first[k]);
                let (lo, hi) = tr.min_max();
                if hi < xlo || lo > xhi {
                    continue;
                }
                exposure += coincidence_time(tr, x_path);
                if gamma.is_infinite() && exposure > 0.0 {
                    break;
                }
            }
        }
        let value = if gamma.is_infinite() {
            if exposure > 0.0 {
                0.0
            } else {
                1.0
            }
        } else {
            (-gamma * exposure).exp()
        };
        Ok(QuenchedWeight {
            value,
            exposure,
            escaped,
        })
    }

    /// CSV `site,count` of the initial configuration.
    pub fn write_snapshot_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["site", "count"])?;
        for (y, c) in self.counts() {
            w.serialize((y, c))?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV `time,site,count` of `ξ` on the given time grid. For plotting.
    pub fn write_heat_slice_csv<W: Write>(&mut self, out: W, times: &[f64]) -> Result<()> {
        let half = self.policy.half_width();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "site", "count"])?;
        for &t in times {
            if t > self.horizon {
                return Err(invalid(format!("time {t} beyond field horizon")));
            }
            let mut row = vec![0u32; (2 * half + 1) as usize];
            for i in 0..self.trap_count() {
                let x = self.trajectory(i).position_at(t);
                if x.abs() <= half {
                    row[(x + half) as usize] += 1;
                }
            }
            for (i, c) in row.iter().enumerate() {
                w.serialize((t, i as i64 - half, c))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(base: i64, margin: i64) -> WindowPolicy {
        WindowPolicy {
            base,
            margin,
            tail_bound: 1e-6,
            certified_bound: 0.0,
        }
    }

    #[test]
    fn zero_intensity_has_no_traps() {
        let f = generate_field(0.0, 1.0, &JumpKernel::ssrw(), policy(3, 5), 10.0, RngStream::new(1, 0)).unwrap();
        assert_eq!(f.trap_count(), 0);
    }

    #[test]
    fn occupancy_at_time_zero_is_counts() {
        let mut f = generate_field(2.0, 1.0, &JumpKernel::ssrw(), policy(2, 3), 5.0, RngStream::new(4, 0)).unwrap();
        for y in -5..=5 {
            assert_eq!(f.occupancy(0.0, y).unwrap(), f.count(y));
        }
    }

    #[test]
    fn particles_are_conserved() {
        let mut f = generate_field(1.5, 2.0, &JumpKernel::two_step(), policy(2, 4), 6.0, RngStream::new(5, 0)).unwrap();
        let n = f.trap_count() as u32;
        for &t in &[0.0, 1.0, 3.3, 6.0] {
            let total: u32 = (-40..=40).map(|x| f.occupancy(t, x).unwrap()).sum();
            assert_eq!(total, n);
        }
    }

    #[test]
    fn lazy_generation_is_order_independent() {
        let make = || generate_field(1.0, 1.0, &JumpKernel::ssrw(), policy(2, 6), 5.0, RngStream::new(8, 2)).unwrap();
        let mut a = make();
        let mut b = make();
        let n = a.trap_count();
        let fwd: Vec<LatticePath> = (0..n).map(|i| a.trajectory(i).clone()).collect();
        let rev: Vec<LatticePath> = (0..n).rev().map(|i| b.trajectory(i).clone()).collect();
        let rev: Vec<LatticePath> = rev.into_iter().rev().collect();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn immobile_trap_weights() {
        let trap = LatticePath::constant(0, 3.0);
        let mut f = TrapField::from_trajectories(policy(1, 1), 3.0, vec![trap]).unwrap();
        assert_eq!(f.occupancy(2.5, 0).unwrap(), 1);
        let x = LatticePath::constant(0, 3.0);
        let w = f.quenched_weight(&x, 1.0).unwrap();
        assert!((w.value - (-3f64).exp()).abs() < 1e-15);
        assert_eq!(f.quenched_weight(&x, f64::INFINITY).unwrap().value, 0.0);
        assert_eq!(f.quenched_weight(&x, 0.0).unwrap().value, 1.0);
    }

    #[test]
    fn empty_field_has_unit_weight() {
        let mut f = TrapField::from_trajectories(policy(1, 1), 3.0, vec![]).unwrap();
        let x = LatticePath::from_jumps(0, 3.0, [(1.0, 1)]).unwrap();
        assert_eq!(f.quenched_weight(&x, 2.0).unwrap().value, 1.0);
    }

    #[test]
    fn escaping_path_is_flagged() {
        let mut f = TrapField::from_trajectories(policy(1, 3), 3.0, vec![]).unwrap();
        let x = LatticePath::from_jumps(0, 3.0, [(1.0, 2)]).unwrap();
        assert!(f.quenched_weight(&x, 1.0).unwrap().escaped);
    }

    #[test]
    fn snapshot_csv_lists_window() {
        let f = TrapField::from_trajectories(policy(0, 1), 1.0, vec![LatticePath::constant(1, 1.0)]).unwrap();
        let mut buf = Vec::new();
        f.write_snapshot_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "site,count\n-1,0\n0,0\n1,1\n");
    }
}

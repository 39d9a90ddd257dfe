//! Per-path functionals: local times, sup-norm, range, holes, thin points
//! and the local-time functional `F_t^γ`.

use std::collections::BTreeMap;

use super::path::LatticePath;
use crate::error::{invalid, Result};

/// Ranges up to this many sites use a contiguous array.
pub const DENSE_RANGE_LIMIT: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense { origin: i64, times: Vec<f64> },
    Sparse(BTreeMap<i64, f64>),
}

/// Occupation time of each visited site up to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeProfile {
    storage: Storage,
    horizon: f64,
    range_size: usize,
}

impl LocalTimeProfile {
    /// Profile from explicit `(site, time)` entries; sites listed more
    /// than once accumulate.
    pub fn from_entries(horizon: f64, entries: impl IntoIterator<Item = (i64, f64)>) -> Self {
        let mut map = BTreeMap::new();
        for (x, t) in entries {
            *map.entry(x).or_insert(0.0) += t;
        }
        let range_size = map.len();
        Self {
            storage: Storage::Sparse(map),
            horizon,
            range_size,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn get(&self, site: i64) -> f64 {
        match &self.storage {
            Storage::Dense { origin, times } => {
                let i = site - origin;
                if i < 0 || i as usize >= times.len() {
                    0.0
                } else {
                    times[i as usize]
                }
            }
            Storage::Sparse(map) => map.get(&site).copied().unwrap_or(0.0),
        }
    }

    /// Sites with positive local time, in increasing site order.
    pub fn iter(&self) -> Box<dyn Iterator<Item = (i64, f64)> + '_> {
        match &self.storage {
            Storage::Dense { origin, times } => Box::new(
                times
                    .iter()
                    .enumerate()
                    .filter(|(_, &t)| t > 0.0 || t.is_nan())
                    .map(move |(i, &t)| (origin + i as i64, t)),
            ),
            Storage::Sparse(map) => Box::new(map.iter().map(|(&x, &t)| (x, t))),
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.iter().map(|(_, t)| t)
    }

    pub fn total(&self) -> f64 {
        self.times().sum()
    }

    /// Number of sites with positive local time.
    pub fn support_size(&self) -> usize {
        self.range_size
    }
}

/// `L_t(x)` for every visited site `x`.
pub fn local_time(path: &LatticePath) -> LocalTimeProfile {
    let (lo, hi) = path.min_max();
    let span = (hi - lo) as u64 + 1;
    let storage = if span <= DENSE_RANGE_LIMIT {
        let mut times = vec![0.0; span as usize];
        for (a, b, x) in path.segments() {
            times[(x - lo) as usize] += b - a;
        }
        Storage::Dense { origin: lo, times }
    } else {
        let mut map = BTreeMap::new();
        for (a, b, x) in path.segments() {
            *map.entry(x).or_insert(0.0) += b - a;
        }
        map.retain(|_, t| *t > 0.0);
        Storage::Sparse(map)
    };
    let range_size = match &storage {
        Storage::Dense { times, .. } => times.iter().filter(|&&t| t > 0.0).count(),
        Storage::Sparse(map) => map.len(),
    };
    LocalTimeProfile {
        storage,
        horizon: path.horizon(),
        range_size,
    }
}

/// `‖X‖_t = max_{s ≤ t} |X_s|`.
pub fn sup_norm(path: &LatticePath) -> f64 {
    path.visited().map(|x| x.unsigned_abs()).max().unwrap_or(0) as f64
}

/// Extent and cardinality of the set of visited sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangeStats {
    pub min: i64,
    pub max: i64,
    pub size: u64,
}

impl RangeStats {
    /// Unvisited sites strictly between `min` and `max`.
    pub fn holes(&self) -> u64 {
        (self.max - self.min) as u64 + 1 - self.size
    }
}

pub fn range_stats(path: &LatticePath) -> RangeStats {
    let (min, max) = path.min_max();
    let span = (max - min) as u64 + 1;
    let size = if span <= DENSE_RANGE_LIMIT {
        let mut seen = vec![false; span as usize];
        let mut count = 0u64;
        for x in path.visited() {
            let slot = &mut seen[(x - min) as usize];
            if !*slot {
                *slot = true;
                count += 1;
            }
        }
        count
    } else {
        let mut v: Vec<i64> = path.visited().collect();
        v.sort_unstable();
        v.dedup();
        v.len() as u64
    };
    RangeStats { min, max, size }
}

/// Total volume `G_t` of the holes in the range.
pub fn hole_volume(path: &LatticePath) -> u64 {
    range_stats(path).holes()
}

fn check_threshold(m: f64) -> Result<()> {
    if m > 0.0 && !m.is_nan() {
        Ok(())
    } else {
        Err(invalid(format!("thin-point threshold {m} must be positive")))
    }
}

/// `𝒯_{t,M} = {x : 0 < L_t(x) ≤ M}`, sorted.
pub fn thin_points(profile: &LocalTimeProfile, m: f64) -> Result<Vec<i64>> {
    check_threshold(m)?;
    Ok(profile
        .iter()
        .filter(|&(_, t)| t > 0.0 && t <= m)
        .map(|(x, _)| x)
        .collect())
}

pub fn thin_count(profile: &LocalTimeProfile, m: f64) -> Result<usize> {
    check_threshold(m)?;
    Ok(profile.times().filter(|&t| t > 0.0 && t <= m).count())
}

pub(crate) fn check_finite_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("γ = {gamma} must lie in (0, ∞)")))
    }
}

/// `F_t^γ = Σ_{x visited} e^{−γ L_t(x)}`.
pub fn local_time_functional(profile: &LocalTimeProfile, gamma: f64) -> Result<f64> {
    check_finite_gamma(gamma)?;
    Ok(profile
        .times()
        .filter(|&t| t > 0.0)
        .map(|t| (-gamma * t).exp())
        .sum())
}

/// Time the two paths spend at the same site, over their common horizon.
pub fn coincidence_time(a: &LatticePath, b: &LatticePath) -> f64 {
    let horizon = a.horizon().min(b.horizon());
    let (ta, pa) = (a.jump_times(), a.jump_positions());
    let (tb, pb) = (b.jump_times(), b.jump_positions());
    let (mut i, mut j) = (0usize, 0usize);
    let (mut xa, mut xb) = (a.start(), b.start());
    let mut now = 0.0;
    let mut total = 0.0;
    loop {
        let na = ta.get(i).copied().unwrap_or(f64::INFINITY);
        let nb = tb.get(j).copied().unwrap_or(f64::INFINITY);
        let next = na.min(nb).min(horizon);
        if xa == xb {
            total += next - now;
        }
        if next >= horizon {
            break;
        }
        now = next;
        if na == next {
            xa = pa[i];
            i += 1;
        }
        if nb == next {
            xb = pb[j];
            j += 1;
        }
    }
    total
}

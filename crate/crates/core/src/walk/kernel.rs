use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities whose sum is within this distance of one are renormalized.
pub const NORMALIZATION_SLACK: f64 = 1e-12;

/// Jump distribution of a continuous-time lattice walk on ℤ.
///
/// Displacements are nonzero and distinct; holding is represented by the
/// jump rate, never by a zero displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpKernel {
    name: String,
    offsets: Vec<(i64, f64)>,
    cumulative: Vec<f64>,
    mean: f64,
    variance: f64,
    exp_moment: Option<ExpMoment>,
    symmetric: bool,
    nearest_neighbor: bool,
}

/// `M(λ*) = Σ e^{λ*|x|} p(x)` at the declared rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpMoment {
    pub rate: f64,
    pub value: f64,
}

/// On-disk / inline description of a kernel. Declared flags are checked
/// against the offsets on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub offsets: Vec<(i64, f64)>,
    #[serde(default)]
    pub symmetric: Option<bool>,
    #[serde(default)]
    pub nearest_neighbor: Option<bool>,
    #[serde(default)]
    pub exp_moment_rate: Option<f64>,
}

impl JumpKernel {
    pub fn new(offsets: impl IntoIterator<Item = (i64, f64)>) -> Result<Self> {
        let mut offsets: Vec<(i64, f64)> = offsets.into_iter().collect();
        if offsets.is_empty() {
            return Err(Error::InvalidKernel("no offsets".into()));
        }
        offsets.sort_by_key(|&(d, _)| d);
        for w in offsets.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidKernel(format!("duplicate displacement {}", w[0].0)));
            }
        }
        for &(d, p) in &offsets {
            if d == 0 {
                return Err(Error::InvalidKernel("zero displacement; holding is set by the jump rate".into()));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidKernel(format!("probability {p} for displacement {d} outside (0, 1]")));
            }
        }
        let total: f64 = offsets.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > NORMALIZATION_SLACK {
            return Err(Error::InvalidKernel(format!("probabilities sum to {total}")));
        }
        if total != 1.0 {
            for o in offsets.iter_mut() {
                o.1 /= total;
            }
        }

        let symmetric = offsets.iter().all(|&(d, p)| {
            offsets
                .binary_search_by_key(&-d, |&(e, _)| e)
                .map(|j| offsets[j].1 == p)
                .unwrap_or(false)
        });
        let mean: f64 = if symmetric {
            0.0
        } else {
            offsets.iter().map(|&(d, p)| d as f64 * p).sum()
        };
        let second: f64 = offsets.iter().map(|&(d, p)| (d as f64).powi(2) * p).sum();
        let variance = second - mean * mean;
        let nearest_neighbor = offsets.iter().all(|&(d, _)| d.abs() == 1);
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = offsets
            .iter()
            .map(|&(_, p)| {
                acc += p;
                acc
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;

        Ok(Self {
            name: "custom".into(),
            offsets,
            cumulative,
            mean,
            variance,
            exp_moment: None,
            symmetric,
            nearest_neighbor,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Declare the exponential-moment rate λ* and store `M(λ*)`.
    pub fn with_exp_moment_rate(mut self, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidKernel(format!("exponential moment rate {rate} must be positive")));
        }
        let value = self.abs_moment(rate);
        if !value.is_finite() {
            return Err(Error::InvalidKernel(format!("M({rate}) is not finite")));
        }
        self.exp_moment = Some(ExpMoment { rate, value });
        Ok(self)
    }

    pub fn from_spec(spec: &KernelSpec) -> Result<Self> {
        let mut k = Self::new(spec.offsets.iter().copied())?;
        if let Some(name) = &spec.name {
            k.name = name.clone();
        }
        if let Some(declared) = spec.symmetric {
            if declared != k.symmetric {
                return Err(Error::InvalidKernel(format!(
                    "declared symmetric = {declared} but offsets say {}",
                    k.symmetric
                )));
            }
        }
        if let Some(declared) = spec.nearest_neighbor {
            if declared != k.nearest_neighbor {
                return Err(Error::InvalidKernel(format!(
                    "declared nearest_neighbor = {declared} but offsets say {}",
                    k.nearest_neighbor
                )));
            }
        }
        if let Some(rate) = spec.exp_moment_rate {
            k = k.with_exp_moment_rate(rate)?;
        }
        Ok(k)
    }

    pub fn to_spec(&self) -> KernelSpec {
        KernelSpec {
            name: Some(self.name.clone()),
            offsets: self.offsets.clone(),
            symmetric: Some(self.symmetric),
            nearest_neighbor: Some(self.nearest_neighbor),
            exp_moment_rate: self.exp_moment.map(|m| m.rate),
        }
    }

    /// Load and validate a kernel specification file (JSON).
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: KernelSpec = serde_json::from_str(&text)?;
        Self::from_spec(&spec)
    }

    /// Simple symmetric random walk, `±1` with probability ½.
    pub fn ssrw() -> Self {
        Self::new([(-1, 0.5), (1, 0.5)])
            .and_then(|k| k.with_exp_moment_rate(2.0))
            .expect("valid kernel")
            .with_name("ssrw")
    }

    /// `±1` with probability 0.4 each, `±2` with probability 0.1 each.
    pub fn two_step() -> Self {
        Self::new([(-2, 0.1), (-1, 0.4), (1, 0.4), (2, 0.1)])
            .and_then(|k| k.with_exp_moment_rate(2.0))
            .expect("valid kernel")
            .with_name("two_step")
    }

    /// `±1, ±3` each with probability ¼.
    pub fn one_three() -> Self {
        Self::new([(-3, 0.25), (-1, 0.25), (1, 0.25), (3, 0.25)])
            .and_then(|k| k.with_exp_moment_rate(1.0))
            .expect("valid kernel")
            .with_name("one_three")
    }

    /// Symmetric kernel with `p(x) ∝ |x|^{-exponent}` for `1 ≤ |x| ≤ cutoff`.
    /// No exponential moment is declared: the tail is meant to model a
    /// power law.
    pub fn power_law(exponent: f64, cutoff: i64) -> Result<Self> {
        if cutoff < 1 || !(exponent > 1.0) {
            return Err(Error::InvalidKernel("power law needs cutoff ≥ 1 and exponent > 1".into()));
        }
        let norm: f64 = 2.0 * (1..=cutoff).map(|x| (x as f64).powf(-exponent)).sum::<f64>();
        let pairs = (1..=cutoff).flat_map(|x| {
            let p = (x as f64).powf(-exponent) / norm;
            [(-x, p), (x, p)]
        });
        let mut k = Self::new(pairs)?;
        k.name = format!("power_law({exponent},{cutoff})");
        Ok(k)
    }

    /// Built-in kernels by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "ssrw" => Some(Self::ssrw()),
            "two_step" => Some(Self::two_step()),
            "one_three" => Some(Self::one_three()),
            "power_law" => Self::power_law(3.0, 1000).ok(),
            _ => None,
        }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["ssrw", "two_step", "one_three", "power_law"]
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn offsets(&self) -> &[(i64, f64)] {
        &self.offsets
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn exp_moment(&self) -> Option<ExpMoment> {
        self.exp_moment
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_nearest_neighbor(&self) -> bool {
        self.nearest_neighbor
    }

    pub fn max_jump(&self) -> i64 {
        self.offsets.iter().map(|&(d, _)| d.abs()).max().unwrap_or(0)
    }

    /// Greatest common divisor of the displacements; 1 iff the walk is
    /// irreducible on ℤ.
    pub fn span(&self) -> u64 {
        self.offsets
            .iter()
            .fold(0u64, |g, &(d, _)| gcd(g, d.unsigned_abs()))
    }

    pub fn probability(&self, displacement: i64) -> f64 {
        self.offsets
            .binary_search_by_key(&displacement, |&(d, _)| d)
            .map(|i| self.offsets[i].1)
            .unwrap_or(0.0)
    }

    /// `Σ e^{λ|x|} p(x)`.
    pub fn abs_moment(&self, lambda: f64) -> f64 {
        self.offsets
            .iter()
            .map(|&(d, p)| (lambda * d.abs() as f64).exp() * p)
            .sum()
    }

    /// `Σ e^{λx} p(x)`.
    pub fn mgf(&self, lambda: f64) -> f64 {
        self.offsets
            .iter()
            .map(|&(d, p)| (lambda * d as f64).exp() * p)
            .sum()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        if self.offsets.len() == 2 && self.offsets[0].1 == 0.5 {
            return if rng.random::<bool>() {
                self.offsets[1].0
            } else {
                self.offsets[0].0
            };
        }
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.offsets[i.min(self.offsets.len() - 1)].0
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

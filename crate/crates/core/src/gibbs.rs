//! The survival-conditioned path measure by self-normalized importance
//! sampling under the free law of `X`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::annealed::{annealed_given_path_fk, check_model, FkWindow, Method, Model};
use crate::error::{invalid, Error, Result};
use crate::par;
use crate::rng::RngStream;
use crate::stats::{bootstrap_se, log_sum_exp};
use crate::trap::{generate_field, WindowPolicy};
use crate::walk::{
    hole_volume, local_time, local_time_functional, sample_path_or_constant, sup_norm, thin_count, LatticePath,
};

/// Ensembles with fewer effective samples than this carry a warning flag.
pub const LOW_ESS: f64 = 10.0;
/// Bootstrap resamples for [`conditioned_statistic`].
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Poisson truncation used for deterministic weights.
const FK_TIME_TOLERANCE: f64 = 1e-9;

/// Free-law paths with survival weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPathEnsemble {
    pub t: f64,
    pub nu: f64,
    pub gamma: f64,
    pub paths: Vec<LatticePath>,
    /// `ln` of the raw weight of each path (`−∞` for a zero weight).
    pub log_weights: Vec<f64>,
    pub normalized_weights: Vec<f64>,
    pub ess: f64,
    pub weight_method: Method,
    pub fields_per_path: u32,
    /// Largest truncation bound among the weights.
    pub truncation_eps: f64,
    pub low_ess: bool,
    stream: RngStream,
}

impl WeightedPathEnsemble {
    /// Assemble from paths and log weights. Fails if every weight is zero.
    pub fn from_log_weights(
        t: f64,
        nu: f64,
        gamma: f64,
        paths: Vec<LatticePath>,
        log_weights: Vec<f64>,
        weight_method: Method,
        stream: RngStream,
    ) -> Result<Self> {
        if paths.is_empty() || paths.len() != log_weights.len() {
            return Err(invalid("ensemble needs one weight per path and at least one path"));
        }
        let total = log_sum_exp(&log_weights);
        if total == f64::NEG_INFINITY {
            return Err(Error::DegenerateWeights(paths.len()));
        }
        let normalized_weights: Vec<f64> = log_weights.iter().map(|l| (l - total).exp()).collect();
        let ess = 1.0 / normalized_weights.iter().map(|w| w * w).sum::<f64>();
        let ess = ess.clamp(1.0, paths.len() as f64);
        Ok(Self {
            t,
            nu,
            gamma,
            paths,
            log_weights,
            normalized_weights,
            ess,
            weight_method,
            fields_per_path: 0,
            truncation_eps: 0.0,
            low_ess: ess < LOW_ESS,
            stream,
        })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Raw weights; these underflow to 0 for long horizons, where only
    /// `log_weights` stay meaningful.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    /// Self-normalized weighted mean of per-path values.
    pub fn weighted_mean(&self, values: &[f64]) -> f64 {
        let den: f64 = self.normalized_weights.iter().sum();
        let num: f64 = self.normalized_weights.iter().zip(values).map(|(w, f)| w * f).sum();
        num / den
    }

    /// Delta-method standard error of [`Self::weighted_mean`].
    pub fn weighted_mean_se(&self, values: &[f64]) -> f64 {
        let mu = self.weighted_mean(values);
        let den: f64 = self.normalized_weights.iter().sum();
        self.normalized_weights
            .iter()
            .zip(values)
            .map(|(w, f)| (w / den * (f - mu)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// CSV `path_id,sup_norm,hole_volume,F_gamma,raw_weight,normalized_weight`
    /// with `F_gamma` evaluated at `f_gamma`.
    pub fn write_csv<W: Write>(&self, out: W, f_gamma: f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path_id", "sup_norm", "hole_volume", "F_gamma", "raw_weight", "normalized_weight"])?;
        for (i, p) in self.paths.iter().enumerate() {
            let f = local_time_functional(&local_time(p), f_gamma)?;
            w.serialize((i, sup_norm(p), hole_volume(p), f, self.log_weights[i].exp(), self.normalized_weights[i]))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Inputs of [`sample_ensemble`] besides the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub t: f64,
    pub n_paths: usize,
    pub fields_per_path: u32,
    pub weight_method: Method,
    /// Window truncation bound for the trap system.
    pub window_eps: f64,
}

/// Sample `n_paths` free paths of `X` and weight each by an unbiased
/// estimate of `Z^γ_{t,X}`: the average quenched weight over
/// `fields_per_path` trap fields, or the deterministic solver value.
///
/// Path `i` uses substream `2i`; its weights use substream `2i+1`.
pub fn sample_ensemble(model: &Model, spec: &EnsembleSpec, stream: RngStream) -> Result<WeightedPathEnsemble> {
    let items = sample_items(model, spec, 0, stream)?;
    assemble(model, spec, items, stream)
}

type Item = (LatticePath, f64, f64);

fn sample_items(model: &Model, spec: &EnsembleSpec, from: usize, stream: RngStream) -> Result<Vec<Item>> {
    check_model(model)?;
    let EnsembleSpec { t, n_paths, fields_per_path, weight_method, window_eps } = *spec;
    if n_paths < 2 {
        return Err(invalid("an ensemble needs at least 2 paths"));
    }
    if !matches!(weight_method, Method::FieldMc | Method::FeynmanKac) {
        return Err(invalid(format!("weight method {} is not available for ensembles", weight_method.as_str())));
    }
    if weight_method == Method::FieldMc && fields_per_path == 0 {
        return Err(invalid("fields_per_path must be ≥ 1"));
    }
    par::try_map(n_paths.saturating_sub(from), |i| {
        let i = (from + i) as u64;
        let x = sample_path_or_constant(&model.walk_kernel, model.kappa, 0, t, &mut stream.substream(2 * i).rng())?;
        let w = stream.substream(2 * i + 1);
        let (log_w, eps) = path_log_weight(model, &x, weight_method, fields_per_path, window_eps, w)?;
        Ok::<_, Error>((x, log_w, eps))
    })
}

fn assemble(model: &Model, spec: &EnsembleSpec, items: Vec<Item>, stream: RngStream) -> Result<WeightedPathEnsemble> {
    let truncation_eps = items.iter().map(|it| it.2).fold(0.0, f64::max);
    let (paths, log_weights): (Vec<_>, Vec<_>) = items.into_iter().map(|(x, l, _)| (x, l)).unzip();
    let mut e =
        WeightedPathEnsemble::from_log_weights(spec.t, model.nu, model.gamma, paths, log_weights, spec.weight_method, stream)?;
    e.fields_per_path = if spec.weight_method == Method::FieldMc { spec.fields_per_path } else { 0 };
    e.truncation_eps = truncation_eps;
    Ok(e)
}

fn path_log_weight(
    model: &Model,
    x: &LatticePath,
    method: Method,
    fields: u32,
    window_eps: f64,
    stream: RngStream,
) -> Result<(f64, f64)> {
    if model.nu == 0.0 || model.gamma == 0.0 || x.horizon() == 0.0 {
        return Ok((0.0, 0.0));
    }
    match method {
        Method::FeynmanKac => {
            let e = annealed_given_path_fk(
                x,
                model.nu,
                model.rho,
                &model.trap_kernel,
                model.gamma,
                FkWindow::Certified { epsilon: window_eps },
                FK_TIME_TOLERANCE,
            )?;
            Ok((e.log_value, e.truncation_eps))
        }
        _ => {
            let base = sup_norm(x) as i64;
            let policy = WindowPolicy::certify(base, model.nu, model.rho, &model.trap_kernel, x.horizon(), window_eps)?;
            let mut sum = 0.0;
            for j in 0..fields {
                let mut field =
                    generate_field(model.nu, model.rho, &model.trap_kernel, policy, x.horizon(), stream.substream(j as u64))?;
                sum += field.quenched_weight(x, model.gamma)?.value;
            }
            Ok(((sum / fields as f64).ln(), policy.certified_bound))
        }
    }
}

/// When and how [`sample_ensemble_auto`] escalates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscalationPolicy {
    pub n_paths: usize,
    pub target_ess: f64,
    pub initial_fields: u32,
    /// Fields per path are multiplied by 4 up to this count.
    pub max_fields: u32,
    /// Path count is doubled up to this count once weights are
    /// deterministic.
    pub max_paths: usize,
    pub window_eps: f64,
}

impl Default for EscalationPolicy {
    fn default() -> Self {
        Self {
            n_paths: 1000,
            target_ess: 50.0,
            initial_fields: 1,
            max_fields: 16,
            max_paths: 64_000,
            window_eps: 1e-6,
        }
    }
}

/// One attempt made by [`sample_ensemble_auto`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscalationStep {
    pub weight_method: Method,
    pub fields_per_path: u32,
    pub n_paths: usize,
    pub ess: f64,
}

/// Sample ensembles until the effective sample size reaches the target.
///
/// Order: field weights with more fields per path while the ESS is within
/// a factor 4 of the target; then deterministic weights; then more paths.
/// Every attempt reuses the same seed, so a larger ensemble extends the
/// smaller one path by path.
pub fn sample_ensemble_auto(
    model: &Model,
    t: f64,
    policy: &EscalationPolicy,
    stream: RngStream,
) -> Result<(WeightedPathEnsemble, Vec<EscalationStep>)> {
    let mut spec = EnsembleSpec {
        t,
        n_paths: policy.n_paths,
        fields_per_path: policy.initial_fields.max(1),
        weight_method: Method::FieldMc,
        window_eps: policy.window_eps,
    };
    let mut steps = Vec::new();
    let mut items: Vec<Item> = Vec::new();
    loop {
        // Paths and weights for indices already sampled under the same
        // method are kept.
        let more = sample_items(model, &spec, items.len(), stream)?;
        items.extend(more);
        let attempt = assemble(model, &spec, items.clone(), stream);
        let ess = match &attempt {
            Ok(e) => e.ess,
            Err(Error::DegenerateWeights(_)) => 0.0,
            Err(_) => return attempt.map(|e| (e, steps)),
        };
        steps.push(EscalationStep {
            weight_method: spec.weight_method,
            fields_per_path: spec.fields_per_path,
            n_paths: spec.n_paths,
            ess,
        });
        if ess >= policy.target_ess {
            return attempt.map(|e| (e, steps));
        }
        match spec.weight_method {
            Method::FieldMc if ess * 4.0 >= policy.target_ess && spec.fields_per_path * 4 <= policy.max_fields => {
                spec.fields_per_path *= 4;
                items.clear();
            }
            Method::FieldMc => {
                spec.weight_method = Method::FeynmanKac;
                items.clear();
            }
            _ if spec.n_paths * 2 <= policy.max_paths => spec.n_paths *= 2,
            _ => return attempt.map(|e| (e, steps)),
        }
    }
}

/// A self-normalized estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weighted {
    pub value: f64,
    pub std_error: f64,
}

/// Conditioned probabilities of small and large sup-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fluctuations {
    /// `α t^{1/3}`.
    pub small_threshold: f64,
    /// `t^{11/24 + ε}`.
    pub large_threshold: f64,
    /// `P(‖X‖_t ≤ α t^{1/3})`.
    pub p_small: Weighted,
    /// `P(‖X‖_t ≥ t^{11/24 + ε})`.
    pub p_large: Weighted,
}

pub fn fluctuation_probabilities(ensemble: &WeightedPathEnsemble, alpha: f64, epsilon: f64) -> Result<Fluctuations> {
    if ensemble.is_empty() {
        return Err(invalid("empty ensemble"));
    }
    if !(alpha > 0.0 && epsilon > 0.0) {
        return Err(invalid("α and ε must be > 0"));
    }
    let t = ensemble.t;
    let small_threshold = alpha * t.cbrt();
    let large_threshold = t.powf(11.0 / 24.0 + epsilon);
    let norms: Vec<f64> = ensemble.paths.iter().map(sup_norm).collect();
    let est = |ind: Vec<f64>| Weighted {
        value: ensemble.weighted_mean(&ind),
        std_error: ensemble.weighted_mean_se(&ind),
    };
    let small = norms.iter().map(|&n| f64::from(n <= small_threshold)).collect();
    let large = norms.iter().map(|&n| f64::from(n >= large_threshold)).collect();
    Ok(Fluctuations {
        small_threshold,
        large_threshold,
        p_small: est(small),
        p_large: est(large),
    })
}

/// Path functionals available to [`conditioned_statistic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    One,
    SupNorm,
    HoleVolume,
    FGamma(f64),
    ThinCount(f64),
}

impl Functional {
    pub fn evaluate(&self, path: &LatticePath) -> Result<f64> {
        Ok(match *self {
            Functional::One => 1.0,
            Functional::SupNorm => sup_norm(path),
            Functional::HoleVolume => hole_volume(path) as f64,
            Functional::FGamma(g) => local_time_functional(&local_time(path), g)?,
            Functional::ThinCount(m) => thin_count(&local_time(path), m)? as f64,
        })
    }
}

/// `Σ w_i f(X_i) / Σ w_i` with a weighted-bootstrap standard error.
pub fn conditioned_statistic(ensemble: &WeightedPathEnsemble, functional: Functional) -> Result<Weighted> {
    let values = ensemble
        .paths
        .iter()
        .map(|p| functional.evaluate(p))
        .collect::<Result<Vec<_>>>()?;
    let w = &ensemble.normalized_weights;
    let ratio = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut num, mut den) = (0.0, 0.0);
        for i in idx {
            num += w[i] * values[i];
            den += w[i];
        }
        num / den
    };
    let value = ratio(&mut (0..values.len()));
    let mut rng = ensemble.stream.substream(u64::MAX - 1).rng();
    let std_error = bootstrap_se(values.len(), BOOTSTRAP_RESAMPLES, &mut rng, |idx| {
        ratio(&mut idx.iter().copied())
    });
    Ok(Weighted { value, std_error })
}

/// Summary record of a fluctuation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSummary {
    pub t: f64,
    #[serde(with = "crate::serde_f64")]
    pub gamma: f64,
    pub nu: f64,
    pub p_small: Weighted,
    pub p_large: Weighted,
    pub ess: f64,
    pub seed: u64,
}

impl FluctuationSummary {
    pub fn new(ensemble: &WeightedPathEnsemble, fluctuations: &Fluctuations) -> Self {
        Self {
            t: ensemble.t,
            gamma: ensemble.gamma,
            nu: ensemble.nu,
            p_small: fluctuations.p_small,
            p_large: fluctuations.p_large,
            ess: ensemble.ess,
            seed: ensemble.stream.seed(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(t: f64, n: usize) -> EnsembleSpec {
        EnsembleSpec {
            t,
            n_paths: n,
            fields_per_path: 1,
            weight_method: Method::FieldMc,
            window_eps: 1e-6,
        }
    }

    #[test]
    fn no_traps_means_equal_weights() {
        let mut m = Model::ssrw(f64::INFINITY);
        m.nu = 0.0;
        let e = sample_ensemble(&m, &spec(10.0, 50), RngStream::new(1, 0)).unwrap();
        assert!((e.ess - 50.0).abs() < 1e-9);
        assert!(e.normalized_weights.iter().all(|&w| (w - 0.02).abs() < 1e-15));
    }

    #[test]
    fn constant_functional_is_exactly_one() {
        let m = Model::ssrw(1.0);
        let e = sample_ensemble(&m, &spec(5.0, 40), RngStream::new(2, 0)).unwrap();
        let s = conditioned_statistic(&e, Functional::One).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.std_error, 0.0);
        let total: f64 = e.normalized_weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hard_field_weights_are_averaged_indicators() {
        let m = Model::ssrw(f64::INFINITY);
        let mut s = spec(3.0, 30);
        s.fields_per_path = 4;
        let e = sample_ensemble(&m, &s, RngStream::new(3, 0)).unwrap();
        for w in e.raw_weights() {
            let k = w * 4.0;
            assert!((k - k.round()).abs() < 1e-12 && (0.0..=4.0).contains(&k));
        }
    }

    #[test]
    fn huge_alpha_makes_small_fluctuations_certain() {
        let mut m = Model::ssrw(f64::INFINITY);
        m.nu = 0.0;
        let e = sample_ensemble(&m, &spec(20.0, 30), RngStream::new(4, 0)).unwrap();
        let f = fluctuation_probabilities(&e, 1e6, 0.01).unwrap();
        assert_eq!(f.p_small.value, 1.0);
    }

    #[test]
    fn rejects_single_path_and_range_weights() {
        let m = Model::ssrw(1.0);
        assert!(sample_ensemble(&m, &spec(1.0, 1), RngStream::new(1, 0)).is_err());
        let mut s = spec(1.0, 10);
        s.weight_method = Method::SoftRangeMc;
        assert!(sample_ensemble(&m, &s, RngStream::new(1, 0)).is_err());
    }
}

use serde::{Deserialize, Serialize};

/// Which route produced a survival estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Average of exact quenched weights over simulated trap fields.
    FieldMc,
    /// `exp{−ν E|SoftRange(Y+X)|}` with the expectation estimated over `Y`.
    SoftRangeMc,
    /// As `SoftRangeMc` with the hard range (γ = ∞).
    HardRangeMc,
    /// Deterministic single-trap Feynman–Kac solve.
    FeynmanKac,
    /// Per-site hitting simulation of traps started outside a ball.
    HittingMc,
    /// Confinement simulation of the walk `X` in a ball.
    ConfinementMc,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FieldMc => "field_mc",
            Method::SoftRangeMc => "soft_range_mc",
            Method::HardRangeMc => "hard_range_mc",
            Method::FeynmanKac => "feynman_kac",
            Method::HittingMc => "hitting_mc",
            Method::ConfinementMc => "confinement_mc",
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Method::FeynmanKac)
    }
}

/// A survival probability with its uncertainty.
///
/// `log_value` is the primary quantity; `value = exp(log_value)` may
/// underflow for long horizons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub method: Method,
    pub value: f64,
    pub std_error: f64,
    #[serde(with = "crate::serde_f64")]
    pub log_value: f64,
    #[serde(with = "crate::serde_f64")]
    pub log_std_error: f64,
    pub replicas: u64,
    /// Bound on the error from truncating the trap system (and, for the
    /// deterministic route, the time propagator), on the `ln Z` scale.
    pub truncation_eps: f64,
    /// Upper bound on the multiplicative exp-of-mean bias, when applicable.
    pub bias_bound: Option<f64>,
}

impl SurvivalEstimate {
    pub fn exact_one(method: Method) -> Self {
        Self {
            method,
            value: 1.0,
            std_error: 0.0,
            log_value: 0.0,
            log_std_error: 0.0,
            replicas: 0,
            truncation_eps: 0.0,
            bias_bound: None,
        }
    }

    pub(crate) fn from_log(method: Method, log_value: f64, log_std_error: f64, replicas: u64) -> Self {
        let value = log_value.exp();
        Self {
            method,
            value,
            std_error: value * log_std_error,
            log_value,
            log_std_error,
            replicas,
            truncation_eps: 0.0,
            bias_bound: None,
        }
    }

    pub fn neg_log(&self) -> f64 {
        -self.log_value
    }

    /// Combined tolerance for comparing two estimates in value space:
    /// `k` standard errors plus both truncation bounds (converted from the
    /// log scale).
    pub fn agreement_tolerance(&self, other: &Self, k: f64) -> f64 {
        let se = (self.std_error.powi(2) + other.std_error.powi(2)).sqrt();
        let trunc = self.value * self.truncation_eps.exp_m1() + other.value * other.truncation_eps.exp_m1();
        k * se + trunc
    }

    pub fn agrees_with(&self, other: &Self, k: f64) -> bool {
        (self.value - other.value).abs() <= self.agreement_tolerance(other, k)
    }
}

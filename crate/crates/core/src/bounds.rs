//! Generalization certificates, concentration formulas and coverage studies.
//!
//! A [`BoundCertificate`] is the evaluated right-hand side of one bound on a
//! realized run. Its `value` is the sum of the ingredients named `term.*`;
//! the other ingredients record the inputs (divergences, norms, learning
//! rates) so the value can be audited. `L` below is `log(1/δ)`.
//!
//! | id                    | value                                                        |
//! |-----------------------|--------------------------------------------------------------|
//! | VANILLA               | `KL/(ηn) + (η/2n) Σ‖ℓ(·,Z_t) − risk‖²_∞ + √(σ²L/2n)`          |
//! | TUNED                 | `(1+ε²/2)√(KL/2n) + √((log log 4√n + L + log(2/ε))/2n)`       |
//! | PARAMFREE             | `√((3KL+9)/n) + √(L/2n)`                                      |
//! | SECOND_ORDER_MOMENT   | `KL/(ηn) + (3η/n) Σ E[ℓ(W,Z_t)²|S] + L/(ηn)`                  |
//! | SECOND_ORDER_RELAXED  | `train/(1−η) + KL/(ηn) + L/(2ηn)` (bounds the test risk)      |
//! | FTRL_PLAIN            | `Δh/(ηn) + (η/2αn) Σ‖ℓ(·,Z_t) − risk‖²_* + √(σ²L/2n)`         |
//! | FTRL_TUNED            | `(1+ε²/2)√(B²Δh/2αn) + √((log log 4√n + L + log(2/ε))/2n)`    |
//! | FTRL_OPTIMISTIC       | `Δh/(ηn) + (η/2αn) Σ‖ℓ(·,Z_t)‖²_* + √(σ²L/n)`                 |
//! | PNORM_A               | `‖P−P_1‖²_p/(ηn) + η/((p−1)n) Σ‖ℓ‖²_q + √(B²L/2n)`            |
//! | PNORM_B               | `‖P−P_1‖^p_p/(ηn) + η^{q−1}/(2^{q−1}qn) Σ‖ℓ‖^q_q + B(L/n)^{1−1/q}` |
//! | SMOOTHED_PLAIN        | `D_γ/(ηn) + η·series² + √(2σ²L/n)`                            |
//! | SMOOTH_PB             | `D_γ/(ηn) + ηβ/(1−γ√d) + √(2σ²L/n)`                           |
//! | WASSERSTEIN           | `2dW₂²/(ηn) + 2βη + √(σ²L/n)`                                 |
//! | CONDITIONAL           | `KL/(ηn) + η/8 + 2√(log(2/δ)/2n)`                             |
//! | FIXED_PRIOR           | `E[KL]/(ηn) + η/8` (bounds E[gen])                            |
//! | MUTUAL_INFO           | `√(E[KL(P_{W|S}‖P_W)]/2n)` (bounds E[gen])                    |

use crate::error::{check_dim, Error, Result};
use crate::game::{self, Environment, PriorSpec, StatLearnerSpec};
use crate::measures::{conjugate_exponent, dual_q_norm, dual_q_power, inner, kl, pnorm_distance, pnorm_power};
use crate::measures::{CostVector, DivergenceKind, DivergenceSpec, ProbVector};
use crate::numeric::{self, Sum};
use crate::rng;
use crate::transport::{self, PointCloudMeasure, SeriesCoefficients};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Names of the certificates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoundId {
    Vanilla,
    Tuned,
    Paramfree,
    SecondOrderMoment,
    SecondOrderRelaxed,
    FtrlPlain,
    FtrlTuned,
    FtrlOptimistic,
    PnormA,
    PnormB,
    SmoothedPlain,
    SmoothPb,
    Wasserstein,
    Conditional,
    FixedPrior,
    MutualInfo,
}

impl BoundId {
    pub const ALL: [BoundId; 16] = [
        BoundId::Vanilla,
        BoundId::Tuned,
        BoundId::Paramfree,
        BoundId::SecondOrderMoment,
        BoundId::SecondOrderRelaxed,
        BoundId::FtrlPlain,
        BoundId::FtrlTuned,
        BoundId::FtrlOptimistic,
        BoundId::PnormA,
        BoundId::PnormB,
        BoundId::SmoothedPlain,
        BoundId::SmoothPb,
        BoundId::Wasserstein,
        BoundId::Conditional,
        BoundId::FixedPrior,
        BoundId::MutualInfo,
    ];

    /// The serialized name, e.g. `"SECOND_ORDER_RELAXED"`.
    pub fn name(&self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
    }

    pub fn target(&self) -> BoundTarget {
        match self {
            BoundId::SecondOrderRelaxed => BoundTarget::TestRisk,
            BoundId::FixedPrior | BoundId::MutualInfo => BoundTarget::ExpectedGen,
            _ => BoundTarget::Gen,
        }
    }
}

/// What a certificate bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoundTarget {
    /// `ḡen = E[gen | S]`.
    Gen,
    /// The conditional test risk `E[ℓ(W, Z′) | S]`.
    TestRisk,
    /// `E[gen]` over the sample.
    ExpectedGen,
}

/// An evaluated bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub bound_id: BoundId,
    pub target: BoundTarget,
    #[serde(with = "crate::json::ext_f64")]
    pub value: f64,
    #[serde(with = "crate::json::ext_f64_map")]
    pub ingredients: BTreeMap<String, f64>,
    /// All preconditions held (learning-rate range, loss range, moment parameters).
    pub valid: bool,
    /// Reasons for `valid = false`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl BoundCertificate {
    /// Value used in coverage accounting: `+inf` when invalid.
    pub fn coverage_value(&self) -> f64 {
        if self.valid {
            self.value
        } else {
            f64::INFINITY
        }
    }

    pub fn ingredient(&self, name: &str) -> Option<f64> {
        self.ingredients.get(name).copied()
    }

    /// Relative gap between `value` and the sum of the `term.*` ingredients.
    pub fn recomposition_error(&self) -> f64 {
        let s = numeric::sum(self.ingredients.iter().filter(|(k, _)| k.starts_with("term.")).map(|(_, v)| *v));
        if s == self.value {
            return 0.0;
        }
        (s - self.value).abs() / self.value.abs().max(1.0)
    }
}

struct Builder {
    id: BoundId,
    terms: Sum,
    ingredients: BTreeMap<String, f64>,
    valid: bool,
    notes: Vec<String>,
}

impl Builder {
    fn new(id: BoundId) -> Self {
        Self { id, terms: Sum::new(), ingredients: BTreeMap::new(), valid: true, notes: Vec::new() }
    }

    fn term(mut self, name: &str, v: f64) -> Self {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        self.terms.add(v);
        self.ingredients.insert(format!("term.{name}"), v);
        self
    }

    fn ing(mut self, name: &str, v: f64) -> Self {
        self.ingredients.insert(name.to_owned(), v);
        self
    }

    fn require(mut self, ok: bool, note: impl FnOnce() -> String) -> Self {
        if !ok {
            self.valid = false;
            self.notes.push(note());
        }
        self
    }

    fn finish(self) -> BoundCertificate {
        let value = self.terms.value();
        let value = if value.is_nan() { f64::INFINITY } else { value };
        BoundCertificate {
            bound_id: self.id,
            target: self.id.target(),
            value,
            ingredients: self.ingredients,
            valid: self.valid,
            notes: self.notes,
        }
    }
}

/// `a / b`, or `+inf` when `b ≤ 0`.
fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        f64::INFINITY
    }
}

fn log_inv_delta(delta: f64) -> Result<f64> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(-delta.ln())
    } else {
        Err(Error::InvalidInput(format!("delta must lie in (0, 1], got {delta}")))
    }
}

fn check_sample(env: &Environment, sample: &[usize]) -> Result<usize> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("certificates need a nonempty sample".into()));
    }
    if let Some(z) = sample.iter().find(|z| **z >= env.m()) {
        return Err(Error::InvalidInput(format!("sample index {z} outside the instance support")));
    }
    Ok(sample.len())
}

fn positive_eta(eta: f64) -> impl FnOnce() -> String {
    move || format!("η = {eta} must be a positive real")
}

fn unit_losses(env: &Environment) -> impl FnOnce() -> String {
    let r = env.loss_range();
    move || format!("losses must lie in [0, 1], declared range is [{}, {}]", r[0], r[1])
}

/// `ε`-grid confidence term shared by the tuned bounds.
fn tuned_confidence(n: f64, big_l: f64, eps: f64) -> f64 {
    (((4.0 * n.sqrt()).ln().ln() + big_l + (2.0 / eps).ln()) / (2.0 * n)).sqrt()
}

/// Optional parameters of the per-run certificates. `None` picks the default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
}

/// Default learning rate of each bound at sample size `n` with `K` hypotheses.
pub fn default_eta(id: BoundId, k: usize, n: usize) -> f64 {
    let n = n as f64;
    let log_k = (k.max(2) as f64).ln();
    match id {
        BoundId::Vanilla => (2.0 * log_k / n).sqrt(),
        BoundId::SecondOrderMoment => 0.25,
        BoundId::SecondOrderRelaxed => 0.5,
        BoundId::Conditional => (8.0 * log_k / n).sqrt(),
        _ => 1.0 / n.sqrt(),
    }
}

/// Variants of the exponential-weights family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EwaVariant {
    Vanilla,
    Tuned,
    Paramfree,
}

/// Exponential-weights certificates with the KL divergence to a fixed prior.
pub fn cert_ewa_family(
    variant: EwaVariant,
    posterior: &ProbVector,
    prior: &ProbVector,
    env: &Environment,
    sample: &[usize],
    params: &BoundParams,
    delta: f64,
) -> Result<BoundCertificate> {
    let k = env.k();
    check_dim(k, posterior.len())?;
    check_dim(k, prior.len())?;
    let n = check_sample(env, sample)?;
    let nf = n as f64;
    let big_l = log_inv_delta(delta)?;
    let kl_v = kl(posterior, prior);
    match variant {
        EwaVariant::Vanilla => {
            let eta = params.eta.unwrap_or_else(|| default_eta(BoundId::Vanilla, k, n));
            let sigma2_min = env.max_second_moment();
            let sigma = params.sigma.unwrap_or_else(|| sigma2_min.sqrt());
            let v = numeric::sum(sample.iter().map(|z| env.cost_vector(*z).sup_norm().powi(2)));
            Ok(Builder::new(BoundId::Vanilla)
                .term("divergence", ratio(kl_v, eta * nf))
                .term("variation", eta / (2.0 * nf) * v)
                .term("confidence", (sigma * sigma * big_l / (2.0 * nf)).sqrt())
                .ing("kl", kl_v)
                .ing("eta", eta)
                .ing("sigma", sigma)
                .ing("sigma2_required", sigma2_min)
                .ing("sum_sq_dual_norm", v)
                .ing("alpha", 1.0)
                .ing("n", nf)
                .ing("delta", delta)
                .require(eta > 0.0 && eta.is_finite(), positive_eta(eta))
                .require(sigma * sigma >= sigma2_min, || format!("σ² = {} is below max_w E[ℓ²] = {sigma2_min}", sigma * sigma))
                .finish())
        }
        EwaVariant::Tuned => {
            let eps = params.epsilon.unwrap_or(1.0);
            let a = 1.0 + eps;
            // grid {a^i : i ∈ Z} ∩ [2/√n, 8]
            let i_min = ((2.0 / nf.sqrt()).ln() / a.ln()).ceil();
            let i_max = (8.0f64.ln() / a.ln()).floor();
            let grid_size = (i_max - i_min + 1.0).max(0.0);
            let grid_min = (i_min as i64..=i_max as i64)
                .map(|i| {
                    let eta = a.powi(i as i32);
                    ratio(kl_v, eta * nf) + eta / 8.0
                })
                .fold(f64::INFINITY, f64::min);
            let grid_value = grid_min + ((grid_size / delta).ln() / (2.0 * nf)).sqrt();
            Ok(Builder::new(BoundId::Tuned)
                .term("divergence", (1.0 + eps * eps / 2.0) * (kl_v / (2.0 * nf)).sqrt())
                .term("confidence", tuned_confidence(nf, big_l, eps))
                .ing("kl", kl_v)
                .ing("epsilon", eps)
                .ing("grid.a", a)
                .ing("grid.size", grid_size)
                .ing("grid.eta_min", a.powf(i_min))
                .ing("grid.eta_max", a.powf(i_max))
                .ing("grid.union_value", grid_value)
                .ing("n", nf)
                .ing("delta", delta)
                .require(eps > 0.0 && eps <= 1.0, || format!("ε = {eps} must lie in (0, 1]"))
                .require(env.losses_in_unit_interval(), unit_losses(env))
                .require(n > 1, || "the tuned bound needs n > 1".into())
                .finish())
        }
        EwaVariant::Paramfree => Ok(Builder::new(BoundId::Paramfree)
            .term("divergence", ((3.0 * kl_v + 9.0) / nf).sqrt())
            .term("confidence", (big_l / (2.0 * nf)).sqrt())
            .ing("kl", kl_v)
            .ing("n", nf)
            .ing("delta", delta)
            .require(env.losses_in_unit_interval(), unit_losses(env))
            .finish()),
    }
}

/// Forms of the second-order data-dependent bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SecondOrderForm {
    Moment,
    Relaxed,
}

/// Second-order certificates of the optimistic second-order learner with prior `P̃_1`.
pub fn cert_second_order(
    form: SecondOrderForm,
    posterior: &ProbVector,
    prior: &ProbVector,
    env: &Environment,
    sample: &[usize],
    eta: f64,
    delta: f64,
) -> Result<BoundCertificate> {
    let k = env.k();
    check_dim(k, posterior.len())?;
    check_dim(k, prior.len())?;
    let n = check_sample(env, sample)? as f64;
    let big_l = log_inv_delta(delta)?;
    let kl_v = kl(posterior, prior);
    match form {
        SecondOrderForm::Moment => {
            let mut sq = Sum::new();
            for &z in sample {
                let l2: Vec<f64> = env.losses_at(z).values().iter().map(|l| l * l).collect();
                sq.add(numeric::dot(posterior.weights(), &l2));
            }
            let sq = sq.value();
            Ok(Builder::new(BoundId::SecondOrderMoment)
                .term("divergence", ratio(kl_v, eta * n))
                .term("second_moment", 3.0 * eta / n * sq)
                .term("confidence", ratio(big_l, eta * n))
                .ing("kl", kl_v)
                .ing("sum_posterior_sq_loss", sq)
                .ing("eta", eta)
                .ing("n", n)
                .ing("delta", delta)
                .require(eta > 0.0 && eta <= 0.25, || format!("η = {eta} must lie in (0, 1/4]"))
                .require(env.losses_in_unit_interval(), unit_losses(env))
                .finish())
        }
        SecondOrderForm::Relaxed => {
            let train = inner(posterior, &env.empirical_risk(sample))?;
            Ok(Builder::new(BoundId::SecondOrderRelaxed)
                .term("train", ratio(train, 1.0 - eta))
                .term("divergence", ratio(kl_v, eta * n))
                .term("confidence", ratio(big_l, 2.0 * eta * n))
                .ing("kl", kl_v)
                .ing("train_risk", train)
                .ing("eta", eta)
                .ing("n", n)
                .ing("delta", delta)
                .ing("target_is_test_risk", 1.0)
                .require(eta > 0.0 && eta <= 0.5, || format!("η = {eta} must lie in (0, 1/2]"))
                .require(env.losses_in_unit_interval(), unit_losses(env))
                .finish())
        }
    }
}

/// Variants of the FTRL family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FtrlVariant {
    Plain,
    Tuned,
    Optimistic,
    PnormA,
    PnormB,
}

impl FtrlVariant {
    fn id(&self) -> BoundId {
        match self {
            FtrlVariant::Plain => BoundId::FtrlPlain,
            FtrlVariant::Tuned => BoundId::FtrlTuned,
            FtrlVariant::Optimistic => BoundId::FtrlOptimistic,
            FtrlVariant::PnormA => BoundId::PnormA,
            FtrlVariant::PnormB => BoundId::PnormB,
        }
    }
}

/// Exponent `p` of a p-norm regularizer (`CHI2` counts as `p = 2`).
fn pnorm_exponent(kind: DivergenceKind) -> Option<f64> {
    match kind {
        DivergenceKind::Pnorm { p } => Some(p),
        DivergenceKind::Chi2 => Some(2.0),
        _ => None,
    }
}

/// FTRL certificates for the regularizer `h` of `spec` with base `P_1 = spec.base()`.
pub fn cert_ftrl_family(
    variant: FtrlVariant,
    spec: &DivergenceSpec,
    posterior: &ProbVector,
    env: &Environment,
    sample: &[usize],
    params: &BoundParams,
    delta: f64,
) -> Result<BoundCertificate> {
    let k = env.k();
    check_dim(k, posterior.len())?;
    check_dim(k, spec.len())?;
    let n = check_sample(env, sample)?;
    let nf = n as f64;
    let big_l = log_inv_delta(delta)?;
    let base = spec.base();
    let id = variant.id();
    let eta = params.eta.unwrap_or_else(|| default_eta(id, k, n));
    match variant {
        FtrlVariant::Plain | FtrlVariant::Tuned | FtrlVariant::Optimistic => {
            let alpha = spec.kind().strong_convexity_modulus().ok_or_else(|| {
                Error::InvalidInput(format!("{} has no strong-convexity modulus; use PNORM_B for p > 2", spec.kind().label()))
            })?;
            let dh = spec.regularizer(posterior)? - spec.regularizer(base)?;
            match variant {
                FtrlVariant::Plain | FtrlVariant::Optimistic => {
                    let optimistic = variant == FtrlVariant::Optimistic;
                    let mut v = Sum::new();
                    for &z in sample {
                        let f = if optimistic { env.losses_at(z) } else { env.cost_vector(z) };
                        v.add(spec.dual_norm(&f)?.powi(2));
                    }
                    let v = v.value();
                    let sigma2_min = env.max_second_moment();
                    let sigma = params.sigma.unwrap_or_else(|| sigma2_min.sqrt());
                    let conf = if optimistic { (sigma * sigma * big_l / nf).sqrt() } else { (sigma * sigma * big_l / (2.0 * nf)).sqrt() };
                    Ok(Builder::new(id)
                        .term("divergence", ratio(dh, eta * nf))
                        .term("variation", eta / (2.0 * alpha * nf) * v)
                        .term("confidence", conf)
                        .ing("h_gap", dh)
                        .ing("eta", eta)
                        .ing("alpha", alpha)
                        .ing("sigma", sigma)
                        .ing("sigma2_required", sigma2_min)
                        .ing("sum_sq_dual_norm", v)
                        .ing("n", nf)
                        .ing("delta", delta)
                        .require(eta > 0.0 && eta.is_finite(), positive_eta(eta))
                        .require(sigma * sigma >= sigma2_min, || format!("σ² = {} is below max_w E[ℓ²] = {sigma2_min}", sigma * sigma))
                        .finish())
                }
                _ => {
                    let eps = params.epsilon.unwrap_or(1.0);
                    let realized = sample
                        .iter()
                        .map(|z| spec.dual_norm(&env.cost_vector(*z)))
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .fold(0.0, f64::max);
                    let b = match params.b {
                        Some(b) => b,
                        None => (0..env.m())
                            .map(|z| spec.dual_norm(&env.cost_vector(z)))
                            .collect::<Result<Vec<_>>>()?
                            .into_iter()
                            .fold(0.0, f64::max),
                    };
                    Ok(Builder::new(id)
                        .term("divergence", (1.0 + eps * eps / 2.0) * (b * b * dh / (2.0 * alpha * nf)).sqrt())
                        .term("confidence", tuned_confidence(nf, big_l, eps))
                        .ing("h_gap", dh)
                        .ing("alpha", alpha)
                        .ing("b", b)
                        .ing("max_realized_dual_norm", realized)
                        .ing("epsilon", eps)
                        .ing("n", nf)
                        .ing("delta", delta)
                        .require(eps > 0.0 && eps <= 1.0, || format!("ε = {eps} must lie in (0, 1]"))
                        .require(env.losses_in_unit_interval(), unit_losses(env))
                        .require(realized <= b, || format!("realized dual norm {realized} exceeds B = {b}"))
                        .require(n > 1, || "the tuned bound needs n > 1".into())
                        .finish())
                }
            }
        }
        FtrlVariant::PnormA | FtrlVariant::PnormB => {
            let p = pnorm_exponent(spec.kind()).ok_or_else(|| {
                Error::InvalidInput(format!("{} needs a PNORM or CHI2 regularizer, got {}", id.name(), spec.kind().label()))
            })?;
            let a = variant == FtrlVariant::PnormA;
            if a && !(p > 1.0 && p <= 2.0) {
                return Err(Error::InvalidInput(format!("PNORM_A covers p in (1, 2], got p = {p}")));
            }
            if !a && p < 2.0 {
                return Err(Error::InvalidInput(format!("PNORM_B covers p ≥ 2, got p = {p}")));
            }
            let q = conjugate_exponent(p);
            let moment_order = q.min(2.0);
            let b_min = env.loss_moments(moment_order).into_iter().fold(0.0, f64::max);
            let b = params.b.unwrap_or(b_min);
            let mut v = Sum::new();
            for &z in sample {
                let l = env.losses_at(z);
                v.add(if a { dual_q_norm(&l, base, q)?.powi(2) } else { dual_q_power(&l, base, q)? });
            }
            let v = v.value();
            let (h, variation, conf) = if a {
                let d = pnorm_distance(posterior, base, base, p)?;
                (d * d, eta / ((p - 1.0) * nf) * v, (b * b * big_l / (2.0 * nf)).sqrt())
            } else {
                let h = pnorm_power(posterior, base, base, p)?;
                let c = eta.powf(q - 1.0) / (2f64.powf(q - 1.0) * q * nf);
                (h, c * v, b * (big_l / nf).powf(1.0 - 1.0 / q))
            };
            Ok(Builder::new(id)
                .term("divergence", ratio(h, eta * nf))
                .term("variation", variation)
                .term("confidence", conf)
                .ing("h", h)
                .ing("p", p)
                .ing("q", q)
                .ing("eta", eta)
                .ing("b", b)
                .ing("b_required", b_min)
                .ing("sum_dual", v)
                .ing("n", nf)
                .ing("delta", delta)
                .require(eta > 0.0 && eta.is_finite(), positive_eta(eta))
                .require(b >= b_min, || format!("B = {b} is below max_w E[ℓ^{moment_order}] = {b_min}"))
                .finish())
        }
    }
}

/// Variants of the smoothed family on `R^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SmoothedVariant {
    Plain,
    SmoothPb,
    Wasserstein,
}

/// Inputs of the smoothed certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedInputs {
    pub gamma: f64,
    pub eta: f64,
    pub delta: f64,
    pub sigma: f64,
    /// `max_w E[ℓ²]` if known; `σ` is checked against it.
    pub sigma2_required: Option<f64>,
    /// Derivative bounds `β_j` of every `ℓ(·, z)`.
    pub betas: SeriesCoefficients,
    pub n: usize,
    /// Monte-Carlo samples for `D_γ`.
    pub samples: usize,
    pub seed: u64,
}

/// Smoothed relative-entropy and Wasserstein certificates.
pub fn cert_smoothed_family(
    variant: SmoothedVariant,
    posterior: &PointCloudMeasure,
    prior: &PointCloudMeasure,
    inputs: &SmoothedInputs,
) -> Result<BoundCertificate> {
    let SmoothedInputs { gamma, eta, delta, sigma, sigma2_required, ref betas, n, samples, seed } = *inputs;
    if n == 0 {
        return Err(Error::InvalidInput("n must be ≥ 1".into()));
    }
    check_dim(posterior.dim(), prior.dim())?;
    let nf = n as f64;
    let big_l = log_inv_delta(delta)?;
    let d = posterior.dim();
    let r = gamma * (d as f64).sqrt();
    let beta = match betas {
        SeriesCoefficients::Constant(b) => *b,
        SeriesCoefficients::Sequence(bs) => bs.iter().copied().fold(0.0, f64::max),
    };
    let sigma_ok = sigma2_required.is_none_or(|s| sigma * sigma >= s);
    let sigma_note = move || format!("σ² = {} is below max_w E[ℓ²] = {:?}", sigma * sigma, sigma2_required);
    match variant {
        SmoothedVariant::Plain | SmoothedVariant::SmoothPb => {
            let post = posterior.canonicalize();
            let pri = prior.canonicalize();
            let est = if post == pri {
                transport::SmoothedEstimate { value: 0.0, std_error: 0.0, n_samples: 0, seed }
            } else {
                transport::smoothed_kl_mc(&post, &pri, gamma, samples, seed)?
            };
            let d_gamma = est.value.max(0.0);
            let id = if variant == SmoothedVariant::Plain { BoundId::SmoothedPlain } else { BoundId::SmoothPb };
            let smoothness = if variant == SmoothedVariant::Plain {
                let s = transport::smoothing_series_bound(betas, gamma, d);
                eta * s * s
            } else {
                ratio(eta * beta, 1.0 - r)
            };
            Ok(Builder::new(id)
                .term("divergence", ratio(d_gamma, eta * nf))
                .term("smoothness", smoothness)
                .term("confidence", (2.0 * sigma * sigma * big_l / nf).sqrt())
                .ing("d_gamma", d_gamma)
                .ing("d_gamma.raw_estimate", est.value)
                .ing("d_gamma.std_error", est.std_error)
                .ing("d_gamma.samples", est.n_samples as f64)
                .ing("gamma", gamma)
                .ing("gamma_sqrt_d", r)
                .ing("beta", beta)
                .ing("eta", eta)
                .ing("sigma", sigma)
                .ing("n", nf)
                .ing("delta", delta)
                .require(eta > 0.0 && eta.is_finite(), positive_eta(eta))
                .require(r < 1.0, || format!("γ√d = {r} must be below 1"))
                .require(sigma_ok, sigma_note)
                .finish())
        }
        SmoothedVariant::Wasserstein => {
            let w2 = transport::wasserstein2_sq(posterior, prior)?;
            Ok(Builder::new(BoundId::Wasserstein)
                .term("divergence", ratio(2.0 * d as f64 * w2, eta * nf))
                .term("smoothness", 2.0 * beta * eta)
                .term("confidence", (sigma * sigma * big_l / nf).sqrt())
                .ing("w2_sq", w2)
                .ing("gamma_implied", 0.5 / (d as f64).sqrt())
                .ing("d", d as f64)
                .ing("beta", beta)
                .ing("eta", eta)
                .ing("sigma", sigma)
                .ing("n", nf)
                .ing("delta", delta)
                .require(eta > 0.0 && eta.is_finite(), positive_eta(eta))
                .require(sigma_ok, sigma_note)
                .finish())
        }
    }
}

/// Conditional certificate with a prior that may depend on the supersample.
/// `δ` is split evenly between the two martingale terms.
pub fn cert_conditional(
    posterior: &ProbVector,
    prior: &ProbVector,
    env: &Environment,
    eta: f64,
    n: usize,
    delta: f64,
) -> Result<BoundCertificate> {
    check_dim(env.k(), posterior.len())?;
    check_dim(env.k(), prior.len())?;
    if n == 0 {
        return Err(Error::InvalidInput("n must be ≥ 1".into()));
    }
    log_inv_delta(delta)?;
    let nf = n as f64;
    let kl_v = kl(posterior, prior);
    let each = delta / 2.0;
    Ok(Builder::new(BoundId::Conditional)
        .term("divergence", ratio(kl_v, eta * nf))
        .term("hoeffding", eta / 8.0)
        .term("confidence", 2.0 * ((1.0 / each).ln() / (2.0 * nf)).sqrt())
        .ing("kl", kl_v)
        .ing("eta", eta)
        .ing("n", nf)
        .ing("delta", delta)
        .ing("delta_each", each)
        .require(eta > 0.0 && eta.is_finite(), positive_eta(eta))
        .require(env.losses_in_unit_interval(), unit_losses(env))
        .finish())
}

/// Expectation-bound variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExpectedVariant {
    FixedPrior,
    MutualInfo,
}

/// Bounds on `E[gen]` estimated from replicate outcomes.
///
/// `E[KL]` is the replicate mean of exact per-sample divergences. The
/// marginal `P_W` is estimated by the average posterior; the mutual
/// information is therefore a plug-in estimate.
pub fn cert_expected(
    variant: ExpectedVariant,
    outcomes: &[game::ReplicateOutcome],
    prior: Option<&ProbVector>,
    eta: Option<f64>,
) -> Result<BoundCertificate> {
    if outcomes.is_empty() {
        return Err(Error::InvalidInput("expectation bounds need replicates".into()));
    }
    if variant == ExpectedVariant::MutualInfo && outcomes.len() < 2 {
        return Err(Error::InvalidInput(format!("MUTUAL_INFO needs at least 2 replicates, got {}", outcomes.len())));
    }
    let n = outcomes[0].n;
    if let Some(o) = outcomes.iter().find(|o| o.n != n) {
        return Err(Error::InvalidInput(format!("replicates mix sample sizes {n} and {}", o.n)));
    }
    let nf = n as f64;
    let posteriors: Vec<ProbVector> = outcomes.iter().map(|o| o.posterior.clone()).collect();
    let gens: Vec<f64> = outcomes.iter().map(|o| o.gen).collect();
    let (mean_gen, gen_se) = numeric::mean_and_std_error(&gens);
    let average = ProbVector::average(&posteriors)?;
    let r = outcomes.len() as f64;
    let mean_kl = |q: &ProbVector| -> Result<f64> {
        check_dim(q.len(), average.len())?;
        Ok(numeric::sum(posteriors.iter().map(|p| kl(p, q))) / r)
    };
    match variant {
        ExpectedVariant::FixedPrior => {
            let (q, plugin) = match prior {
                Some(p) => (p, 0.0),
                None => (&average, 1.0),
            };
            let ekl = mean_kl(q)?;
            let eta = eta.unwrap_or_else(|| (8.0 * ekl / nf).sqrt());
            let div = if ekl == 0.0 { 0.0 } else { ratio(ekl, eta * nf) };
            Ok(Builder::new(BoundId::FixedPrior)
                .term("divergence", div)
                .term("hoeffding", eta / 8.0)
                .ing("mean_kl", ekl)
                .ing("eta", eta)
                .ing("prior_is_plugin_average", plugin)
                .ing("mean_gen", mean_gen)
                .ing("gen_std_error", gen_se)
                .ing("replicates", r)
                .ing("n", nf)
                .require(eta >= 0.0 && eta.is_finite(), positive_eta(eta))
                .finish())
        }
        ExpectedVariant::MutualInfo => {
            let mi = mean_kl(&average)?;
            Ok(Builder::new(BoundId::MutualInfo)
                .term("mutual_information", (mi / (2.0 * nf)).sqrt())
                .ing("mi_estimate", mi)
                .ing("mi_is_plugin_estimate", 1.0)
                .ing("mean_gen", mean_gen)
                .ing("gen_std_error", gen_se)
                .ing("replicates", r)
                .ing("n", nf)
                .finish())
        }
    }
}

/// Hypothesis embedding for the smoothed bounds in a finite environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    /// One point in `R^d` per hypothesis.
    pub embedding: Vec<Vec<f64>>,
    /// Defaults to `1/(2√d)`.
    #[serde(default)]
    pub gamma: Option<f64>,
    pub betas: SeriesCoefficients,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    transport::DEFAULT_SAMPLES
}

/// A certificate request, as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub id: BoundId,
    #[serde(default, flatten)]
    pub params: BoundParams,
    /// Regularizer of the FTRL family; defaults to CHI2, PNORM(1.5) for
    /// PNORM_A and PNORM(3) for PNORM_B.
    #[serde(default)]
    pub divergence: Option<DivergenceKind>,
    /// `P_1`; uniform when omitted.
    #[serde(default)]
    pub prior: Option<ProbVector>,
    /// CONDITIONAL only: use the supersample Gibbs prior at this β.
    #[serde(default)]
    pub supersample_beta: Option<f64>,
    #[serde(default)]
    pub smoothing: Option<SmoothingConfig>,
}

impl BoundConfig {
    pub fn new(id: BoundId) -> Self {
        Self { id, params: BoundParams::default(), divergence: None, prior: None, supersample_beta: None, smoothing: None }
    }

    pub fn with_divergence(mut self, kind: DivergenceKind) -> Self {
        self.divergence = Some(kind);
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.params.eta = Some(eta);
        self
    }

    /// Short label including the regularizer, e.g. `FTRL_PLAIN[CHI2]`.
    pub fn label(&self) -> String {
        match self.id {
            BoundId::FtrlPlain | BoundId::FtrlTuned | BoundId::FtrlOptimistic | BoundId::PnormA | BoundId::PnormB => {
                format!("{}[{}]", self.id.name(), self.divergence_kind().label())
            }
            _ => self.id.name(),
        }
    }

    pub fn divergence_kind(&self) -> DivergenceKind {
        self.divergence.unwrap_or(match self.id {
            BoundId::PnormA => DivergenceKind::Pnorm { p: 1.5 },
            BoundId::PnormB => DivergenceKind::Pnorm { p: 3.0 },
            _ => DivergenceKind::Chi2,
        })
    }

    fn prior_for(&self, k: usize) -> Result<ProbVector> {
        match &self.prior {
            Some(p) => {
                check_dim(k, p.len())?;
                Ok(p.clone())
            }
            None => Ok(ProbVector::uniform(k)),
        }
    }

    /// Online-learner prior used by the conditional game for this bound.
    pub fn conditional_prior_spec(&self) -> PriorSpec {
        match (self.supersample_beta, &self.prior) {
            (Some(beta), base) => PriorSpec::SupersampleGibbs { beta, base: base.clone() },
            (None, Some(p)) => PriorSpec::Given { weights: p.clone() },
            (None, None) => PriorSpec::Uniform,
        }
    }
}

/// A realized run to certify.
#[derive(Debug, Clone, Copy)]
pub struct CertContext<'a> {
    pub env: &'a Environment,
    pub sample: &'a [usize],
    pub posterior: &'a ProbVector,
    pub delta: f64,
    /// Seed for Monte-Carlo ingredients.
    pub seed: u64,
    /// CONDITIONAL only: the prior built from the supersample.
    pub conditional_prior: Option<&'a ProbVector>,
}

/// Evaluates one per-run certificate. Expectation bounds go through [`cert_expected`].
pub fn certify(config: &BoundConfig, ctx: &CertContext<'_>) -> Result<BoundCertificate> {
    let env = ctx.env;
    let k = env.k();
    let n = ctx.sample.len();
    let p = &config.params;
    let prior = config.prior_for(k)?;
    let ewa = |v| cert_ewa_family(v, ctx.posterior, &prior, env, ctx.sample, p, ctx.delta);
    let ftrl = |v| {
        let spec = DivergenceSpec::new(config.divergence_kind(), prior.clone())?;
        cert_ftrl_family(v, &spec, ctx.posterior, env, ctx.sample, p, ctx.delta)
    };
    match config.id {
        BoundId::Vanilla => ewa(EwaVariant::Vanilla),
        BoundId::Tuned => ewa(EwaVariant::Tuned),
        BoundId::Paramfree => ewa(EwaVariant::Paramfree),
        BoundId::SecondOrderMoment | BoundId::SecondOrderRelaxed => {
            let form = if config.id == BoundId::SecondOrderMoment { SecondOrderForm::Moment } else { SecondOrderForm::Relaxed };
            let eta = p.eta.unwrap_or_else(|| default_eta(config.id, k, n));
            cert_second_order(form, ctx.posterior, &prior, env, ctx.sample, eta, ctx.delta)
        }
        BoundId::FtrlPlain => ftrl(FtrlVariant::Plain),
        BoundId::FtrlTuned => ftrl(FtrlVariant::Tuned),
        BoundId::FtrlOptimistic => ftrl(FtrlVariant::Optimistic),
        BoundId::PnormA => ftrl(FtrlVariant::PnormA),
        BoundId::PnormB => ftrl(FtrlVariant::PnormB),
        BoundId::SmoothedPlain | BoundId::SmoothPb | BoundId::Wasserstein => {
            let s = config.smoothing.as_ref().ok_or_else(|| {
                Error::InvalidInput(format!("{} needs a `smoothing` block with a hypothesis embedding", config.id.name()))
            })?;
            check_dim(k, s.embedding.len())?;
            let post = PointCloudMeasure::new(s.embedding.clone(), ctx.posterior.weights().to_vec())?;
            let pri = PointCloudMeasure::new(s.embedding.clone(), prior.weights().to_vec())?;
            let d = post.dim();
            let sigma2 = env.max_second_moment();
            let inputs = SmoothedInputs {
                gamma: s.gamma.unwrap_or(0.5 / (d as f64).sqrt()),
                eta: p.eta.unwrap_or_else(|| default_eta(config.id, k, n)),
                delta: ctx.delta,
                sigma: p.sigma.unwrap_or(sigma2.sqrt()),
                sigma2_required: Some(sigma2),
                betas: s.betas.clone(),
                n,
                samples: s.samples,
                seed: rng::derive_seed(ctx.seed, "bounds.smoothed", 0),
            };
            let variant = match config.id {
                BoundId::SmoothedPlain => SmoothedVariant::Plain,
                BoundId::SmoothPb => SmoothedVariant::SmoothPb,
                _ => SmoothedVariant::Wasserstein,
            };
            cert_smoothed_family(variant, &post, &pri, &inputs)
        }
        BoundId::Conditional => {
            let q = ctx.conditional_prior.cloned().unwrap_or(prior);
            let eta = p.eta.unwrap_or_else(|| default_eta(config.id, k, n));
            cert_conditional(ctx.posterior, &q, env, eta, n, ctx.delta)
        }
        BoundId::FixedPrior | BoundId::MutualInfo => {
            Err(Error::InvalidInput(format!("{} bounds the expected generalization error; evaluate it over replicates", config.id.name())))
        }
    }
}

/// Concentration lemmas for lower tails of nonnegative sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LemmaId {
    /// Nonnegative `X_t` with conditional second moments `σ_t²`.
    SecondMoment,
    /// `X_t ∈ [0, 1]`, empirical second-order term.
    Bounded,
    /// Nonnegative `X_t` with conditional `q`-th moments `B_t^q`, `q ∈ (1, 2]`.
    HeavyTail,
}

impl LemmaId {
    pub const ALL: [LemmaId; 3] = [LemmaId::SecondMoment, LemmaId::Bounded, LemmaId::HeavyTail];

    pub fn name(&self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
    }
}

/// Per-round inputs of a lemma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "lemma", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum LemmaInputs {
    SecondMoment { sigma2: Vec<f64> },
    Bounded { x: Vec<f64> },
    HeavyTail { q: f64, b: Vec<f64> },
}

impl LemmaInputs {
    pub fn id(&self) -> LemmaId {
        match self {
            LemmaInputs::SecondMoment { .. } => LemmaId::SecondMoment,
            LemmaInputs::Bounded { .. } => LemmaId::Bounded,
            LemmaInputs::HeavyTail { .. } => LemmaId::HeavyTail,
        }
    }
}

/// Right-hand side bounding `Σ_t (μ_t − X_t)` with probability `1 − δ`:
///
/// * SECOND_MOMENT: `(λ/2) Σ σ_t² + L/λ`, `λ > 0`
/// * BOUNDED: `λ Σ X_t² + L/λ`, `λ ∈ (0, 1/2]`
/// * HEAVY_TAIL: `λ^{q−1} Σ B_t^q + L/λ`, `λ > 0`
pub fn concentration_rhs(inputs: &LemmaInputs, lambda: f64, delta: f64) -> Result<f64> {
    let big_l = log_inv_delta(delta)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("λ = {lambda} must be a positive real")));
    }
    let nonneg = |xs: &[f64], what: &str| -> Result<()> {
        match xs.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            Some(x) => Err(Error::InvalidInput(format!("{what} must be finite and nonnegative, got {x}"))),
            None => Ok(()),
        }
    };
    let conf = big_l / lambda;
    match inputs {
        LemmaInputs::SecondMoment { sigma2 } => {
            nonneg(sigma2, "σ_t²")?;
            Ok(0.5 * lambda * numeric::sum(sigma2.iter().copied()) + conf)
        }
        LemmaInputs::Bounded { x } => {
            if lambda > 0.5 {
                return Err(Error::InvalidInput(format!("the bounded lemma needs λ ≤ 1/2, got {lambda}")));
            }
            if let Some(v) = x.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
                return Err(Error::InvalidInput(format!("X_t must lie in [0, 1], got {v}")));
            }
            Ok(lambda * numeric::sum(x.iter().map(|v| v * v)) + conf)
        }
        LemmaInputs::HeavyTail { q, b } => {
            if !(*q > 1.0 && *q <= 2.0) {
                return Err(Error::InvalidInput(format!("the heavy-tail lemma needs q in (1, 2], got {q}")));
            }
            nonneg(b, "B_t")?;
            Ok(lambda.powf(q - 1.0) * numeric::sum(b.iter().map(|v| v.powf(*q))) + conf)
        }
    }
}

/// Outcome of a coverage study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub bound_id: String,
    pub trials: usize,
    pub violations: usize,
    /// Trials whose certificate was invalid (counted as `+inf`, never violated).
    pub invalid: usize,
    pub empirical_rate: f64,
    pub delta: f64,
    pub binomial_3sigma: f64,
    /// `delta + binomial_3sigma`.
    pub threshold: f64,
    pub within_band: bool,
    pub max_excess: f64,
}

/// One coverage trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub seed: u64,
    /// Realized quantity: `ḡen`, the test risk, or `Σ(μ_t − X_t)`.
    pub gen: f64,
    pub cert: f64,
    pub violated: bool,
}

/// `3√(δ(1−δ)/R)`.
pub fn binomial_band(delta: f64, trials: usize) -> f64 {
    3.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}

/// Minimum number of trials of a coverage study.
pub const MIN_COVERAGE_TRIALS: usize = 1000;

fn report(label: String, rows: &[CoverageRow], invalid: usize, delta: f64) -> CoverageReport {
    let trials = rows.len();
    let violations = rows.iter().filter(|r| r.violated).count();
    let rate = violations as f64 / trials as f64;
    let band = binomial_band(delta, trials);
    let max_excess = rows.iter().map(|r| r.gen - r.cert).fold(f64::NEG_INFINITY, f64::max);
    CoverageReport {
        bound_id: label,
        trials,
        violations,
        invalid,
        empirical_rate: rate,
        delta,
        binomial_3sigma: band,
        threshold: delta + band,
        within_band: rate <= delta + band,
        max_excess,
    }
}

fn check_trials(r: usize) -> Result<()> {
    if r >= MIN_COVERAGE_TRIALS {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("coverage needs R ≥ {MIN_COVERAGE_TRIALS}, got {r}")))
    }
}

/// Seed of coverage trial `index`.
pub fn coverage_seed(base_seed: u64, index: usize) -> u64 {
    rng::derive_seed(base_seed, "coverage", index as u64)
}

/// Empirical coverage of a per-run certificate over `R` fresh samples.
pub fn bound_coverage(
    config: &BoundConfig,
    env: &Environment,
    stat: &StatLearnerSpec,
    n: usize,
    r: usize,
    delta: f64,
    base_seed: u64,
) -> Result<(CoverageReport, Vec<CoverageRow>)> {
    check_trials(r)?;
    log_inv_delta(delta)?;
    if matches!(config.id, BoundId::SmoothedPlain | BoundId::SmoothPb | BoundId::Wasserstein) {
        return Err(Error::Unsupported(
            "smoothed certificates assume smooth losses on R^d; a finite loss table has no such structure".into(),
        ));
    }
    let results = game::map_replicates(r, |i| -> Result<(CoverageRow, bool)> {
        let seed = coverage_seed(base_seed, i);
        let (outcome, prior) = if config.id == BoundId::Conditional {
            let c = game::draw_conditional_outcome(env, stat, &config.conditional_prior_spec(), n, seed)?;
            (c.outcome, Some(c.prior))
        } else {
            (game::draw_outcome(env, stat, n, seed)?, None)
        };
        let ctx =
            CertContext { env, sample: &outcome.sample, posterior: &outcome.posterior, delta, seed, conditional_prior: prior.as_ref() };
        let cert = certify(config, &ctx)?;
        let realized = match cert.target {
            BoundTarget::TestRisk => outcome.test_risk,
            _ => outcome.gen,
        };
        let value = cert.coverage_value();
        Ok((CoverageRow { seed, gen: realized, cert: value, violated: realized > value }, cert.valid))
    });
    let mut rows = Vec::with_capacity(r);
    let mut invalid = 0;
    for res in results {
        let (row, valid) = res?;
        invalid += usize::from(!valid);
        rows.push(row);
    }
    Ok((report(config.label(), &rows, invalid, delta), rows))
}

/// Fixed parameters of the synthetic lemma processes.
pub const LOMAX_SHAPE: f64 = 2.5;
pub const HEAVY_TAIL_Q: f64 = 1.5;

/// `λ` chosen in advance for a lemma coverage study.
pub fn lemma_lambda(lemma: LemmaId, n: usize, delta: f64) -> f64 {
    let big_l = -delta.ln();
    let n = n as f64;
    match lemma {
        LemmaId::SecondMoment => (2.0 * big_l / (1.5 * n)).sqrt(),
        LemmaId::Bounded => (big_l / (0.3 * n)).sqrt().min(0.5),
        LemmaId::HeavyTail => (big_l / ((HEAVY_TAIL_Q - 1.0) * n)).powf(1.0 / HEAVY_TAIL_Q),
    }
}

/// One realization of a lemma process: returns `(Σ(μ_t − X_t), inputs)`.
///
/// Scales are predictable: each depends only on the previous draw.
/// * SECOND_MOMENT: `X_t = s_t E_t`, `E_t ~ Exp(1)`, `μ_t = s_t`, `σ_t² = 2s_t²`.
/// * BOUNDED: `X_t = U_t^{a_t}`, `a_t ∈ {1, 2}`, `μ_t = 1/(a_t + 1)`.
/// * HEAVY_TAIL: `X_t = s_t Y_t`, `Y_t ~ Lomax(2.5)`, `q = 1.5`.
pub fn lemma_trial(lemma: LemmaId, n: usize, seed: u64) -> (f64, LemmaInputs) {
    let mut rng = rng::stream(seed, "bounds.lemma", 0);
    let mut gap = Sum::new();
    let mut prev_high = false;
    let mut params = Vec::with_capacity(n);
    let lomax_mean = 1.0 / (LOMAX_SHAPE - 1.0);
    let lomax_q_moment = libm::tgamma(HEAVY_TAIL_Q + 1.0) * libm::tgamma(LOMAX_SHAPE - HEAVY_TAIL_Q) / libm::tgamma(LOMAX_SHAPE);
    for _ in 0..n {
        let s = if prev_high { 0.5 } else { 1.0 };
        let (x, mu) = match lemma {
            LemmaId::SecondMoment => {
                let e: f64 = Exp1.sample(&mut rng);
                params.push(2.0 * s * s);
                (s * e, s)
            }
            LemmaId::Bounded => {
                let a = if prev_high { 2 } else { 1 };
                let u: f64 = rng.random();
                let x = u.powi(a);
                params.push(x);
                (x, 1.0 / (a as f64 + 1.0))
            }
            LemmaId::HeavyTail => {
                let u: f64 = 1.0 - rng.random::<f64>();
                let y = u.powf(-1.0 / LOMAX_SHAPE) - 1.0;
                params.push(s * lomax_q_moment.powf(1.0 / HEAVY_TAIL_Q));
                (s * y, s * lomax_mean)
            }
        };
        gap.add(mu - x);
        prev_high = x > mu;
    }
    let inputs = match lemma {
        LemmaId::SecondMoment => LemmaInputs::SecondMoment { sigma2: params },
        LemmaId::Bounded => LemmaInputs::Bounded { x: params },
        LemmaId::HeavyTail => LemmaInputs::HeavyTail { q: HEAVY_TAIL_Q, b: params },
    };
    (gap.value(), inputs)
}

/// Empirical coverage of a concentration lemma with `λ` fixed in advance.
pub fn lemma_coverage(lemma: LemmaId, n: usize, r: usize, delta: f64, base_seed: u64) -> Result<(CoverageReport, Vec<CoverageRow>)> {
    check_trials(r)?;
    log_inv_delta(delta)?;
    let lambda = lemma_lambda(lemma, n, delta);
    let rows = game::map_replicates(r, |i| -> Result<CoverageRow> {
        let seed = coverage_seed(base_seed, i);
        let (gap, inputs) = lemma_trial(lemma, n, seed);
        let rhs = concentration_rhs(&inputs, lambda, delta)?;
        Ok(CoverageRow { seed, gen: gap, cert: rhs, violated: gap > rhs })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((report(format!("LEMMA_{}", lemma.name()), &rows, 0, delta), rows))
}

/// Per-hypothesis costs of a realized sample, for direct regret audits.
pub fn realized_costs(env: &Environment, sample: &[usize]) -> Vec<CostVector> {
    sample.iter().map(|z| env.cost_vector(*z)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_unit(seed: u64, k: usize, m: usize) -> Environment {
        Environment::random(k, m, &mut rng::stream(seed, "t", 0)).unwrap()
    }

    #[test]
    fn paramfree_at_zero_kl() {
        let e = env_unit(1, 3, 4);
        let s = vec![0usize; 100];
        let u = ProbVector::uniform(3);
        let c = cert_ewa_family(EwaVariant::Paramfree, &u, &u, &e, &s, &BoundParams::default(), 0.1).unwrap();
        let want = 3.0 / 10.0 + ((10f64).ln() / 200.0).sqrt();
        assert!((c.value - want).abs() < 1e-15);
        assert!(c.valid);
    }

    #[test]
    fn tuned_plug_in() {
        let e = env_unit(1, 2, 4);
        let s = vec![1usize; 100];
        let post = ProbVector::point_mass(2, 0);
        let prior = ProbVector::uniform(2);
        let params = BoundParams { epsilon: Some(1.0), ..Default::default() };
        let c = cert_ewa_family(EwaVariant::Tuned, &post, &prior, &e, &s, &params, 0.1).unwrap();
        let want = 1.5 * (2f64.ln() / 200.0).sqrt() + ((40f64.ln().ln() + 10f64.ln() + 2f64.ln()) / 200.0).sqrt();
        assert!((c.value - want).abs() < 1e-15);
        // the grid union value is no larger than the closed form
        assert!(c.ingredient("grid.union_value").unwrap() <= c.value + 1e-12);
    }

    #[test]
    fn disjoint_support_is_infinite() {
        let e = env_unit(1, 2, 4);
        let c = cert_ewa_family(
            EwaVariant::Vanilla,
            &ProbVector::point_mass(2, 0),
            &ProbVector::point_mass(2, 1),
            &e,
            &[0, 1],
            &BoundParams::default(),
            0.05,
        )
        .unwrap();
        assert_eq!(c.value, f64::INFINITY);
        assert_eq!(c.recomposition_error(), 0.0);
    }

    #[test]
    fn relaxed_fast_rate_form() {
        let mut rng = rng::stream(2, "t", 0);
        let e = Environment::realizable(4, 5, &mut rng).unwrap();
        let s = e.sample(50, &mut rng);
        let post = ProbVector::point_mass(4, 0);
        let prior = ProbVector::uniform(4);
        let c = cert_second_order(SecondOrderForm::Relaxed, &post, &prior, &e, &s, 0.5, 0.05).unwrap();
        let want = 4f64.ln() / 25.0 + (20f64).ln() / 50.0;
        assert!((c.value - want).abs() < 1e-14);
        assert_eq!(c.target, BoundTarget::TestRisk);
        let zero = cert_second_order(SecondOrderForm::Relaxed, &post, &prior, &e, &s, 0.0, 0.05).unwrap();
        assert!(!zero.valid);
    }

    #[test]
    fn moment_matches_direct_summation() {
        let mut rng = rng::stream(3, "t", 0);
        let e = Environment::random(5, 6, &mut rng).unwrap();
        let s = e.sample(30, &mut rng);
        let post = ProbVector::from_unnormalized(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let c = cert_second_order(SecondOrderForm::Moment, &post, &ProbVector::uniform(5), &e, &s, 0.2, 0.1).unwrap();
        let mut direct = 0.0;
        for &z in &s {
            for w in 0..5 {
                direct += post.weights()[w] * e.loss(w, z) * e.loss(w, z);
            }
        }
        assert!((c.ingredient("sum_posterior_sq_loss").unwrap() - direct).abs() < 1e-12);
        assert!((c.ingredient("term.second_moment").unwrap() - 3.0 * 0.2 / 30.0 * direct).abs() < 1e-12);
    }

    #[test]
    fn ftrl_plain_kl_equals_vanilla() {
        let mut rng = rng::stream(4, "t", 0);
        let e = Environment::random(6, 5, &mut rng).unwrap();
        let s = e.sample(40, &mut rng);
        let post = ProbVector::from_unnormalized(vec![3.0, 1.0, 1.0, 0.5, 0.2, 2.0]).unwrap();
        let prior = ProbVector::uniform(6);
        let params = BoundParams { eta: Some(0.3), ..Default::default() };
        let v = cert_ewa_family(EwaVariant::Vanilla, &post, &prior, &e, &s, &params, 0.05).unwrap();
        let spec = DivergenceSpec::new(DivergenceKind::Kl, prior).unwrap();
        let f = cert_ftrl_family(FtrlVariant::Plain, &spec, &post, &e, &s, &params, 0.05).unwrap();
        assert_eq!(v.value, f.value);
    }

    #[test]
    fn ftrl_prior_and_zero_losses_leave_confidence() {
        let e = Environment::constant(3, 2, 0.0).unwrap();
        let prior = ProbVector::uniform(3);
        let spec = DivergenceSpec::new(DivergenceKind::Chi2, prior.clone()).unwrap();
        let params = BoundParams { sigma: Some(0.5), ..Default::default() };
        let c = cert_ftrl_family(FtrlVariant::Plain, &spec, &prior, &e, &[0, 1, 0, 1], &params, 0.1).unwrap();
        assert_eq!(c.value, (0.25 * 10f64.ln() / 8.0).sqrt());
    }

    #[test]
    fn pnorm_b_at_two_matches_pnorm_a_up_to_constants() {
        let mut rng = rng::stream(5, "t", 0);
        let e = Environment::random(4, 5, &mut rng).unwrap();
        let s = e.sample(25, &mut rng);
        let post = ProbVector::from_unnormalized(vec![1.0, 2.0, 1.0, 3.0]).unwrap();
        let spec = DivergenceSpec::new(DivergenceKind::Pnorm { p: 2.0 }, ProbVector::uniform(4)).unwrap();
        let params = BoundParams { eta: Some(0.4), b: Some(0.8), ..Default::default() };
        let a = cert_ftrl_family(FtrlVariant::PnormA, &spec, &post, &e, &s, &params, 0.1).unwrap();
        let b = cert_ftrl_family(FtrlVariant::PnormB, &spec, &post, &e, &s, &params, 0.1).unwrap();
        let t = |c: &BoundCertificate, k: &str| c.ingredient(k).unwrap();
        assert!((t(&a, "term.divergence") - t(&b, "term.divergence")).abs() < 1e-14);
        assert!((t(&a, "term.variation") / t(&b, "term.variation") - 4.0).abs() < 1e-12);
        assert!((t(&b, "term.confidence") / t(&a, "term.confidence") - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ftrl_regime_errors() {
        let e = env_unit(1, 3, 3);
        let u = ProbVector::uniform(3);
        let spec = DivergenceSpec::new(DivergenceKind::Pnorm { p: 3.0 }, u.clone()).unwrap();
        assert!(cert_ftrl_family(FtrlVariant::Plain, &spec, &u, &e, &[0], &BoundParams::default(), 0.1).is_err());
        assert!(cert_ftrl_family(FtrlVariant::PnormA, &spec, &u, &e, &[0], &BoundParams::default(), 0.1).is_err());
        let spec = DivergenceSpec::new(DivergenceKind::Pnorm { p: 1.5 }, u.clone()).unwrap();
        assert!(cert_ftrl_family(FtrlVariant::PnormB, &spec, &u, &e, &[0], &BoundParams::default(), 0.1).is_err());
    }

    fn smoothed_inputs(eta: f64, gamma: f64, n: usize) -> SmoothedInputs {
        SmoothedInputs {
            gamma,
            eta,
            delta: 0.1,
            sigma: 1.0,
            sigma2_required: None,
            betas: SeriesCoefficients::Constant(1.0),
            n,
            samples: 2000,
            seed: 3,
        }
    }

    #[test]
    fn smoothed_examples() {
        let p = PointCloudMeasure::uniform(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let d = 2.0f64;
        let gamma = 0.5 / d.sqrt();
        let c = cert_smoothed_family(SmoothedVariant::SmoothPb, &p, &p, &smoothed_inputs(0.3, gamma, 50)).unwrap();
        assert_eq!(c.ingredient("term.divergence"), Some(0.0));
        assert_eq!(c.ingredient("term.smoothness"), Some(2.0 * 0.3));
        let w = cert_smoothed_family(
            SmoothedVariant::Wasserstein,
            &PointCloudMeasure::dirac(vec![0.0, 0.0]).unwrap(),
            &PointCloudMeasure::dirac(vec![1.0, 2.0]).unwrap(),
            &smoothed_inputs(0.5, gamma, 10),
        )
        .unwrap();
        assert!((w.ingredient("term.divergence").unwrap() - 2.0 * 2.0 * 5.0 / 5.0).abs() < 1e-12);
        assert_eq!(w.ingredient("term.smoothness"), Some(1.0));
        let bad = cert_smoothed_family(SmoothedVariant::Plain, &p, &p, &smoothed_inputs(0.3, 1.0, 50)).unwrap();
        assert!(!bad.valid);
    }

    #[test]
    fn conditional_examples() {
        let e = env_unit(1, 3, 3);
        let u = ProbVector::uniform(3);
        let c = cert_conditional(&u, &u, &e, 0.4, 100, 0.05).unwrap();
        let want = 0.05 + 2.0 * ((40f64).ln() / 200.0).sqrt();
        assert!((c.value - want).abs() < 1e-15);
        assert_eq!(c.ingredient("delta_each"), Some(0.025));
        // optimizing η at fixed KL
        let post = ProbVector::point_mass(3, 1);
        let klv = kl(&post, &u);
        let n = 100.0;
        let eta = (8.0 * klv / n).sqrt();
        let c = cert_conditional(&post, &u, &e, eta, 100, 0.05).unwrap();
        let first_two = c.ingredient("term.divergence").unwrap() + c.ingredient("term.hoeffding").unwrap();
        assert!((first_two - (klv / (2.0 * n)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn expected_examples() {
        let e = Environment::deterministic(vec![0.3, 0.6]).unwrap();
        let stat = StatLearnerSpec::Gibbs { beta: 1.0, prior: ProbVector::uniform(2) };
        let outs = game::replicate_outcomes(&e, &stat, 10, 5, 1).unwrap();
        let mi = cert_expected(ExpectedVariant::MutualInfo, &outs, None, None).unwrap();
        assert_eq!(mi.value, 0.0);
        assert!(cert_expected(ExpectedVariant::MutualInfo, &outs[..1], None, None).is_err());

        let r = env_unit(7, 4, 5);
        let outs = game::replicate_outcomes(&r, &stat_gibbs(4), 20, 200, 2).unwrap();
        let mi = cert_expected(ExpectedVariant::MutualInfo, &outs, None, None).unwrap();
        let fixed = cert_expected(ExpectedVariant::FixedPrior, &outs, None, None).unwrap();
        assert!(fixed.value >= mi.value - 1e-15);
        assert!((fixed.value - mi.value).abs() < 1e-12);
        let uni = cert_expected(ExpectedVariant::FixedPrior, &outs, Some(&ProbVector::uniform(4)), None).unwrap();
        assert!(uni.value >= mi.value);
    }

    fn stat_gibbs(k: usize) -> StatLearnerSpec {
        StatLearnerSpec::Gibbs { beta: 2.0, prior: ProbVector::uniform(k) }
    }

    #[test]
    fn concentration_examples() {
        let e1 = (-1.0f64).exp();
        let v = concentration_rhs(&LemmaInputs::SecondMoment { sigma2: vec![1.0] }, 1.0, e1).unwrap();
        assert!((v - 1.5).abs() < 1e-15);
        let b = vec![0.3, 0.9, 1.4];
        let heavy = concentration_rhs(&LemmaInputs::HeavyTail { q: 2.0, b: b.clone() }, 0.7, 0.2).unwrap();
        let first = concentration_rhs(&LemmaInputs::SecondMoment { sigma2: b.iter().map(|x| 2.0 * x * x).collect() }, 0.7, 0.2).unwrap();
        assert!((heavy - first).abs() < 1e-14);
        let one = concentration_rhs(&LemmaInputs::Bounded { x: vec![0.5, 0.5] }, 0.5, 1.0).unwrap();
        assert_eq!(one, 0.25);
        assert!(concentration_rhs(&LemmaInputs::Bounded { x: vec![0.5] }, 0.6, 0.1).is_err());
        assert!(concentration_rhs(&LemmaInputs::HeavyTail { q: 2.5, b: vec![1.0] }, 0.5, 0.1).is_err());
    }

    #[test]
    fn deterministic_environment_never_violates() {
        let e = Environment::deterministic(vec![0.2, 0.7, 0.4]).unwrap();
        let stat = stat_gibbs(3);
        for id in [
            BoundId::Vanilla,
            BoundId::Tuned,
            BoundId::Paramfree,
            BoundId::SecondOrderMoment,
            BoundId::SecondOrderRelaxed,
            BoundId::Conditional,
        ] {
            let (rep, rows) = bound_coverage(&BoundConfig::new(id), &e, &stat, 20, 1000, 0.05, 9).unwrap();
            assert_eq!(rep.violations, 0, "{id:?}");
            assert_eq!(rows.len(), 1000);
        }
    }

    #[test]
    fn lemma_coverage_within_band() {
        for lemma in LemmaId::ALL {
            let (rep, _) = lemma_coverage(lemma, 100, 2000, 0.1, 4).unwrap();
            assert!(rep.within_band, "{lemma:?}: {rep:?}");
        }
        assert!(lemma_coverage(LemmaId::Bounded, 100, 999, 0.1, 4).is_err());
    }

    #[test]
    fn lemma_process_moments() {
        // Monte-Carlo sanity: the bounded process has mean μ_t on average.
        let mut tot = 0.0;
        for s in 0..200 {
            tot += lemma_trial(LemmaId::Bounded, 50, s).0;
        }
        assert!((tot / 200.0).abs() < 0.5);
    }

    #[test]
    fn certificates_recompose() {
        let mut rng = rng::stream(9, "t", 0);
        let e = Environment::random(5, 5, &mut rng).unwrap();
        let s = e.sample(60, &mut rng);
        let post = game::posterior(&stat_gibbs(5), &e, &s).unwrap();
        for id in BoundId::ALL {
            if matches!(id, BoundId::SmoothedPlain | BoundId::SmoothPb | BoundId::Wasserstein | BoundId::FixedPrior | BoundId::MutualInfo) {
                continue;
            }
            let ctx = CertContext { env: &e, sample: &s, posterior: &post, delta: 0.05, seed: 1, conditional_prior: None };
            let c = certify(&BoundConfig::new(id), &ctx).unwrap();
            assert!(c.recomposition_error() <= 1e-12, "{id:?}");
            let j = crate::json::to_string(&c).unwrap();
            let back: BoundCertificate = serde_json::from_str(&j).unwrap();
            assert_eq!(back, c);
        }
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn ewa_values_grow_with_kl(k1 in 0.0f64..5.0, dk in 0.0f64..5.0, n in 2usize..500) {
            // evaluate the formulas through extreme posteriors with known KL
            let e = Environment::constant(2, 1, 0.5).unwrap();
            let s = vec![0usize; n];
            let mk = |kl_target: f64| {
                // prior (1-a, a) vs point mass at 0 has KL = -ln(1-a)
                let a = 1.0 - (-kl_target).exp();
                (ProbVector::point_mass(2, 0), ProbVector::new(vec![1.0 - a, a]).unwrap_or(ProbVector::uniform(2)))
            };
            let (p1, q1) = mk(k1);
            let (p2, q2) = mk(k1 + dk);
            for v in [EwaVariant::Vanilla, EwaVariant::Tuned, EwaVariant::Paramfree] {
                let params = BoundParams { eta: Some(0.3), ..Default::default() };
                let a = cert_ewa_family(v, &p1, &q1, &e, &s, &params, 0.1).unwrap();
                let b = cert_ewa_family(v, &p2, &q2, &e, &s, &params, 0.1).unwrap();
                prop_assert!(b.value >= a.value - 1e-12);
            }
        }
    }
}

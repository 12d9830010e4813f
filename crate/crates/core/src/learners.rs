//! Online learners over the simplex and their pathwise regret bounds.
//!
//! Every learner follows the same contract: it commits to a prediction
//! `P_t` before seeing `c_t`, then [`OnlineLearnerState::observe`] consumes
//! `c_t` together with the hint `g_{t+1}` for the next round and returns the
//! next state. States are values; nothing is mutated in place.
//!
//! FTRL with a KL regularizer is solved in closed form (a Gibbs distribution).
//! CHI2 and PNORM are solved from the KKT conditions: writing `x_i = P_i/b_i − 1`,
//! stationarity gives `x_i = max(−1, ψ(−(C_i + λ)/s))` with
//! `ψ(y) = sgn(y)|y|^{1/(p−1)}`, and the multiplier `λ` is found by bisection
//! on `Σ b_i x_i = 0`. The scale is `s = p/η` for the p-th power regime
//! (`p > 2`) and `s = 2N^{2−p}/η` for the squared norm (`p ≤ 2`); the latter
//! depends on the solution's norm `N` and is found by an outer bisection.

use crate::error::{check_dim, Error, Result};
use crate::measures::{dual_q_power, inner, kl, CostVector, DivergenceKind, DivergenceSpec, ProbVector};
use crate::numeric::{self, Sum};
use serde::{Deserialize, Serialize};

/// Bisection stops once `|Σ P_i − 1|` falls below this.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Iteration cap for each bisection.
pub const MAX_BISECTION_ITERS: usize = 200;

/// Learner family and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum LearnerKind {
    Ewa {
        eta: f64,
    },
    #[serde(rename = "OPT2EWA")]
    Opt2Ewa {
        eta: f64,
    },
    Ftrl {
        eta: f64,
        divergence: DivergenceKind,
    },
    #[serde(rename = "OPTFTRL")]
    OptFtrl {
        eta: f64,
        divergence: DivergenceKind,
    },
}

impl LearnerKind {
    pub fn eta(&self) -> f64 {
        match *self {
            LearnerKind::Ewa { eta } | LearnerKind::Opt2Ewa { eta } | LearnerKind::Ftrl { eta, .. } | LearnerKind::OptFtrl { eta, .. } => {
                eta
            }
        }
    }

    /// Whether predictions use the hint `g_t`.
    pub fn uses_hints(&self) -> bool {
        matches!(self, LearnerKind::Opt2Ewa { .. } | LearnerKind::OptFtrl { .. })
    }

    pub fn divergence(&self) -> DivergenceKind {
        match *self {
            LearnerKind::Ewa { .. } | LearnerKind::Opt2Ewa { .. } => DivergenceKind::Kl,
            LearnerKind::Ftrl { divergence, .. } | LearnerKind::OptFtrl { divergence, .. } => divergence,
        }
    }

    pub fn label(&self) -> String {
        match self {
            LearnerKind::Ewa { .. } => "EWA".into(),
            LearnerKind::Opt2Ewa { .. } => "OPT2EWA".into(),
            LearnerKind::Ftrl { divergence, .. } => format!("FTRL-{}", divergence.label()),
            LearnerKind::OptFtrl { divergence, .. } => format!("OPTFTRL-{}", divergence.label()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.eta();
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidInput(format!("learning rate must be positive and finite, got {eta}")));
        }
        if let LearnerKind::Opt2Ewa { eta } = self {
            if *eta > 0.5 {
                return Err(Error::Precondition(format!("OPT2EWA requires η ≤ 1/2, got {eta}")));
            }
        }
        let div = self.divergence();
        div.validate()?;
        if div == DivergenceKind::Tv {
            return Err(Error::Unsupported("TV is not a strongly convex regularizer".into()));
        }
        Ok(())
    }
}

/// State of an online learner between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineLearnerState {
    kind: LearnerKind,
    prior: ProbVector,
    spec: DivergenceSpec,
    accumulated: CostVector,
    aux: Option<ProbVector>,
    hint: CostVector,
    prediction: ProbVector,
    round: usize,
}

impl OnlineLearnerState {
    /// Initial state; `first_hint` is `g_1` (ignored by non-optimistic kinds).
    pub fn new(kind: LearnerKind, prior: ProbVector, first_hint: CostVector) -> Result<Self> {
        kind.validate()?;
        check_dim(prior.len(), first_hint.len())?;
        let spec = DivergenceSpec::new(kind.divergence(), prior.clone())?;
        let k = prior.len();
        let eta = kind.eta();
        let (aux, prediction) = match kind {
            LearnerKind::Ewa { .. } | LearnerKind::Ftrl { .. } => (None, prior.clone()),
            LearnerKind::Opt2Ewa { .. } => {
                let p = prior.tilt(&neg_scaled(&first_hint, eta))?;
                (Some(prior.clone()), p)
            }
            LearnerKind::OptFtrl { .. } => (None, optftrl_solve(&spec, eta, &CostVector::zeros(k), &first_hint)?),
        };
        Ok(Self { kind, prior, spec, accumulated: CostVector::zeros(k), aux, hint: first_hint, prediction, round: 0 })
    }

    pub fn kind(&self) -> &LearnerKind {
        &self.kind
    }

    pub fn prior(&self) -> &ProbVector {
        &self.prior
    }

    pub fn spec(&self) -> &DivergenceSpec {
        &self.spec
    }

    /// The committed prediction `P_t` for the current round.
    pub fn prediction(&self) -> &ProbVector {
        &self.prediction
    }

    /// Cumulative cost `C_{t−1}`.
    pub fn accumulated(&self) -> &CostVector {
        &self.accumulated
    }

    /// Auxiliary distribution `P̃_t` (OPT2EWA only).
    pub fn aux(&self) -> Option<&ProbVector> {
        self.aux.as_ref()
    }

    /// Hint `g_t` used for the current prediction.
    pub fn hint(&self) -> &CostVector {
        &self.hint
    }

    /// Number of observed rounds.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Consumes `c_t` and the next hint `g_{t+1}`.
    pub fn observe(&self, c: &CostVector, next_hint: &CostVector) -> Result<Self> {
        check_dim(self.prior.len(), c.len())?;
        check_dim(self.prior.len(), next_hint.len())?;
        let eta = self.kind.eta();
        let mut next = match self.kind {
            LearnerKind::Ewa { .. } => ewa_step(self, c)?,
            LearnerKind::Opt2Ewa { .. } => opt2ewa_step(self, c, &self.hint.clone(), next_hint)?,
            LearnerKind::Ftrl { .. } => {
                let acc = self.accumulated.add(c)?;
                let prediction = ftrl_solve(&self.spec, eta, &acc)?;
                Self { accumulated: acc, prediction, round: self.round + 1, ..self.clone() }
            }
            LearnerKind::OptFtrl { .. } => {
                let acc = self.accumulated.add(c)?;
                let prediction = optftrl_solve(&self.spec, eta, &acc, next_hint)?;
                Self { accumulated: acc, prediction, round: self.round + 1, ..self.clone() }
            }
        };
        next.hint = next_hint.clone();
        Ok(next)
    }
}

fn neg_scaled(c: &CostVector, eta: f64) -> Vec<f64> {
    c.values().iter().map(|v| -eta * v).collect()
}

/// EWA update `P_{t+1} ∝ P_t exp(−η c)`.
pub fn ewa_step(state: &OnlineLearnerState, c: &CostVector) -> Result<OnlineLearnerState> {
    let LearnerKind::Ewa { eta } = state.kind else {
        return Err(Error::Precondition(format!("ewa_step called on a {} learner", state.kind.label())));
    };
    check_dim(state.prior.len(), c.len())?;
    let prediction = state.prediction.tilt(&neg_scaled(c, eta))?;
    Ok(OnlineLearnerState { accumulated: state.accumulated.add(c)?, prediction, round: state.round + 1, ..state.clone() })
}

/// Optimistic second-order EWA update:
/// `P̃_{t+1} ∝ P̃_t exp(−ηc − η²(c−g)²)` and `P_{t+1} ∝ P̃_{t+1} exp(−η g_next)`.
pub fn opt2ewa_step(state: &OnlineLearnerState, c: &CostVector, g: &CostVector, g_next: &CostVector) -> Result<OnlineLearnerState> {
    let LearnerKind::Opt2Ewa { eta } = state.kind else {
        return Err(Error::Precondition(format!("opt2ewa_step called on a {} learner", state.kind.label())));
    };
    if eta > 0.5 {
        return Err(Error::Precondition(format!("OPT2EWA requires η ≤ 1/2, got {eta}")));
    }
    let k = state.prior.len();
    check_dim(k, c.len())?;
    check_dim(k, g.len())?;
    check_dim(k, g_next.len())?;
    let aux = state.aux.as_ref().expect("OPT2EWA state carries an auxiliary distribution");
    let a: Vec<f64> = c.values().iter().zip(g.values()).map(|(c, g)| -eta * c - eta * eta * (c - g) * (c - g)).collect();
    let aux = aux.tilt(&a)?;
    let prediction = aux.tilt(&neg_scaled(g_next, eta))?;
    Ok(OnlineLearnerState {
        accumulated: state.accumulated.add(c)?,
        aux: Some(aux),
        prediction,
        hint: g_next.clone(),
        round: state.round + 1,
        ..state.clone()
    })
}

/// FTRL prediction `argmin_P ⟨P, C⟩ + h(P)/η` over the simplex.
pub fn ftrl_solve(spec: &DivergenceSpec, eta: f64, c: &CostVector) -> Result<ProbVector> {
    check_dim(spec.len(), c.len())?;
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidInput(format!("learning rate must be positive and finite, got {eta}")));
    }
    let base = spec.base().weights();
    match spec.kind() {
        DivergenceKind::Kl => crate::measures::gibbs(spec.base(), c, eta),
        DivergenceKind::Chi2 => densities_to_prob(base, &separable_kkt(base, c.values(), 2.0, 2.0 / eta)?),
        DivergenceKind::Pnorm { p } if p > 2.0 => densities_to_prob(base, &separable_kkt(base, c.values(), p, p / eta)?),
        DivergenceKind::Pnorm { p } if p == 2.0 => densities_to_prob(base, &separable_kkt(base, c.values(), 2.0, 2.0 / eta)?),
        DivergenceKind::Pnorm { p } => densities_to_prob(base, &squared_norm_kkt(base, c.values(), p, eta)?),
        DivergenceKind::Tv => Err(Error::Unsupported("TV is not a strongly convex regularizer".into())),
    }
}

/// Optimistic FTRL prediction, `ftrl_solve(C + g)`.
pub fn optftrl_solve(spec: &DivergenceSpec, eta: f64, c: &CostVector, g: &CostVector) -> Result<ProbVector> {
    ftrl_solve(spec, eta, &c.add(g)?)
}

/// FTRL objective `⟨P, C⟩ + h(P)/η`.
pub fn ftrl_objective(spec: &DivergenceSpec, eta: f64, c: &CostVector, p: &ProbVector) -> Result<f64> {
    Ok(inner(p, c)? + spec.regularizer(p)? / eta)
}

/// Largest violation of the KKT conditions of the FTRL problem at `P`:
/// the objective gradient must be constant on the support of `P` and no
/// smaller off the support.
pub fn kkt_residual(spec: &DivergenceSpec, eta: f64, c: &CostVector, p: &ProbVector) -> Result<f64> {
    check_dim(spec.len(), c.len())?;
    let grad = spec.gradient(p)?;
    let g: Vec<f64> = c.values().iter().zip(&grad).map(|(c, h)| c + h / eta).collect();
    let on: Vec<f64> = g.iter().zip(p.weights()).filter(|(_, w)| **w > 0.0).map(|(g, _)| *g).collect();
    let hi = on.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = on.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda = 0.5 * (hi + lo);
    let off = g.iter().zip(p.weights()).filter(|(_, w)| **w == 0.0).map(|(g, _)| (lambda - g).max(0.0)).fold(0.0, f64::max);
    Ok((0.5 * (hi - lo)).max(off))
}

fn densities_to_prob(base: &[f64], x: &[f64]) -> Result<ProbVector> {
    ProbVector::from_unnormalized(base.iter().zip(x).map(|(b, x)| (b * (1.0 + x)).max(0.0)).collect())
}

/// Inverse of `φ(x) = sgn(x)|x|^{p−1}`.
fn phi_inv(y: f64, p: f64) -> f64 {
    let e = 1.0 / (p - 1.0);
    if p == 2.0 {
        y
    } else if e == 2.0 {
        y * y.abs()
    } else if e == 0.5 {
        y.signum() * y.abs().sqrt()
    } else if e.fract() == 0.0 && e < 16.0 {
        y.signum() * y.abs().powi(e as i32)
    } else {
        y.signum() * y.abs().powf(e)
    }
}

/// Solves `Σ b_i x_i(λ) = 0` with `x_i(λ) = max(−1, φ⁻¹(−(c_i+λ)/s))`.
///
/// The residual is nonincreasing in `λ`, nonnegative at `−max c` and
/// nonpositive at `−min c`, which brackets the root.
fn separable_kkt(base: &[f64], c: &[f64], p: f64, s: f64) -> Result<Vec<f64>> {
    separable_kkt_with(base, c, p, s, true)
}

/// With `strict = false` a bisection that collapses onto adjacent floats
/// returns its best point instead of failing; used for probing the outer scale.
fn separable_kkt_with(base: &[f64], c: &[f64], p: f64, s: f64, strict: bool) -> Result<Vec<f64>> {
    let cmax = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cmin = c.iter().copied().fold(f64::INFINITY, f64::min);
    if cmax == cmin {
        return Ok(vec![0.0; c.len()]);
    }
    let xs = |lambda: f64| -> Vec<f64> { c.iter().map(|ci| phi_inv(-(ci + lambda) / s, p).max(-1.0)).collect() };
    let residual = |x: &[f64]| numeric::dot(base, x);
    let (mut lo, mut hi) = (-cmax, -cmin);
    let mut best = xs(lo);
    let mut best_r = residual(&best);
    let mut best_lambda = lo;
    for _ in 0..MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        let x = xs(mid);
        let r = residual(&x);
        if r.abs() < best_r.abs() {
            best = x;
            best_r = r;
            best_lambda = mid;
        }
        // Keep halving past the normalization tolerance: the multiplier
        // itself must be accurate for the stationarity conditions to hold.
        let narrow = !strict || hi - lo <= 1e-15 * (1.0 + lo.abs());
        if mid <= lo || mid >= hi || (best_r.abs() <= 0.01 * NORMALIZATION_TOLERANCE && narrow) {
            break;
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best_r.abs() > NORMALIZATION_TOLERANCE && p > 2.0 {
        // For p > 2 the map λ ↦ x_j is infinitely steep where its argument
        // crosses zero, so the root can fall between adjacent floats. Absorb
        // the residual into that coordinate; its stationarity error is of
        // order |Δx_j|^{p−1}.
        let j = (0..c.len()).filter(|&i| best[i] > -1.0).min_by(|&a, &b| (c[a] + best_lambda).abs().total_cmp(&(c[b] + best_lambda).abs()));
        if let Some(j) = j {
            let xj = best[j] - best_r / base[j];
            if xj >= -1.0 {
                best[j] = xj;
                best_r = residual(&best);
            }
        }
    }
    if strict && best_r.abs() > 1e-10 {
        return Err(Error::Numerical {
            routine: "ftrl_solve",
            detail: format!("normalization residual {best_r:e} after bisection on [{lo}, {hi}] (p = {p}, s = {s})"),
        });
    }
    Ok(best)
}

fn weighted_norm(base: &[f64], x: &[f64], p: f64) -> f64 {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * numeric::sum(base.iter().zip(x).map(|(b, v)| b * (v / m).abs().powf(p))).powf(1.0 / p)
}

/// Squared-norm regime `p ∈ (1,2)`: find the scale `s` with `s = 2N(s)^{2−p}/η`.
/// `F(s) = s − 2N(s)^{2−p}/η` is increasing because `N(s)` decreases in `s`.
fn squared_norm_kkt(base: &[f64], c: &[f64], p: f64, eta: f64) -> Result<Vec<f64>> {
    let cmax = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cmin = c.iter().copied().fold(f64::INFINITY, f64::min);
    if cmax == cmin {
        return Ok(vec![0.0; c.len()]);
    }
    let f = |s: f64| -> Result<f64> {
        let x = separable_kkt_with(base, c, p, s, false)?;
        Ok(s - 2.0 * weighted_norm(base, &x, p).powf(2.0 - p) / eta)
    };
    let bmin = base.iter().copied().fold(f64::INFINITY, f64::min);
    // N ≤ max_i |x_i| ≤ 1/b_min on the simplex.
    let mut hi = 2.0 * (1.0 / bmin).powf(2.0 - p) / eta;
    let mut lo = hi * 1e-12;
    if f(hi)? > 0.0 {
        let mut tries = 0;
        while f(lo)? >= 0.0 {
            hi = lo;
            lo *= 1e-12;
            tries += 1;
            if tries > 20 {
                return Err(Error::Numerical { routine: "ftrl_solve", detail: "could not bracket the p-norm scale".into() });
            }
        }
        // Illinois false position on log s, keeping the bracket f(lo) < 0 < f(hi).
        let (mut a, mut b) = (lo.ln(), hi.ln());
        let (mut fa, mut fb) = (f(lo)?, f(hi)?);
        let mut side = 0i8;
        for _ in 0..MAX_BISECTION_ITERS {
            if b - a <= 1e-15 * b.abs().max(1.0) {
                break;
            }
            let mut u = (a * fb - b * fa) / (fb - fa);
            if !(u > a && u < b) {
                u = 0.5 * (a + b);
            }
            let fu = f(u.exp())?;
            if fu == 0.0 {
                b = u;
                break;
            }
            if fu > 0.0 {
                b = u;
                fb = fu;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            } else {
                a = u;
                fa = fu;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            }
        }
        hi = b.exp();
    }
    separable_kkt(base, c, p, hi)
}

/// Regret `Σ_t ⟨P_t − P*, c_t⟩`.
pub fn regret(predictions: &[ProbVector], costs: &[CostVector], comparator: &ProbVector) -> Result<f64> {
    check_dim(predictions.len(), costs.len())?;
    let mut s = Sum::new();
    for (p, c) in predictions.iter().zip(costs) {
        s.add(inner(p, c)?);
        s.add(-inner(comparator, c)?);
    }
    Ok(s.value())
}

/// Evaluated right-hand side of a regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretBound {
    #[serde(with = "crate::json::ext_f64")]
    pub value: f64,
    /// `(h(P*) − h(P_1))/η`.
    #[serde(with = "crate::json::ext_f64")]
    pub divergence_term: f64,
    /// The cost-dependent sum.
    pub variation_term: f64,
    /// Whether the bound's preconditions hold on this sequence.
    pub valid: bool,
}

/// Regret bound of the learner family on a realized cost sequence.
///
/// `hints` are the `g_t` played by the optimistic kinds (zero if `None`);
/// `prior` is `P_1` (or `P̃_1` for OPT2EWA), the base of the regularizer.
///
/// | kind            | bound                                              |
/// |-----------------|----------------------------------------------------|
/// | EWA             | `KL(P*‖P_1)/η + (η/2) Σ ‖c_t‖²_∞`                    |
/// | OPT2EWA         | `KL(P*‖P̃_1)/η + η Σ ⟨P*, (c_t − g_t)²⟩`              |
/// | FTRL, α-convex  | `(h(P*) − h(P_1))/η + (η/2α) Σ ‖c_t − g_t‖²_*`       |
/// | FTRL, PNORM p>2 | `(h(P*) − h(P_1))/η + (1/q)(η/2)^{q−1} Σ ‖c_t − g_t‖_q^q` |
///
/// `g_t = 0` for plain FTRL.
pub fn regret_bound_rhs(
    kind: &LearnerKind,
    prior: &ProbVector,
    costs: &[CostVector],
    hints: Option<&[CostVector]>,
    comparator: &ProbVector,
) -> Result<RegretBound> {
    kind.validate().or_else(|e| match e {
        Error::Precondition(_) => Ok(()),
        e => Err(e),
    })?;
    let k = prior.len();
    check_dim(k, comparator.len())?;
    if let Some(h) = hints {
        check_dim(costs.len(), h.len())?;
    }
    let eta = kind.eta();
    let zero = CostVector::zeros(k);
    let gaps: Vec<CostVector> = costs
        .iter()
        .enumerate()
        .map(|(t, c)| {
            check_dim(k, c.len())?;
            match (kind.uses_hints(), hints) {
                (true, Some(h)) => c.sub(&h[t]),
                _ => c.sub(&zero),
            }
        })
        .collect::<Result<_>>()?;
    let mut valid = true;
    let (divergence_term, variation_term) = match kind {
        LearnerKind::Ewa { .. } => {
            let v = numeric::sum(costs.iter().map(|c| c.sup_norm().powi(2)));
            (kl(comparator, prior) / eta, 0.5 * eta * v)
        }
        LearnerKind::Opt2Ewa { .. } => {
            let mut v = Sum::new();
            for g in &gaps {
                let sq: Vec<f64> = g.values().iter().map(|x| x * x).collect();
                v.add(numeric::dot(comparator.weights(), &sq));
                let worst = g.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if eta * worst > 0.5 {
                    valid = false;
                }
            }
            if eta > 0.5 {
                valid = false;
            }
            (kl(comparator, prior) / eta, eta * v.value())
        }
        LearnerKind::Ftrl { divergence, .. } | LearnerKind::OptFtrl { divergence, .. } => {
            let spec = DivergenceSpec::new(*divergence, prior.clone())?;
            let d = spec.regularizer(comparator)? / eta;
            match divergence.strong_convexity_modulus() {
                Some(alpha) => {
                    let mut v = Sum::new();
                    for g in &gaps {
                        v.add(spec.dual_norm(g)?.powi(2));
                    }
                    (d, eta / (2.0 * alpha) * v.value())
                }
                None => {
                    let q = divergence.dual_exponent();
                    let mut v = Sum::new();
                    for g in &gaps {
                        v.add(dual_q_power(g, prior, q)?);
                    }
                    (d, (0.5 * eta).powf(q - 1.0) / q * v.value())
                }
            }
        }
    };
    Ok(RegretBound { value: divergence_term + variation_term, divergence_term, variation_term, valid })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(v: &[f64]) -> CostVector {
        CostVector::new(v.to_vec()).unwrap()
    }
    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ewa_examples() {
        let s = OnlineLearnerState::new(LearnerKind::Ewa { eta: 1.0 }, ProbVector::uniform(2), CostVector::zeros(2)).unwrap();
        let t = ewa_step(&s, &cv(&[0.0, 2f64.ln()])).unwrap();
        assert!((t.prediction().weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((t.prediction().weights()[1] - 1.0 / 3.0).abs() < 1e-15);
        let u = ewa_step(&t, &CostVector::constant(2, 7.0)).unwrap();
        assert!(u.prediction().l1_distance(t.prediction()).unwrap() < 1e-15);
        assert_eq!(u.round(), 2);
    }

    #[test]
    fn opt2ewa_examples() {
        let prior = pv(&[0.1, 0.2, 0.3, 0.4]);
        let z = CostVector::zeros(4);
        let s = OnlineLearnerState::new(LearnerKind::Opt2Ewa { eta: 0.5 }, prior.clone(), z.clone()).unwrap();
        let t = opt2ewa_step(&s, &z, &z, &z).unwrap();
        assert_eq!(t.aux().unwrap(), &prior);
        assert_eq!(t.prediction(), &prior);
        // with g = c the second-order term vanishes and P̃ follows EWA
        let c = cv(&[0.3, -0.2, 0.9, 0.0]);
        let t = opt2ewa_step(&s, &c, &c, &z).unwrap();
        let e = OnlineLearnerState::new(LearnerKind::Ewa { eta: 0.5 }, prior.clone(), z.clone()).unwrap();
        let e = ewa_step(&e, &c).unwrap();
        assert!(t.aux().unwrap().l1_distance(e.prediction()).unwrap() < 1e-15);
        assert!(OnlineLearnerState::new(LearnerKind::Opt2Ewa { eta: 0.6 }, prior, z).is_err());
    }

    #[test]
    fn ftrl_examples() {
        let base = pv(&[0.2, 0.3, 0.5]);
        for kind in [DivergenceKind::Kl, DivergenceKind::Chi2, DivergenceKind::Pnorm { p: 1.5 }, DivergenceKind::Pnorm { p: 3.0 }] {
            let spec = DivergenceSpec::new(kind, base.clone()).unwrap();
            assert_eq!(ftrl_solve(&spec, 0.7, &CostVector::zeros(3)).unwrap(), base);
        }
        let spec = DivergenceSpec::new(DivergenceKind::Chi2, ProbVector::uniform(2)).unwrap();
        let p = ftrl_solve(&spec, 1.0, &cv(&[0.0, 1.0])).unwrap();
        assert!((p.weights()[0] - 0.625).abs() < 1e-12);
        assert!((p.weights()[1] - 0.375).abs() < 1e-12);
        let spec = DivergenceSpec::new(DivergenceKind::Kl, base.clone()).unwrap();
        let c = cv(&[1.0, -2.0, 0.5]);
        let p = ftrl_solve(&spec, 0.4, &c).unwrap();
        let g = crate::measures::gibbs(&base, &c, 0.4).unwrap();
        assert_eq!(p, g);
    }

    #[test]
    fn ftrl_clips_at_the_boundary() {
        let spec = DivergenceSpec::new(DivergenceKind::Chi2, ProbVector::uniform(3)).unwrap();
        let c = cv(&[0.0, 0.0, 50.0]);
        let p = ftrl_solve(&spec, 1.0, &c).unwrap();
        assert_eq!(p.weights()[2], 0.0);
        assert!(kkt_residual(&spec, 1.0, &c, &p).unwrap() < 1e-9);
    }

    #[test]
    fn optftrl_examples() {
        let spec = DivergenceSpec::new(DivergenceKind::Chi2, pv(&[0.25, 0.25, 0.5])).unwrap();
        let c = cv(&[0.4, -0.3, 1.2]);
        assert_eq!(optftrl_solve(&spec, 0.8, &c, &CostVector::zeros(3)).unwrap(), ftrl_solve(&spec, 0.8, &c).unwrap());
        let minus = c.scale(-1.0).unwrap();
        assert_eq!(optftrl_solve(&spec, 0.8, &c, &minus).unwrap(), *spec.base());
    }

    #[test]
    fn regret_examples() {
        let u = ProbVector::uniform(2);
        let c = vec![cv(&[0.0, 1.0])];
        assert_eq!(regret(&[u.clone()], &c, &u).unwrap(), 0.0);
        assert_eq!(regret(&[u.clone()], &c, &ProbVector::point_mass(2, 0)).unwrap(), 0.5);
        let cs = vec![CostVector::constant(2, 3.0), CostVector::constant(2, -1.0)];
        assert_eq!(regret(&[u.clone(), ProbVector::point_mass(2, 1)], &cs, &ProbVector::point_mass(2, 0)).unwrap(), 0.0);
        assert!(regret(&[u.clone()], &cs, &u).is_err());
    }

    #[test]
    fn regret_bound_examples() {
        let u = ProbVector::uniform(2);
        let zeros = vec![CostVector::zeros(2); 3];
        for kind in [
            LearnerKind::Ewa { eta: 1.0 },
            LearnerKind::Opt2Ewa { eta: 0.5 },
            LearnerKind::Ftrl { eta: 1.0, divergence: DivergenceKind::Chi2 },
            LearnerKind::OptFtrl { eta: 1.0, divergence: DivergenceKind::Pnorm { p: 3.0 } },
        ] {
            assert_eq!(regret_bound_rhs(&kind, &u, &zeros, None, &u).unwrap().value, 0.0);
        }
        let b = regret_bound_rhs(&LearnerKind::Ewa { eta: 1.0 }, &u, &[cv(&[1.0, 0.0])], None, &ProbVector::point_mass(2, 0)).unwrap();
        assert!((b.value - (2f64.ln() + 0.5)).abs() < 1e-15);
        // perfect hints zero the second-order term
        let costs = vec![cv(&[0.3, -0.1]), cv(&[0.2, 0.9])];
        let b = regret_bound_rhs(&LearnerKind::Opt2Ewa { eta: 0.5 }, &u, &costs, Some(&costs), &pv(&[0.3, 0.7])).unwrap();
        assert_eq!(b.variation_term, 0.0);
    }

    #[test]
    fn ewa_matches_ftrl_kl() {
        let prior = pv(&[0.1, 0.2, 0.3, 0.4]);
        let z = CostVector::zeros(4);
        let mut e = OnlineLearnerState::new(LearnerKind::Ewa { eta: 0.3 }, prior.clone(), z.clone()).unwrap();
        let mut f = OnlineLearnerState::new(LearnerKind::Ftrl { eta: 0.3, divergence: DivergenceKind::Kl }, prior, z.clone()).unwrap();
        for t in 0..100 {
            let c = cv(&[(t as f64).sin(), (t as f64 * 0.7).cos(), -0.5, ((t * t) % 7) as f64 / 7.0]);
            e = e.observe(&c, &z).unwrap();
            f = f.observe(&c, &z).unwrap();
            assert!(e.prediction().l1_distance(f.prediction()).unwrap() <= 1e-12);
        }
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn kinds() -> impl Strategy<Value = DivergenceKind> {
        prop_oneof![
            Just(DivergenceKind::Kl),
            Just(DivergenceKind::Chi2),
            (1.2f64..2.0).prop_map(|p| DivergenceKind::Pnorm { p }),
            (2.0f64..5.0).prop_map(|p| DivergenceKind::Pnorm { p }),
        ]
    }

    fn instance() -> impl Strategy<Value = (ProbVector, Vec<f64>)> {
        (2usize..10).prop_flat_map(|k| {
            (
                prop::collection::vec(0.05f64..1.0, k).prop_map(|w| ProbVector::from_unnormalized(w).unwrap()),
                prop::collection::vec(-5.0f64..5.0, k),
            )
        })
    }

    proptest! {
        #[test]
        fn ftrl_satisfies_kkt((base, c) in instance(), kind in kinds(), eta in 0.05f64..5.0) {
            let spec = DivergenceSpec::new(kind, base).unwrap();
            let c = CostVector::new(c).unwrap();
            let p = ftrl_solve(&spec, eta, &c).unwrap();
            prop_assert!((numeric::sum(p.weights().iter().copied()) - 1.0).abs() <= 1e-10);
            if kind != DivergenceKind::Kl {
                let r = kkt_residual(&spec, eta, &c, &p).unwrap();
                prop_assert!(r <= 1e-9 * (1.0 + 1.0 / eta), "residual {r}");
            }
        }

        #[test]
        fn ftrl_is_shift_invariant((base, c) in instance(), kind in kinds(), eta in 0.05f64..5.0, kappa in -10.0f64..10.0) {
            let spec = DivergenceSpec::new(kind, base).unwrap();
            let k = c.len();
            let c = CostVector::new(c).unwrap();
            let p = ftrl_solve(&spec, eta, &c).unwrap();
            let q = ftrl_solve(&spec, eta, &c.add(&CostVector::constant(k, kappa)).unwrap()).unwrap();
            prop_assert!(p.l1_distance(&q).unwrap() <= 1e-9);
        }
    }
}

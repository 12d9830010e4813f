//! Probability vectors over a finite hypothesis set and the divergence toolbox.
//!
//! | quantity                  | definition                                        |
//! |---------------------------|---------------------------------------------------|
//! | [`kl`]                    | `Σ P_i log(P_i/Q_i)`, `+inf` off-support          |
//! | [`chi2`]                  | `Σ Q_i (P_i/Q_i − 1)²`                            |
//! | [`pnorm_distance`]        | `(Σ b_i |P_i/b_i − P′_i/b_i|^p)^{1/p}`            |
//! | [`dual_q_norm`]           | `(Σ b_i |f_i|^q)^{1/q}`, sup norm at `q = inf`    |
//! | [`bregman`]               | `h(P) − h(P′) − ⟨∇h(P′), P − P′⟩`                 |
//! | [`log_partition`]         | `(1/η) log Σ P1_i exp(−η c_i)`                    |
//!
//! The regularizer `h` of a [`DivergenceSpec`] is `KL(·‖b)`, `χ²(·‖b)`, the
//! squared weighted p-norm distance to `b` for `p ∈ (1,2]`, or its p-th power
//! for `p > 2`. All sums are compensated.

use crate::error::{check_dim, Error, Result};
use crate::numeric::{self, Sum};
use serde::{Deserialize, Serialize};

/// Tolerance on `|Σ P_i − 1|` accepted by [`ProbVector::new`].
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A probability distribution over `K ≥ 1` hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates nonnegative finite weights summing to one within [`SUM_TOLERANCE`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights)?;
        let s = numeric::sum(weights.iter().copied());
        if (s - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("weights sum to {s}, expected 1")));
        }
        Ok(Self(weights))
    }

    /// Divides nonnegative weights by their (positive) sum.
    pub fn from_unnormalized(mut weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights)?;
        let s = numeric::sum(weights.iter().copied());
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidInput(format!("weights sum to {s}, cannot normalize")));
        }
        for w in &mut weights {
            *w /= s;
        }
        Ok(Self(weights))
    }

    /// Uniform distribution over `k ≥ 1` hypotheses.
    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1, "a distribution needs at least one hypothesis");
        Self(vec![1.0 / k as f64; k])
    }

    /// Point mass on hypothesis `i`.
    pub fn point_mass(k: usize, i: usize) -> Self {
        assert!(i < k, "index {i} out of range for {k} hypotheses");
        let mut w = vec![0.0; k];
        w[i] = 1.0;
        Self(w)
    }

    /// Softmax of log-weights; entries equal to `-inf` get zero mass.
    pub fn from_log_weights(log_w: &[f64]) -> Result<Self> {
        let weights = vec![1.0; log_w.len()];
        validate_weights(&weights)?;
        Self(weights).tilt(log_w).map_err(|e| match e {
            Error::InvalidInput(_) => Error::InvalidInput("all log-weights are -inf".into()),
            other => other,
        })
    }

    /// The distribution `∝ P_i exp(a_i)`, shifted by the largest exponent on
    /// the support so nothing overflows.
    pub fn tilt(&self, exponents: &[f64]) -> Result<Self> {
        check_dim(self.len(), exponents.len())?;
        if let Some(i) = exponents.iter().position(|a| a.is_nan() || *a == f64::INFINITY) {
            return Err(Error::InvalidInput(format!("exponent {i} is {}", exponents[i])));
        }
        let m = self.0.iter().zip(exponents).filter(|(p, _)| **p > 0.0).map(|(_, a)| *a).fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return Err(Error::InvalidInput("tilted measure has no mass".into()));
        }
        let w = self.0.iter().zip(exponents).map(|(p, a)| if *p > 0.0 { p * (a - m).exp() } else { 0.0 }).collect();
        Self::from_unnormalized(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false: a distribution has at least one atom.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn has_full_support(&self) -> bool {
        self.0.iter().all(|p| *p > 0.0)
    }

    /// `Σ |P_i − Q_i|`.
    pub fn l1_distance(&self, other: &ProbVector) -> Result<f64> {
        check_dim(self.len(), other.len())?;
        Ok(numeric::sum(self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs())))
    }

    /// Mixture `Σ_r P_r / R` of equally weighted distributions.
    pub fn average(items: &[ProbVector]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::InvalidInput("no distributions to average".into()))?;
        let k = first.len();
        if items.iter().all(|p| p == first) {
            return Ok(first.clone());
        }
        let mut acc = vec![Sum::new(); k];
        for p in items {
            check_dim(k, p.len())?;
            for (a, w) in acc.iter_mut().zip(&p.0) {
                a.add(*w);
            }
        }
        Self::from_unnormalized(acc.iter().map(|s| s.value()).collect())
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn validate_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::InvalidInput("a distribution needs at least one hypothesis".into()));
    }
    if let Some(i) = w.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidInput(format!("weight {i} is {}, expected a finite nonnegative value", w[i])));
    }
    Ok(())
}

fn validate_finite(v: &[f64], what: &str) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} entry {i} is {}", v[i])));
    }
    Ok(())
}

/// A finite signed measure over the hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SignedVector(Vec<f64>);

impl SignedVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_finite(&values, "signed measure")?;
        Ok(Self(values))
    }

    /// `P − P′`.
    pub fn difference(p: &ProbVector, q: &ProbVector) -> Result<Self> {
        check_dim(p.len(), q.len())?;
        Ok(Self(p.0.iter().zip(&q.0).map(|(a, b)| a - b).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl From<ProbVector> for SignedVector {
    fn from(p: ProbVector) -> Self {
        Self(p.0)
    }
}

impl TryFrom<Vec<f64>> for SignedVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SignedVector> for Vec<f64> {
    fn from(v: SignedVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for SignedVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A real function on the hypotheses: a cost `c_t`, a hint `g_t` or a
/// cumulative cost `C_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_finite(&values, "cost")?;
        Ok(Self(values))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn constant(k: usize, value: f64) -> Self {
        assert!(value.is_finite());
        Self(vec![value; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn add(&self, other: &CostVector) -> Result<Self> {
        check_dim(self.len(), other.len())?;
        Self::new(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &CostVector) -> Result<Self> {
        check_dim(self.len(), other.len())?;
        Self::new(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|a| a * factor).collect())
    }

    /// `max_i |f_i|`.
    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl TryFrom<Vec<f64>> for CostVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CostVector> for Vec<f64> {
    fn from(v: CostVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for CostVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Divergence families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum DivergenceKind {
    Kl,
    Chi2,
    Pnorm { p: f64 },
    Tv,
}

impl DivergenceKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            DivergenceKind::Pnorm { p } if !(p.is_finite() && *p > 1.0) => {
                Err(Error::InvalidInput(format!("PNORM requires p > 1, got {p}")))
            }
            _ => Ok(()),
        }
    }

    /// Strong-convexity modulus `α` of the regularizer with respect to its
    /// primal norm (ℓ1 for KL, `‖·‖_{p,b}` otherwise). `None` for the p-th
    /// power regime `p > 2` and for TV.
    pub fn strong_convexity_modulus(&self) -> Option<f64> {
        match self {
            DivergenceKind::Kl => Some(1.0),
            DivergenceKind::Chi2 => Some(2.0),
            DivergenceKind::Pnorm { p } if *p <= 2.0 => Some(2.0 * (p - 1.0)),
            _ => None,
        }
    }

    /// Exponent `q` of the dual norm: `inf` for KL (sup norm), the conjugate
    /// of `p` for the weighted norms.
    pub fn dual_exponent(&self) -> f64 {
        match self {
            DivergenceKind::Kl | DivergenceKind::Tv => f64::INFINITY,
            DivergenceKind::Chi2 => 2.0,
            DivergenceKind::Pnorm { p } => conjugate_exponent(*p),
        }
    }

    pub fn label(&self) -> String {
        match self {
            DivergenceKind::Kl => "KL".into(),
            DivergenceKind::Chi2 => "CHI2".into(),
            DivergenceKind::Pnorm { p } => format!("PNORM(p={p})"),
            DivergenceKind::Tv => "TV".into(),
        }
    }
}

/// `q = p/(p−1)`, with `q = inf` at `p = 1`.
pub fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// A divergence family together with its reference measure `P1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct DivergenceSpec {
    kind: DivergenceKind,
    base: ProbVector,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    divergence: DivergenceKind,
    base: ProbVector,
}

impl TryFrom<RawSpec> for DivergenceSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        Self::new(r.divergence, r.base)
    }
}

impl From<DivergenceSpec> for RawSpec {
    fn from(s: DivergenceSpec) -> Self {
        RawSpec { divergence: s.kind, base: s.base }
    }
}

impl DivergenceSpec {
    pub fn new(kind: DivergenceKind, base: ProbVector) -> Result<Self> {
        kind.validate()?;
        if kind != DivergenceKind::Tv && !base.has_full_support() {
            return Err(Error::InvalidInput(format!("{} requires a full-support base measure", kind.label())));
        }
        Ok(Self { kind, base })
    }

    pub fn kind(&self) -> DivergenceKind {
        self.kind
    }

    pub fn base(&self) -> &ProbVector {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// The regularizer `h(P)`; `h(base) = 0` for every kind.
    pub fn regularizer(&self, p: &ProbVector) -> Result<f64> {
        check_dim(self.len(), p.len())?;
        match self.kind {
            DivergenceKind::Kl => Ok(kl(p, &self.base)),
            DivergenceKind::Chi2 => Ok(chi2(p, &self.base)),
            DivergenceKind::Pnorm { p: e } if e <= 2.0 => {
                let n = pnorm_distance(p, &self.base, &self.base, e)?;
                Ok(n * n)
            }
            DivergenceKind::Pnorm { p: e } => pnorm_power(p, &self.base, &self.base, e),
            DivergenceKind::Tv => Err(Error::Unsupported("TV is not a strongly convex regularizer".into())),
        }
    }

    /// Analytic gradient `∇h(P)` (as a function on the hypotheses).
    pub fn gradient(&self, p: &ProbVector) -> Result<Vec<f64>> {
        check_dim(self.len(), p.len())?;
        let b = self.base.weights();
        let w = p.weights();
        match self.kind {
            DivergenceKind::Kl => {
                if !p.has_full_support() {
                    return Err(Error::Domain("KL gradient diverges on the simplex boundary".into()));
                }
                Ok(w.iter().zip(b).map(|(x, y)| (x.ln() - y.ln()) + 1.0).collect())
            }
            DivergenceKind::Chi2 => Ok(w.iter().zip(b).map(|(x, y)| 2.0 * (x - y) / y).collect()),
            DivergenceKind::Pnorm { p: e } => {
                let x: Vec<f64> = w.iter().zip(b).map(|(x, y)| x / y - 1.0).collect();
                let phi = |v: f64| v.abs().powf(e - 1.0) * v.signum();
                if e > 2.0 {
                    Ok(x.iter().map(|v| e * phi(*v)).collect())
                } else {
                    let n = pnorm_distance(p, &self.base, &self.base, e)?;
                    if n == 0.0 {
                        return Ok(vec![0.0; x.len()]);
                    }
                    let scale = 2.0 * n.powf(2.0 - e);
                    Ok(x.iter().map(|v| scale * phi(*v)).collect())
                }
            }
            DivergenceKind::Tv => Err(Error::Unsupported("TV has no gradient".into())),
        }
    }

    /// Dual norm `‖f‖_*` matching the primal norm of the modulus.
    pub fn dual_norm(&self, f: &CostVector) -> Result<f64> {
        dual_q_norm(f, &self.base, self.kind.dual_exponent())
    }
}

/// `⟨P, f⟩ = Σ P_i f_i` for a distribution or signed measure.
pub fn inner<P: AsRef<[f64]> + ?Sized>(p: &P, f: &CostVector) -> Result<f64> {
    let p = p.as_ref();
    check_dim(p.len(), f.len())?;
    Ok(numeric::dot(p, f.values()))
}

/// Relative entropy `KL(P‖Q)`; `+inf` if `P` charges a zero of `Q`.
pub fn kl(p: &ProbVector, q: &ProbVector) -> f64 {
    if p.len() != q.len() {
        return f64::NAN;
    }
    let mut s = Sum::new();
    for (a, b) in p.0.iter().zip(&q.0) {
        if *a == 0.0 {
            continue;
        }
        if *b == 0.0 {
            return f64::INFINITY;
        }
        s.add(a * (a.ln() - b.ln()));
    }
    s.value().max(0.0)
}

/// Checked variant of [`kl`] that reports a dimension mismatch.
pub fn kl_checked(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    check_dim(p.len(), q.len())?;
    Ok(kl(p, q))
}

/// Pearson divergence `Σ (P_i − Q_i)²/Q_i`; `+inf` if `P` charges a zero of `Q`.
pub fn chi2(p: &ProbVector, q: &ProbVector) -> f64 {
    if p.len() != q.len() {
        return f64::NAN;
    }
    let mut s = Sum::new();
    for (a, b) in p.0.iter().zip(&q.0) {
        if *b == 0.0 {
            if *a > 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        let d = a - b;
        s.add(d * d / b);
    }
    s.value()
}

/// `Σ b_i |P_i/b_i − P′_i/b_i|^p` without the final root.
pub fn pnorm_power<A, B>(p: &A, q: &B, base: &ProbVector, e: f64) -> Result<f64>
where
    A: AsRef<[f64]> + ?Sized,
    B: AsRef<[f64]> + ?Sized,
{
    let (x, y) = (p.as_ref(), q.as_ref());
    check_dim(base.len(), x.len())?;
    check_dim(base.len(), y.len())?;
    if !(e >= 1.0 && e.is_finite()) {
        return Err(Error::InvalidInput(format!("norm exponent must be ≥ 1, got {e}")));
    }
    let mut s = Sum::new();
    for ((a, c), b) in x.iter().zip(y).zip(base.weights()) {
        let d = a - c;
        if *b == 0.0 {
            if d != 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        s.add(b * (d / b).abs().powf(e));
    }
    Ok(s.value())
}

/// Weighted p-norm distance `(Σ b_i |P_i/b_i − P′_i/b_i|^p)^{1/p}` between
/// signed measures, with densities taken relative to `base`.
pub fn pnorm_distance<A, B>(p: &A, q: &B, base: &ProbVector, e: f64) -> Result<f64>
where
    A: AsRef<[f64]> + ?Sized,
    B: AsRef<[f64]> + ?Sized,
{
    let (x, y) = (p.as_ref(), q.as_ref());
    check_dim(base.len(), x.len())?;
    check_dim(base.len(), y.len())?;
    // Scale by the largest density gap before powering so large p stays finite.
    let m = x
        .iter()
        .zip(y)
        .zip(base.weights())
        .map(|((a, c), b)| {
            if *b > 0.0 {
                ((a - c) / b).abs()
            } else if a != c {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    if m == 0.0 || m.is_infinite() {
        return Ok(m);
    }
    let xs: Vec<f64> = x.iter().map(|v| v / m).collect();
    let ys: Vec<f64> = y.iter().map(|v| v / m).collect();
    Ok(m * pnorm_power(&xs, &ys, base, e)?.powf(1.0 / e))
}

/// Dual norm `(Σ b_i |f_i|^q)^{1/q}`; `q = inf` gives `max_i |f_i|`.
pub fn dual_q_norm(f: &CostVector, base: &ProbVector, q: f64) -> Result<f64> {
    check_dim(base.len(), f.len())?;
    if !(q >= 1.0) {
        return Err(Error::InvalidInput(format!("dual exponent must be ≥ 1, got {q}")));
    }
    let m = f.sup_norm();
    if q.is_infinite() || m == 0.0 {
        return Ok(m);
    }
    let s = numeric::sum(f.values().iter().zip(base.weights()).map(|(v, b)| b * (v / m).abs().powf(q)));
    Ok(m * s.powf(1.0 / q))
}

/// `Σ b_i |f_i|^q` (the dual norm raised to `q`).
pub fn dual_q_power(f: &CostVector, base: &ProbVector, q: f64) -> Result<f64> {
    check_dim(base.len(), f.len())?;
    Ok(numeric::sum(f.values().iter().zip(base.weights()).map(|(v, b)| b * v.abs().powf(q))))
}

/// Bregman divergence of the spec's regularizer, `h(P) − h(P′) − ⟨∇h(P′), P − P′⟩`.
///
/// KL and CHI2 use their closed forms (`KL(P‖P′)` and `Σ(P−P′)²/b`); PNORM
/// uses the analytic gradient. Tiny negative rounding residue is clamped to 0.
pub fn bregman(spec: &DivergenceSpec, p: &ProbVector, p_ref: &ProbVector) -> Result<f64> {
    check_dim(spec.len(), p.len())?;
    check_dim(spec.len(), p_ref.len())?;
    match spec.kind {
        DivergenceKind::Kl => {
            if !p_ref.has_full_support() {
                return Err(Error::Domain("KL Bregman divergence needs P′ in the interior".into()));
            }
            Ok(kl(p, p_ref))
        }
        DivergenceKind::Chi2 => {
            Ok(numeric::sum(p.0.iter().zip(&p_ref.0).zip(spec.base.weights()).map(|((a, c), b)| (a - c) * (a - c) / b)))
        }
        DivergenceKind::Pnorm { .. } => {
            let g = spec.gradient(p_ref)?;
            let mut s = Sum::new();
            s.add(spec.regularizer(p)?);
            s.add(-spec.regularizer(p_ref)?);
            for ((a, c), gi) in p.0.iter().zip(&p_ref.0).zip(&g) {
                s.add(-gi * (a - c));
            }
            Ok(s.value().max(0.0))
        }
        DivergenceKind::Tv => Err(Error::Unsupported("TV has no Bregman divergence".into())),
    }
}

fn check_rate(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("learning rate must be positive and finite, got {eta}")))
    }
}

/// Log-partition potential `Φ(c) = (1/η) log Σ P1_i exp(−η c_i)`.
///
/// Note the sign: `Φ(κ·1) = −κ`.
pub fn log_partition(p1: &ProbVector, c: &CostVector, eta: f64) -> Result<f64> {
    check_dim(p1.len(), c.len())?;
    check_rate(eta)?;
    let m = p1.0.iter().zip(c.values()).filter(|(p, _)| **p > 0.0).map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    let s = numeric::sum(p1.0.iter().zip(c.values()).filter(|(p, _)| **p > 0.0).map(|(p, v)| p * (-eta * (v - m)).exp()));
    Ok(-m + s.ln() / eta)
}

/// Gibbs distribution `∝ P1_i exp(−η c_i)`, the gradient of `−Φ` in `c`.
pub fn gibbs(p1: &ProbVector, c: &CostVector, eta: f64) -> Result<ProbVector> {
    check_dim(p1.len(), c.len())?;
    check_rate(eta)?;
    let a: Vec<f64> = c.values().iter().map(|v| -eta * v).collect();
    p1.tilt(&a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(w: &[f64]) -> ProbVector {
        ProbVector::new(w.to_vec()).unwrap()
    }
    fn cv(w: &[f64]) -> CostVector {
        CostVector::new(w.to_vec()).unwrap()
    }

    #[test]
    fn inner_examples() {
        assert_eq!(inner(&ProbVector::uniform(2), &cv(&[0.0, 1.0])).unwrap(), 0.5);
        assert_eq!(inner(&ProbVector::point_mass(3, 1), &cv(&[4.0, -2.5, 9.0])).unwrap(), -2.5);
        // high-precision reference: 0.3·2 + 0.7·(−1) = −0.1
        let v = inner(&pv(&[0.3, 0.7]), &cv(&[2.0, -1.0])).unwrap();
        assert!((v + 0.1).abs() < 1e-15);
        assert!(matches!(inner(&ProbVector::uniform(2), &cv(&[1.0])), Err(Error::DimensionMismatch { expected: 2, found: 1 })));
    }

    #[test]
    fn kl_examples() {
        let p = pv(&[0.2, 0.3, 0.5]);
        assert_eq!(kl(&p, &p), 0.0);
        assert!((kl(&ProbVector::point_mass(4, 0), &ProbVector::uniform(4)) - 4f64.ln()).abs() < 1e-15);
        // 40-digit reference value
        let v = kl(&pv(&[0.3, 0.7]), &pv(&[0.5, 0.5]));
        assert!((v - 0.082_282_878_505_051_846).abs() < 1e-15);
        assert_eq!(kl(&ProbVector::uniform(2), &ProbVector::point_mass(2, 0)), f64::INFINITY);
        assert_eq!(kl(&ProbVector::point_mass(2, 0), &pv(&[1.0, 0.0])), 0.0);
    }

    #[test]
    fn chi2_examples() {
        let p = pv(&[0.1, 0.9]);
        assert_eq!(chi2(&p, &p), 0.0);
        assert_eq!(chi2(&ProbVector::point_mass(2, 0), &ProbVector::uniform(2)), 1.0);
        assert_eq!(chi2(&ProbVector::uniform(2), &ProbVector::point_mass(2, 0)), f64::INFINITY);
    }

    #[test]
    fn pnorm_examples() {
        let u = ProbVector::uniform(2);
        let p = pv(&[0.3, 0.7]);
        assert_eq!(pnorm_distance(&p, &p, &u, 3.0).unwrap(), 0.0);
        assert!((pnorm_distance(&pv(&[1.0, 0.0]), &u, &u, 2.0).unwrap() - 1.0).abs() < 1e-15);
        let d = pnorm_distance(&p, &u, &u, 1.0).unwrap();
        assert!((d - 0.4).abs() < 1e-15);
        // signed arguments are accepted
        let q = SignedVector::new(vec![0.5, -0.5]).unwrap();
        let z = SignedVector::new(vec![0.0, 0.0]).unwrap();
        assert!((pnorm_distance(&q, &z, &u, 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dual_norm_examples() {
        let u = ProbVector::uniform(2);
        assert_eq!(dual_q_norm(&CostVector::zeros(2), &u, 2.0).unwrap(), 0.0);
        for q in [1.0, 1.5, 2.0, 7.0, f64::INFINITY] {
            let b = pv(&[0.1, 0.2, 0.7]);
            assert!((dual_q_norm(&CostVector::constant(3, 1.0), &b, q).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!((dual_q_norm(&cv(&[2.0, 0.0]), &u, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(dual_q_norm(&cv(&[2.0, -3.0]), &u, f64::INFINITY).unwrap(), 3.0);
    }

    #[test]
    fn bregman_examples() {
        let u = ProbVector::uniform(3);
        let p = pv(&[0.2, 0.3, 0.5]);
        let q = pv(&[0.6, 0.3, 0.1]);
        let s_kl = DivergenceSpec::new(DivergenceKind::Kl, u.clone()).unwrap();
        assert_eq!(bregman(&s_kl, &p, &p).unwrap(), 0.0);
        assert!((bregman(&s_kl, &p, &u).unwrap() - kl(&p, &u)).abs() < 1e-15);
        let b = pv(&[0.5, 0.25, 0.25]);
        let s_c = DivergenceSpec::new(DivergenceKind::Chi2, b.clone()).unwrap();
        // quadratic expansion: Σ b (Δ/b)² = ‖P−P′‖²_{2,b}
        let n = pnorm_distance(&p, &q, &b, 2.0).unwrap();
        assert!((bregman(&s_c, &p, &q).unwrap() - n * n).abs() < 1e-14);
        assert!(matches!(bregman(&s_kl, &p, &ProbVector::point_mass(3, 0)), Err(Error::Domain(_))));
        let s_tv = DivergenceSpec::new(DivergenceKind::Tv, u).unwrap();
        assert!(matches!(bregman(&s_tv, &p, &q), Err(Error::Unsupported(_))));
    }

    #[test]
    fn pnorm_bregman_matches_generic_formula_for_chi2() {
        // PNORM(2) is CHI2: both paths must agree.
        let b = pv(&[0.2, 0.3, 0.5]);
        let p = pv(&[0.1, 0.1, 0.8]);
        let q = pv(&[0.3, 0.5, 0.2]);
        let s2 = DivergenceSpec::new(DivergenceKind::Pnorm { p: 2.0 }, b.clone()).unwrap();
        let sc = DivergenceSpec::new(DivergenceKind::Chi2, b).unwrap();
        assert!((bregman(&s2, &p, &q).unwrap() - bregman(&sc, &p, &q).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let b = pv(&[0.2, 0.3, 0.5]);
        let p = pv(&[0.25, 0.35, 0.4]);
        for kind in [DivergenceKind::Kl, DivergenceKind::Chi2, DivergenceKind::Pnorm { p: 1.5 }, DivergenceKind::Pnorm { p: 3.0 }] {
            let spec = DivergenceSpec::new(kind, b.clone()).unwrap();
            let g = spec.gradient(&p).unwrap();
            // directional derivative along a tangent direction of the simplex
            let dir = [1.0, -0.5, -0.5];
            let hstep = 1e-6;
            let shift = |t: f64| ProbVector::new(p.weights().iter().zip(dir).map(|(a, d)| a + t * d).collect()).unwrap();
            let fd = (spec.regularizer(&shift(hstep)).unwrap() - spec.regularizer(&shift(-hstep)).unwrap()) / (2.0 * hstep);
            let an: f64 = g.iter().zip(dir).map(|(a, d)| a * d).sum();
            assert!((fd - an).abs() < 1e-7, "{kind:?}: {fd} vs {an}");
        }
    }

    #[test]
    fn log_partition_examples() {
        let p = pv(&[0.2, 0.8]);
        assert!((log_partition(&p, &CostVector::constant(2, 3.5), 2.0).unwrap() + 3.5).abs() < 1e-15);
        assert_eq!(log_partition(&p, &CostVector::zeros(2), 17.0).unwrap(), 0.0);
        let v = log_partition(&ProbVector::uniform(2), &cv(&[0.0, 2f64.ln()]), 1.0).unwrap();
        assert!((v - 0.75f64.ln()).abs() < 1e-15);
        // no overflow for large η
        let v = log_partition(&p, &cv(&[-5.0, 5.0]), 1e3).unwrap();
        assert!((v - (5.0 + 0.2f64.ln() / 1e3)).abs() < 1e-12);
        assert!(log_partition(&p, &CostVector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn construction_rejects_bad_weights() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        assert!(CostVector::new(vec![f64::NAN]).is_err());
        assert!(DivergenceSpec::new(DivergenceKind::Pnorm { p: 1.0 }, ProbVector::uniform(2)).is_err());
        assert!(DivergenceSpec::new(DivergenceKind::Kl, ProbVector::point_mass(2, 0)).is_err());
        let p: std::result::Result<ProbVector, _> = serde_json::from_str("[0.5, 0.4]");
        assert!(p.is_err());
    }

    #[test]
    fn spec_serde_round_trip() {
        let s = DivergenceSpec::new(DivergenceKind::Pnorm { p: 3.0 }, ProbVector::uniform(2)).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"divergence":{"kind":"PNORM","p":3.0},"base":[0.5,0.5]}"#);
        let back: DivergenceSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn prob(k: usize) -> impl Strategy<Value = ProbVector> {
        prop::collection::vec(0.01f64..1.0, k).prop_map(|w| ProbVector::from_unnormalized(w).unwrap())
    }

    fn pair() -> impl Strategy<Value = (ProbVector, ProbVector, ProbVector)> {
        (2usize..8).prop_flat_map(|k| (prob(k), prob(k), prob(k)))
    }

    proptest! {
        #[test]
        fn divergences_are_nonnegative_and_vanish_on_the_diagonal((p, q, b) in pair()) {
            prop_assert!(kl(&p, &q) >= 0.0);
            prop_assert!(chi2(&p, &q) >= 0.0);
            prop_assert!(kl(&p, &p).abs() <= 1e-12);
            prop_assert!(chi2(&p, &p).abs() <= 1e-12);
            for kind in [DivergenceKind::Kl, DivergenceKind::Chi2, DivergenceKind::Pnorm { p: 1.5 }, DivergenceKind::Pnorm { p: 3.0 }] {
                let spec = DivergenceSpec::new(kind, b.clone()).unwrap();
                prop_assert!(bregman(&spec, &p, &q).unwrap() >= 0.0);
                prop_assert!(bregman(&spec, &p, &p).unwrap() <= 1e-12);
            }
        }

        #[test]
        fn pinsker((p, q, _b) in pair()) {
            let l1 = p.l1_distance(&q).unwrap();
            prop_assert!(kl(&p, &q) + 1e-12 >= 0.5 * l1 * l1);
        }

        #[test]
        fn chi2_is_squared_two_norm((p, q, _b) in pair()) {
            let n = pnorm_distance(&p, &q, &q, 2.0).unwrap();
            prop_assert!((chi2(&p, &q) - n * n).abs() <= 1e-12 * (1.0 + chi2(&p, &q)));
        }

        #[test]
        fn holder((p, q, b) in pair(), e in 1.0f64..4.0, f in prop::collection::vec(-3.0f64..3.0, 8)) {
            let k = p.len();
            let f = CostVector::new(f[..k].to_vec()).unwrap();
            let sv = SignedVector::difference(&p, &q).unwrap();
            let zero = SignedVector::new(vec![0.0; k]).unwrap();
            let lhs = inner(&sv, &f).unwrap().abs();
            let rhs = pnorm_distance(&sv, &zero, &b, e).unwrap() * dual_q_norm(&f, &b, conjugate_exponent(e)).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn gibbs_normalizes_exactly((p, _q, _b) in pair(), c in prop::collection::vec(-50.0f64..50.0, 8), eta in 0.01f64..100.0) {
            let c = CostVector::new(c[..p.len()].to_vec()).unwrap();
            let g = gibbs(&p, &c, eta).unwrap();
            prop_assert!((numeric::sum(g.weights().iter().copied()) - 1.0).abs() <= 1e-12);
        }
    }
}

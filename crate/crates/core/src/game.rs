//! The generalization game and its conditional variant.
//!
//! In round `t` the online learner commits to `P_t`, then the environment
//! reveals `Z_t` and the learner pays `⟨P_t, c_t⟩` with the centered cost
//! `c_t(w) = ℓ(w,Z_t) − risk(w)`. For any statistical learner with posterior
//! `P`, the generalization error satisfies exactly
//!
//! ```text
//! gen = regret(P)/n − M,    M = (1/n) Σ_t ⟨P_t, c_t⟩.
//! ```
//!
//! The conditional game draws a supersample of `n` pairs `(Z_t^{+1}, Z_t^{−1})`
//! and hidden signs `I_t`. The train point of pair `t` is `Z_t^{I_t}` and the
//! other one is a ghost test point. With `c_t = ℓ(·,Z_t^{I_t}) − ℓ(·,Z_t^{−I_t})`,
//!
//! ```text
//! gen = regret(P)/n − M + Δ,    Δ = ⟨P, risk⟩ − ⟨P, ghost loss⟩.
//! ```
//!
//! Environments have finite support, so risks, costs, posteriors and `gen`
//! are exact finite sums. Data reaches the online learner only through a
//! [`DataTape`], which logs every read and flags reads of values that have
//! not been revealed yet.

use crate::error::{check_dim, Error, Result};
use crate::learners::{regret, LearnerKind, OnlineLearnerState};
use crate::measures::{inner, CostVector, ProbVector};
use crate::numeric::{self, Sum};
use crate::rng::{self, StreamRng};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::cell::{Cell, RefCell};

/// Schema tag written into transcript documents.
pub const TRANSCRIPT_SCHEMA: &str = "o2pac.transcript";
/// Version of the transcript document layout.
pub const TRANSCRIPT_VERSION: u32 = 1;

/// A finite data distribution with a loss table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnvironment", into = "RawEnvironment")]
pub struct Environment {
    z_support: Vec<String>,
    z_probs: Vec<f64>,
    loss_table: Vec<Vec<f64>>,
    loss_range: [f64; 2],
    risk: Vec<f64>,
    cdf: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    z_support: Vec<String>,
    z_probs: Vec<f64>,
    /// One row per instance, one column per hypothesis.
    loss_table: Vec<Vec<f64>>,
    loss_range: [f64; 2],
}

impl TryFrom<RawEnvironment> for Environment {
    type Error = Error;
    fn try_from(r: RawEnvironment) -> Result<Self> {
        Self::new(r.z_support, r.z_probs, r.loss_table, r.loss_range)
    }
}

impl From<Environment> for RawEnvironment {
    fn from(e: Environment) -> Self {
        RawEnvironment { z_support: e.z_support, z_probs: e.z_probs, loss_table: e.loss_table, loss_range: e.loss_range }
    }
}

impl Environment {
    /// `loss_table[z][w]` is `ℓ(w, z)`.
    pub fn new(z_support: Vec<String>, z_probs: Vec<f64>, loss_table: Vec<Vec<f64>>, loss_range: [f64; 2]) -> Result<Self> {
        let m = z_probs.len();
        if m == 0 {
            return Err(Error::InvalidInput("environment needs at least one instance".into()));
        }
        check_dim(m, z_support.len())?;
        check_dim(m, loss_table.len())?;
        let k = loss_table[0].len();
        if k == 0 {
            return Err(Error::InvalidInput("environment needs at least one hypothesis".into()));
        }
        let [lo, hi] = loss_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::InvalidInput(format!("loss_range [{lo}, {hi}] must satisfy 0 ≤ lo ≤ hi")));
        }
        for (z, row) in loss_table.iter().enumerate() {
            check_dim(k, row.len())?;
            if let Some(w) = row.iter().position(|l| !(l.is_finite() && *l >= lo && *l <= hi)) {
                return Err(Error::InvalidInput(format!("loss_table[{z}][{w}] = {} lies outside the declared range [{lo}, {hi}]", row[w])));
            }
        }
        // validates nonnegativity and normalization
        let probs = ProbVector::new(z_probs.clone())?;
        let risk = (0..k).map(|w| numeric::dot(probs.weights(), &loss_table.iter().map(|r| r[w]).collect::<Vec<_>>())).collect();
        let mut s = Sum::new();
        let cdf = z_probs
            .iter()
            .map(|p| {
                s.add(*p);
                s.value()
            })
            .collect();
        Ok(Self { z_support, z_probs, loss_table, loss_range, risk, cdf })
    }

    fn labels(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("z{i}")).collect()
    }

    /// Uniform-random losses in `[0,1]` and random instance probabilities.
    pub fn random(k: usize, m: usize, rng: &mut StreamRng) -> Result<Self> {
        let probs: Vec<f64> = (0..m).map(|_| 0.1 + rng.random::<f64>()).collect();
        let s = numeric::sum(probs.iter().copied());
        let probs = probs.iter().map(|p| p / s).collect();
        let table = (0..m).map(|_| (0..k).map(|_| rng.random::<f64>()).collect()).collect();
        Self::new(Self::labels(m), probs, table, [0.0, 1.0])
    }

    /// Like [`Environment::random`] but hypothesis 0 has zero loss everywhere
    /// and the others are zero with probability 1/2 per instance.
    pub fn realizable(k: usize, m: usize, rng: &mut StreamRng) -> Result<Self> {
        let probs: Vec<f64> = (0..m).map(|_| 0.1 + rng.random::<f64>()).collect();
        let s = numeric::sum(probs.iter().copied());
        let probs = probs.iter().map(|p| p / s).collect();
        let table = (0..m)
            .map(|_| (0..k).map(|w| if w == 0 || rng.random::<bool>() { 0.0 } else { 0.2 + 0.8 * rng.random::<f64>() }).collect())
            .collect();
        Self::new(Self::labels(m), probs, table, [0.0, 1.0])
    }

    /// Every loss equals `kappa`.
    pub fn constant(k: usize, m: usize, kappa: f64) -> Result<Self> {
        let hi = kappa.max(1.0);
        Self::new(Self::labels(m), vec![1.0 / m as f64; m], vec![vec![kappa; k]; m], [0.0, hi])
    }

    /// A single instance with the given losses.
    pub fn deterministic(losses: Vec<f64>) -> Result<Self> {
        let hi = losses.iter().copied().fold(1.0, f64::max);
        Self::new(Self::labels(1), vec![1.0], vec![losses], [0.0, hi])
    }

    /// The default environment battery: random tables of several shapes and a
    /// realizable table.
    pub fn battery(seed: u64) -> Result<Vec<(String, Environment)>> {
        let mut rng = rng::stream(seed, "game.battery", 0);
        Ok(vec![
            ("random-k4-m6".into(), Self::random(4, 6, &mut rng)?),
            ("random-k16-m16".into(), Self::random(16, 16, &mut rng)?),
            ("random-k8-m2".into(), Self::random(8, 2, &mut rng)?),
            ("realizable-k8-m8".into(), Self::realizable(8, 8, &mut rng)?),
        ])
    }

    /// Number of hypotheses `K`.
    pub fn k(&self) -> usize {
        self.loss_table[0].len()
    }

    /// Number of instances `m`.
    pub fn m(&self) -> usize {
        self.z_probs.len()
    }

    pub fn z_support(&self) -> &[String] {
        &self.z_support
    }

    pub fn z_probs(&self) -> &[f64] {
        &self.z_probs
    }

    pub fn loss_range(&self) -> [f64; 2] {
        self.loss_range
    }

    /// Whether the declared range lies in `[0, 1]`.
    pub fn losses_in_unit_interval(&self) -> bool {
        self.loss_range[0] >= 0.0 && self.loss_range[1] <= 1.0
    }

    /// `ℓ(w, z)`.
    pub fn loss(&self, w: usize, z: usize) -> f64 {
        self.loss_table[z][w]
    }

    /// `ℓ(·, z)` as a vector over hypotheses.
    pub fn losses_at(&self, z: usize) -> CostVector {
        CostVector::new(self.loss_table[z].clone()).expect("losses are finite")
    }

    /// `risk(w) = Σ_z μ(z) ℓ(w, z)`.
    pub fn risk(&self, w: usize) -> f64 {
        self.risk[w]
    }

    pub fn risk_vector(&self) -> CostVector {
        CostVector::new(self.risk.clone()).expect("risks are finite")
    }

    /// `E[ℓ(w, Z)^r]` for every hypothesis.
    pub fn loss_moments(&self, r: f64) -> Vec<f64> {
        (0..self.k()).map(|w| numeric::sum(self.z_probs.iter().zip(&self.loss_table).map(|(p, row)| p * row[w].powf(r)))).collect()
    }

    /// `max_w E[ℓ(w, Z)²]`, the smallest admissible `σ²`.
    pub fn max_second_moment(&self) -> f64 {
        self.loss_moments(2.0).into_iter().fold(0.0, f64::max)
    }

    /// Centered cost `c(w) = ℓ(w, z) − risk(w)`.
    pub fn cost_vector(&self, z: usize) -> CostVector {
        CostVector::new(self.loss_table[z].iter().zip(&self.risk).map(|(l, r)| l - r).collect()).expect("finite")
    }

    /// Average loss `L(w, S)` of every hypothesis on a sample.
    pub fn empirical_risk(&self, sample: &[usize]) -> CostVector {
        let k = self.k();
        let mut acc = vec![Sum::new(); k];
        for &z in sample {
            for (a, l) in acc.iter_mut().zip(&self.loss_table[z]) {
                a.add(*l);
            }
        }
        let n = sample.len().max(1) as f64;
        CostVector::new(acc.iter().map(|s| s.value() / n).collect()).expect("finite")
    }

    /// `n` i.i.d. instance indices drawn from `μ`.
    pub fn sample(&self, n: usize, rng: &mut StreamRng) -> Vec<usize> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    fn draw(&self, rng: &mut StreamRng) -> usize {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        self.cdf.partition_point(|c| *c <= u).min(self.m() - 1)
    }
}

/// Statistical learners with exactly computable posteriors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum StatLearnerSpec {
    /// `∝ prior(w) exp(−β n L(w, S))`.
    Gibbs { beta: f64, prior: ProbVector },
    /// Point mass on the empirical risk minimizer, lowest index on ties.
    Erm,
    /// A data-independent posterior.
    Fixed { posterior: ProbVector },
}

impl StatLearnerSpec {
    pub fn label(&self) -> &'static str {
        match self {
            StatLearnerSpec::Gibbs { .. } => "GIBBS",
            StatLearnerSpec::Erm => "ERM",
            StatLearnerSpec::Fixed { .. } => "FIXED",
        }
    }
}

/// Posterior of a statistical learner on a sample.
pub fn posterior(spec: &StatLearnerSpec, env: &Environment, sample: &[usize]) -> Result<ProbVector> {
    let k = env.k();
    match spec {
        StatLearnerSpec::Gibbs { beta, prior } => {
            check_dim(k, prior.len())?;
            if !(beta.is_finite() && *beta >= 0.0) {
                return Err(Error::InvalidInput(format!("GIBBS β must be a nonnegative real, got {beta}")));
            }
            if !prior.has_full_support() {
                return Err(Error::InvalidInput("GIBBS prior must have full support".into()));
            }
            if *beta == 0.0 {
                return Ok(prior.clone());
            }
            let totals = total_losses(env, sample);
            prior.tilt(&totals.iter().map(|s| -beta * s).collect::<Vec<_>>())
        }
        StatLearnerSpec::Erm => {
            let l = env.empirical_risk(sample);
            let mut best = 0;
            for (w, v) in l.values().iter().enumerate() {
                if *v < l.values()[best] {
                    best = w;
                }
            }
            Ok(ProbVector::point_mass(k, best))
        }
        StatLearnerSpec::Fixed { posterior } => {
            check_dim(k, posterior.len())?;
            Ok(posterior.clone())
        }
    }
}

/// `Σ_{z ∈ S} ℓ(w, z)` per hypothesis.
fn total_losses(env: &Environment, sample: &[usize]) -> Vec<f64> {
    let mut acc = vec![Sum::new(); env.k()];
    for &z in sample {
        for (a, l) in acc.iter_mut().zip(&env.loss_table[z]) {
            a.add(*l);
        }
    }
    acc.iter().map(|s| s.value()).collect()
}

/// `E[gen | S] = ⟨P, risk⟩ − ⟨P, L(·, S)⟩`.
pub fn generalization_error(env: &Environment, posterior: &ProbVector, sample: &[usize]) -> Result<f64> {
    Ok(inner(posterior, &env.risk_vector())? - inner(posterior, &env.empirical_risk(sample))?)
}

/// Source of the hints `g_t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HintMode {
    #[default]
    Zero,
    /// `g_t = −risk` in the standard game and `−(ℓ(Z_t^{+1}) + ℓ(Z_t^{−1}))`
    /// in the conditional game: the part of `c_t` known before `Z_t`.
    NegTestLoss,
}

/// Hints computed from the environment, never from unrevealed data.
#[derive(Debug, Clone, Copy)]
pub struct HintProvider<'a> {
    pub mode: HintMode,
    pub env: &'a Environment,
}

impl HintProvider<'_> {
    pub fn standard(&self) -> CostVector {
        match self.mode {
            HintMode::Zero => CostVector::zeros(self.env.k()),
            HintMode::NegTestLoss => self.env.risk_vector().scale(-1.0).expect("finite"),
        }
    }

    pub fn conditional(&self, pair: (usize, usize)) -> CostVector {
        match self.mode {
            HintMode::Zero => CostVector::zeros(self.env.k()),
            HintMode::NegTestLoss => {
                let (a, b) = (&self.env.loss_table[pair.0], &self.env.loss_table[pair.1]);
                CostVector::new(a.iter().zip(b).map(|(x, y)| -(x + y)).collect()).expect("finite")
            }
        }
    }
}

/// Initial distribution of the online learner.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum PriorSpec {
    #[default]
    Uniform,
    Given {
        weights: ProbVector,
    },
    /// Conditional game only: `∝ base(w) exp(−(β/2) Σ_{all 2n points} ℓ(w, z))`,
    /// a function of the supersample that ignores the signs.
    SupersampleGibbs {
        beta: f64,
        base: Option<ProbVector>,
    },
}

impl PriorSpec {
    fn resolve(&self, env: &Environment, supersample: Option<&[usize]>) -> Result<ProbVector> {
        let k = env.k();
        match self {
            PriorSpec::Uniform => Ok(ProbVector::uniform(k)),
            PriorSpec::Given { weights } => {
                check_dim(k, weights.len())?;
                Ok(weights.clone())
            }
            PriorSpec::SupersampleGibbs { beta, base } => {
                let ss =
                    supersample.ok_or_else(|| Error::InvalidInput("SUPERSAMPLE_GIBBS priors exist only in the conditional game".into()))?;
                supersample_gibbs_prior(env, ss, *beta, base.as_ref())
            }
        }
    }
}

/// Gibbs distribution over the full supersample at half temperature.
pub fn supersample_gibbs_prior(env: &Environment, supersample: &[usize], beta: f64, base: Option<&ProbVector>) -> Result<ProbVector> {
    let base = base.cloned().unwrap_or_else(|| ProbVector::uniform(env.k()));
    check_dim(env.k(), base.len())?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidInput(format!("supersample prior β must be nonnegative, got {beta}")));
    }
    let totals = total_losses(env, supersample);
    base.tilt(&totals.iter().map(|s| -0.5 * beta * s).collect::<Vec<_>>())
}

/// Online learner configuration for a game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub hints: HintMode,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        Self { kind, prior: PriorSpec::Uniform, hints: HintMode::Zero }
    }
}

/// One logged read of a data tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    /// Number of predictions committed when the read happened.
    pub committed: usize,
    pub index: usize,
    /// False if the value had not been revealed yet.
    pub allowed: bool,
}

/// Audited access to the per-round data (`Z_t` or the signs `I_t`).
#[derive(Debug)]
pub struct DataTape {
    values: Vec<usize>,
    committed: Cell<usize>,
    log: RefCell<Vec<AccessRecord>>,
}

impl DataTape {
    pub fn new(values: Vec<usize>) -> Self {
        Self { values, committed: Cell::new(0), log: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of revealed entries, which equals the number of committed predictions.
    pub fn revealed(&self) -> usize {
        self.committed.get()
    }

    /// Reads entry `index`; logged, and flagged if not yet revealed.
    pub fn read(&self, index: usize) -> usize {
        let committed = self.committed.get();
        self.log.borrow_mut().push(AccessRecord { committed, index, allowed: index < committed });
        self.values[index]
    }

    fn commit(&self) {
        self.committed.set(self.committed.get() + 1);
    }

    pub fn violations(&self) -> usize {
        self.log.borrow().iter().filter(|r| !r.allowed).count()
    }

    pub fn log(&self) -> Vec<AccessRecord> {
        self.log.borrow().clone()
    }
}

/// The online side of the game.
pub trait OnlinePolicy {
    fn label(&self) -> String;
    /// Commits `P_t` for the next round. Data is only reachable through `tape`.
    fn predict(&mut self, tape: &DataTape) -> Result<ProbVector>;
    /// Receives `c_t` and the next hint `g_{t+1}`.
    fn update(&mut self, cost: &CostVector, next_hint: &CostVector) -> Result<()>;
}

/// Adapter running an [`OnlineLearnerState`].
pub struct LearnerPolicy {
    state: OnlineLearnerState,
}

impl LearnerPolicy {
    pub fn new(kind: LearnerKind, prior: ProbVector, first_hint: CostVector) -> Result<Self> {
        Ok(Self { state: OnlineLearnerState::new(kind, prior, first_hint)? })
    }
}

impl OnlinePolicy for LearnerPolicy {
    fn label(&self) -> String {
        self.state.kind().label()
    }
    fn predict(&mut self, _tape: &DataTape) -> Result<ProbVector> {
        Ok(self.state.prediction().clone())
    }
    fn update(&mut self, cost: &CostVector, next_hint: &CostVector) -> Result<()> {
        self.state = self.state.observe(cost, next_hint)?;
        Ok(())
    }
}

/// Negative-control fixture: reads the unrevealed `Z_t` and bets everything
/// on the hypothesis with the smallest loss on it. Breaks the information
/// contract and typically the regret bounds.
pub struct PeekingPolicy {
    env: Environment,
}

impl PeekingPolicy {
    pub fn new(env: Environment) -> Self {
        Self { env }
    }
}

impl OnlinePolicy for PeekingPolicy {
    fn label(&self) -> String {
        "PEEKING_FIXTURE".into()
    }
    fn predict(&mut self, tape: &DataTape) -> Result<ProbVector> {
        let z = tape.read(tape.revealed());
        let row = &self.env.loss_table[z];
        let best = (0..row.len()).fold(0, |b, w| if row[w] < row[b] { w } else { b });
        Ok(ProbVector::point_mass(self.env.k(), best))
    }
    fn update(&mut self, _cost: &CostVector, _next_hint: &CostVector) -> Result<()> {
        Ok(())
    }
}

/// Record of one generalization game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTranscript {
    pub n: usize,
    pub learner: String,
    pub stat_learner: String,
    pub predictions: Vec<ProbVector>,
    pub costs: Vec<CostVector>,
    pub hints: Vec<CostVector>,
    pub sample: Vec<usize>,
    pub posterior: ProbVector,
    pub gen: f64,
    /// Total regret `Σ_t ⟨P_t − P_n, c_t⟩` against the posterior.
    pub regret_vs_posterior: f64,
    pub martingale_avg: f64,
    pub identity_residual: f64,
    pub contract_violations: usize,
    pub seed: u64,
}

/// Record of one conditional game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTranscript {
    #[serde(flatten)]
    pub game: GameTranscript,
    /// `2n` indices: pair `t` is `(supersample[2t], supersample[2t+1])`
    /// for signs `+1` and `−1`.
    pub supersample: Vec<usize>,
    pub flips: Vec<i8>,
    pub prior: ProbVector,
    pub emp_gen: f64,
    pub delta: f64,
}

#[derive(Serialize)]
struct Document<'a, T> {
    schema: &'a str,
    version: u32,
    kind: &'a str,
    transcript: &'a T,
}

impl GameTranscript {
    /// Versioned JSON document with 17-significant-digit floats.
    pub fn to_json(&self) -> String {
        crate::json::to_string(&Document { schema: TRANSCRIPT_SCHEMA, version: TRANSCRIPT_VERSION, kind: "game", transcript: self })
            .expect("transcripts serialize")
    }
}

impl ConditionalTranscript {
    pub fn to_json(&self) -> String {
        crate::json::to_string(&Document { schema: TRANSCRIPT_SCHEMA, version: TRANSCRIPT_VERSION, kind: "conditional", transcript: self })
            .expect("transcripts serialize")
    }
}

fn check_rounds(n: usize) -> Result<()> {
    if n >= 1 {
        Ok(())
    } else {
        Err(Error::InvalidInput("a game needs n ≥ 1 rounds".into()))
    }
}

/// Draws the sample the game with this seed uses.
pub fn game_sample(env: &Environment, n: usize, seed: u64) -> Vec<usize> {
    env.sample(n, &mut rng::stream(seed, "game.sample", 0))
}

/// Builds the standard policy for a learner spec in the standard game.
pub fn learner_policy(env: &Environment, learner: &LearnerSpec) -> Result<LearnerPolicy> {
    let prior = learner.prior.resolve(env, None)?;
    let hints = HintProvider { mode: learner.hints, env };
    LearnerPolicy::new(learner.kind, prior, hints.standard())
}

/// Plays the generalization game with a learner spec.
pub fn run_game(env: &Environment, learner: &LearnerSpec, stat: &StatLearnerSpec, n: usize, seed: u64) -> Result<GameTranscript> {
    let mut policy = learner_policy(env, learner)?;
    run_game_with_policy(env, &mut policy, learner.hints, stat, n, seed)
}

/// Plays the generalization game with an arbitrary policy; also returns the tape log.
pub fn run_game_with_policy(
    env: &Environment,
    policy: &mut dyn OnlinePolicy,
    hint_mode: HintMode,
    stat: &StatLearnerSpec,
    n: usize,
    seed: u64,
) -> Result<GameTranscript> {
    Ok(run_game_logged(env, policy, hint_mode, stat, n, seed)?.0)
}

/// Like [`run_game_with_policy`], also returning the data-tape access log.
pub fn run_game_logged(
    env: &Environment,
    policy: &mut dyn OnlinePolicy,
    hint_mode: HintMode,
    stat: &StatLearnerSpec,
    n: usize,
    seed: u64,
) -> Result<(GameTranscript, Vec<AccessRecord>)> {
    check_rounds(n)?;
    let tape = DataTape::new(game_sample(env, n, seed));
    let hints = HintProvider { mode: hint_mode, env };
    let g = hints.standard();
    let mut predictions = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    let mut played_hints = Vec::with_capacity(n);
    for _ in 0..n {
        let p = policy.predict(&tape)?;
        check_dim(env.k(), p.len())?;
        tape.commit();
        let z = tape.read(tape.revealed() - 1);
        let c = env.cost_vector(z);
        policy.update(&c, &g)?;
        predictions.push(p);
        costs.push(c);
        played_hints.push(g.clone());
    }
    let sample = tape.values.clone();
    let post = posterior(stat, env, &sample)?;
    let gen = generalization_error(env, &post, &sample)?;
    let regret_vs_posterior = regret(&predictions, &costs, &post)?;
    let martingale_avg = martingale_average(&predictions, &costs)?;
    let identity_residual = (gen - (regret_vs_posterior / n as f64 - martingale_avg)).abs();
    let transcript = GameTranscript {
        n,
        learner: policy.label(),
        stat_learner: stat.label().into(),
        predictions,
        costs,
        hints: played_hints,
        sample,
        posterior: post,
        gen,
        regret_vs_posterior,
        martingale_avg,
        identity_residual,
        contract_violations: tape.violations(),
        seed,
    };
    Ok((transcript, tape.log()))
}

fn martingale_average(predictions: &[ProbVector], costs: &[CostVector]) -> Result<f64> {
    let mut s = Sum::new();
    for (p, c) in predictions.iter().zip(costs) {
        s.add(inner(p, c)?);
    }
    Ok(s.value() / predictions.len() as f64)
}

/// Plays the conditional generalization game.
pub fn run_conditional_game(
    env: &Environment,
    learner: &LearnerSpec,
    stat: &StatLearnerSpec,
    n: usize,
    seed: u64,
) -> Result<ConditionalTranscript> {
    check_rounds(n)?;
    let supersample = env.sample(2 * n, &mut rng::stream(seed, "conditional.supersample", 0));
    let mut frng = rng::stream(seed, "conditional.flips", 0);
    let signs: Vec<usize> = (0..n).map(|_| frng.random::<bool>() as usize).collect();
    // The learner sees the whole supersample up front; signs only through the tape.
    let prior = learner.prior.resolve(env, Some(&supersample))?;
    let hints = HintProvider { mode: learner.hints, env };
    let pair = |t: usize| (supersample[2 * t], supersample[2 * t + 1]);
    let mut policy = LearnerPolicy::new(learner.kind, prior.clone(), hints.conditional(pair(0)))?;
    let tape = DataTape::new(signs);
    let mut predictions = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    let mut played_hints = Vec::with_capacity(n);
    let mut train = Vec::with_capacity(n);
    let mut ghost = Vec::with_capacity(n);
    let mut flips = Vec::with_capacity(n);
    for t in 0..n {
        let p = policy.predict(&tape)?;
        tape.commit();
        let plus = tape.read(t) == 1;
        let (zp, zm) = pair(t);
        let (zi, zo) = if plus { (zp, zm) } else { (zm, zp) };
        let c = CostVector::new(env.loss_table[zi].iter().zip(&env.loss_table[zo]).map(|(a, b)| a - b).collect())?;
        let next_hint = if t + 1 < n { hints.conditional(pair(t + 1)) } else { CostVector::zeros(env.k()) };
        played_hints.push(hints.conditional(pair(t)));
        policy.update(&c, &next_hint)?;
        predictions.push(p);
        costs.push(c);
        train.push(zi);
        ghost.push(zo);
        flips.push(if plus { 1 } else { -1 });
    }
    let post = posterior(stat, env, &train)?;
    let gen = generalization_error(env, &post, &train)?;
    let train_loss = inner(&post, &env.empirical_risk(&train))?;
    let ghost_loss = inner(&post, &env.empirical_risk(&ghost))?;
    let emp_gen = ghost_loss - train_loss;
    let delta = inner(&post, &env.risk_vector())? - ghost_loss;
    let regret_vs_posterior = regret(&predictions, &costs, &post)?;
    let martingale_avg = martingale_average(&predictions, &costs)?;
    let identity_residual = (gen - (regret_vs_posterior / n as f64 - martingale_avg + delta)).abs();
    Ok(ConditionalTranscript {
        game: GameTranscript {
            n,
            learner: policy.label(),
            stat_learner: stat.label().into(),
            predictions,
            costs,
            hints: played_hints,
            sample: train,
            posterior: post,
            gen,
            regret_vs_posterior,
            martingale_avg,
            identity_residual,
            contract_violations: tape.violations(),
            seed,
        },
        supersample,
        flips,
        prior,
        emp_gen,
        delta,
    })
}

/// A game configuration for replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub env: Environment,
    pub learner: LearnerSpec,
    pub stat: StatLearnerSpec,
    pub n: usize,
}

/// Seed of replicate `index` under `base_seed`.
pub fn replicate_seed(base_seed: u64, index: usize) -> u64 {
    rng::derive_seed(base_seed, "replicate", index as u64)
}

/// Maps `f` over replicate indices, in parallel when the `parallel` feature
/// is on. Output order is the index order either way.
pub fn map_replicates<T, F>(r: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..r).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..r).map(f).collect()
    }
}

/// `R` independent games with seeds `replicate_seed(base_seed, r)`.
pub fn replicate(spec: &GameSpec, r: usize, base_seed: u64) -> Result<Vec<GameTranscript>> {
    if r == 0 {
        return Err(Error::InvalidInput("replicate needs R ≥ 1".into()));
    }
    map_replicates(r, |i| run_game(&spec.env, &spec.learner, &spec.stat, spec.n, replicate_seed(base_seed, i))).into_iter().collect()
}

/// The statistical part of a game: the sample, the posterior and the exact
/// generalization quantities, without running an online learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub seed: u64,
    pub n: usize,
    pub sample: Vec<usize>,
    pub posterior: ProbVector,
    pub gen: f64,
    pub train_risk: f64,
    pub test_risk: f64,
}

/// Draws the same sample as `run_game(…, seed)` and evaluates the posterior.
pub fn draw_outcome(env: &Environment, stat: &StatLearnerSpec, n: usize, seed: u64) -> Result<ReplicateOutcome> {
    check_rounds(n)?;
    let sample = game_sample(env, n, seed);
    outcome_for_sample(env, stat, sample, seed)
}

fn outcome_for_sample(env: &Environment, stat: &StatLearnerSpec, sample: Vec<usize>, seed: u64) -> Result<ReplicateOutcome> {
    let post = posterior(stat, env, &sample)?;
    let train_risk = inner(&post, &env.empirical_risk(&sample))?;
    let test_risk = inner(&post, &env.risk_vector())?;
    Ok(ReplicateOutcome { seed, n: sample.len(), sample, posterior: post, gen: test_risk - train_risk, train_risk, test_risk })
}

/// `R` outcomes with replicate seeds.
pub fn replicate_outcomes(env: &Environment, stat: &StatLearnerSpec, n: usize, r: usize, base_seed: u64) -> Result<Vec<ReplicateOutcome>> {
    if r == 0 {
        return Err(Error::InvalidInput("replicate needs R ≥ 1".into()));
    }
    map_replicates(r, |i| draw_outcome(env, stat, n, replicate_seed(base_seed, i))).into_iter().collect()
}

/// Statistical part of a conditional game: supersample, signs and the
/// supersample-dependent prior.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalOutcome {
    pub outcome: ReplicateOutcome,
    pub supersample: Vec<usize>,
    pub ghost: Vec<usize>,
    pub prior: ProbVector,
    pub emp_gen: f64,
    pub delta: f64,
}

/// Draws the same supersample and signs as `run_conditional_game(…, seed)`.
pub fn draw_conditional_outcome(
    env: &Environment,
    stat: &StatLearnerSpec,
    prior: &PriorSpec,
    n: usize,
    seed: u64,
) -> Result<ConditionalOutcome> {
    check_rounds(n)?;
    let supersample = env.sample(2 * n, &mut rng::stream(seed, "conditional.supersample", 0));
    let mut frng = rng::stream(seed, "conditional.flips", 0);
    let (mut train, mut ghost) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for t in 0..n {
        let (zp, zm) = (supersample[2 * t], supersample[2 * t + 1]);
        if frng.random::<bool>() {
            train.push(zp);
            ghost.push(zm);
        } else {
            train.push(zm);
            ghost.push(zp);
        }
    }
    let prior = prior.resolve(env, Some(&supersample))?;
    let outcome = outcome_for_sample(env, stat, train, seed)?;
    let ghost_loss = inner(&outcome.posterior, &env.empirical_risk(&ghost))?;
    let emp_gen = ghost_loss - outcome.train_risk;
    let delta = outcome.test_risk - ghost_loss;
    Ok(ConditionalOutcome { outcome, supersample, ghost, prior, emp_gen, delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DivergenceKind;

    fn env2() -> Environment {
        Environment::new(vec!["a".into(), "b".into()], vec![0.5, 0.5], vec![vec![0.0, 0.2], vec![1.0, 0.6]], [0.0, 1.0]).unwrap()
    }

    #[test]
    fn risk_examples() {
        let e = Environment::constant(3, 4, 0.7).unwrap();
        assert!((e.risk(1) - 0.7).abs() < 1e-15);
        let d = Environment::new(vec!["a".into(), "b".into()], vec![1.0, 0.0], vec![vec![0.3, 0.9], vec![0.5, 0.1]], [0.0, 1.0]).unwrap();
        assert_eq!(d.risk(1), 0.9);
        assert_eq!(env2().risk(0), 0.5);
    }

    #[test]
    fn cost_vector_examples() {
        let d = Environment::deterministic(vec![0.3, 0.9]).unwrap();
        assert_eq!(d.cost_vector(0).values(), &[0.0, 0.0]);
        let e = env2();
        assert_eq!(e.cost_vector(1).values()[0], 0.5);
        // zero mean under μ
        let mut rng = rng::stream(1, "t", 0);
        let r = Environment::random(5, 7, &mut rng).unwrap();
        for w in 0..5 {
            let m = numeric::sum((0..7).map(|z| r.z_probs()[z] * r.cost_vector(z).values()[w]));
            assert!(m.abs() < 1e-15);
        }
    }

    #[test]
    fn environment_validation() {
        assert!(Environment::new(vec!["a".into()], vec![1.0], vec![vec![1.5]], [0.0, 1.0]).is_err());
        assert!(Environment::new(vec!["a".into()], vec![0.9], vec![vec![0.5]], [0.0, 1.0]).is_err());
        let j = serde_json::to_string(&env2()).unwrap();
        let back: Environment = serde_json::from_str(&j).unwrap();
        assert_eq!(back, env2());
    }

    #[test]
    fn posterior_examples() {
        let mut rng = rng::stream(3, "t", 0);
        let e = Environment::random(6, 5, &mut rng).unwrap();
        let s = e.sample(20, &mut rng);
        let prior = ProbVector::from_unnormalized(vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]).unwrap();
        let g0 = posterior(&StatLearnerSpec::Gibbs { beta: 0.0, prior: prior.clone() }, &e, &s).unwrap();
        assert_eq!(g0, prior);
        let erm = posterior(&StatLearnerSpec::Erm, &e, &s).unwrap();
        let big = posterior(&StatLearnerSpec::Gibbs { beta: 1e6, prior: prior.clone() }, &e, &s).unwrap();
        assert!(big.l1_distance(&erm).unwrap() <= 1e-6);
        // direct normalized exponential
        let beta = 0.37;
        let g = posterior(&StatLearnerSpec::Gibbs { beta, prior: prior.clone() }, &e, &s).unwrap();
        let raw: Vec<f64> = (0..6).map(|w| prior.weights()[w] * (-beta * s.iter().map(|&z| e.loss(w, z)).sum::<f64>()).exp()).collect();
        let tot: f64 = raw.iter().sum();
        for w in 0..6 {
            assert!((g.weights()[w] - raw[w] / tot).abs() < 1e-14);
        }
    }

    #[test]
    fn erm_breaks_ties_by_lowest_index() {
        let e = Environment::deterministic(vec![0.5, 0.1, 0.1]).unwrap();
        assert_eq!(posterior(&StatLearnerSpec::Erm, &e, &[0, 0]).unwrap(), ProbVector::point_mass(3, 1));
    }

    #[test]
    fn game_identity_and_contract() {
        let mut rng = rng::stream(5, "t", 0);
        let e = Environment::random(5, 4, &mut rng).unwrap();
        for kind in [
            LearnerKind::Ewa { eta: 0.5 },
            LearnerKind::Opt2Ewa { eta: 0.5 },
            LearnerKind::Ftrl { eta: 0.5, divergence: DivergenceKind::Chi2 },
            LearnerKind::OptFtrl { eta: 0.5, divergence: DivergenceKind::Pnorm { p: 3.0 } },
        ] {
            let learner = LearnerSpec { kind, prior: PriorSpec::Uniform, hints: HintMode::NegTestLoss };
            let mut policy = learner_policy(&e, &learner).unwrap();
            let (t, log) = run_game_logged(&e, &mut policy, learner.hints, &StatLearnerSpec::Erm, 50, 9).unwrap();
            assert!(t.identity_residual <= 1e-9);
            assert_eq!(t.contract_violations, 0);
            assert_eq!(log.len(), 50);
            for (i, r) in log.iter().enumerate() {
                assert_eq!(r.index, i);
                assert_eq!(r.committed, i + 1);
            }
        }
    }

    #[test]
    fn peeking_fixture_is_caught() {
        let mut rng = rng::stream(5, "t", 0);
        let e = Environment::random(5, 4, &mut rng).unwrap();
        let mut p = PeekingPolicy::new(e.clone());
        let t = run_game_with_policy(&e, &mut p, HintMode::Zero, &StatLearnerSpec::Erm, 20, 1).unwrap();
        assert_eq!(t.contract_violations, 20);
        // the identity is algebraic and holds even for a cheating learner
        assert!(t.identity_residual <= 1e-9);
    }

    #[test]
    fn constant_table_gives_zero_gen_and_costs() {
        let e = Environment::constant(3, 3, 0.4).unwrap();
        let t = run_game(&e, &LearnerSpec::new(LearnerKind::Ewa { eta: 1.0 }), &StatLearnerSpec::Erm, 10, 2).unwrap();
        assert_eq!(t.gen, 0.0);
        assert!(t.costs.iter().all(|c| c.values().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn fixed_posterior_matching_a_slow_learner_has_tiny_regret() {
        let mut rng = rng::stream(8, "t", 0);
        let e = Environment::random(4, 4, &mut rng).unwrap();
        let u = ProbVector::uniform(4);
        let t = run_game(&e, &LearnerSpec::new(LearnerKind::Ewa { eta: 1e-9 }), &StatLearnerSpec::Fixed { posterior: u }, 100, 3).unwrap();
        assert!(t.regret_vs_posterior.abs() < 1e-6);
    }

    #[test]
    fn conditional_identity() {
        let mut rng = rng::stream(4, "t", 0);
        let e = Environment::random(6, 5, &mut rng).unwrap();
        let learner = LearnerSpec {
            kind: LearnerKind::Ftrl { eta: 0.3, divergence: DivergenceKind::Chi2 },
            prior: PriorSpec::SupersampleGibbs { beta: 2.0, base: None },
            hints: HintMode::NegTestLoss,
        };
        let stat = StatLearnerSpec::Gibbs { beta: 2.0, prior: ProbVector::uniform(6) };
        for seed in 0..20 {
            let t = run_conditional_game(&e, &learner, &stat, 1 + seed as usize * 7, seed).unwrap();
            assert!(t.game.identity_residual <= 1e-9, "{}", t.game.identity_residual);
            assert_eq!(t.game.contract_violations, 0);
            assert!((t.game.gen - (t.emp_gen + t.delta)).abs() < 1e-12);
            let o = draw_conditional_outcome(&e, &stat, &learner.prior, t.game.n, seed).unwrap();
            assert_eq!(o.outcome.sample, t.game.sample);
            assert_eq!(o.prior, t.prior);
        }
    }

    #[test]
    fn conditional_equal_pair_has_zero_cost() {
        let e = Environment::deterministic(vec![0.2, 0.8]).unwrap();
        let t = run_conditional_game(&e, &LearnerSpec::new(LearnerKind::Ewa { eta: 1.0 }), &StatLearnerSpec::Erm, 1, 0).unwrap();
        assert_eq!(t.emp_gen, 0.0);
        assert_eq!(t.game.costs[0].values(), &[0.0, 0.0]);
    }

    #[test]
    fn replicate_is_deterministic() {
        let spec = GameSpec { env: env2(), learner: LearnerSpec::new(LearnerKind::Ewa { eta: 0.5 }), stat: StatLearnerSpec::Erm, n: 5 };
        let a = replicate(&spec, 3, 77).unwrap();
        assert_eq!(a, replicate(&spec, 3, 77).unwrap());
        let one = replicate(&spec, 1, 77).unwrap();
        assert_eq!(one[0], run_game(&spec.env, &spec.learner, &spec.stat, 5, replicate_seed(77, 0)).unwrap());
        let o = draw_outcome(&spec.env, &spec.stat, 5, a[1].seed).unwrap();
        assert_eq!(o.sample, a[1].sample);
        assert_eq!(o.gen, a[1].gen);
    }

    #[test]
    fn transcript_json_is_versioned() {
        let t = run_game(&env2(), &LearnerSpec::new(LearnerKind::Ewa { eta: 0.5 }), &StatLearnerSpec::Erm, 3, 1).unwrap();
        let j = t.to_json();
        let v: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(v["schema"], TRANSCRIPT_SCHEMA);
        assert_eq!(v["version"], 1);
        let back: GameTranscript = serde_json::from_value(v["transcript"].clone()).unwrap();
        assert_eq!(back, t);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn gibbs_posterior_ignores_loss_shifts(seed in any::<u64>(), shift in 0.0f64..5.0, beta in 0.0f64..10.0) {
            let mut rng = rng::stream(seed, "p", 0);
            let e = Environment::random(5, 4, &mut rng).unwrap();
            let s = e.sample(15, &mut rng);
            let shifted = Environment::new(
                e.z_support().to_vec(),
                e.z_probs().to_vec(),
                (0..4).map(|z| (0..5).map(|w| e.loss(w, z) + shift).collect()).collect(),
                [0.0, 1.0 + shift],
            ).unwrap();
            let spec = StatLearnerSpec::Gibbs { beta, prior: ProbVector::uniform(5) };
            let a = posterior(&spec, &e, &s).unwrap();
            let b = posterior(&spec, &shifted, &s).unwrap();
            prop_assert!(a.l1_distance(&b).unwrap() <= 1e-12);
        }

        #[test]
        fn conditional_costs_average_to_zero_over_signs(seed in any::<u64>()) {
            let mut rng = rng::stream(seed, "p", 0);
            let e = Environment::random(4, 6, &mut rng).unwrap();
            let zp = rng.random_range(0..6);
            let zm = rng.random_range(0..6);
            for w in 0..4 {
                let plus = e.loss(w, zp) - e.loss(w, zm);
                let minus = e.loss(w, zm) - e.loss(w, zp);
                prop_assert_eq!(plus + minus, 0.0);
            }
        }
    }
}

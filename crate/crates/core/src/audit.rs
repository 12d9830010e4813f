//! Pathwise regret audits against adaptive adversaries.
//!
//! Each audit run draws a prior, a learning rate and a comparator, plays the
//! learner against an adversary that sees `P_t` before choosing `c_t ∈
//! [−1, 1]^K`, and compares the realized regret with [`regret_bound_rhs`].

use crate::error::{Error, Result};
use crate::learners::{regret, regret_bound_rhs, LearnerKind, OnlineLearnerState, RegretBound};
use crate::measures::{CostVector, DivergenceKind, ProbVector};
use crate::rng::{self, StreamRng};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

/// Slack allowed for accumulated rounding.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

/// Learner families covered by the audits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum AuditFamily {
    Ewa,
    #[serde(rename = "OPT2EWA")]
    Opt2Ewa,
    Ftrl {
        divergence: DivergenceKind,
    },
    #[serde(rename = "OPTFTRL")]
    OptFtrl {
        divergence: DivergenceKind,
    },
}

impl AuditFamily {
    /// The families audited by default, including the p-th power regime.
    pub fn standard() -> Vec<AuditFamily> {
        vec![
            AuditFamily::Ewa,
            AuditFamily::Opt2Ewa,
            AuditFamily::Ftrl { divergence: DivergenceKind::Kl },
            AuditFamily::Ftrl { divergence: DivergenceKind::Chi2 },
            AuditFamily::Ftrl { divergence: DivergenceKind::Pnorm { p: 1.5 } },
            AuditFamily::OptFtrl { divergence: DivergenceKind::Chi2 },
            AuditFamily::Ftrl { divergence: DivergenceKind::Pnorm { p: 3.0 } },
        ]
    }

    pub fn label(&self) -> String {
        match self {
            AuditFamily::Ewa => "EWA".into(),
            AuditFamily::Opt2Ewa => "OPT2EWA".into(),
            AuditFamily::Ftrl { divergence } => format!("FTRL[{}]", divergence.label()),
            AuditFamily::OptFtrl { divergence } => format!("OPTFTRL[{}]", divergence.label()),
        }
    }

    fn kind(&self, eta: f64) -> LearnerKind {
        match *self {
            AuditFamily::Ewa => LearnerKind::Ewa { eta },
            AuditFamily::Opt2Ewa => LearnerKind::Opt2Ewa { eta },
            AuditFamily::Ftrl { divergence } => LearnerKind::Ftrl { eta, divergence },
            AuditFamily::OptFtrl { divergence } => LearnerKind::OptFtrl { eta, divergence },
        }
    }
}

/// How the adversary picks `c_t` after seeing `P_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Adversary {
    /// Independent uniform costs.
    Random,
    /// `+1` on hypotheses the learner overweights, `−1` elsewhere, with noise.
    Contrarian,
    /// Penalizes the current favourite only.
    ChaseLeader,
}

impl Adversary {
    pub const ALL: [Adversary; 3] = [Adversary::Random, Adversary::Contrarian, Adversary::ChaseLeader];

    fn cost(&self, p: &ProbVector, rng: &mut StreamRng) -> Vec<f64> {
        let k = p.len();
        let w = p.weights();
        match self {
            Adversary::Random => (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            Adversary::Contrarian => w
                .iter()
                .map(|pi| {
                    let noise: f64 = rng.random_range(0.0..0.2);
                    if *pi * k as f64 >= 1.0 {
                        1.0 - noise
                    } else {
                        -1.0 + noise
                    }
                })
                .collect(),
            Adversary::ChaseLeader => {
                let lead = (0..k).fold(0, |b, i| if w[i] > w[b] { i } else { b });
                (0..k).map(|i| if i == lead { 1.0 } else { rng.random_range(-1.0..0.0) }).collect()
            }
        }
    }
}

/// One audited run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRun {
    pub seed: u64,
    pub family: String,
    pub adversary: Adversary,
    pub k: usize,
    pub n: usize,
    pub eta: f64,
    #[serde(with = "crate::json::ext_f64")]
    pub regret: f64,
    pub bound: RegretBound,
    /// `regret > bound + tolerance` on a run whose preconditions hold.
    pub violated: bool,
}

fn dirichlet(k: usize, rng: &mut StreamRng) -> Result<ProbVector> {
    let g: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    ProbVector::from_unnormalized(g)
}

/// Plays one audit run with `K ∈ [2, k_max]` and `n ∈ [1, n_max]` drawn from the seed.
pub fn audit_run(family: AuditFamily, adversary: Adversary, k_max: usize, n_max: usize, seed: u64) -> Result<AuditRun> {
    if k_max < 2 || n_max < 1 {
        return Err(Error::InvalidInput("audits need K ≥ 2 and n ≥ 1".into()));
    }
    let mut rng = rng::stream(seed, "audit", 0);
    let k = rng.random_range(2..=k_max);
    let n = rng.random_range(1..=n_max);
    let prior = if rng.random_bool(0.5) { ProbVector::uniform(k) } else { dirichlet(k, &mut rng)? };
    // OPT2EWA's bound needs η (c − g) ≤ 1/2 with |c − g| ≤ 2
    let eta_max: f64 = if family == AuditFamily::Opt2Ewa { 0.25 } else { 2.0 };
    let eta = eta_max * (-rng.random_range(0.0..5.0f64)).exp();
    let kind = family.kind(eta);
    let optimistic = kind.uses_hints();
    let draw_hint = |rng: &mut StreamRng, last: &CostVector| -> Result<CostVector> {
        if !optimistic {
            return Ok(CostVector::zeros(k));
        }
        if rng.random_bool(0.5) {
            Ok(last.clone())
        } else {
            CostVector::new((0..k).map(|_| rng.random_range(-1.0..=1.0)).collect())
        }
    };
    let mut hint = draw_hint(&mut rng, &CostVector::zeros(k))?;
    let mut state = OnlineLearnerState::new(kind, prior.clone(), hint.clone())?;
    let mut predictions = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    let mut hints = Vec::with_capacity(n);
    for _ in 0..n {
        let p = state.prediction().clone();
        let c = CostVector::new(adversary.cost(&p, &mut rng))?;
        let next = draw_hint(&mut rng, &c)?;
        state = state.observe(&c, &next)?;
        predictions.push(p);
        costs.push(c.clone());
        hints.push(hint);
        hint = next;
    }
    // comparator: best fixed hypothesis or a random mixture
    let comparator = if rng.random_bool(0.5) {
        let totals: Vec<f64> = (0..k).map(|i| costs.iter().map(|c| c.values()[i]).sum()).collect();
        let best = (0..k).fold(0, |b, i| if totals[i] < totals[b] { i } else { b });
        ProbVector::point_mass(k, best)
    } else {
        dirichlet(k, &mut rng)?
    };
    let r = regret(&predictions, &costs, &comparator)?;
    let bound = regret_bound_rhs(&kind, &prior, &costs, Some(&hints), &comparator)?;
    let violated = bound.valid && r > bound.value + AUDIT_TOLERANCE;
    Ok(AuditRun { seed, family: family.label(), adversary, k, n, eta, regret: r, bound, violated })
}

//! Experiment configuration documents.
//!
//! A config is a JSON object with `schema_version` and `command`; every other
//! field has a documented default that is filled in and echoed back in the
//! run summary. Unknown fields are rejected.

use anyhow::{bail, Context, Result};
use o2pac::audit::AuditFamily;
use o2pac::bounds::{BoundConfig, BoundId, LemmaId};
use o2pac::game::{Environment, LearnerSpec, PriorSpec, StatLearnerSpec};
use o2pac::learners::LearnerKind;
use o2pac::measures::{DivergenceKind, ProbVector};
use o2pac::rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Version of the config and summary schema.
pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_REPLICATES: usize = 10_000;
pub const DEFAULT_N: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    VerifyIdentity,
    RegretAudit,
    Certify,
    Coverage,
    Concentration,
    OtCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::VerifyIdentity => "verify-identity",
            Command::RegretAudit => "regret-audit",
            Command::Certify => "certify",
            Command::Coverage => "coverage",
            Command::Concentration => "concentration",
            Command::OtCheck => "ot-check",
        }
    }
}

/// Where the environment comes from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// The four default environments, generated from the run seed.
    #[default]
    Battery,
    Inline {
        environment: Environment,
    },
    /// A JSON file holding an environment, relative to the config file.
    Path {
        path: PathBuf,
    },
    Random {
        k: usize,
        m: usize,
    },
    Realizable {
        k: usize,
        m: usize,
    },
    /// A fresh random environment per replicate with `K ∈ [2, k_max]`, `m ∈ [1, m_max]`.
    RandomShape {
        k_max: usize,
        m_max: usize,
    },
}

impl EnvironmentSpec {
    /// Fixed environments for commands that sweep over a list.
    pub fn instances(&self, seed: u64, base_dir: &Path) -> Result<Vec<(String, Environment)>> {
        let mut r = rng::stream(seed, "cli.environment", 0);
        Ok(match self {
            EnvironmentSpec::Battery => Environment::battery(seed)?,
            EnvironmentSpec::Inline { environment } => vec![("inline".into(), environment.clone())],
            EnvironmentSpec::Path { path } => {
                let full = base_dir.join(path);
                let text = std::fs::read_to_string(&full).with_context(|| format!("reading environment {}", full.display()))?;
                let env: Environment = serde_json::from_str(&text).with_context(|| format!("parsing environment {}", full.display()))?;
                vec![(path.display().to_string(), env)]
            }
            EnvironmentSpec::Random { k, m } => vec![(format!("random-k{k}-m{m}"), Environment::random(*k, *m, &mut r)?)],
            EnvironmentSpec::Realizable { k, m } => vec![(format!("realizable-k{k}-m{m}"), Environment::realizable(*k, *m, &mut r)?)],
            EnvironmentSpec::RandomShape { k_max, m_max } => {
                let (k, m) = random_shape(*k_max, *m_max, &mut r);
                vec![(format!("random-k{k}-m{m}"), Environment::random(k, m, &mut r)?)]
            }
        })
    }

    /// Environment of the replicate with this seed: randomized specs draw a
    /// fresh table, fixed ones pick one of [`EnvironmentSpec::instances`].
    pub fn for_replicate(&self, fixed: &[(String, Environment)], seed: u64) -> Result<(String, Environment)> {
        let mut r = rng::stream(seed, "cli.environment", 1);
        Ok(match self {
            EnvironmentSpec::Random { k, m } => (format!("random-k{k}-m{m}"), Environment::random(*k, *m, &mut r)?),
            EnvironmentSpec::Realizable { k, m } => (format!("realizable-k{k}-m{m}"), Environment::realizable(*k, *m, &mut r)?),
            EnvironmentSpec::RandomShape { k_max, m_max } => {
                let (k, m) = random_shape(*k_max, *m_max, &mut r);
                (format!("random-k{k}-m{m}"), Environment::random(k, m, &mut r)?)
            }
            _ => {
                use rand::Rng;
                fixed[r.random_range(0..fixed.len())].clone()
            }
        })
    }
}

fn random_shape(k_max: usize, m_max: usize, r: &mut rng::StreamRng) -> (usize, usize) {
    use rand::Rng;
    (r.random_range(2..=k_max.max(2)), r.random_range(1..=m_max.max(1)))
}

/// Test fixtures accepted in place of a learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Fixture {
    /// Reads `Z_t` before committing to `P_t`.
    PeekingFixture,
}

/// A learner entry: a real learner or a fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LearnerChoice {
    Fixture { fixture: Fixture },
    Learner(LearnerSpec),
}

impl LearnerChoice {
    pub fn label(&self) -> String {
        match self {
            LearnerChoice::Fixture { .. } => "PEEKING_FIXTURE".into(),
            LearnerChoice::Learner(l) => l.kind.label(),
        }
    }
}

/// Command-specific knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandOptions {
    /// verify-identity: draw each replicate's `n` uniformly from `[n_min, n]`.
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    /// verify-identity: also play the conditional game.
    #[serde(default = "yes")]
    pub conditional: bool,
    /// verify-identity and regret-audit: residual and regret tolerance.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// regret-audit: learner families audited against adaptive adversaries.
    #[serde(default = "AuditFamily::standard")]
    pub families: Vec<AuditFamily>,
    /// regret-audit: largest hypothesis count of an audited sequence.
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// regret-audit: generalization games played per listed learner.
    #[serde(default = "default_game_runs")]
    pub game_runs: usize,
    /// concentration: lemmas to test.
    #[serde(default = "all_lemmas")]
    pub lemmas: Vec<LemmaId>,
    /// concentration: confidence levels; defaults to `[delta]`.
    #[serde(default)]
    pub deltas: Vec<f64>,
    /// ot-check: largest support size of each measure.
    #[serde(default = "default_max_support")]
    pub max_support: usize,
    /// ot-check: ambient dimension.
    #[serde(default = "default_dim")]
    pub dim: usize,
}

impl Default for CommandOptions {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

fn default_n_min() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_tolerance() -> f64 {
    1e-9
}
fn default_k_max() -> usize {
    16
}
fn default_game_runs() -> usize {
    20
}
fn all_lemmas() -> Vec<LemmaId> {
    LemmaId::ALL.to_vec()
}
fn default_max_support() -> usize {
    4
}
fn default_dim() -> usize {
    2
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}
fn default_n() -> usize {
    DEFAULT_N
}

/// The six learner families of the identity battery.
pub fn default_learners() -> Vec<LearnerChoice> {
    let eta = 0.5;
    [
        LearnerKind::Ewa { eta },
        LearnerKind::Opt2Ewa { eta: 0.25 },
        LearnerKind::Ftrl { eta, divergence: DivergenceKind::Kl },
        LearnerKind::Ftrl { eta, divergence: DivergenceKind::Chi2 },
        LearnerKind::Ftrl { eta, divergence: DivergenceKind::Pnorm { p: 3.0 } },
        LearnerKind::OptFtrl { eta, divergence: DivergenceKind::Chi2 },
    ]
    .into_iter()
    .map(|kind| LearnerChoice::Learner(LearnerSpec { kind, prior: PriorSpec::Uniform, hints: Default::default() }))
    .collect()
}

/// Statistical learners used when the config lists none: Gibbs with `β = 2`.
pub fn default_stat_learners() -> Vec<StatLearnerChoice> {
    vec![StatLearnerChoice::Gibbs { beta: 2.0, prior: None }]
}

/// A statistical learner whose prior may be left to the environment (uniform).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum StatLearnerChoice {
    Gibbs {
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<ProbVector>,
    },
    Erm,
    Fixed {
        posterior: ProbVector,
    },
    /// A data-independent posterior drawn from a flat Dirichlet per run.
    FixedRandom,
}

impl StatLearnerChoice {
    /// The concrete learner for `K` hypotheses; `seed` drives `FIXED_RANDOM`.
    pub fn resolve(&self, k: usize, seed: u64) -> Result<StatLearnerSpec> {
        Ok(match self {
            StatLearnerChoice::Gibbs { beta, prior } => {
                StatLearnerSpec::Gibbs { beta: *beta, prior: prior.clone().unwrap_or_else(|| ProbVector::uniform(k)) }
            }
            StatLearnerChoice::Erm => StatLearnerSpec::Erm,
            StatLearnerChoice::Fixed { posterior } => StatLearnerSpec::Fixed { posterior: posterior.clone() },
            StatLearnerChoice::FixedRandom => {
                let mut r = rng::stream(seed, "cli.fixed_posterior", 0);
                let g: Vec<f64> = (0..k).map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::Exp1, &mut r)).collect();
                StatLearnerSpec::Fixed { posterior: ProbVector::from_unnormalized(g)? }
            }
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            StatLearnerChoice::Gibbs { .. } => "GIBBS",
            StatLearnerChoice::Erm => "ERM",
            StatLearnerChoice::Fixed { .. } | StatLearnerChoice::FixedRandom => "FIXED",
        }
    }
}

/// Bounds audited by default in `coverage` and `certify`.
pub fn default_bounds(command: Command) -> Vec<BoundConfig> {
    let mut v = vec![
        BoundConfig::new(BoundId::Vanilla),
        BoundConfig::new(BoundId::Tuned),
        BoundConfig::new(BoundId::Paramfree),
        BoundConfig::new(BoundId::SecondOrderMoment),
        BoundConfig::new(BoundId::SecondOrderRelaxed),
        BoundConfig::new(BoundId::FtrlPlain).with_divergence(DivergenceKind::Chi2),
        BoundConfig::new(BoundId::PnormA).with_divergence(DivergenceKind::Pnorm { p: 1.5 }),
        BoundConfig::new(BoundId::PnormB).with_divergence(DivergenceKind::Pnorm { p: 3.0 }),
        BoundConfig::new(BoundId::Conditional),
    ];
    if command == Command::Certify {
        v.push(BoundConfig::new(BoundId::FtrlTuned));
        v.push(BoundConfig::new(BoundId::FtrlOptimistic));
        v.push(BoundConfig::new(BoundId::FixedPrior));
        v.push(BoundConfig::new(BoundId::MutualInfo));
    }
    v
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub command: Command,
    #[serde(default)]
    pub environment: EnvironmentSpec,
    #[serde(default = "default_learners")]
    pub learners: Vec<LearnerChoice>,
    #[serde(default = "default_stat_learners")]
    pub stat_learners: Vec<StatLearnerChoice>,
    /// Empty means the command's default list.
    #[serde(default)]
    pub bounds: Vec<BoundConfig>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub options: CommandOptions,
}

/// Parses and validates a config document.
pub fn parse_config(document: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let mut config: ExperimentConfig = match serde_path_to_error::deserialize(de) {
        Ok(c) => c,
        Err(e) => {
            let path = e.path().to_string();
            bail!("invalid config at `{path}`: {}", e.into_inner());
        }
    };
    if config.bounds.is_empty() {
        config.bounds = default_bounds(config.command);
    }
    if config.options.deltas.is_empty() {
        config.options.deltas = vec![config.delta];
    }
    validate(&config)?;
    Ok(config)
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config {}", path.display()))
}

fn validate(c: &ExperimentConfig) -> Result<()> {
    if c.schema_version != SCHEMA_VERSION {
        bail!("invalid config at `schema_version`: expected {SCHEMA_VERSION}, found {}", c.schema_version);
    }
    if c.n < 1 {
        bail!("invalid config at `n`: must be at least 1");
    }
    if !(c.delta > 0.0 && c.delta < 1.0) {
        bail!("invalid config at `delta`: must lie in (0, 1), got {}", c.delta);
    }
    if c.replicates < 1 {
        bail!("invalid config at `replicates`: must be at least 1");
    }
    for (i, d) in c.options.deltas.iter().enumerate() {
        if !(*d > 0.0 && *d < 1.0) {
            bail!("invalid config at `options.deltas[{i}]`: must lie in (0, 1), got {d}");
        }
    }
    if c.options.n_min < 1 || c.options.n_min > c.n {
        bail!("invalid config at `options.n_min`: must lie in [1, n = {}], got {}", c.n, c.options.n_min);
    }
    if c.options.k_max < 2 {
        bail!("invalid config at `options.k_max`: must be at least 2");
    }
    if c.options.max_support < 1 || c.options.max_support > 5 {
        bail!("invalid config at `options.max_support`: coupling enumeration supports 1 to 5 atoms");
    }
    if c.options.dim < 1 {
        bail!("invalid config at `options.dim`: must be at least 1");
    }
    if c.stat_learners.is_empty() {
        bail!("invalid config at `stat_learners`: list at least one statistical learner");
    }
    for (i, l) in c.learners.iter().enumerate() {
        if let LearnerChoice::Learner(spec) = l {
            spec.kind
                .validate()
                .or_else(|e| match e {
                    o2pac::Error::Precondition(_) => Ok(()),
                    e => Err(e),
                })
                .with_context(|| format!("invalid config at `learners[{i}].kind`"))?;
        }
    }
    for (i, b) in c.bounds.iter().enumerate() {
        let smoothed = matches!(b.id, BoundId::SmoothedPlain | BoundId::SmoothPb | BoundId::Wasserstein);
        if smoothed && b.smoothing.is_none() {
            bail!("invalid config at `bounds[{i}].smoothing`: {} needs a hypothesis embedding", b.id.name());
        }
    }
    Ok(())
}

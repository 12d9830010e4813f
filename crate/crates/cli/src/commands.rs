//! The six experiment commands.
//!
//! Each command returns a [`CommandReport`]: a pass flag, command-specific
//! results for the JSON summary, and a CSV table with one row per replicate.
//! All replicate loops go through the order-preserving replicate runner, so
//! the report does not depend on the number of worker threads.

use crate::config::{Command, ExperimentConfig, LearnerChoice};
use crate::oracle;
use anyhow::{bail, Context, Result};
use o2pac::audit::{audit_run, Adversary, AuditRun};
use o2pac::bounds::{self, BoundCertificate, BoundConfig, BoundId, CertContext, CoverageReport, ExpectedVariant};
use o2pac::game::{self, Environment, LearnerSpec, PeekingPolicy, PriorSpec, StatLearnerSpec};
use o2pac::json::format_f64;
use o2pac::learners::regret_bound_rhs;
use o2pac::measures::ProbVector;
use o2pac::rng::{self, derive_seed};
use o2pac::transport::{self, PointCloudMeasure};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::path::Path;

/// Outcome of one command.
#[derive(Debug, Clone)]
pub struct CommandReport {
    pub passed: bool,
    pub results: Value,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

fn f(x: f64) -> String {
    format_f64(x)
}

fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    Ok(serde_json::to_value(x)?)
}

/// Runs the configured command.
pub fn run_command(config: &ExperimentConfig, base_dir: &Path) -> Result<CommandReport> {
    match config.command {
        Command::VerifyIdentity => verify_identity(config, base_dir),
        Command::RegretAudit => regret_audit(config, base_dir),
        Command::Certify => certify(config, base_dir),
        Command::Coverage => coverage(config, base_dir),
        Command::Concentration => concentration(config),
        Command::OtCheck => ot_check(config),
    }
}

struct IdentityRow {
    seed: u64,
    game: &'static str,
    environment: String,
    k: usize,
    m: usize,
    learner: String,
    prior: &'static str,
    stat: &'static str,
    n: usize,
    residual: f64,
    violations: usize,
}

fn verify_identity(c: &ExperimentConfig, base_dir: &Path) -> Result<CommandReport> {
    let fixed = c.environment.instances(c.seed, base_dir)?;
    let opts = &c.options;
    let results = game::map_replicates(c.replicates, |i| -> Result<Vec<IdentityRow>> {
        let seed = game::replicate_seed(c.seed, i);
        let (name, env) = c.environment.for_replicate(&fixed, seed)?;
        let mut r = rng::stream(seed, "cli.identity", 0);
        let learner = &c.learners[r.random_range(0..c.learners.len())];
        let stat_choice = &c.stat_learners[r.random_range(0..c.stat_learners.len())];
        let stat = stat_choice.resolve(env.k(), seed)?;
        let n = r.random_range(opts.n_min..=c.n);
        let supersample_prior = r.random_bool(0.5);
        let base = |game, learner: String, prior, residual, violations| IdentityRow {
            seed,
            game,
            environment: name.clone(),
            k: env.k(),
            m: env.m(),
            learner,
            prior,
            stat: stat_choice.label(),
            n,
            residual,
            violations,
        };
        let mut out = Vec::with_capacity(2);
        match learner {
            LearnerChoice::Fixture { .. } => {
                let mut policy = PeekingPolicy::new(env.clone());
                let t = game::run_game_with_policy(&env, &mut policy, Default::default(), &stat, n, seed)?;
                out.push(base("standard", learner.label(), "NONE", t.identity_residual, t.contract_violations));
            }
            LearnerChoice::Learner(spec) => {
                let t = game::run_game(&env, spec, &stat, n, seed)
                    .with_context(|| format!("identity replicate {i} ({})", spec.kind.label()))?;
                out.push(base("standard", learner.label(), prior_label(&spec.prior), t.identity_residual, t.contract_violations));
                if opts.conditional {
                    let mut cspec = spec.clone();
                    if supersample_prior {
                        let beta = match &stat {
                            StatLearnerSpec::Gibbs { beta, .. } => *beta,
                            _ => 1.0,
                        };
                        cspec.prior = PriorSpec::SupersampleGibbs { beta, base: None };
                    }
                    let t = game::run_conditional_game(&env, &cspec, &stat, n, seed)?;
                    out.push(base(
                        "conditional",
                        learner.label(),
                        prior_label(&cspec.prior),
                        t.game.identity_residual,
                        t.game.contract_violations,
                    ));
                }
            }
        }
        Ok(out)
    });
    let mut rows = Vec::new();
    let (mut max_std, mut max_cond, mut violations) = (0.0f64, 0.0f64, 0usize);
    for res in results {
        for row in res? {
            if row.game == "standard" {
                max_std = max_std.max(row.residual);
            } else {
                max_cond = max_cond.max(row.residual);
            }
            violations += row.violations;
            rows.push(vec![
                row.seed.to_string(),
                row.game.into(),
                row.environment,
                row.k.to_string(),
                row.m.to_string(),
                row.learner,
                row.prior.into(),
                row.stat.into(),
                row.n.to_string(),
                f(row.residual),
                row.violations.to_string(),
            ]);
        }
    }
    let passed = max_std <= opts.tolerance && max_cond <= opts.tolerance;
    Ok(CommandReport {
        passed,
        results: json!({
            "replicates": c.replicates,
            "games": rows.len(),
            "max_residual_standard": max_std,
            "max_residual_conditional": max_cond,
            "tolerance": opts.tolerance,
            "contract_violations": violations,
        }),
        header: vec!["seed", "game", "environment", "k", "m", "learner", "prior", "stat_learner", "n", "residual", "contract_violations"],
        rows,
    })
}

fn prior_label(p: &PriorSpec) -> &'static str {
    match p {
        PriorSpec::Uniform => "UNIFORM",
        PriorSpec::Given { .. } => "GIVEN",
        PriorSpec::SupersampleGibbs { .. } => "SUPERSAMPLE_GIBBS",
    }
}

#[derive(Debug, Clone, Serialize)]
struct FamilySummary {
    family: String,
    runs: usize,
    invalid: usize,
    violations: usize,
    max_excess: f64,
}

#[derive(Debug, Clone, Serialize)]
struct GameAuditSummary {
    learner: String,
    games: usize,
    contract_violations: usize,
    bound_violations: usize,
}

fn regret_audit(c: &ExperimentConfig, base_dir: &Path) -> Result<CommandReport> {
    let opts = &c.options;
    let mut rows = Vec::new();
    let mut families = Vec::new();
    let mut passed = true;
    for (fi, family) in opts.families.iter().enumerate() {
        let fam_seed = derive_seed(c.seed, "cli.audit.family", fi as u64);
        let runs: Vec<AuditRun> = game::map_replicates(c.replicates, |i| {
            let adversary = Adversary::ALL[i % Adversary::ALL.len()];
            audit_run(*family, adversary, opts.k_max, c.n, game::replicate_seed(fam_seed, i))
        })
        .into_iter()
        .collect::<o2pac::Result<_>>()?;
        let violations = runs.iter().filter(|r| r.violated).count();
        let invalid = runs.iter().filter(|r| !r.bound.valid).count();
        let max_excess = runs.iter().filter(|r| r.bound.valid).map(|r| r.regret - r.bound.value).fold(f64::NEG_INFINITY, f64::max);
        passed &= violations == 0;
        for r in &runs {
            rows.push(vec![
                "adversarial".into(),
                r.family.clone(),
                format!("{:?}", r.adversary).to_uppercase(),
                r.seed.to_string(),
                r.k.to_string(),
                r.n.to_string(),
                f(r.eta),
                f(r.regret),
                f(r.bound.value),
                r.bound.valid.to_string(),
                "0".into(),
                r.violated.to_string(),
            ]);
        }
        families.push(FamilySummary { family: family.label(), runs: runs.len(), invalid, violations, max_excess });
    }

    let fixed = c.environment.instances(c.seed, base_dir)?;
    let mut games = Vec::new();
    for (li, learner) in c.learners.iter().enumerate() {
        let l_seed = derive_seed(c.seed, "cli.audit.game", li as u64);
        let runs = game::map_replicates(opts.game_runs, |i| -> Result<(Vec<String>, usize, bool)> {
            let seed = game::replicate_seed(l_seed, i);
            let (_, env) = c.environment.for_replicate(&fixed, seed)?;
            let stat = c.stat_learners[i % c.stat_learners.len()].resolve(env.k(), seed)?;
            let (t, bound) = match learner {
                LearnerChoice::Fixture { .. } => {
                    let mut policy = PeekingPolicy::new(env.clone());
                    (game::run_game_with_policy(&env, &mut policy, Default::default(), &stat, c.n, seed)?, None)
                }
                LearnerChoice::Learner(spec) => {
                    let t = game::run_game(&env, spec, &stat, c.n, seed)?;
                    let prior = standard_prior(spec, &env)?;
                    let b = regret_bound_rhs(&spec.kind, &prior, &t.costs, Some(&t.hints), &t.posterior)?;
                    (t, Some(b))
                }
            };
            let regret = t.regret_vs_posterior;
            let violated = bound.is_some_and(|b| b.valid && regret > b.value + opts.tolerance);
            let row = vec![
                "game".into(),
                learner.label(),
                "NONE".into(),
                seed.to_string(),
                env.k().to_string(),
                t.n.to_string(),
                f(match learner {
                    LearnerChoice::Learner(s) => s.kind.eta(),
                    _ => f64::NAN,
                }),
                f(regret),
                f(bound.map_or(f64::NAN, |b| b.value)),
                bound.is_some_and(|b| b.valid).to_string(),
                t.contract_violations.to_string(),
                (violated || t.contract_violations > 0).to_string(),
            ];
            Ok((row, t.contract_violations, violated))
        });
        let mut summary = GameAuditSummary { learner: learner.label(), games: 0, contract_violations: 0, bound_violations: 0 };
        for res in runs {
            let (row, cv, violated) = res?;
            summary.games += 1;
            summary.contract_violations += cv;
            summary.bound_violations += usize::from(violated);
            rows.push(row);
        }
        passed &= summary.contract_violations == 0 && summary.bound_violations == 0;
        games.push(summary);
    }
    Ok(CommandReport {
        passed,
        results: json!({ "tolerance": opts.tolerance, "families": to_value(&families)?, "games": to_value(&games)? }),
        header: vec![
            "audit",
            "learner",
            "adversary",
            "seed",
            "k",
            "n",
            "eta",
            "regret",
            "bound",
            "valid",
            "contract_violations",
            "violated",
        ],
        rows,
    })
}

fn standard_prior(spec: &LearnerSpec, env: &Environment) -> Result<ProbVector> {
    match &spec.prior {
        PriorSpec::Uniform => Ok(ProbVector::uniform(env.k())),
        PriorSpec::Given { weights } => Ok(weights.clone()),
        PriorSpec::SupersampleGibbs { .. } => bail!("SUPERSAMPLE_GIBBS priors exist only in the conditional game"),
    }
}

/// Targets the certificate bounds, evaluated on the realized run.
fn realized_target(cert: &BoundCertificate, outcome: &game::ReplicateOutcome) -> f64 {
    match cert.target {
        bounds::BoundTarget::TestRisk => outcome.test_risk,
        _ => outcome.gen,
    }
}

fn expected_variant(id: BoundId) -> Option<ExpectedVariant> {
    match id {
        BoundId::FixedPrior => Some(ExpectedVariant::FixedPrior),
        BoundId::MutualInfo => Some(ExpectedVariant::MutualInfo),
        _ => None,
    }
}

fn certify_one(
    b: &BoundConfig,
    env: &Environment,
    stat: &StatLearnerSpec,
    c: &ExperimentConfig,
    seed: u64,
) -> Result<(BoundCertificate, f64)> {
    if let Some(v) = expected_variant(b.id) {
        let outs = game::replicate_outcomes(env, stat, c.n, c.replicates, seed)?;
        let cert = bounds::cert_expected(v, &outs, b.prior.as_ref(), b.params.eta)?;
        let mean = cert.ingredient("mean_gen").unwrap_or(f64::NAN);
        return Ok((cert, mean));
    }
    if b.id == BoundId::Conditional {
        let co = game::draw_conditional_outcome(env, stat, &b.conditional_prior_spec(), c.n, seed)?;
        let ctx = CertContext {
            env,
            sample: &co.outcome.sample,
            posterior: &co.outcome.posterior,
            delta: c.delta,
            seed,
            conditional_prior: Some(&co.prior),
        };
        let cert = bounds::certify(b, &ctx)?;
        return Ok((cert, co.outcome.gen));
    }
    let o = game::draw_outcome(env, stat, c.n, seed)?;
    let ctx = CertContext { env, sample: &o.sample, posterior: &o.posterior, delta: c.delta, seed, conditional_prior: None };
    let cert = bounds::certify(b, &ctx)?;
    let realized = realized_target(&cert, &o);
    Ok((cert, realized))
}

fn certify(c: &ExperimentConfig, base_dir: &Path) -> Result<CommandReport> {
    let envs = c.environment.instances(c.seed, base_dir)?;
    let mut rows = Vec::new();
    let mut certs = Vec::new();
    let mut passed = true;
    for (ei, (name, env)) in envs.iter().enumerate() {
        for (si, sc) in c.stat_learners.iter().enumerate() {
            let seed = derive_seed(derive_seed(c.seed, "cli.certify", ei as u64), "stat", si as u64);
            let stat = sc.resolve(env.k(), seed)?;
            for b in &c.bounds {
                let (cert, realized) = certify_one(b, env, &stat, c, seed).with_context(|| format!("{} on {name}", b.label()))?;
                passed &= cert.recomposition_error() <= 1e-12;
                rows.push(vec![
                    name.clone(),
                    sc.label().into(),
                    b.label(),
                    format!("{:?}", cert.target).to_uppercase(),
                    f(cert.value),
                    cert.valid.to_string(),
                    f(realized),
                    (realized <= cert.coverage_value()).to_string(),
                ]);
                certs.push(json!({
                    "environment": name,
                    "stat_learner": sc.label(),
                    "bound": b.label(),
                    "realized": realized,
                    "certificate": to_value(&cert)?,
                }));
            }
        }
    }
    Ok(CommandReport {
        passed,
        results: json!({ "certificates": certs }),
        header: vec!["environment", "stat_learner", "bound", "target", "value", "valid", "realized", "holds"],
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
struct ExpectationCheck {
    bound_id: String,
    environment: String,
    replicates: usize,
    mean_gen: f64,
    gen_std_error: f64,
    #[serde(with = "o2pac::json::ext_f64")]
    certificate: f64,
    passed: bool,
}

fn coverage(c: &ExperimentConfig, base_dir: &Path) -> Result<CommandReport> {
    let envs = c.environment.instances(c.seed, base_dir)?;
    let mut rows = Vec::new();
    let mut reports: Vec<Value> = Vec::new();
    let mut expectation = Vec::new();
    let mut passed = true;
    for (ei, (name, env)) in envs.iter().enumerate() {
        for (si, sc) in c.stat_learners.iter().enumerate() {
            for (bi, b) in c.bounds.iter().enumerate() {
                let seed = derive_seed(derive_seed(derive_seed(c.seed, "cli.coverage", ei as u64), "stat", si as u64), "bound", bi as u64);
                let stat = sc.resolve(env.k(), seed)?;
                if let Some(v) = expected_variant(b.id) {
                    let outs = game::replicate_outcomes(env, &stat, c.n, c.replicates, seed)?;
                    let cert = bounds::cert_expected(v, &outs, b.prior.as_ref(), b.params.eta)?;
                    let mean = cert.ingredient("mean_gen").unwrap_or(f64::NAN);
                    let se = cert.ingredient("gen_std_error").unwrap_or(f64::NAN);
                    let ok = mean <= cert.value + 3.0 * se;
                    passed &= ok;
                    for o in &outs {
                        rows.push(row_cov(name, sc.label(), &b.label(), o.seed, o.gen, cert.value, o.gen > cert.value));
                    }
                    expectation.push(ExpectationCheck {
                        bound_id: b.label(),
                        environment: name.clone(),
                        replicates: outs.len(),
                        mean_gen: mean,
                        gen_std_error: se,
                        certificate: cert.value,
                        passed: ok,
                    });
                    continue;
                }
                let (rep, trial_rows): (CoverageReport, _) = bounds::bound_coverage(b, env, &stat, c.n, c.replicates, c.delta, seed)
                    .with_context(|| format!("coverage of {} on {name}", b.label()))?;
                passed &= rep.within_band;
                for t in &trial_rows {
                    rows.push(row_cov(name, sc.label(), &b.label(), t.seed, t.gen, t.cert, t.violated));
                }
                let mut v = to_value(&rep)?;
                v["environment"] = json!(name);
                v["stat_learner"] = json!(sc.label());
                reports.push(v);
            }
        }
    }
    Ok(CommandReport {
        passed,
        results: json!({ "reports": reports, "expectation_checks": to_value(&expectation)? }),
        header: vec!["environment", "stat_learner", "bound", "seed", "realized", "certificate", "violated"],
        rows,
    })
}

fn row_cov(env: &str, stat: &str, bound: &str, seed: u64, realized: f64, cert: f64, violated: bool) -> Vec<String> {
    vec![env.into(), stat.into(), bound.into(), seed.to_string(), f(realized), f(cert), violated.to_string()]
}

fn concentration(c: &ExperimentConfig) -> Result<CommandReport> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut passed = true;
    for (li, lemma) in c.options.lemmas.iter().enumerate() {
        for (di, delta) in c.options.deltas.iter().enumerate() {
            let seed = derive_seed(derive_seed(c.seed, "cli.concentration", li as u64), "delta", di as u64);
            let (rep, trials) = bounds::lemma_coverage(*lemma, c.n, c.replicates, *delta, seed)?;
            passed &= rep.within_band;
            for t in &trials {
                rows.push(vec![lemma.name(), f(*delta), t.seed.to_string(), f(t.gen), f(t.cert), t.violated.to_string()]);
            }
            let mut v = to_value(&rep)?;
            v["lambda"] = json!(bounds::lemma_lambda(*lemma, c.n, *delta));
            reports.push(v);
        }
    }
    Ok(CommandReport {
        passed,
        results: json!({ "n": c.n, "reports": reports }),
        header: vec!["lemma", "delta", "seed", "realized", "rhs", "violated"],
        rows,
    })
}

/// Random pair of point clouds with up to `max_support` atoms each.
///
/// Half the instances use lattice points and uniform weights, which produce
/// ties and degenerate transportation bases.
pub fn random_cloud_pair(max_support: usize, dim: usize, seed: u64) -> Result<(PointCloudMeasure, PointCloudMeasure)> {
    let mut r = rng::stream(seed, "cli.ot", 0);
    let lattice = r.random_bool(0.5);
    let cloud = |r: &mut rng::StreamRng| -> Result<PointCloudMeasure> {
        let m = r.random_range(1..=max_support);
        let points: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| if lattice { r.random_range(0..3) as f64 } else { r.random_range(-2.0..2.0) }).collect())
            .collect();
        let weights: Vec<f64> = if lattice { vec![1.0; m] } else { (0..m).map(|_| r.random_range(0.05..1.0)).collect() };
        Ok(PointCloudMeasure::from_unnormalized(points, weights)?)
    };
    let p = cloud(&mut r)?;
    let q = cloud(&mut r)?;
    Ok((p, q))
}

/// Agreement tolerance between the simplex solver and the enumeration.
pub const OT_TOLERANCE: f64 = 1e-9;

fn ot_check(c: &ExperimentConfig) -> Result<CommandReport> {
    let opts = &c.options;
    let results = game::map_replicates(c.replicates, |i| -> Result<Vec<String>> {
        let seed = game::replicate_seed(c.seed, i);
        let (p, q) = random_cloud_pair(opts.max_support, opts.dim, seed)?;
        let simplex = transport::wasserstein2_sq(&p, &q)?;
        let brute = oracle::w2_sq_by_enumeration(&p, &q);
        let err = (simplex - brute).abs();
        Ok(vec![
            seed.to_string(),
            p.support_size().to_string(),
            q.support_size().to_string(),
            f(simplex),
            f(brute),
            f(err),
            (err <= OT_TOLERANCE * brute.abs().max(1.0)).to_string(),
        ])
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mismatches = rows.iter().filter(|r| r[6] == "false").count();
    let max_err = rows.iter().map(|r| r[5].parse::<f64>().unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    Ok(CommandReport {
        passed: mismatches == 0,
        results: json!({ "instances": rows.len(), "mismatches": mismatches, "max_abs_error": max_err, "tolerance": OT_TOLERANCE }),
        header: vec!["seed", "support_p", "support_q", "simplex", "enumeration", "abs_error", "agree"],
        rows,
    })
}

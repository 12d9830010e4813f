//! Browser bindings for the o2pac demo page.
//!
//! Every export takes plain numbers and returns a JSON document for the page
//! to plot. The `*_json` functions hold the logic so they can be tested on
//! the host; the exported wrappers only convert errors to `JsError`.

use o2pac::bounds::{certify, BoundConfig, BoundId, CertContext};
use o2pac::game::{self, Environment, HintMode, LearnerSpec, StatLearnerSpec};
use o2pac::learners::LearnerKind;
use o2pac::measures::{DivergenceKind, ProbVector};
use o2pac::rng;
use o2pac::transport::{self, PointCloudMeasure};
use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Res<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn to_json<T: Serialize>(v: &T) -> Res<String> {
    serde_json::to_string(v).map_err(err)
}

const CURVE_BOUNDS: [BoundId; 5] =
    [BoundId::Vanilla, BoundId::Tuned, BoundId::SecondOrderMoment, BoundId::SecondOrderRelaxed, BoundId::FtrlPlain];

#[derive(Serialize)]
struct Series {
    label: String,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct Curves {
    n: Vec<usize>,
    gen: Vec<f64>,
    bounds: Vec<Series>,
}

fn environment(realizable: bool, k: usize, m: usize, seed: u64) -> Res<Environment> {
    let mut r = rng::stream(seed, "web.env", 0);
    if realizable {
        Environment::realizable(k, m, &mut r).map_err(err)
    } else {
        Environment::random(k, m, &mut r).map_err(err)
    }
}

/// Mean certificates and mean realized gen of a Gibbs learner for
/// `n = 25, 50, …, 1600`, averaged over `replicates` samples.
pub fn certificate_curves_json(seed: u64, k: usize, m: usize, realizable: bool, beta: f64, delta: f64, replicates: usize) -> Res<String> {
    let env = environment(realizable, k, m, seed)?;
    let stat = StatLearnerSpec::Gibbs { beta, prior: ProbVector::uniform(k) };
    let ns: Vec<usize> = (0..7).map(|i| 25 << i).collect();
    let configs: Vec<BoundConfig> = CURVE_BOUNDS.iter().map(|id| BoundConfig::new(*id)).collect();
    let mut sums = vec![vec![0.0; ns.len()]; configs.len()];
    let mut gen = vec![0.0; ns.len()];
    let r = replicates.max(1);
    for (j, &n) in ns.iter().enumerate() {
        let outs = game::replicate_outcomes(&env, &stat, n, r, rng::derive_seed(seed, "web.curves", j as u64)).map_err(err)?;
        for o in &outs {
            gen[j] += o.gen / r as f64;
            let ctx = CertContext { env: &env, sample: &o.sample, posterior: &o.posterior, delta, seed: o.seed, conditional_prior: None };
            for (b, c) in configs.iter().enumerate() {
                sums[b][j] += certify(c, &ctx).map_err(err)?.value / r as f64;
            }
        }
    }
    let bounds = configs.iter().zip(sums).map(|(c, values)| Series { label: c.label(), values }).collect();
    to_json(&Curves { n: ns, gen, bounds })
}

#[derive(Serialize)]
struct Trajectory {
    learner: String,
    /// `predictions[t][w]`, the learner's distribution before round `t`.
    predictions: Vec<Vec<f64>>,
    /// Cumulative regret against the posterior after each round.
    regret: Vec<f64>,
    posterior: Vec<f64>,
    gen: f64,
    martingale_avg: f64,
    identity_residual: f64,
}

fn learner_kind(name: &str, eta: f64) -> Res<LearnerKind> {
    Ok(match name {
        "EWA" => LearnerKind::Ewa { eta },
        "OPT2EWA" => LearnerKind::Opt2Ewa { eta },
        "FTRL_KL" => LearnerKind::Ftrl { eta, divergence: DivergenceKind::Kl },
        "FTRL_CHI2" => LearnerKind::Ftrl { eta, divergence: DivergenceKind::Chi2 },
        "FTRL_PNORM3" => LearnerKind::Ftrl { eta, divergence: DivergenceKind::Pnorm { p: 3.0 } },
        "OPTFTRL_CHI2" => LearnerKind::OptFtrl { eta, divergence: DivergenceKind::Chi2 },
        _ => return Err(format!("unknown learner {name}")),
    })
}

/// One generalization game with a Gibbs statistical learner.
pub fn learner_trajectory_json(learner: &str, eta: f64, seed: u64, k: usize, m: usize, n: usize, beta: f64) -> Res<String> {
    let env = environment(false, k, m, seed)?;
    let kind = learner_kind(learner, eta)?;
    let mut spec = LearnerSpec::new(kind);
    if kind.uses_hints() {
        spec.hints = HintMode::NegTestLoss;
    }
    let stat = StatLearnerSpec::Gibbs { beta, prior: ProbVector::uniform(k) };
    let t = game::run_game(&env, &spec, &stat, n, rng::derive_seed(seed, "web.game", 0)).map_err(err)?;
    let mut acc = 0.0;
    let regret = t
        .predictions
        .iter()
        .zip(&t.costs)
        .map(|(p, c)| {
            acc += p.weights().iter().zip(t.posterior.weights()).zip(c.values()).map(|((a, b), ci)| (a - b) * ci).sum::<f64>();
            acc
        })
        .collect();
    to_json(&Trajectory {
        learner: kind.label(),
        predictions: t.predictions.iter().map(|p| p.weights().to_vec()).collect(),
        regret,
        posterior: t.posterior.weights().to_vec(),
        gen: t.gen,
        martingale_avg: t.martingale_avg,
        identity_residual: t.identity_residual,
    })
}

#[derive(Serialize)]
struct TransportCurve {
    w2_sq: f64,
    gamma: Vec<f64>,
    kl: Vec<f64>,
    kl_std_error: Vec<f64>,
    bound: Vec<f64>,
    p: PointCloudMeasure,
    q: PointCloudMeasure,
}

fn random_cloud(seed: u64, label: &str, spread: f64) -> Res<PointCloudMeasure> {
    let mut r = rng::stream(seed, label, 0);
    let m = 3;
    let pts = (0..m).map(|_| (0..2).map(|_| r.random_range(-spread..=spread)).collect()).collect();
    let w = (0..m).map(|_| r.random_range(0.2..1.2)).collect();
    PointCloudMeasure::from_unnormalized(pts, w).map_err(err)
}

/// Smoothed KL between two random planar clouds against `W₂²/(2γ²)`.
pub fn transport_curve_json(seed: u64, spread: f64, samples: usize) -> Res<String> {
    let p = random_cloud(seed, "web.p", spread)?;
    let q = random_cloud(seed, "web.q", spread)?;
    let w2_sq = transport::wasserstein2_sq(&p, &q).map_err(err)?;
    let gamma: Vec<f64> = (0..12).map(|i| 0.1 * 1.3f64.powi(i)).collect();
    let mut kl = Vec::new();
    let mut kl_std_error = Vec::new();
    for (i, g) in gamma.iter().enumerate() {
        let est = transport::smoothed_kl_mc(&p, &q, *g, samples.max(100), rng::derive_seed(seed, "web.kl", i as u64)).map_err(err)?;
        kl.push(est.value);
        kl_std_error.push(est.std_error);
    }
    let bound = gamma.iter().map(|g| w2_sq / (2.0 * g * g)).collect();
    to_json(&TransportCurve { w2_sq, gamma, kl, kl_std_error, bound, p, q })
}

#[wasm_bindgen]
pub fn certificate_curves(
    seed: u32,
    k: usize,
    m: usize,
    realizable: bool,
    beta: f64,
    delta: f64,
    replicates: usize,
) -> Result<String, JsError> {
    certificate_curves_json(seed.into(), k, m, realizable, beta, delta, replicates).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn learner_trajectory(learner: &str, eta: f64, seed: u32, k: usize, m: usize, n: usize, beta: f64) -> Result<String, JsError> {
    learner_trajectory_json(learner, eta, seed.into(), k, m, n, beta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn transport_curve(seed: u32, spread: f64, samples: usize) -> Result<String, JsError> {
    transport_curve_json(seed.into(), spread, samples).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_have_one_value_per_n() {
        let v: serde_json::Value = serde_json::from_str(&certificate_curves_json(1, 4, 5, false, 2.0, 0.05, 3).unwrap()).unwrap();
        assert_eq!(v["n"].as_array().unwrap().len(), 7);
        for b in v["bounds"].as_array().unwrap() {
            assert_eq!(b["values"].as_array().unwrap().len(), 7);
        }
    }

    #[test]
    fn trajectory_satisfies_identity() {
        for name in ["EWA", "OPT2EWA", "FTRL_KL", "FTRL_CHI2", "FTRL_PNORM3", "OPTFTRL_CHI2"] {
            let v: serde_json::Value = serde_json::from_str(&learner_trajectory_json(name, 0.2, 3, 4, 5, 30, 2.0).unwrap()).unwrap();
            assert!(v["identity_residual"].as_f64().unwrap().abs() < 1e-9, "{name}");
            assert_eq!(v["regret"].as_array().unwrap().len(), 30);
        }
        assert!(learner_trajectory_json("NOPE", 0.2, 3, 4, 5, 30, 2.0).is_err());
    }

    #[test]
    fn transport_curve_respects_spread_bound() {
        let v: serde_json::Value = serde_json::from_str(&transport_curve_json(5, 1.0, 4000).unwrap()).unwrap();
        let kl = v["kl"].as_array().unwrap();
        let se = v["kl_std_error"].as_array().unwrap();
        let bound = v["bound"].as_array().unwrap();
        for i in 0..kl.len() {
            assert!(kl[i].as_f64().unwrap() <= bound[i].as_f64().unwrap() + 4.0 * se[i].as_f64().unwrap());
        }
    }
}

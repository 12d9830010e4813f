//! Discrete optimal transport and Gaussian smoothing on `R^d`.
//!
//! [`wasserstein2_sq`] solves the transportation problem exactly with the
//! transportation simplex: north-west-corner start, MODI potentials,
//! stepping-stone cycles and Bland's rule (lowest cell index for both the
//! entering and the leaving cell) so degenerate pivots cannot cycle.
//!
//! The smoothed divergences are Monte-Carlo estimates under Gaussian
//! smoothing `G_γ P = ∫ N(w, γ²I) dP(w)`. Both mixture densities are known in
//! closed form, so the only error is sampling error, reported as a standard
//! error.

use crate::error::{Error, Result};
use crate::numeric::{self, Sum};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::VecDeque;

/// Largest support size accepted by the exact solver.
pub const MAX_EXACT_SUPPORT: usize = 64;

/// Default number of Monte-Carlo samples.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// A finitely supported probability measure on `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCloud", into = "RawCloud")]
pub struct PointCloudMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCloud {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<RawCloud> for PointCloudMeasure {
    type Error = Error;
    fn try_from(r: RawCloud) -> Result<Self> {
        Self::new(r.points, r.weights)
    }
}

impl From<PointCloudMeasure> for RawCloud {
    fn from(m: PointCloudMeasure) -> Self {
        RawCloud { points: m.points, weights: m.weights }
    }
}

impl PointCloudMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("a point cloud needs at least one point".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), found: weights.len() });
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::InvalidInput("points must have dimension ≥ 1".into()));
        }
        for p in &points {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: p.len() });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("point coordinates must be finite".into()));
            }
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput(format!("weight {i} is {}", weights[i])));
        }
        let s = numeric::sum(weights.iter().copied());
        if (s - 1.0).abs() > crate::measures::SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("weights sum to {s}, expected 1")));
        }
        Ok(Self { points, weights })
    }

    /// Point mass at `x`.
    pub fn dirac(x: Vec<f64>) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    /// Equal weights on the given points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let m = points.len().max(1);
        let w = vec![1.0 / m as f64; points.len()];
        Self::from_unnormalized(points, w)
    }

    /// Normalizes positive-sum weights.
    pub fn from_unnormalized(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let s = numeric::sum(weights.iter().copied());
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidInput(format!("weights sum to {s}, cannot normalize")));
        }
        Self::new(points, weights.iter().map(|w| w / s).collect())
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn support_size(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Drops zero weights, merges identical points and sorts the support
    /// lexicographically, so equal measures have equal representations.
    pub fn canonicalize(&self) -> Self {
        let mut items: Vec<(Vec<f64>, f64)> =
            self.points.iter().cloned().zip(self.weights.iter().copied()).filter(|(_, w)| *w > 0.0).collect();
        items.sort_by(|a, b| lex_cmp(&a.0, &b.0));
        let mut out: Vec<(Vec<f64>, f64)> = Vec::with_capacity(items.len());
        for (p, w) in items {
            match out.last_mut() {
                Some((q, v)) if *q == p => *v += w,
                _ => out.push((p, w)),
            }
        }
        let (points, weights) = out.into_iter().unzip();
        Self { points, weights }
    }

    /// Log-density of `G_γ P` at `x`.
    pub fn smoothed_log_density(&self, x: &[f64], gamma: f64) -> f64 {
        let d = self.dim() as f64;
        let inv = 1.0 / (2.0 * gamma * gamma);
        let terms: Vec<f64> = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| if *w > 0.0 { w.ln() - sq_dist(p, x) * inv } else { f64::NEG_INFINITY })
            .collect();
        numeric::log_sum_exp(&terms) - 0.5 * d * (2.0 * std::f64::consts::PI * gamma * gamma).ln()
    }

    /// `∫ f dP`.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        numeric::sum(self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)))
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    numeric::sum(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
}

fn check_same_dim(p: &PointCloudMeasure, q: &PointCloudMeasure) -> Result<()> {
    if p.dim() == q.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() })
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("smoothing level γ must be positive, got {gamma}")))
    }
}

/// Exact squared Wasserstein-2 distance between two point clouds.
pub fn wasserstein2_sq(p: &PointCloudMeasure, q: &PointCloudMeasure) -> Result<f64> {
    check_same_dim(p, q)?;
    for m in [p.support_size(), q.support_size()] {
        if m > MAX_EXACT_SUPPORT {
            return Err(Error::SupportTooLarge { size: m, limit: MAX_EXACT_SUPPORT });
        }
    }
    let (p, q) = (p.canonicalize(), q.canonicalize());
    let cost: Vec<Vec<f64>> = p.points.iter().map(|x| q.points.iter().map(|y| sq_dist(x, y)).collect()).collect();
    Ok(transportation_simplex(&p.weights, &q.weights, &cost)?.max(0.0))
}

/// Minimizes `Σ π_ij c_ij` over couplings of `a` and `b`.
pub fn transportation_simplex(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> Result<f64> {
    let (m, n) = (a.len(), b.len());
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("empty marginal".into()));
    }
    // North-west-corner basis: exactly m + n − 1 cells.
    let mut cells: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);
    let mut flow: Vec<f64> = Vec::with_capacity(m + n - 1);
    let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let x = ra[i].min(rb[j]);
        cells.push((i, j));
        flow.push(x);
        ra[i] -= x;
        rb[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || ra[i] <= rb[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    let scale = cost.iter().flatten().fold(0.0f64, |s, c| s.max(c.abs()));
    let tol = 1e-12 * (1.0 + scale);
    let mut basic = vec![vec![usize::MAX; n]; m];
    for (k, &(r, c)) in cells.iter().enumerate() {
        basic[r][c] = k;
    }
    let max_iter = 50 * (m + n) * (m + n) + 1000;
    for _ in 0..max_iter {
        let (u, v) = potentials(m, n, &cells, cost);
        let mut entering = None;
        'scan: for (r, row) in cost.iter().enumerate() {
            for (c, cij) in row.iter().enumerate() {
                if basic[r][c] == usize::MAX && cij - u[r] - v[c] < -tol {
                    entering = Some((r, c));
                    break 'scan;
                }
            }
        }
        let Some((er, ec)) = entering else {
            let mut s = Sum::new();
            for (k, &(r, c)) in cells.iter().enumerate() {
                s.add(flow[k] * cost[r][c]);
            }
            return Ok(s.value());
        };
        let path = tree_path(m, n, &cells, er, ec);
        // Odd positions along the path from row `er` lose flow.
        let minus: Vec<usize> = path.iter().copied().step_by(2).collect();
        let theta = minus.iter().map(|&k| flow[k]).fold(f64::INFINITY, f64::min);
        let leaving = minus
            .iter()
            .copied()
            .filter(|&k| flow[k] == theta)
            .min_by_key(|&k| cells[k].0 * n + cells[k].1)
            .expect("cycle has a decreasing cell");
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                flow[k] = (flow[k] - theta).max(0.0);
            } else {
                flow[k] += theta;
            }
        }
        let (lr, lc) = cells[leaving];
        basic[lr][lc] = usize::MAX;
        cells[leaving] = (er, ec);
        flow[leaving] = theta;
        basic[er][ec] = leaving;
    }
    Err(Error::Numerical { routine: "transportation_simplex", detail: format!("no convergence after {max_iter} pivots") })
}

fn tree_adjacency(m: usize, n: usize, cells: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); m + n];
    for (k, &(r, c)) in cells.iter().enumerate() {
        adj[r].push((m + c, k));
        adj[m + c].push((r, k));
    }
    adj
}

fn potentials(m: usize, n: usize, cells: &[(usize, usize)], cost: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let adj = tree_adjacency(m, n, cells);
    let mut pot = vec![f64::NAN; m + n];
    pot[0] = 0.0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(x) = queue.pop_front() {
        for &(y, k) in &adj[x] {
            if pot[y].is_nan() {
                let (r, c) = cells[k];
                pot[y] = cost[r][c] - pot[x];
                queue.push_back(y);
            }
        }
    }
    (pot[..m].to_vec(), pot[m..].to_vec())
}

/// Basis cells on the tree path from row `r` to column `c`, in order from `r`.
fn tree_path(m: usize, n: usize, cells: &[(usize, usize)], r: usize, c: usize) -> Vec<usize> {
    let adj = tree_adjacency(m, n, cells);
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n];
    let mut seen = vec![false; m + n];
    seen[r] = true;
    let mut queue = VecDeque::from([r]);
    while let Some(x) = queue.pop_front() {
        if x == m + c {
            break;
        }
        for &(y, k) in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                parent[y] = Some((x, k));
                queue.push_back(y);
            }
        }
    }
    let mut path = Vec::new();
    let mut x = m + c;
    while let Some((px, k)) = parent[x] {
        path.push(k);
        x = px;
    }
    path.reverse();
    path
}

/// A Monte-Carlo estimate with its sampling metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// `n` i.i.d. draws from `G_γ P`.
pub fn smooth_sample(p: &PointCloudMeasure, gamma: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_gamma(gamma)?;
    let mut rng = rng::stream(seed, "transport.smooth_sample", 0);
    let cdf = cumulative(&p.weights);
    Ok((0..n).map(|_| draw_smoothed(p, &cdf, gamma, &mut rng)).collect())
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut s = Sum::new();
    w.iter()
        .map(|x| {
            s.add(*x);
            s.value()
        })
        .collect()
}

fn draw_smoothed<R: Rng>(p: &PointCloudMeasure, cdf: &[f64], gamma: f64, rng: &mut R) -> Vec<f64> {
    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
    let i = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
    p.points[i]
        .iter()
        .map(|x| {
            let z: f64 = rng.sample(StandardNormal);
            x + gamma * z
        })
        .collect()
}

fn estimate(values: &[f64], seed: u64) -> SmoothedEstimate {
    let (value, std_error) = numeric::mean_and_std_error(values);
    SmoothedEstimate { value, std_error, n_samples: values.len(), seed }
}

fn check_samples(n: usize) -> Result<()> {
    if n >= 2 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("need at least 2 Monte-Carlo samples, got {n}")))
    }
}

/// Monte-Carlo estimate of `KL(G_γ P ‖ G_γ P′)` from draws of `G_γ P`.
pub fn smoothed_kl_mc(p: &PointCloudMeasure, q: &PointCloudMeasure, gamma: f64, n: usize, seed: u64) -> Result<SmoothedEstimate> {
    check_same_dim(p, q)?;
    check_samples(n)?;
    let xs = smooth_sample(p, gamma, n, seed)?;
    let vals: Vec<f64> = xs.iter().map(|x| p.smoothed_log_density(x, gamma) - q.smoothed_log_density(x, gamma)).collect();
    Ok(estimate(&vals, seed))
}

/// Monte-Carlo estimate of `½ ∫ |g_P − g_P′|` by importance sampling from
/// the midpoint mixture, where the integrand is `|tanh((log g_P − log g_P′)/2)|`.
pub fn smoothed_tv_mc(p: &PointCloudMeasure, q: &PointCloudMeasure, gamma: f64, n: usize, seed: u64) -> Result<SmoothedEstimate> {
    check_same_dim(p, q)?;
    check_gamma(gamma)?;
    check_samples(n)?;
    let mut rng = rng::stream(seed, "transport.smoothed_tv", 0);
    let (cp, cq) = (cumulative(&p.weights), cumulative(&q.weights));
    let vals: Vec<f64> = (0..n)
        .map(|_| {
            let x = if rng.random::<bool>() { draw_smoothed(p, &cp, gamma, &mut rng) } else { draw_smoothed(q, &cq, gamma, &mut rng) };
            let r = p.smoothed_log_density(&x, gamma) - q.smoothed_log_density(&x, gamma);
            (0.5 * r).tanh().abs()
        })
        .collect();
    Ok(estimate(&vals, seed))
}

/// Derivative bounds `β_j` of a smooth test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeriesCoefficients {
    /// `β_j = β` for every order `j`.
    Constant(f64),
    /// Finitely many orders `β_0, β_1, …`; later orders are zero.
    Sequence(Vec<f64>),
}

/// `Σ_j (γ√d)^j β_j`, `+inf` when the series diverges.
pub fn smoothing_series_bound(betas: &SeriesCoefficients, gamma: f64, d: usize) -> f64 {
    let r = gamma * (d as f64).sqrt();
    match betas {
        SeriesCoefficients::Constant(beta) => {
            if *beta == 0.0 {
                0.0
            } else if r == 0.0 {
                *beta
            } else if r < 1.0 {
                beta / (1.0 - r)
            } else {
                f64::INFINITY
            }
        }
        SeriesCoefficients::Sequence(bs) => {
            let mut s = Sum::new();
            let mut pow = 1.0;
            for b in bs {
                s.add(pow * b);
                pow *= r;
            }
            s.value()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[&[f64]], w: &[f64]) -> PointCloudMeasure {
        PointCloudMeasure::new(points.iter().map(|p| p.to_vec()).collect(), w.to_vec()).unwrap()
    }

    #[test]
    fn w2_examples() {
        let x = PointCloudMeasure::dirac(vec![1.0, 2.0]).unwrap();
        let y = PointCloudMeasure::dirac(vec![4.0, -2.0]).unwrap();
        assert_eq!(wasserstein2_sq(&x, &x).unwrap(), 0.0);
        assert_eq!(wasserstein2_sq(&x, &y).unwrap(), 25.0);
        let a = cloud(&[&[0.0], &[1.0]], &[0.5, 0.5]);
        let b = cloud(&[&[0.0], &[2.0]], &[0.5, 0.5]);
        assert!((wasserstein2_sq(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        // order of support points is irrelevant
        let b2 = cloud(&[&[2.0], &[0.0]], &[0.5, 0.5]);
        assert!((wasserstein2_sq(&a, &b2).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn w2_errors() {
        let x = PointCloudMeasure::dirac(vec![1.0]).unwrap();
        let y = PointCloudMeasure::dirac(vec![1.0, 2.0]).unwrap();
        assert!(matches!(wasserstein2_sq(&x, &y), Err(Error::DimensionMismatch { .. })));
        let big = PointCloudMeasure::uniform((0..65).map(|i| vec![i as f64]).collect()).unwrap();
        assert!(matches!(wasserstein2_sq(&big, &x), Err(Error::SupportTooLarge { size: 65, .. })));
    }

    #[test]
    fn w2_handles_degenerate_bases() {
        // equal marginals force ties in the north-west-corner start
        let a = cloud(&[&[0.0], &[1.0], &[2.0]], &[0.25, 0.25, 0.5]);
        let b = cloud(&[&[2.0], &[1.0], &[0.0]], &[0.25, 0.25, 0.5]);
        // monotone coupling in one dimension is optimal
        // a: 0(.25) 1(.25) 2(.5); b sorted: 0(.5) 1(.25) 2(.25)
        // 0→0 .25, 1→0 .25, 2→1 .25, 2→2 .25 = 0 + .25 + .25 + 0
        assert!((wasserstein2_sq(&a, &b).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn canonicalize_merges_duplicates() {
        let a = cloud(&[&[1.0], &[0.0], &[1.0], &[3.0]], &[0.25, 0.5, 0.25, 0.0]);
        let c = a.canonicalize();
        assert_eq!(c.points(), &[vec![0.0], vec![1.0]]);
        assert_eq!(c.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn smooth_sample_moments_and_determinism() {
        let p = PointCloudMeasure::dirac(vec![0.0, 0.0]).unwrap();
        let gamma = 0.7;
        let n = DEFAULT_SAMPLES;
        let xs = smooth_sample(&p, gamma, n, 11).unwrap();
        for k in 0..2 {
            let col: Vec<f64> = xs.iter().map(|x| x[k]).collect();
            let (mean, _) = numeric::mean_and_std_error(&col);
            assert!(mean.abs() <= 4.0 * gamma * (2.0 / n as f64).sqrt());
            let var = numeric::sum(col.iter().map(|x| (x - mean).powi(2))) / (n - 1) as f64;
            assert!((var / (gamma * gamma) - 1.0).abs() < 0.05);
        }
        assert_eq!(xs, smooth_sample(&p, gamma, n, 11).unwrap());
        assert_ne!(xs, smooth_sample(&p, gamma, n, 12).unwrap());
    }

    #[test]
    fn smoothed_kl_examples() {
        let x = PointCloudMeasure::dirac(vec![0.0]).unwrap();
        let y = PointCloudMeasure::dirac(vec![1.5]).unwrap();
        let gamma = 1.0;
        let e = smoothed_kl_mc(&x, &x, gamma, 20_000, 3).unwrap();
        assert!(e.value.abs() <= 3.0 * e.std_error + 1e-15);
        let e = smoothed_kl_mc(&x, &y, gamma, 20_000, 3).unwrap();
        let exact = 1.5 * 1.5 / (2.0 * gamma * gamma);
        assert!((e.value - exact).abs() <= 3.0 * e.std_error);
        let a = cloud(&[&[0.0], &[1.0]], &[0.3, 0.7]);
        let b = cloud(&[&[0.5], &[2.5]], &[0.6, 0.4]);
        let e = smoothed_kl_mc(&a, &b, 0.5, 20_000, 9).unwrap();
        assert!(e.value <= wasserstein2_sq(&a, &b).unwrap() / (2.0 * 0.25) + 3.0 * e.std_error);
    }

    #[test]
    fn smoothed_tv_examples() {
        let a = cloud(&[&[0.0], &[1.0]], &[0.3, 0.7]);
        let e = smoothed_tv_mc(&a, &a, 0.4, 10_000, 1).unwrap();
        assert!(e.value.abs() <= 3.0 * e.std_error + 1e-15);
        let x = PointCloudMeasure::dirac(vec![0.0]).unwrap();
        let y = PointCloudMeasure::dirac(vec![100.0]).unwrap();
        let e = smoothed_tv_mc(&x, &y, 1.0, 10_000, 1).unwrap();
        assert!((e.value - 1.0).abs() <= 3.0 * e.std_error + 1e-12);
        let b = cloud(&[&[0.5], &[2.5]], &[0.6, 0.4]);
        let tv = smoothed_tv_mc(&a, &b, 0.5, 20_000, 2).unwrap();
        let kl = smoothed_kl_mc(&a, &b, 0.5, 20_000, 2).unwrap();
        let slack = 3.0 * (tv.std_error + kl.std_error / (2.0 * (0.5 * kl.value).sqrt()));
        assert!(tv.value <= (0.5 * kl.value).sqrt() + slack);
    }

    #[test]
    fn series_examples() {
        let d = 4;
        let gamma = 1.0 / (2.0 * (d as f64).sqrt());
        assert_eq!(smoothing_series_bound(&SeriesCoefficients::Constant(1.0), gamma, d), 2.0);
        assert_eq!(smoothing_series_bound(&SeriesCoefficients::Constant(3.0), 0.0, d), 3.0);
        assert_eq!(smoothing_series_bound(&SeriesCoefficients::Sequence(vec![5.0, 1.0, 1.0]), 0.0, d), 5.0);
        assert_eq!(smoothing_series_bound(&SeriesCoefficients::Constant(1.0), 0.5, 4), f64::INFINITY);
        // β_j = 1/j! with γ√d = 2 sums to e²; partial sums converge well before 40 terms
        let mut fact = 1.0;
        let bs: Vec<f64> = (0..40)
            .map(|j| {
                if j > 0 {
                    fact *= j as f64;
                }
                1.0 / fact
            })
            .collect();
        let v = smoothing_series_bound(&SeriesCoefficients::Sequence(bs), 1.0, 4);
        assert!((v - 2f64.exp()).abs() < 1e-12);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(d: usize) -> impl Strategy<Value = PointCloudMeasure> {
        (1usize..6).prop_flat_map(move |m| {
            (prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), m), prop::collection::vec(0.05f64..1.0, m))
                .prop_map(|(pts, w)| PointCloudMeasure::from_unnormalized(pts, w).unwrap())
        })
    }

    proptest! {
        #[test]
        fn w2_is_symmetric_nonnegative_and_zero_on_the_diagonal((p, q) in (1usize..3).prop_flat_map(|d| (cloud(d), cloud(d)))) {
            let a = wasserstein2_sq(&p, &q).unwrap();
            let b = wasserstein2_sq(&q, &p).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
            prop_assert!(wasserstein2_sq(&p, &p).unwrap() <= 1e-12);
        }

        #[test]
        fn w2_bounded_by_independent_coupling((p, q) in (1usize..3).prop_flat_map(|d| (cloud(d), cloud(d)))) {
            let a = wasserstein2_sq(&p, &q).unwrap();
            let mut s = 0.0;
            for (x, wx) in p.points().iter().zip(p.weights()) {
                for (y, wy) in q.points().iter().zip(q.weights()) {
                    s += wx * wy * sq_dist(x, y);
                }
            }
            prop_assert!(a <= s + 1e-12);
        }
    }
}

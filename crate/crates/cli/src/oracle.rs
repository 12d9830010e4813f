//! Reference solver for discrete Wasserstein-2 by vertex enumeration.
//!
//! The optimal coupling of two finite measures is a vertex of the
//! transportation polytope, and every vertex is supported on a spanning tree
//! of the complete bipartite graph between the two supports. Enumerating all
//! spanning trees gives the exact optimum for tiny supports without any
//! pivoting logic, which makes it an independent check of the simplex solver.

use o2pac::transport::PointCloudMeasure;

/// `W₂²(p, q)` by enumerating every spanning-tree coupling.
pub fn w2_sq_by_enumeration(p: &PointCloudMeasure, q: &PointCloudMeasure) -> f64 {
    let a = p.weights();
    let b = q.weights();
    let (m1, m2) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..m1).flat_map(|i| (0..m2).map(move |j| (i, j))).collect();
    let cost = |i: usize, j: usize| -> f64 { p.points()[i].iter().zip(&q.points()[j]).map(|(x, y)| (x - y) * (x - y)).sum() };
    let size = m1 + m2 - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(size);
    subsets(&cells, size, 0, &mut chosen, &mut |tree| {
        if let Some(flows) = tree_flows(a, b, tree) {
            if flows.iter().all(|f| *f >= -1e-14) {
                let c: f64 = tree.iter().zip(&flows).map(|(&(i, j), f)| f.max(0.0) * cost(i, j)).sum();
                best = best.min(c);
            }
        }
    });
    best
}

fn subsets<F: FnMut(&[(usize, usize)])>(cells: &[(usize, usize)], size: usize, start: usize, chosen: &mut Vec<(usize, usize)>, f: &mut F) {
    if chosen.len() == size {
        f(chosen);
        return;
    }
    let need = size - chosen.len();
    for idx in start..=cells.len().saturating_sub(need) {
        chosen.push(cells[idx]);
        subsets(cells, size, idx + 1, chosen, f);
        chosen.pop();
    }
}

/// Flows on a spanning tree that match both marginals, or `None` if the
/// cells do not form a spanning tree.
fn tree_flows(a: &[f64], b: &[f64], tree: &[(usize, usize)]) -> Option<Vec<f64>> {
    let m1 = a.len();
    let nodes = m1 + b.len();
    let mut degree = vec![0usize; nodes];
    for &(i, j) in tree {
        degree[i] += 1;
        degree[m1 + j] += 1;
    }
    if degree.contains(&0) {
        return None;
    }
    let mut residual: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut flows = vec![f64::NAN; tree.len()];
    let mut open = vec![true; tree.len()];
    for _ in 0..tree.len() {
        // a leaf fixes the flow on its only open edge
        let (e, leaf) = tree.iter().enumerate().filter(|(e, _)| open[*e]).find_map(|(e, &(i, j))| {
            if degree[i] == 1 {
                Some((e, i))
            } else if degree[m1 + j] == 1 {
                Some((e, m1 + j))
            } else {
                None
            }
        })?;
        let (i, j) = tree[e];
        let other = if leaf == i { m1 + j } else { i };
        let f = residual[leaf];
        flows[e] = f;
        residual[leaf] = 0.0;
        residual[other] -= f;
        degree[leaf] -= 1;
        degree[other] -= 1;
        open[e] = false;
    }
    let slack: f64 = residual.iter().map(|r| r.abs()).sum();
    (slack < 1e-12).then_some(flows)
}

//! Laplacian views of a graph and the Fiedler pair.

use crate::eigen::{self, Which};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum LaplacianKind {
    /// `Q = D - A`
    Kirchhoff,
    /// `L = D^{-1/2} Q D^{-1/2}`
    Normalized,
    /// `Ł = I - D^{-1} A`
    Generalized,
    /// `Ł^ψ = I - Ψ D^{-1} A`
    GeneralizedWithPrior(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct LaplacianView {
    pub kind: LaplacianKind,
    pub matrix: CsrMatrix,
}

pub fn laplacian(g: &Graph, kind: LaplacianKind) -> Result<LaplacianView> {
    let n = g.order();
    let a = g.adjacency();
    let d = g.degrees();
    let needs_degree = !matches!(kind, LaplacianKind::Kirchhoff);
    if needs_degree {
        if let Some(v) = d.iter().position(|&x| x <= 0.0) {
            return Err(Error::ZeroDegree(v));
        }
    }
    if let LaplacianKind::GeneralizedWithPrior(psi) = &kind {
        if psi.len() != n {
            return Err(Error::InvalidParameter(format!("prior has {} entries for {n} vertices", psi.len())));
        }
    }

    let mut trips = Vec::with_capacity(a.nnz() + n);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        match &kind {
            LaplacianKind::Kirchhoff => {
                // Diagonal from the row itself so that Q·1 vanishes exactly.
                trips.push((i, i, d[i]));
                trips.extend(cols.iter().zip(vals).map(|(&j, &w)| (i, j, -w)));
            }
            LaplacianKind::Normalized => {
                trips.push((i, i, 1.0));
                trips.extend(cols.iter().zip(vals).map(|(&j, &w)| (i, j, -w / (d[i] * d[j]).sqrt())));
            }
            LaplacianKind::Generalized => {
                trips.push((i, i, 1.0));
                trips.extend(cols.iter().zip(vals).map(|(&j, &w)| (i, j, -w / d[i])));
            }
            LaplacianKind::GeneralizedWithPrior(psi) => {
                trips.push((i, i, 1.0));
                trips.extend(cols.iter().zip(vals).map(|(&j, &w)| (i, j, -psi[i] * w / d[i])));
            }
        }
    }
    Ok(LaplacianView { kind, matrix: CsrMatrix::from_triplets(n, n, &trips) })
}

#[derive(Debug, Clone)]
pub struct FiedlerPair {
    /// Second-smallest eigenvalue of `Q` (zero-offset index 1).
    pub value: f64,
    pub vector: Vec<f64>,
    /// False when the graph has more than one component; `value` is then ≈ 0.
    pub connected: bool,
    pub residual: f64,
}

/// Fiedler value and vector of the Kirchhoff Laplacian.
pub fn fiedler(g: &Graph) -> Result<FiedlerPair> {
    let n = g.order();
    if n < 2 {
        return Err(Error::InvalidParameter("Fiedler pair needs at least two vertices".into()));
    }
    let q = laplacian(g, LaplacianKind::Kirchhoff)?.matrix;
    let constant = vec![1.0 / (n as f64).sqrt(); n];
    let pair = eigen::symmetric_extreme(&q, Which::Smallest, 0, Some(&constant))?;
    let connected = g.is_connected();
    if !connected {
        log::warn!("Fiedler pair requested for a disconnected graph (λ₁ = {:.3e})", pair.value);
    }
    Ok(FiedlerPair { value: pair.value, vector: pair.vector, connected, residual: pair.residual })
}

/// Algebraic-connectivity bounds `4/(nD) ≤ λ₁(Q) ≤ n/(n-1)·d_min` for a
/// connected unweighted graph.
pub fn fiedler_bounds(g: &Graph) -> Option<(f64, f64)> {
    let n = g.order() as f64;
    let diameter = g.diameter()? as f64;
    let d_min = g.degrees().iter().copied().fold(f64::INFINITY, f64::min);
    Some((4.0 / (n * diameter), n / (n - 1.0) * d_min))
}

/// Whether every set `{v : x_v + r ≥ 0}` and `{v : x_v − r ≤ 0}`, `r ≥ 0`,
/// induces a connected subgraph. Entries within `1e-9·max|x|` of a
/// threshold count as on it.
pub fn threshold_sets_connected(g: &Graph, x: &[f64]) -> bool {
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = 1e-9 * scale;
    let connected = |keep: &dyn Fn(f64) -> bool| -> bool {
        let members: Vec<usize> = (0..g.order()).filter(|&v| keep(x[v])).collect();
        if members.len() <= 1 {
            return true;
        }
        let mut inside = vec![false; g.order()];
        members.iter().for_each(|&v| inside[v] = true);
        let mut seen = vec![false; g.order()];
        let mut stack = vec![members[0]];
        seen[members[0]] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &w in g.neighbors(u) {
                if inside[w] && !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == members.len()
    };
    let mut radii: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    radii.push(0.0);
    radii.iter().all(|&r| connected(&|v| v + r >= -tol) && connected(&|v| v - r <= tol))
}

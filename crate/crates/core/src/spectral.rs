//! Uncued spectral detectors: modularity eigenvectors and the Fiedler vector.

use serde::{Deserialize, Serialize};

use crate::eigen::{self, SymmetricOperator, Which};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::laplacian;

/// `M = A − V⁻¹ddᵀ`, applied without forming the rank-one term.
pub struct ModularityOperator<'a> {
    graph: &'a Graph,
    volume: f64,
}

impl<'a> ModularityOperator<'a> {
    pub fn new(graph: &'a Graph) -> Result<Self> {
        let volume: f64 = graph.degrees().iter().sum();
        if volume <= 0.0 {
            return Err(Error::Degenerate("modularity of a graph without edges".into()));
        }
        Ok(ModularityOperator { graph, volume })
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }
}

impl SymmetricOperator for ModularityOperator<'_> {
    fn dim(&self) -> usize {
        self.graph.order()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.graph.adjacency().mul_vec_into(x, y);
        let d = self.graph.degrees();
        let dx: f64 = d.iter().zip(x).map(|(a, b)| a * b).sum();
        let c = dx / self.volume;
        for (yi, di) in y.iter_mut().zip(d) {
            *yi -= c * di;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum SpectralScore {
    /// Leading eigenvector of the modularity matrix.
    #[default]
    PrincipalModularity,
    Fiedler,
    /// Eigenvector `k` of the modularity matrix counted from the top (`0` is principal).
    ModularityEigvec(usize),
}

#[derive(Debug, Clone)]
pub struct SpectralOutput {
    pub scores: Vec<f64>,
    pub eigenvalue: f64,
    pub residual: f64,
}

/// Flips `x` so that its largest-magnitude entry (first on ties) is positive.
pub fn fix_sign(x: &mut [f64]) {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    if x.get(best).is_some_and(|&v| v < 0.0) {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

pub fn spectral_scores(g: &Graph, which: SpectralScore) -> Result<SpectralOutput> {
    let (mut scores, eigenvalue, residual) = match which {
        SpectralScore::PrincipalModularity | SpectralScore::ModularityEigvec(_) => {
            let k = match which {
                SpectralScore::ModularityEigvec(k) => k,
                _ => 0,
            };
            let op = ModularityOperator::new(g)?;
            let pair = eigen::symmetric_extreme(&op, Which::Largest, k, None)?;
            (pair.vector, pair.value, pair.residual)
        }
        SpectralScore::Fiedler => {
            let f = laplacian::fiedler(g)?;
            (f.vector, f.value, f.residual)
        }
    };
    fix_sign(&mut scores);
    Ok(SpectralOutput { scores, eigenvalue, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    #[test]
    fn single_edge_modularity() {
        let g = GraphBuilder::new(2).edge(0, 1, 1.0).build().unwrap();
        let op = ModularityOperator::new(&g).unwrap();
        let mut y = [0.0; 2];
        op.apply(&[1.0, 0.0], &mut y);
        assert_eq!(y, [-0.5, 0.5]);
        // Spectrum {0, −1}: the top eigenvalue belongs to the constant vector
        // and (1, −1) sits at the bottom.
        let top = spectral_scores(&g, SpectralScore::PrincipalModularity).unwrap();
        assert!(top.eigenvalue.abs() < 1e-12);
        assert!((top.scores[0] - top.scores[1]).abs() < 1e-12);
        let split = spectral_scores(&g, SpectralScore::ModularityEigvec(1)).unwrap();
        assert!((split.eigenvalue + 1.0).abs() < 1e-12);
        assert!((split.scores[0] + split.scores[1]).abs() < 1e-12);
        assert!((split.scores[0] - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rows_of_modularity_vanish() {
        let g = GraphBuilder::new(4).edge(0, 1, 1.0).edge(1, 2, 3.0).edge(2, 3, 1.0).edge(0, 3, 2.0).build().unwrap();
        let op = ModularityOperator::new(&g).unwrap();
        let mut y = [0.0; 4];
        op.apply(&[1.0; 4], &mut y);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sign_convention_prefers_first_tie() {
        let mut x = [-0.5, 0.5, 0.1];
        fix_sign(&mut x);
        assert_eq!(x, [0.5, -0.5, -0.1]);
    }
}

//! A-priori threat diffusion probabilities `ψ_v`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::observation::ObservationSet;

/// Lower bound applied to every `ψ_v`.
pub const PSI_FLOOR: f64 = 1e-6;

/// Above this order the length-weighted prior uses the Erdős–Rényi
/// closed form instead of exact all-pairs BFS.
pub const EXACT_PATH_LENGTH_LIMIT: usize = 2000;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PriorSpec {
    Uniform { psi: f64 },
    /// Degree-weighted: `ψ_v = 1/d_v`.
    Dwtp,
    /// Length-weighted: `ψ ≡ 2^{-1/l(G)}`.
    Lwtp,
    /// Distance-weighted: `ψ_v = min(1, 1/dist(v, cues))`, 1 on cues.
    Bfs,
}

impl PriorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PriorSpec::Uniform { .. } => "uniform",
            PriorSpec::Dwtp => "dwtp",
            PriorSpec::Lwtp => "lwtp",
            PriorSpec::Bfs => "bfs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPrior {
    pub psi: Vec<f64>,
    /// Set when the length-weighted prior used the closed-form path length.
    pub approximate_path_length: bool,
}

pub fn compute_prior(g: &Graph, spec: PriorSpec, obs: &ObservationSet) -> Result<DiffusionPrior> {
    let n = g.order();
    let floor = |x: f64| x.clamp(PSI_FLOOR, 1.0);
    let mut approximate_path_length = false;
    let psi = match spec {
        PriorSpec::Uniform { psi } => {
            if !(psi > 0.0 && psi <= 1.0) {
                return Err(Error::InvalidParameter(format!("uniform prior {psi} outside (0, 1]")));
            }
            vec![floor(psi); n]
        }
        PriorSpec::Dwtp => {
            if let Some(v) = g.degrees().iter().position(|&d| d <= 0.0) {
                return Err(Error::ZeroDegree(v));
            }
            g.degrees().iter().map(|&d| floor(1.0 / d)).collect()
        }
        PriorSpec::Lwtp => {
            let length = if n > EXACT_PATH_LENGTH_LIMIT {
                approximate_path_length = true;
                er_average_path_length(n)
            } else {
                average_path_length(g)?
            };
            vec![floor(2f64.powf(-1.0 / length)); n]
        }
        PriorSpec::Bfs => {
            obs.check_vertices(n)?;
            let dist = g.bfs_distances(&obs.vertices());
            dist.iter()
                .enumerate()
                .map(|(v, d)| match d {
                    Some(0) => Ok(1.0),
                    Some(k) => Ok(floor(1.0 / *k as f64)),
                    None => Err(Error::DisconnectedFromCue(v)),
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(DiffusionPrior { psi, approximate_path_length })
}

/// Mean hop distance over all unordered vertex pairs.
pub fn average_path_length(g: &Graph) -> Result<f64> {
    let n = g.order();
    if n < 2 {
        return Err(Error::InvalidParameter("average path length needs two vertices".into()));
    }
    let sums: Vec<Option<u64>> = (0..n)
        .into_par_iter()
        .map(|s| g.bfs_distances(&[s]).into_iter().map(|d| d.map(|d| d as u64)).sum::<Option<u64>>())
        .collect();
    let total = sums
        .into_iter()
        .sum::<Option<u64>>()
        .ok_or_else(|| Error::NotConnected("average path length is undefined".into()))?;
    let ordered_pairs = (n * (n - 1)) as f64;
    Ok(total as f64 / ordered_pairs)
}

/// Average path length of an almost-surely connected Erdős–Rényi graph with
/// `p = log(n)/n`: `(log n − γ)/log log n + 1/2`.
pub fn er_average_path_length(n: usize) -> f64 {
    let ln = (n as f64).ln();
    (ln - EULER_GAMMA) / ln.ln() + 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    fn path3() -> Graph {
        GraphBuilder::new(3).edge(0, 1, 1.0).edge(1, 2, 1.0).build().unwrap()
    }

    fn cue(v: usize) -> ObservationSet {
        ObservationSet::ideal(&[(v, 1.0)]).unwrap()
    }

    #[test]
    fn dwtp_on_path() {
        let p = compute_prior(&path3(), PriorSpec::Dwtp, &cue(2)).unwrap();
        assert_eq!(p.psi, vec![1.0, 0.5, 1.0]);
    }

    #[test]
    fn lwtp_on_complete_graph_is_one_half() {
        let g = GraphBuilder::new(4)
            .edge(0, 1, 1.0)
            .edge(0, 2, 1.0)
            .edge(0, 3, 1.0)
            .edge(1, 2, 1.0)
            .edge(1, 3, 1.0)
            .edge(2, 3, 1.0)
            .build()
            .unwrap();
        assert_eq!(average_path_length(&g).unwrap(), 1.0);
        let p = compute_prior(&g, PriorSpec::Lwtp, &cue(0)).unwrap();
        assert_eq!(p.psi, vec![0.5; 4]);
        assert!(!p.approximate_path_length);
    }

    #[test]
    fn average_path_lengths_match_enumeration() {
        assert!((average_path_length(&path3()).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let star = GraphBuilder::new(4).edge(0, 1, 1.0).edge(0, 2, 1.0).edge(0, 3, 1.0).build().unwrap();
        assert!((average_path_length(&star).unwrap() - 1.5).abs() < 1e-15);
        let split = GraphBuilder::new(4).edge(0, 1, 1.0).edge(2, 3, 1.0).build().unwrap();
        assert!(average_path_length(&split).is_err());
    }

    #[test]
    fn er_closed_form_at_n_1000() {
        let ln = 1000f64.ln();
        let expected = (ln - 0.5772) / ln.ln() + 0.5;
        assert!((er_average_path_length(1000) - expected).abs() < 1e-4);
    }

    #[test]
    fn bfs_prior_decays_with_distance() {
        let g = GraphBuilder::new(4).edge(0, 1, 1.0).edge(1, 2, 1.0).edge(2, 3, 1.0).build().unwrap();
        let p = compute_prior(&g, PriorSpec::Bfs, &cue(0)).unwrap();
        assert_eq!(p.psi, vec![1.0, 1.0, 0.5, 1.0 / 3.0]);
        let split = GraphBuilder::new(3).edge(0, 1, 1.0).build().unwrap();
        assert!(matches!(
            compute_prior(&split, PriorSpec::Bfs, &cue(0)),
            Err(Error::DisconnectedFromCue(2))
        ));
    }

    #[test]
    fn uniform_prior_validates_range() {
        assert!(compute_prior(&path3(), PriorSpec::Uniform { psi: 0.0 }, &cue(0)).is_err());
        assert!(compute_prior(&path3(), PriorSpec::Uniform { psi: 1.2 }, &cue(0)).is_err());
        assert_eq!(compute_prior(&path3(), PriorSpec::Uniform { psi: 0.3 }, &cue(0)).unwrap().psi, vec![0.3; 3]);
    }
}

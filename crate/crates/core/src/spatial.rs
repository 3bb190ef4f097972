//! Spatial threat propagation: the harmonic boundary-value problem
//! `Ł^ψ_ii ϑ_i = −Ł^ψ_ib ϑ_b` and the absorbing random walk behind it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linsolve::{self, SolveStats, SolverOptions};
use crate::observation::ObservationSet;
use crate::rng;
use crate::sparse::CsrMatrix;

/// Clamping beyond this amount is logged as a warning.
pub const CLAMP_WARN: f64 = 1e-6;

/// Walks longer than this are stopped and scored as absorbed to non-threat.
pub const MAX_WALK_STEPS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Interior(usize),
    Boundary(usize),
}

fn validate_psi(psi: &[f64], n: usize) -> Result<()> {
    if psi.len() != n {
        return Err(Error::InvalidParameter(format!("prior has {} entries for {n} vertices", psi.len())));
    }
    if let Some((v, p)) = psi.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::InvalidParameter(format!("ψ at vertex {v} is {p}, outside (0, 1]")));
    }
    Ok(())
}

/// Boundary vertices and values, validated against the graph.
fn boundary_of(g: &Graph, obs: &ObservationSet) -> Result<(Vec<usize>, Vec<f64>)> {
    obs.check_vertices(g.order())?;
    obs.require_distinct_vertices()?;
    Ok((obs.vertices(), obs.boundary_values()?))
}

/// Vertices from which a walk along out-edges can reach `targets`.
fn reaching(adjacency: &CsrMatrix, targets: &[usize]) -> Vec<bool> {
    let reverse = adjacency.transpose();
    let mut seen = vec![false; adjacency.nrows()];
    let mut stack: Vec<usize> = targets.to_vec();
    for &t in targets {
        seen[t] = true;
    }
    while let Some(x) = stack.pop() {
        for &y in reverse.row(x).0 {
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen
}

/// The permuted block system with the boundary vertices trailing.
#[derive(Debug, Clone)]
pub struct HarmonicSystem {
    n: usize,
    slots: Vec<Slot>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    boundary_values: Vec<f64>,
    /// `ΨD⁻¹A` restricted to interior rows and columns.
    p_ii: CsrMatrix,
    /// `ΨD⁻¹A` interior rows times the boundary values, i.e. `−Ł^ψ_ib ϑ_b`.
    rhs: Vec<f64>,
}

impl HarmonicSystem {
    pub fn new(g: &Graph, psi: &[f64], obs: &ObservationSet) -> Result<Self> {
        let n = g.order();
        validate_psi(psi, n)?;
        let (boundary, boundary_values) = boundary_of(g, obs)?;

        let mut slots = vec![Slot::Interior(usize::MAX); n];
        for (j, &b) in boundary.iter().enumerate() {
            slots[b] = Slot::Boundary(j);
        }
        let mut interior = Vec::with_capacity(n - boundary.len());
        for (v, slot) in slots.iter_mut().enumerate() {
            if let Slot::Interior(i) = slot {
                *i = interior.len();
                interior.push(v);
            }
        }

        let a = g.adjacency();
        let reach = reaching(a, &boundary);
        if let Some(v) = reach.iter().position(|&r| !r) {
            return Err(Error::NotConnected(format!("vertex {v} cannot reach an observed vertex")));
        }

        let mut trips = Vec::new();
        let mut rhs = vec![0.0; interior.len()];
        for (i, &v) in interior.iter().enumerate() {
            let d = g.degree(v);
            if d <= 0.0 {
                return Err(Error::ZeroDegree(v));
            }
            let (cols, vals) = a.row(v);
            for (&u, &w) in cols.iter().zip(vals) {
                let t = psi[v] * w / d;
                match slots[u] {
                    Slot::Interior(k) => trips.push((i, k, t)),
                    Slot::Boundary(j) => rhs[i] += t * boundary_values[j],
                }
            }
        }
        let m = interior.len();
        Ok(HarmonicSystem {
            n,
            slots,
            interior,
            boundary,
            boundary_values,
            p_ii: CsrMatrix::from_triplets(m, m, &trips),
            rhs,
        })
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// Reverses the sign of the interior-boundary coupling. Only useful to
    /// check that validation notices a broken operator.
    pub fn flip_boundary_coupling(&mut self) {
        self.rhs.iter_mut().for_each(|x| *x = -*x);
    }

    /// Unclamped solution over all vertices.
    pub fn solve_raw(&self, opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
        let (x, stats) = linsolve::solve_fixed_point(&self.p_ii, &self.rhs, opts)?;
        let theta = (0..self.n)
            .map(|v| match self.slots[v] {
                Slot::Interior(i) => x[i],
                Slot::Boundary(j) => self.boundary_values[j],
            })
            .collect();
        Ok((theta, stats))
    }
}

#[derive(Debug, Clone)]
pub struct ThreatVector {
    pub theta: Vec<f64>,
    pub stats: SolveStats,
    /// Largest amount any entry moved when clamped to `[0, 1]`.
    pub clamped_by: f64,
}

pub fn solve_harmonic(g: &Graph, psi: &[f64], obs: &ObservationSet, opts: &SolverOptions) -> Result<ThreatVector> {
    let system = HarmonicSystem::new(g, psi, obs)?;
    let (theta, stats) = system.solve_raw(opts)?;
    Ok(clamp_unit(theta, stats))
}

pub(crate) fn clamp_unit(mut theta: Vec<f64>, stats: SolveStats) -> ThreatVector {
    let mut clamped_by: f64 = 0.0;
    for x in &mut theta {
        let c = x.clamp(0.0, 1.0);
        clamped_by = clamped_by.max((c - *x).abs());
        *x = c;
    }
    if clamped_by > CLAMP_WARN {
        log::warn!("threat values clamped by up to {clamped_by:.3e}; the system may be ill-conditioned");
    }
    ThreatVector { theta, stats, clamped_by }
}

/// Absorbing random walk on `interior ∪ boundary ∪ {non-threat}`.
#[derive(Debug, Clone)]
pub struct AbsorbingChain {
    n: usize,
    psi: Vec<f64>,
    /// Row-normalised transition weights `D⁻¹A`.
    step: CsrMatrix,
    /// Running sums of each row of `step`, for sampling; row `v` occupies
    /// `offsets[v]..offsets[v + 1]`.
    cumulative: Vec<f64>,
    offsets: Vec<usize>,
    slots: Vec<Slot>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    boundary_values: Vec<f64>,
}

impl AbsorbingChain {
    pub fn new(g: &Graph, psi: &[f64], obs: &ObservationSet) -> Result<Self> {
        let n = g.order();
        validate_psi(psi, n)?;
        let (boundary, boundary_values) = boundary_of(g, obs)?;
        let mut slots = vec![Slot::Interior(usize::MAX); n];
        for (j, &b) in boundary.iter().enumerate() {
            slots[b] = Slot::Boundary(j);
        }
        let mut interior = Vec::new();
        for (v, slot) in slots.iter_mut().enumerate() {
            if let Slot::Interior(i) = slot {
                *i = interior.len();
                interior.push(v);
            }
        }
        for &v in &interior {
            if g.degree(v) <= 0.0 {
                return Err(Error::ZeroDegree(v));
            }
        }
        let mut step = g.adjacency().clone();
        let inv: Vec<f64> = g.degrees().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
        step.scale_rows(&inv);
        let mut cumulative = Vec::with_capacity(step.nnz());
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for v in 0..n {
            let mut acc = 0.0;
            for &w in step.row(v).1 {
                acc += w;
                cumulative.push(acc);
            }
            offsets.push(cumulative.len());
        }
        Ok(AbsorbingChain { n, psi: psi.to_vec(), step, cumulative, offsets, slots, interior, boundary, boundary_values })
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// Number of absorbing states: observed vertices plus non-threat.
    pub fn absorbing_states(&self) -> usize {
        self.boundary.len() + 1
    }

    /// Interior blocks `(G, H, 1 − ψ_i)`.
    pub fn blocks(&self) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let m = self.interior.len();
        let c = self.boundary.len();
        let mut gm = DMatrix::zeros(m, m);
        let mut hm = DMatrix::zeros(m, c);
        let mut absorb = DVector::zeros(m);
        for (i, &v) in self.interior.iter().enumerate() {
            let (cols, vals) = self.step.row(v);
            for (&u, &t) in cols.iter().zip(vals) {
                match self.slots[u] {
                    Slot::Interior(k) => gm[(i, k)] += self.psi[v] * t,
                    Slot::Boundary(j) => hm[(i, j)] += self.psi[v] * t,
                }
            }
            absorb[i] = 1.0 - self.psi[v];
        }
        (gm, hm, absorb)
    }

    /// `T = [[G, H, 1−ψ], [0, I, 0], [0, 0, 1]]` in the order
    /// interior, observed, non-threat.
    pub fn transition_dense(&self) -> DMatrix<f64> {
        let (gm, hm, absorb) = self.blocks();
        let m = gm.nrows();
        let c = hm.ncols();
        let mut t = DMatrix::zeros(m + c + 1, m + c + 1);
        t.view_mut((0, 0), (m, m)).copy_from(&gm);
        t.view_mut((0, m), (m, c)).copy_from(&hm);
        t.view_mut((0, m + c), (m, 1)).copy_from(&absorb);
        for k in m..m + c + 1 {
            t[(k, k)] = 1.0;
        }
        t
    }

    /// `E = [(I − Q)⁻¹R; I_r]` with `Q = G` and `R = [H, 1−ψ]`, whose
    /// columns span the right eigenspace of `T` for eigenvalue 1.
    pub fn invariant_basis(&self) -> Result<DMatrix<f64>> {
        let (gm, hm, absorb) = self.blocks();
        let m = gm.nrows();
        let r = self.absorbing_states();
        let mut rm = DMatrix::zeros(m, r);
        rm.view_mut((0, 0), (m, r - 1)).copy_from(&hm);
        rm.set_column(r - 1, &absorb);
        let top = solve_i_minus(&gm, &rm)?;
        let mut e = DMatrix::zeros(m + r, r);
        e.view_mut((0, 0), (m, r)).copy_from(&top);
        e.view_mut((m, 0), (r, r)).fill_with_identity();
        Ok(e)
    }

    /// Hitting probabilities `U = (I − G)⁻¹H` from interior to observed vertices.
    pub fn hitting_matrix(&self) -> Result<DMatrix<f64>> {
        let (gm, hm, _) = self.blocks();
        solve_i_minus(&gm, &hm)
    }

    /// `U·ϑ_b` on the interior, boundary values on the boundary.
    pub fn exact_threat(&self) -> Result<Vec<f64>> {
        let u = self.hitting_matrix()?;
        let interior = &u * DVector::from_column_slice(&self.boundary_values);
        Ok((0..self.n)
            .map(|v| match self.slots[v] {
                Slot::Interior(i) => interior[i],
                Slot::Boundary(j) => self.boundary_values[j],
            })
            .collect())
    }

    /// Largest eigenvalue modulus of `G`.
    pub fn interior_spectral_radius(&self) -> f64 {
        let (gm, _, _) = self.blocks();
        if gm.nrows() == 0 {
            return 0.0;
        }
        gm.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Observed vertex (by boundary position) where a walk from `start`
    /// ends, `None` for the non-threat state, and whether it hit the step cap.
    fn walk<R: Rng>(&self, start: usize, rng: &mut R) -> (Option<usize>, bool) {
        let mut x = start;
        let mut steps = 0u64;
        loop {
            match self.slots[x] {
                Slot::Boundary(j) => return (Some(j), false),
                Slot::Interior(_) => {}
            }
            if steps == MAX_WALK_STEPS {
                return (None, true);
            }
            steps += 1;
            if rng.random::<f64>() >= self.psi[x] {
                return (None, false);
            }
            let (cols, _) = self.step.row(x);
            let sums = &self.cumulative[self.offsets[x]..self.offsets[x + 1]];
            let total = *sums.last().expect("interior vertex has neighbours");
            let u = rng.random::<f64>() * total;
            let k = sums.partition_point(|&s| s <= u).min(cols.len() - 1);
            x = cols[k];
        }
    }

}

fn solve_i_minus(gm: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = gm.nrows();
    if m == 0 {
        return Ok(DMatrix::zeros(0, rhs.ncols()));
    }
    let lu = (DMatrix::identity(m, m) - gm).lu();
    lu.solve(rhs).ok_or_else(|| Error::Degenerate("I − G is singular".into()))
}

#[derive(Debug, Clone)]
pub struct MonteCarloEstimate {
    pub theta: Vec<f64>,
    /// Standard error of each vertex's mean.
    pub std_err: Vec<f64>,
    /// Walks stopped at the step cap.
    pub capped: u64,
}

/// Mean terminal value of `walks` independent walks from every vertex.
/// Walk `k` from vertex `v` draws from its own stream keyed by
/// `(seed, v, k)`, so results do not depend on scheduling.
pub fn monte_carlo_threat(chain: &AbsorbingChain, walks: usize, seed: u64) -> Result<MonteCarloEstimate> {
    if walks == 0 {
        return Err(Error::InvalidParameter("need at least one walk per vertex".into()));
    }
    let per_vertex: Vec<(f64, f64, u64)> = (0..chain.n)
        .into_par_iter()
        .map(|v| {
            if let Slot::Boundary(j) = chain.slots[v] {
                return (chain.boundary_values[j], 0.0, 0);
            }
            let mut hits = vec![0u64; chain.boundary.len()];
            let mut capped = 0u64;
            for k in 0..walks {
                let mut r = rng::stream(seed, rng::domain::WALK, v as u64, k as u64);
                let (end, hit_cap) = chain.walk(v, &mut r);
                if let Some(j) = end {
                    hits[j] += 1;
                }
                capped += u64::from(hit_cap);
            }
            // Terminal values take at most C + 1 distinct values, so moments
            // come straight from the hit frequencies.
            let k = walks as f64;
            let (mut mean, mut second) = (0.0, 0.0);
            for (&h, &value) in hits.iter().zip(&chain.boundary_values) {
                let f = h as f64 / k;
                mean += f * value;
                second += f * value * value;
            }
            let var = if walks > 1 { ((second - mean * mean) * k / (k - 1.0)).max(0.0) } else { 0.0 };
            (mean, (var / k).sqrt(), capped)
        })
        .collect();
    let capped = per_vertex.iter().map(|p| p.2).sum();
    if capped > 0 {
        log::warn!("{capped} walks reached the {MAX_WALK_STEPS}-step cap");
    }
    Ok(MonteCarloEstimate {
        theta: per_vertex.iter().map(|p| p.0).collect(),
        std_err: per_vertex.iter().map(|p| p.1).collect(),
        capped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    fn path3() -> Graph {
        GraphBuilder::new(3).edge(0, 1, 1.0).edge(1, 2, 1.0).build().unwrap()
    }

    fn cue(v: usize, p: f64) -> ObservationSet {
        ObservationSet::ideal(&[(v, p)]).unwrap()
    }

    #[test]
    fn path_with_degree_prior() {
        let psi = [1.0, 0.5, 1.0];
        let t = solve_harmonic(&path3(), &psi, &cue(2, 1.0), &SolverOptions::default()).unwrap();
        for (got, want) in t.theta.iter().zip([1.0 / 3.0, 1.0 / 3.0, 1.0]) {
            assert!((got - want).abs() < 1e-10);
        }
        let chain = AbsorbingChain::new(&path3(), &psi, &cue(2, 1.0)).unwrap();
        let exact = chain.exact_threat().unwrap();
        assert!((exact[0] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn unit_prior_spreads_boundary_value() {
        let t = solve_harmonic(&path3(), &[1.0; 3], &cue(2, 0.3), &SolverOptions::default()).unwrap();
        assert!(t.theta.iter().all(|x| (x - 0.3).abs() < 1e-10));
        let chain = AbsorbingChain::new(&path3(), &[1.0; 3], &cue(2, 0.3)).unwrap();
        let mc = monte_carlo_threat(&chain, 50, 9).unwrap();
        assert_eq!(mc.theta, vec![0.3; 3]);
    }

    #[test]
    fn single_interior_vertex_chain() {
        let g = GraphBuilder::new(2).edge(0, 1, 1.0).build().unwrap();
        let chain = AbsorbingChain::new(&g, &[0.5, 1.0], &cue(1, 1.0)).unwrap();
        let t = chain.transition_dense();
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.5, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(t, expected);
        assert_eq!(chain.hitting_matrix().unwrap()[(0, 0)], 0.5);
        let e = chain.invariant_basis().unwrap();
        assert!((&t * &e - &e).amax() < 1e-15);
    }

    #[test]
    fn unreachable_vertex_is_an_error() {
        let g = GraphBuilder::new(4).edge(0, 1, 1.0).edge(2, 3, 1.0).build().unwrap();
        assert!(matches!(
            solve_harmonic(&g, &[1.0; 4], &cue(0, 1.0), &SolverOptions::default()),
            Err(Error::NotConnected(_))
        ));
    }

    #[test]
    fn walk_streams_are_reproducible() {
        let psi = [1.0, 0.5, 1.0];
        let chain = AbsorbingChain::new(&path3(), &psi, &cue(2, 1.0)).unwrap();
        let a = monte_carlo_threat(&chain, 2000, 5).unwrap();
        let b = monte_carlo_threat(&chain, 2000, 5).unwrap();
        assert_eq!(a.theta, b.theta);
        assert!((a.theta[1] - 1.0 / 3.0).abs() < 4.0 * a.std_err[1]);
    }
}

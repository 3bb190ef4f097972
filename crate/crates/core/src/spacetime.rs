//! Space-time threat propagation on the graph `V × T` of vertices and
//! discretised times.
//!
//! Space-time vertex `(v, k)` has index `v·#T + k`. An interaction between
//! `u` and `v` stamped `(t_u, t_v)` adds, in kernel mode, the column
//! `K_u(t_k − t_u)` over rows `(u, ·)` at column `(v, bin(t_v))`, and the
//! mirror image for undirected graphs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linsolve::{self, SolveStats, SolverOptions};
use crate::observation::ObservationSet;
use crate::sparse::CsrMatrix;

/// Kernel values below this are dropped from the adjacency.
pub const KERNEL_CUTOFF: f64 = 1e-4;

/// Bin count used by [`default_grid`] never exceeds this.
pub const MAX_DEFAULT_BINS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub bins: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, bins: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::InvalidParameter(format!("time grid needs finite t0 and dt > 0, got {t0}, {dt}")));
        }
        if bins == 0 {
            return Err(Error::InvalidParameter("time grid needs at least one bin".into()));
        }
        Ok(TimeGrid { t0, dt, bins })
    }

    /// `bins` equal bins whose union contains the closed interval `[lo, hi]`.
    pub fn spanning(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        let span = hi - lo;
        let dt = if span > 0.0 { span / bins.max(1) as f64 * (1.0 + 1e-9) } else { 1.0 };
        Self::new(lo, dt, bins)
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.bins as f64 * self.dt
    }

    /// Bin containing `t`, i.e. the bin with the nearest centre.
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0) / self.dt).floor();
        (k >= 0.0 && k < self.bins as f64).then_some(k as usize)
    }

    pub fn center(&self, k: usize) -> f64 {
        self.t0 + (k as f64 + 0.5) * self.dt
    }
}

/// How an interaction couples the time axes of its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    /// Exponential kernel around the interaction's timestamps.
    #[default]
    Kernel,
    /// Same-bin coupling `A_uv = I`.
    Instant,
    /// Every bin to every bin, `A_uv = (#T)⁻¹·11ᵀ`.
    Clique,
}

/// `K(t) = e^{−λ|t|}`
pub fn kernel(rate: f64, t: f64) -> f64 {
    (-rate * t.abs()).exp()
}

#[derive(Debug, Clone)]
pub struct SpaceTimeSystem {
    n: usize,
    grid: TimeGrid,
    rates: Vec<f64>,
    adjacency: CsrMatrix,
    spatial_degree: Vec<f64>,
}

/// Assembles the weighted space-time adjacency. `rates` and `modes` hold
/// either one entry applied everywhere or one entry per vertex / interaction.
pub fn assemble_spacetime(g: &Graph, grid: TimeGrid, rates: &[f64], modes: &[EdgeMode]) -> Result<SpaceTimeSystem> {
    let n = g.order();
    let edges = g.edges();
    let rates: Vec<f64> = match rates.len() {
        1 => vec![rates[0]; n],
        len if len == n => rates.to_vec(),
        len => return Err(Error::InvalidParameter(format!("{len} kernel rates for {n} vertices"))),
    };
    if let Some(r) = rates.iter().find(|&&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidParameter(format!("kernel rate {r} must be positive")));
    }
    let mode_of = |k: usize| -> Result<EdgeMode> {
        match modes.len() {
            1 => Ok(modes[0]),
            len if len == edges.len() => Ok(modes[k]),
            len => Err(Error::InvalidParameter(format!("{len} edge modes for {} interactions", edges.len()))),
        }
    };

    let nbins = grid.bins;
    // Kernel values by lag in bins, per vertex, truncated at the cutoff.
    let lag_tables: Vec<Vec<f64>> = rates
        .iter()
        .map(|&rate| (0..nbins).map(|lag| kernel(rate, lag as f64 * grid.dt)).take_while(|&k| k >= KERNEL_CUTOFF).collect())
        .collect();

    let per_edge: Vec<Vec<(usize, usize, f64)>> = edges
        .par_iter()
        .enumerate()
        .map(|(k, e)| -> Result<Vec<(usize, usize, f64)>> {
            let mode = mode_of(k)?;
            let mut trips = Vec::new();
            let mut couple = |from: usize, to: usize, bins: Option<(usize, usize)>| match mode {
                EdgeMode::Kernel => {
                    let (b_from, b_to) = bins.expect("kernel mode has timestamps");
                    let col = to * nbins + b_to;
                    let table = &lag_tables[from];
                    let lo = b_from.saturating_sub(table.len() - 1);
                    let hi = (b_from + table.len()).min(nbins);
                    for row_bin in lo..hi {
                        trips.push((from * nbins + row_bin, col, e.weight * table[row_bin.abs_diff(b_from)]));
                    }
                }
                EdgeMode::Instant => {
                    for b in 0..nbins {
                        trips.push((from * nbins + b, to * nbins + b, e.weight));
                    }
                }
                EdgeMode::Clique => {
                    let w = e.weight / nbins as f64;
                    for a in 0..nbins {
                        for b in 0..nbins {
                            trips.push((from * nbins + a, to * nbins + b, w));
                        }
                    }
                }
            };
            let bins = match (mode, e.times) {
                (EdgeMode::Kernel, None) => return Err(Error::MissingTimestamp(k)),
                (EdgeMode::Kernel, Some((tu, tv))) => {
                    let locate = |t: f64| {
                        grid.bin_of(t).ok_or(Error::TimestampOutsideGrid { edge: k, time: t, start: grid.t0, end: grid.end() })
                    };
                    Some((locate(tu)?, locate(tv)?))
                }
                _ => None,
            };
            couple(e.u, e.v, bins);
            if !g.is_directed() && e.u != e.v {
                couple(e.v, e.u, bins.map(|(a, b)| (b, a)));
            }
            Ok(trips)
        })
        .collect::<Result<_>>()?;

    let trips: Vec<_> = per_edge.into_iter().flatten().collect();
    let size = n * nbins;
    Ok(SpaceTimeSystem {
        n,
        grid,
        rates,
        adjacency: CsrMatrix::from_triplets(size, size, &trips),
        spatial_degree: g.degrees().to_vec(),
    })
}

impl SpaceTimeSystem {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn index(&self, v: usize, k: usize) -> usize {
        v * self.grid.bins + k
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    /// Total interaction weight at each spatial vertex.
    pub fn spatial_degree(&self) -> &[f64] {
        &self.spatial_degree
    }

    /// `ψ_v(t_k) = d_v⁻¹ Σ_{u,l} k_{vu;kl}`, clamped to 1. Returns the prior
    /// and the number of entries that needed clamping.
    pub fn coordination_prior(&self) -> Result<(Vec<f64>, usize)> {
        if let Some(v) = self.spatial_degree.iter().position(|&d| d <= 0.0) {
            return Err(Error::ZeroDegree(v));
        }
        let mut clamped = 0;
        let psi = (0..self.adjacency.nrows())
            .map(|i| {
                let raw = self.adjacency.row_sum(i) / self.spatial_degree[i / self.grid.bins];
                if raw > 1.0 {
                    clamped += 1;
                }
                raw.min(1.0)
            })
            .collect();
        if clamped > 0 {
            log::info!("coordination prior clamped to 1 at {clamped} space-time vertices");
        }
        Ok((psi, clamped))
    }

    /// Row scaling `s` such that the transition operator is `Diag(s)·A`.
    fn row_scale(&self, variant: &SpaceTimeVariant) -> Result<Vec<f64>> {
        let size = self.adjacency.nrows();
        let nbins = self.grid.bins;
        let row_sums: Vec<f64> = (0..size).map(|i| self.adjacency.row_sum(i)).collect();
        let inverse = |x: f64| if x > 0.0 { 1.0 / x } else { 0.0 };
        match variant {
            SpaceTimeVariant::Weighted { psi } => {
                if !(*psi > 0.0 && *psi <= 1.0) {
                    return Err(Error::InvalidParameter(format!("uniform prior {psi} outside (0, 1]")));
                }
                Ok(row_sums.iter().map(|&w| psi * inverse(w)).collect())
            }
            SpaceTimeVariant::Coordinated | SpaceTimeVariant::CoordinatedSpatialPrior(_) => {
                if let Some(v) = self.spatial_degree.iter().position(|&d| d <= 0.0) {
                    return Err(Error::ZeroDegree(v));
                }
                let spatial = match variant {
                    SpaceTimeVariant::CoordinatedSpatialPrior(p) => {
                        if p.len() != self.n {
                            return Err(Error::InvalidParameter(format!(
                                "spatial prior has {} entries for {} vertices",
                                p.len(),
                                self.n
                            )));
                        }
                        p.clone()
                    }
                    _ => vec![1.0; self.n],
                };
                // Rows whose coordination prior would exceed 1 are capped at 1.
                Ok((0..size)
                    .map(|i| {
                        let v = i / nbins;
                        spatial[v] * (1.0 / self.spatial_degree[v]).min(inverse(row_sums[i]))
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceTimeVariant {
    /// `ϑ = ΨW⁻¹Aϑ` with a uniform prior.
    Weighted { psi: f64 },
    /// `ϑ = D⁻¹Aϑ`: the coordination prior.
    Coordinated,
    /// `ϑ = Ψ′D⁻¹Aϑ` with a per-vertex spatial prior.
    CoordinatedSpatialPrior(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SpaceTimeThreat {
    pub bins: usize,
    /// Indexed by `v·#T + k`.
    pub theta: Vec<f64>,
    pub stats: SolveStats,
    /// Space-time vertices with no path to an observation; their threat is 0.
    pub unreachable: usize,
    pub clamped_by: f64,
}

impl SpaceTimeThreat {
    pub fn at(&self, v: usize, k: usize) -> f64 {
        self.theta[v * self.bins + k]
    }
}

/// Boundary indices and values in space-time. Untimed observations cover
/// every bin of their vertex.
fn spacetime_boundary(sys: &SpaceTimeSystem, obs: &ObservationSet) -> Result<(Vec<usize>, Vec<f64>)> {
    obs.check_vertices(sys.n)?;
    let values = obs.boundary_values()?;
    let mut seen = vec![false; sys.adjacency.nrows()];
    let mut idx = Vec::new();
    let mut vals = Vec::new();
    for (o, &p) in obs.entries().iter().zip(&values) {
        let bins: Vec<usize> = match o.time {
            None => (0..sys.grid.bins).collect(),
            Some(t) => vec![sys.grid.bin_of(t).ok_or_else(|| {
                Error::InvalidObservation(format!(
                    "observation at vertex {} time {t} outside [{}, {})",
                    o.vertex,
                    sys.grid.t0,
                    sys.grid.end()
                ))
            })?],
        };
        for k in bins {
            let i = sys.index(o.vertex, k);
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidObservation(format!("vertex {} observed twice in bin {k}", o.vertex)));
            }
            idx.push(i);
            vals.push(p);
        }
    }
    Ok((idx, vals))
}

/// Solves `ϑ = Pϑ` off the boundary for a substochastic `P`. Unknowns that
/// cannot reach the boundary along nonzeros of `P` are set to zero.
fn solve_with_boundary(
    p: &CsrMatrix,
    boundary: &[usize],
    values: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats, usize)> {
    let size = p.nrows();
    let reverse = p.transpose();
    let mut reach = vec![false; size];
    let mut stack = boundary.to_vec();
    for &b in boundary {
        reach[b] = true;
    }
    while let Some(x) = stack.pop() {
        for &y in reverse.row(x).0 {
            if !reach[y] {
                reach[y] = true;
                stack.push(y);
            }
        }
    }
    let mut fixed = vec![None; size];
    for (&b, &val) in boundary.iter().zip(values) {
        fixed[b] = Some(val);
    }
    let mut local = vec![usize::MAX; size];
    let mut unknowns = Vec::new();
    for i in 0..size {
        if reach[i] && fixed[i].is_none() {
            local[i] = unknowns.len();
            unknowns.push(i);
        }
    }
    let unreachable = reach.iter().filter(|&&r| !r).count();

    let mut trips = Vec::new();
    let mut rhs = vec![0.0; unknowns.len()];
    for (a, &i) in unknowns.iter().enumerate() {
        let (cols, vals) = p.row(i);
        for (&j, &w) in cols.iter().zip(vals) {
            if let Some(val) = fixed[j] {
                rhs[a] += w * val;
            } else if local[j] != usize::MAX {
                trips.push((a, local[j], w));
            }
        }
    }
    let m = unknowns.len();
    let (x, stats) = linsolve::solve_fixed_point(&CsrMatrix::from_triplets(m, m, &trips), &rhs, opts)?;
    let mut theta = vec![0.0; size];
    for (i, f) in fixed.iter().enumerate() {
        if let Some(val) = f {
            theta[i] = *val;
        }
    }
    for (a, &i) in unknowns.iter().enumerate() {
        theta[i] = x[a];
    }
    Ok((theta, stats, unreachable))
}

pub fn solve_spacetime(
    sys: &SpaceTimeSystem,
    obs: &ObservationSet,
    variant: &SpaceTimeVariant,
    opts: &SolverOptions,
) -> Result<SpaceTimeThreat> {
    let (boundary, values) = spacetime_boundary(sys, obs)?;
    let scale = sys.row_scale(variant)?;
    let mut p = sys.adjacency.clone();
    p.scale_rows(&scale);
    let (theta, stats, unreachable) = solve_with_boundary(&p, &boundary, &values, opts)?;
    if unreachable > 0 {
        log::debug!("{unreachable} space-time vertices cannot reach an observation");
    }
    let clamped = crate::spatial::clamp_unit(theta, stats);
    Ok(SpaceTimeThreat { bins: sys.grid.bins, theta: clamped.theta, stats, unreachable, clamped_by: clamped.clamped_by })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reducer {
    #[default]
    Max,
    Mean,
}

/// One score per spatial vertex.
pub fn reduce_to_vertex_scores(st: &SpaceTimeThreat, reducer: Reducer) -> Vec<f64> {
    st.theta
        .chunks(st.bins)
        .map(|row| match reducer {
            Reducer::Max => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Reducer::Mean => row.iter().sum::<f64>() / row.len() as f64,
        })
        .collect()
}

/// `ln 2 / g` for the median positive gap `g` between consecutive
/// interaction times at the same vertex.
pub fn median_gap_rate(g: &Graph) -> Result<f64> {
    let mut per_vertex: Vec<Vec<f64>> = vec![Vec::new(); g.order()];
    for e in g.edges() {
        if let Some((tu, tv)) = e.times {
            per_vertex[e.u].push(tu);
            per_vertex[e.v].push(tv);
        }
    }
    let mut gaps = Vec::new();
    for times in &mut per_vertex {
        times.sort_by(f64::total_cmp);
        gaps.extend(times.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0));
    }
    if gaps.is_empty() {
        return Err(Error::InvalidParameter("no distinct interaction times to derive a kernel rate".into()));
    }
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    let median = if gaps.len() % 2 == 1 { gaps[mid] } else { 0.5 * (gaps[mid - 1] + gaps[mid]) };
    Ok(std::f64::consts::LN_2 / median)
}

/// Grid over the graph's timestamps with `dt ≤ 0.02/λ_max`, capped at
/// [`MAX_DEFAULT_BINS`] bins.
pub fn default_grid(g: &Graph, max_rate: f64) -> Result<TimeGrid> {
    let (lo, hi) = g
        .edges()
        .iter()
        .filter_map(|e| e.times)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a).min(b), hi.max(a).max(b)));
    if lo > hi {
        return Err(Error::InvalidParameter("graph has no timestamps".into()));
    }
    let wanted = (((hi - lo) * max_rate / 0.02).ceil() as usize).max(1);
    let bins = if wanted > MAX_DEFAULT_BINS {
        log::warn!("time grid needs {wanted} bins for dt ≤ 0.02/λ; using {MAX_DEFAULT_BINS}");
        MAX_DEFAULT_BINS
    } else {
        wanted
    };
    TimeGrid::spanning(lo, hi, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    #[test]
    fn grid_bins_are_half_open() {
        let grid = TimeGrid::new(0.0, 1.0, 3).unwrap();
        assert_eq!(grid.bin_of(0.0), Some(0));
        assert_eq!(grid.bin_of(0.999), Some(0));
        assert_eq!(grid.bin_of(1.0), Some(1));
        assert_eq!(grid.bin_of(3.0), None);
        assert_eq!(grid.bin_of(-0.1), None);
        let spanning = TimeGrid::spanning(2.0, 5.0, 3).unwrap();
        assert_eq!(spanning.bin_of(5.0), Some(2));
    }

    #[test]
    fn kernel_column_halves_per_bin() {
        let dt = 1.0;
        let grid = TimeGrid::new(0.0, dt, 6).unwrap();
        let g = GraphBuilder::new(2).timed_edge(0, 1, 1.0, 3.5, 3.5).build().unwrap();
        let sys = assemble_spacetime(&g, grid, &[std::f64::consts::LN_2 / dt], &[EdgeMode::Kernel]).unwrap();
        let a = sys.adjacency();
        let col = sys.index(0, 3);
        let column: Vec<f64> = (0..6).map(|k| a.get(sys.index(1, k), col)).collect();
        for (got, want) in column.iter().zip([0.125, 0.25, 0.5, 1.0, 0.5, 0.25]) {
            assert!((got - want).abs() < 1e-15);
        }
        // No temporal self-blocks.
        assert_eq!(a.get(sys.index(0, 3), sys.index(0, 3)), 0.0);
    }

    #[test]
    fn clique_and_instant_blocks() {
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let g = GraphBuilder::new(2).edge(0, 1, 1.0).build().unwrap();
        let clique = assemble_spacetime(&g, grid, &[1.0], &[EdgeMode::Clique]).unwrap();
        for k in 0..4 {
            for l in 0..4 {
                assert_eq!(clique.adjacency().get(clique.index(0, k), clique.index(1, l)), 0.25);
            }
        }
        let instant = assemble_spacetime(&g, grid, &[1.0], &[EdgeMode::Instant]).unwrap();
        assert_eq!(instant.adjacency().get(instant.index(1, 2), instant.index(0, 2)), 1.0);
        assert_eq!(instant.adjacency().get(instant.index(1, 2), instant.index(0, 1)), 0.0);
        assert!(matches!(
            assemble_spacetime(&g, grid, &[1.0], &[EdgeMode::Kernel]),
            Err(Error::MissingTimestamp(0))
        ));
    }

    #[test]
    fn timestamp_outside_grid_names_edge() {
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let g = GraphBuilder::new(3).timed_edge(0, 1, 1.0, 1.0, 1.0).timed_edge(1, 2, 1.0, 9.0, 9.0).build().unwrap();
        assert!(matches!(
            assemble_spacetime(&g, grid, &[1.0], &[EdgeMode::Kernel]),
            Err(Error::TimestampOutsideGrid { edge: 1, .. })
        ));
    }

    #[test]
    fn coordination_prior_values() {
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let rate = 1.0;
        // Vertex 0 interacts at bins 5 and 6 (one bin apart = 1/λ).
        let g = GraphBuilder::new(3).timed_edge(0, 1, 1.0, 5.5, 5.5).timed_edge(0, 2, 1.0, 6.5, 6.5).build().unwrap();
        let sys = assemble_spacetime(&g, grid, &[rate], &[EdgeMode::Kernel]).unwrap();
        let (psi, clamped) = sys.coordination_prior().unwrap();
        assert_eq!(clamped, 0);
        let expected = (1.0 + (-1f64).exp()) / 2.0;
        assert!((psi[sys.index(0, 5)] - expected).abs() < 1e-12);
        assert!((psi[sys.index(1, 5)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reducers() {
        let st = SpaceTimeThreat {
            bins: 4,
            theta: vec![0.0, 1.0, 0.0, 0.0, 0.3, 0.3, 0.3, 0.3],
            stats: SolveStats { iterations: 0, residual: 0.0 },
            unreachable: 0,
            clamped_by: 0.0,
        };
        assert_eq!(reduce_to_vertex_scores(&st, Reducer::Max), vec![1.0, 0.3]);
        let mean = reduce_to_vertex_scores(&st, Reducer::Mean);
        assert_eq!(mean[0], 0.25);
        assert!((mean[1] - 0.3).abs() < 1e-15);
    }
}

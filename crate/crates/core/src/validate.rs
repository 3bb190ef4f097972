//! Self-check suite run by `threatprop validate`.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::generators::{connected_erdos_renyi, erdos_renyi};
use crate::graph::{Graph, GraphBuilder};
use crate::laplacian;
use crate::linsolve::SolverOptions;
use crate::observation::ObservationSet;
use crate::priors::{compute_prior, PriorSpec};
use crate::rng;
use crate::roc::{self, Thresholds};
use crate::spacetime::{self, EdgeMode, SpaceTimeVariant, TimeGrid};
use crate::spatial::{self, AbsorbingChain, HarmonicSystem};
use crate::spectral::ModularityOperator;
use crate::eigen::SymmetricOperator;

const SUITE_SEED: u64 = 0x7470_7661_6c69_6461;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    #[default]
    Fast,
    Full,
}

/// Deliberate defects for exercising the suite itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Reverse the sign of the interior-boundary block of the Laplacian.
    FlipBoundaryCoupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub level: Level,
    pub fault: Option<Fault>,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

fn check(name: &str, outcome: Result<(bool, String)>) -> Check {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Check { name: name.into(), passed, detail }
}

/// Uniform draw in `[lo, hi)` from a one-off stream.
fn draw(key: u64, counter: u64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng::stream(SUITE_SEED, rng::domain::LABEL, key, counter).random::<f64>()
}

fn random_prior(g: &Graph, obs: &ObservationSet, key: u64) -> Result<Vec<f64>> {
    let spec = match (draw(key, 1, 0.0, 4.0)) as u32 {
        0 => PriorSpec::Dwtp,
        1 => PriorSpec::Lwtp,
        2 => PriorSpec::Bfs,
        _ => PriorSpec::Uniform { psi: draw(key, 2, 0.05, 1.0) },
    };
    Ok(compute_prior(g, spec, obs)?.psi)
}

fn random_boundary(n: usize, key: u64) -> Result<ObservationSet> {
    let count = 1 + (draw(key, 3, 0.0, 3.0) as usize).min(n - 1);
    let picked = rand::seq::index::sample(&mut rng::stream(SUITE_SEED, rng::domain::LABEL, key, 4), n, count);
    let pairs: Vec<(usize, f64)> =
        picked.iter().enumerate().map(|(k, v)| (v, draw(key, 10 + k as u64, 0.0, 1.0))).collect();
    ObservationSet::ideal(&pairs)
}

fn random_graph(key: u64, max_n: usize) -> Result<Graph> {
    let n = 3 + (draw(key, 5, 0.0, (max_n - 2) as f64) as usize);
    let p = draw(key, 6, 0.15, 0.6);
    connected_erdos_renyi(n, p, SUITE_SEED ^ key)
}

/// Bounds and location of the extremes of harmonic solutions.
pub fn maximum_principle(cases: usize, fault: Option<Fault>) -> Result<(bool, String)> {
    let opts = SolverOptions::default();
    for case in 0..cases as u64 {
        let g = random_graph(case, 30)?;
        let obs = random_boundary(g.order(), case)?;
        let psi = random_prior(&g, &obs, case)?;
        let mut system = HarmonicSystem::new(&g, &psi, &obs)?;
        if fault == Some(Fault::FlipBoundaryCoupling) {
            system.flip_boundary_coupling();
        }
        let (theta, _) = system.solve_raw(&opts)?;
        let top = obs.boundary_values()?.iter().copied().fold(0.0, f64::max);
        let lo = theta.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo < -1e-8 || hi > top + 1e-8 {
            return Ok((false, format!("case {case}: ϑ spans [{lo:.3e}, {hi:.3e}], boundary max {top:.3e}")));
        }
        let interior_max = system.interior().iter().map(|&v| theta[v]).fold(f64::NEG_INFINITY, f64::max);
        if interior_max > top + 1e-8 {
            return Ok((false, format!("case {case}: interior maximum {interior_max:.3e} above boundary {top:.3e}")));
        }
    }
    Ok((true, format!("{cases} random (graph, prior, boundary) triples")))
}

fn path_closed_form() -> Result<(bool, String)> {
    let g = GraphBuilder::new(3).edge(0, 1, 1.0).edge(1, 2, 1.0).build()?;
    let obs = ObservationSet::ideal(&[(2, 1.0)])?;
    let psi = compute_prior(&g, PriorSpec::Dwtp, &obs)?.psi;
    let theta = spatial::solve_harmonic(&g, &psi, &obs, &SolverOptions::default())?.theta;
    let expected = [1.0 / 3.0, 1.0 / 3.0, 1.0];
    let err = theta.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((err <= 1e-10, format!("max error {err:.2e}")))
}

/// Harmonic solve against the dense hitting-matrix solution.
pub fn hitting_equivalence(graphs: usize, n: usize, p: f64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for k in 0..graphs as u64 {
        let g = connected_erdos_renyi(n, p, SUITE_SEED + k)?;
        let obs = ObservationSet::ideal(&[(0, 1.0)])?;
        let psi = compute_prior(&g, PriorSpec::Dwtp, &obs)?.psi;
        let harmonic = spatial::solve_harmonic(&g, &psi, &obs, &SolverOptions::default())?.theta;
        let exact = AbsorbingChain::new(&g, &psi, &obs)?.exact_threat()?;
        worst = harmonic.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    Ok((worst <= 1e-8, format!("{graphs} graphs, max |Δ| {worst:.2e}")))
}

/// Per-vertex comparison of walk estimates with the harmonic solution.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkAgreement {
    pub compared: usize,
    /// Vertices more than 3σ from the harmonic value.
    pub beyond: Vec<String>,
    pub worst_sigma: f64,
    pub summary: String,
}

/// Chance that a single vertex lands beyond 3σ when the two agree.
pub const THREE_SIGMA_TAIL: f64 = 0.0027;

impl WalkAgreement {
    /// Every vertex within 3σ.
    pub fn all_within(&self) -> bool {
        self.beyond.is_empty()
    }

    /// Number of 3σ exceedances within 3σ of its binomial expectation.
    pub fn count_consistent(&self) -> bool {
        let m = self.compared as f64;
        let mean = m * THREE_SIGMA_TAIL;
        (self.beyond.len() as f64) <= mean + 3.0 * (mean * (1.0 - THREE_SIGMA_TAIL)).sqrt()
    }

    pub fn detail(&self) -> String {
        let listed = if self.beyond.is_empty() { String::new() } else { format!(": {}", self.beyond.join("; ")) };
        format!(
            "{}, worst {:.2}σ, {} of {} beyond 3σ (≈{:.1} expected by chance){listed}",
            self.summary,
            self.worst_sigma,
            self.beyond.len(),
            self.compared,
            self.compared as f64 * THREE_SIGMA_TAIL
        )
    }
}

/// Monte Carlo walks against the harmonic solution on random graphs with
/// the degree-weighted prior and a single cue.
pub fn walk_agreement(graphs: usize, n: usize, p: f64, walks: usize) -> Result<WalkAgreement> {
    let mut worst = 0.0f64;
    let mut beyond = Vec::new();
    let mut compared = 0usize;
    for k in 0..graphs as u64 {
        let g = connected_erdos_renyi(n, p, SUITE_SEED + k)?;
        let obs = ObservationSet::ideal(&[(0, 1.0)])?;
        let psi = compute_prior(&g, PriorSpec::Dwtp, &obs)?.psi;
        let harmonic = spatial::solve_harmonic(&g, &psi, &obs, &SolverOptions::default())?.theta;
        let chain = AbsorbingChain::new(&g, &psi, &obs)?;
        let mc = spatial::monte_carlo_threat(&chain, walks, SUITE_SEED + k)?;
        for &v in chain.interior() {
            let (h, m) = (harmonic[v], mc.theta[v]);
            let sigma = (h * (1.0 - h) / walks as f64).sqrt();
            let z = if sigma > 0.0 { (m - h).abs() / sigma } else if (m - h).abs() < 1e-12 { 0.0 } else { f64::INFINITY };
            compared += 1;
            if z > 3.0 {
                beyond.push(format!("graph {k} vertex {v}: {h:.5} vs {m:.5} ({z:.2}σ)"));
            }
            worst = worst.max(z);
        }
    }
    Ok(WalkAgreement {
        compared,
        beyond,
        worst_sigma: worst,
        summary: format!("{graphs} graphs of order {n}, {walks} walks per vertex"),
    })
}

/// Walk estimates agree with the harmonic solution: the number of vertices
/// beyond 3σ is consistent with chance.
pub fn monte_carlo_equivalence(graphs: usize, n: usize, p: f64, walks: usize) -> Result<(bool, String)> {
    let a = walk_agreement(graphs, n, p, walks)?;
    Ok((a.count_consistent(), a.detail()))
}

fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > top * 1e-10).count()
}

/// `T·E = E` and `rank E = r` for random absorbing chains.
pub fn invariant_basis(chains: usize) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for case in 0..chains as u64 {
        let key = 1000 + case;
        let g = random_graph(key, 30)?;
        let obs = random_boundary(g.order(), key)?;
        let psi = random_prior(&g, &obs, key)?;
        let chain = AbsorbingChain::new(&g, &psi, &obs)?;
        let e = chain.invariant_basis()?;
        let t = chain.transition_dense();
        let defect = (&t * &e - &e).amax();
        let r = chain.absorbing_states();
        if rank(&e) != r {
            return Ok((false, format!("chain {case}: rank {} ≠ {r}", rank(&e))));
        }
        worst = worst.max(defect);
    }
    Ok((worst <= 1e-12, format!("{chains} chains, max ‖TE − E‖∞ {worst:.2e}")))
}

/// `ψ ≡ 1` with equal boundary values reproduces the constant.
pub fn constant_solution() -> Result<(bool, String)> {
    let p0 = 0.37;
    let mut b = GraphBuilder::new(6);
    for (u, v, t) in [(0, 1, 0.5), (1, 2, 1.5), (2, 3, 2.5), (3, 4, 3.5), (4, 5, 4.5), (5, 0, 5.5), (1, 4, 2.0)] {
        b = b.timed_edge(u, v, 1.0, t, t);
    }
    let g = b.build()?;
    let obs = ObservationSet::ideal(&[(0, p0), (3, p0)])?;
    let opts = SolverOptions::default();
    let spatial = spatial::solve_harmonic(&g, &[1.0; 6], &obs, &opts)?.theta;
    let sys = spacetime::assemble_spacetime(&g, TimeGrid::new(0.0, 1.0, 6)?, &[0.7], &[EdgeMode::Kernel])?;
    let st = spacetime::solve_spacetime(&sys, &obs, &SpaceTimeVariant::Weighted { psi: 1.0 }, &opts)?;
    let reachable: Vec<f64> = st.theta.iter().copied().filter(|&x| x != 0.0).collect();
    let err_s = spatial.iter().map(|x| (x - p0).abs()).fold(0.0, f64::max);
    let err_t = reachable.iter().map(|x| (x - p0).abs()).fold(0.0, f64::max);
    let ok = err_s <= 1e-8 && err_t <= 1e-8 && st.unreachable + reachable.len() == st.theta.len();
    Ok((ok, format!("spatial {err_s:.2e}, space-time {err_t:.2e}")))
}

fn kernel_identities() -> Result<(bool, String)> {
    let mut ok = true;
    for rate in [0.1, 1.0, 7.5] {
        ok &= spacetime::kernel(rate, 0.0) == 1.0;
        ok &= (spacetime::kernel(rate, std::f64::consts::LN_2 / rate) - 0.5).abs() < 1e-15;
        ok &= spacetime::kernel(rate, 1.3) == spacetime::kernel(rate, -1.3);
        ok &= spacetime::kernel(rate, 2.0) < spacetime::kernel(rate, 1.0);
        ok &= (spacetime::kernel(rate, 0.4) * spacetime::kernel(rate, 0.6) - spacetime::kernel(rate, 1.0)).abs() < 1e-15;
    }
    Ok((ok, "unit peak, half-life, symmetry, monotone decay, semigroup".into()))
}

fn modularity_null_vector(graphs: usize) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for k in 0..graphs as u64 {
        let g = erdos_renyi(40, 0.1, SUITE_SEED + 50 + k)?;
        let op = ModularityOperator::new(&g)?;
        let mut y = vec![0.0; g.order()];
        op.apply(&vec![1.0; g.order()], &mut y);
        worst = y.iter().map(|x| x.abs()).fold(worst, f64::max);
    }
    Ok((worst <= 1e-10, format!("max |M·1| {worst:.2e}")))
}

/// Algebraic-connectivity bounds and connected threshold sets of the
/// Fiedler vector.
pub fn fiedler_properties(graphs: usize) -> Result<(bool, String)> {
    for k in 0..graphs as u64 {
        let g = random_graph(2000 + k, 40)?;
        let f = laplacian::fiedler(&g)?;
        let (lo, hi) = laplacian::fiedler_bounds(&g).expect("connected");
        if f.value < lo - 1e-9 || f.value > hi + 1e-9 {
            return Ok((false, format!("graph {k}: λ₁ = {} outside [{lo}, {hi}]", f.value)));
        }
        if !laplacian::threshold_sets_connected(&g, &f.vector) {
            return Ok((false, format!("graph {k}: a threshold set of the Fiedler vector is disconnected")));
        }
    }
    Ok((true, format!("{graphs} random connected graphs")))
}

fn roc_monotone_invariance() -> Result<(bool, String)> {
    let n = 500;
    let theta: Vec<f64> = (0..n).map(|i| draw(3000, i, 0.0, 0.99)).collect();
    let truth: Vec<bool> = (0..n as usize).map(|i| draw(3001, i as u64, 0.0, 1.0) < theta[i]).collect();
    let odds: Vec<f64> = theta.iter().map(|t| t / (1.0 - t)).collect();
    let a = roc::roc(&theta, &truth, Thresholds::AllUnique)?;
    let b = roc::roc(&odds, &truth, Thresholds::AllUnique)?;
    let same = a.points.len() == b.points.len()
        && a.points.iter().zip(&b.points).all(|(x, y)| x.pfa == y.pfa && x.pd == y.pd);
    Ok((same, format!("{} points, AUC {:.4}", a.points.len(), a.auc)))
}

fn chance_auc() -> Result<(bool, String)> {
    let n = 10_000u64;
    let scores: Vec<f64> = (0..n).map(|i| draw(4000, i, 0.0, 1.0)).collect();
    let truth: Vec<bool> = (0..n).map(|i| draw(4001, i, 0.0, 1.0) < 0.5).collect();
    let auc = roc::roc(&scores, &truth, Thresholds::AllUnique)?.auc;
    Ok(((auc - 0.5).abs() <= 0.02, format!("AUC {auc:.4}")))
}

pub fn run_suite(level: Level, fault: Option<Fault>) -> Report {
    let full = level == Level::Full;
    let mut checks = Vec::new();
    let mut run = |name: &str, f: &dyn Fn() -> Result<(bool, String)>| {
        let start = Instant::now();
        let c = check(name, f());
        log::info!("{name}: {} in {:.2?}", if c.passed { "pass" } else { "FAIL" }, start.elapsed());
        checks.push(c);
    };
    run("maximum principle", &|| maximum_principle(if full { 200 } else { 60 }, fault));
    run("path closed form", &path_closed_form);
    run("hitting matrix equivalence", &|| hitting_equivalence(10, 20, 0.3));
    if full {
        run("monte carlo equivalence", &|| monte_carlo_equivalence(10, 100, 0.1, 100_000));
    } else {
        run("monte carlo equivalence", &|| monte_carlo_equivalence(2, 20, 0.3, 20_000));
    }
    run("absorbing invariant basis", &|| invariant_basis(if full { 100 } else { 20 }));
    run("constant solution", &constant_solution);
    run("kernel identities", &kernel_identities);
    run("modularity null vector", &|| modularity_null_vector(5));
    run("fiedler properties", &|| fiedler_properties(if full { 100 } else { 20 }));
    run("roc monotone invariance", &roc_monotone_invariance);
    run("chance auc", &chance_auc);
    let passed = checks.iter().all(|c| c.passed);
    Report { level, fault, passed, checks }
}

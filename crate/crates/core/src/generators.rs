//! Random covert-network generators: a stochastic blockmodel with embedded
//! communities and the hybrid mixed-membership blockmodel (HMMB).

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph, GraphBuilder};
use crate::rng::{self, domain};

#[derive(Debug, Clone)]
pub struct GeneratedNetwork {
    pub graph: Graph,
    /// Ground-truth threat `Θ_v`.
    pub truth: Vec<bool>,
    /// Per interaction, whether the `(u, v)` endpoint timestamps were drawn
    /// from foreground activity.
    pub foreground_ends: Vec<(bool, bool)>,
    pub meta: serde_json::Value,
}

impl GeneratedNetwork {
    /// Foreground vertices that took part in at least one foreground
    /// interaction, with the times of those interactions at the vertex.
    pub fn foreground_activity(&self) -> Vec<(usize, Vec<f64>)> {
        let mut times: Vec<Vec<f64>> = vec![Vec::new(); self.graph.order()];
        for (e, &(fu, fv)) in self.graph.edges().iter().zip(&self.foreground_ends) {
            let (tu, tv) = e.times.unwrap_or((f64::NAN, f64::NAN));
            if fu && self.truth[e.u] {
                times[e.u].push(tu);
            }
            if fv && self.truth[e.v] {
                times[e.v].push(tv);
            }
        }
        times.into_iter().enumerate().filter(|(_, t)| !t.is_empty()).collect()
    }

    /// Writes `edges.csv`, `truth.csv` and `meta.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.graph.write_csv(BufWriter::new(File::create(dir.join("edges.csv"))?))?;
        let mut wtr = csv::Writer::from_path(dir.join("truth.csv"))?;
        wtr.write_record(["vertex", "theta"])?;
        for (v, &t) in self.truth.iter().enumerate() {
            wtr.write_record([self.graph.label(v), if t { "1" } else { "0" }])?;
        }
        wtr.flush()?;
        let meta = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(dir.join("meta.json"), meta + "\n")?;
        Ok(())
    }
}

/// Within-community edge probability `r·ln n / n` for activity `r`.
pub fn activity_density(r: f64, n: usize) -> f64 {
    r * (n as f64).ln() / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SbmTemporal {
    /// Foreground interactions share one instant; the rest are uniform.
    #[default]
    CoordinatedForeground,
    /// Every interaction uniform over the horizon.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    /// Sizes of the communities that partition the vertex set.
    pub block_sizes: Vec<usize>,
    /// Sizes of further communities whose members are drawn uniformly at
    /// random from the whole vertex set, on top of the partition.
    #[serde(default)]
    pub embedded_sizes: Vec<usize>,
    /// `S`, over partition communities followed by embedded ones.
    pub probabilities: Vec<Vec<f64>>,
    /// Community indices whose members are foreground.
    pub foreground: Vec<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub temporal: SbmTemporal,
}

fn default_horizon() -> f64 {
    100.0
}

impl SbmParams {
    /// Two background communities of 128 with a foreground of 30 embedded
    /// at random; foreground density `r_fg · 0.1`.
    pub fn embedded_foreground(r_fg: f64) -> Self {
        SbmParams {
            block_sizes: vec![128, 128],
            embedded_sizes: vec![30],
            probabilities: vec![vec![0.08, 0.02, 0.02], vec![0.02, 0.08, 0.02], vec![0.02, 0.02, r_fg * 0.1]],
            foreground: vec![2],
            horizon: 100.0,
            temporal: SbmTemporal::CoordinatedForeground,
        }
    }

    pub fn order(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn communities(&self) -> usize {
        self.block_sizes.len() + self.embedded_sizes.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.order();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let k = self.communities();
        if self.probabilities.len() != k || self.probabilities.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidParameter(format!("S must be {k}×{k}")));
        }
        for (a, row) in self.probabilities.iter().enumerate() {
            for (b, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParameter(format!("S[{a}][{b}] = {p} outside [0, 1]")));
                }
                if p != self.probabilities[b][a] {
                    return Err(Error::InvalidParameter("S must be symmetric".into()));
                }
            }
        }
        if let Some(&s) = self.embedded_sizes.iter().find(|&&s| s > n) {
            return Err(Error::InvalidParameter(format!("embedded community of {s} in {n} vertices")));
        }
        if let Some(&f) = self.foreground.iter().find(|&&f| f >= k) {
            return Err(Error::InvalidParameter(format!("foreground community {f} does not exist")));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        Ok(())
    }

    /// Community memberships per vertex, drawing embedded members with `seed`.
    pub fn memberships(&self, seed: u64) -> Vec<Vec<usize>> {
        let n = self.order();
        let mut member: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut v = 0;
        for (c, &size) in self.block_sizes.iter().enumerate() {
            for _ in 0..size {
                member[v].push(c);
                v += 1;
            }
        }
        for (e, &size) in self.embedded_sizes.iter().enumerate() {
            let mut r = rng::stream(seed, domain::SBM_LAYOUT, e as u64, 0);
            let mut chosen = index::sample(&mut r, n, size).into_vec();
            chosen.sort_unstable();
            for v in chosen {
                member[v].push(self.block_sizes.len() + e);
            }
        }
        member
    }

    /// `(ΠSΠᵀ)_ij`, summing over every pair of memberships.
    pub fn pair_probability(&self, a: &[usize], b: &[usize]) -> f64 {
        a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).map(|(x, y)| self.probabilities[x][y]).sum()
    }
}

pub fn generate_sbm(params: &SbmParams, seed: u64) -> Result<GeneratedNetwork> {
    params.validate()?;
    let n = params.order();
    let member = params.memberships(seed);
    let truth: Vec<bool> = member.iter().map(|m| m.iter().any(|c| params.foreground.contains(c))).collect();
    let common_time = rng::stream(seed, domain::SBM_TIME, 0, 0).random::<f64>() * params.horizon;

    let rows: Vec<Vec<(Edge, bool)>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<(Edge, bool)>> {
            let mut out = Vec::new();
            for j in i + 1..n {
                let p = params.pair_probability(&member[i], &member[j]);
                if p > 1.0 {
                    return Err(Error::InvalidParameter(format!("edge probability {p} > 1 for pair ({i}, {j})")));
                }
                let mut r = rng::stream(seed, domain::SBM_PAIR, i as u64, j as u64);
                if r.random::<f64>() >= p {
                    continue;
                }
                let fg = truth[i] && truth[j];
                let t = match params.temporal {
                    SbmTemporal::CoordinatedForeground if fg => common_time,
                    _ => r.random::<f64>() * params.horizon,
                };
                out.push((Edge { u: i, v: j, weight: 1.0, times: Some((t, t)) }, fg));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let (edges, fg): (Vec<Edge>, Vec<bool>) = rows.into_iter().flatten().unzip();
    let graph = GraphBuilder::new(n).extend(edges).build()?;
    let meta = serde_json::json!({ "generator": "sbm", "seed": seed, "params": params });
    Ok(GeneratedNetwork { graph, truth, foreground_ends: fg.into_iter().map(|f| (f, f)).collect(), meta })
}

/// Support indicators `I^S_ij` between indicator blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "matrix")]
pub enum IndicatorModel {
    /// Every pair may interact.
    Full,
    /// `ln N_b / N_b` within block `b` (realised size), `ln N / N` between blocks.
    LogDensity,
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmbParams {
    pub n: usize,
    /// `φ`, one entry per lifestyle.
    pub lifestyle_probs: Vec<f64>,
    /// `X`, lifestyles × communities; row `l` is the Dirichlet concentration.
    pub concentration: Vec<Vec<f64>>,
    /// `B`, communities × communities.
    pub block: Vec<Vec<f64>>,
    /// Indicator block of each lifestyle.
    pub indicator_blocks: Vec<usize>,
    pub indicator: IndicatorModel,
    /// Power-law exponent `α` of the expected degrees.
    pub alpha: f64,
    pub lambda_min: f64,
    /// `γ`, mean number of coordinated events per community.
    pub coordination: Vec<f64>,
    pub foreground_lifestyles: Vec<usize>,
    pub foreground_communities: Vec<usize>,
    pub horizon: f64,
}

impl HmmbParams {
    /// Eleven lifestyles over ten communities. Lifestyles 0 and 1 are
    /// foreground and mix community 0 with one background community each;
    /// lifestyle `l ≥ 2` lives mostly in community `l − 1`.
    pub fn eleven_lifestyles(fg_coordination: f64) -> Self {
        let (n, k, l) = (256, 10, 11);
        let fg_share = 15.0 / n as f64;
        let mut phi = vec![(1.0 - 2.0 * fg_share) / (l - 2) as f64; l];
        phi[0] = fg_share;
        phi[1] = fg_share;
        let mut x = vec![vec![0.05; k]; l];
        x[0][0] = 4.0;
        x[0][1] = 1.0;
        x[1][0] = 4.0;
        x[1][2] = 1.0;
        for (life, row) in x.iter_mut().enumerate().skip(2) {
            row[life - 1] = 4.0;
        }
        let mut block = vec![vec![0.1; k]; k];
        for (c, row) in block.iter_mut().enumerate() {
            row[c] = 1.0;
        }
        let mut gamma = vec![40.0; k];
        gamma[0] = fg_coordination;
        HmmbParams {
            n,
            lifestyle_probs: phi,
            concentration: x,
            block,
            indicator_blocks: (0..l).map(|life| life.saturating_sub(1)).collect(),
            indicator: IndicatorModel::LogDensity,
            alpha: 2.5,
            lambda_min: 1000.0,
            coordination: gamma,
            foreground_lifestyles: vec![0, 1],
            foreground_communities: vec![0],
            horizon: 100.0,
        }
    }

    pub fn communities(&self) -> usize {
        self.block.len()
    }

    pub fn lifestyles(&self) -> usize {
        self.lifestyle_probs.len()
    }

    fn indicator_block_count(&self) -> usize {
        self.indicator_blocks.iter().copied().max().map_or(0, |m| m + 1)
    }

    fn validate(&self) -> Result<()> {
        let (k, l) = (self.communities(), self.lifestyles());
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n == 0 {
            return Err(Error::EmptyGraph);
        }
        if l == 0 || k == 0 {
            return bad("need at least one lifestyle and one community".into());
        }
        let total: f64 = self.lifestyle_probs.iter().sum();
        if self.lifestyle_probs.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return bad(format!("lifestyle probabilities must lie on the simplex (sum {total})"));
        }
        if self.concentration.len() != l || self.concentration.iter().any(|r| r.len() != k) {
            return bad(format!("X must be {l}×{k}"));
        }
        for (life, row) in self.concentration.iter().enumerate() {
            if let Some(&c) = row.iter().find(|&&c| !(c > 0.0)) {
                return Err(Error::Degenerate(format!("Dirichlet concentration {c} in lifestyle {life}")));
            }
        }
        if self.block.iter().any(|r| r.len() != k) || self.block.iter().flatten().any(|&b| !(b >= 0.0)) {
            return bad(format!("B must be a nonnegative {k}×{k} matrix"));
        }
        if self.indicator_blocks.len() != l {
            return bad(format!("{} indicator blocks for {l} lifestyles", self.indicator_blocks.len()));
        }
        if let IndicatorModel::Explicit(s) = &self.indicator {
            let m = self.indicator_block_count();
            if s.len() != m || s.iter().any(|r| r.len() != m) || s.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
                return bad(format!("indicator matrix must be {m}×{m} with entries in [0, 1]"));
            }
        }
        if !(self.alpha > 1.0) || !(self.lambda_min > 0.0) {
            return bad(format!("power law needs α > 1 and λ_min > 0, got {} and {}", self.alpha, self.lambda_min));
        }
        if self.coordination.len() != k || self.coordination.iter().any(|&g| !(g >= 0.0)) {
            return bad(format!("γ must be a nonnegative {k}-vector"));
        }
        if self.foreground_lifestyles.iter().any(|&f| f >= l) || self.foreground_communities.iter().any(|&c| c >= k) {
            return bad("foreground index out of range".into());
        }
        if !(self.horizon > 0.0) {
            return bad("horizon must be positive".into());
        }
        Ok(())
    }
}

fn dirichlet<R: Rng>(r: &mut R, concentration: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> = concentration
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive concentration").sample(r))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|x| *x /= total);
    } else {
        // Every gamma draw underflowed; fall back to the mean.
        let s: f64 = concentration.iter().sum();
        draws = concentration.iter().map(|a| a / s).collect();
    }
    draws
}

fn poisson<R: Rng>(r: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(r) as u64
}

fn categorical<R: Rng>(r: &mut R, weights: &[f64]) -> usize {
    WeightedIndex::new(weights).expect("weights with positive total").sample(r)
}

pub fn generate_hmmb(params: &HmmbParams, seed: u64) -> Result<GeneratedNetwork> {
    params.validate()?;
    let n = params.n;
    let k = params.communities();

    let lifestyle: Vec<usize> = (0..n)
        .map(|i| categorical(&mut rng::stream(seed, domain::HMMB_LIFESTYLE, i as u64, 0), &params.lifestyle_probs))
        .collect();
    let membership: Vec<Vec<f64>> = (0..n)
        .map(|i| dirichlet(&mut rng::stream(seed, domain::HMMB_MEMBERSHIP, i as u64, 0), &params.concentration[lifestyle[i]]))
        .collect();
    let exponent = -1.0 / (params.alpha - 1.0);
    let rate: Vec<f64> = (0..n)
        .map(|i| {
            let u = 1.0 - rng::stream(seed, domain::HMMB_DEGREE, i as u64, 0).random::<f64>();
            params.lambda_min * u.powf(exponent)
        })
        .collect();
    let rate_total: f64 = rate.iter().sum();

    let blocks = params.indicator_block_count();
    let block_of: Vec<usize> = lifestyle.iter().map(|&l| params.indicator_blocks[l]).collect();
    let indicator: Vec<Vec<f64>> = match &params.indicator {
        IndicatorModel::Full => vec![vec![1.0; blocks]; blocks],
        IndicatorModel::Explicit(s) => s.clone(),
        IndicatorModel::LogDensity => {
            let mut sizes = vec![0usize; blocks];
            block_of.iter().for_each(|&b| sizes[b] += 1);
            let between = activity_density(1.0, n).min(1.0);
            (0..blocks)
                .map(|a| {
                    (0..blocks)
                        .map(|b| if a == b && sizes[a] > 1 { activity_density(1.0, sizes[a]).min(1.0) } else { between })
                        .collect()
                })
                .collect()
        }
    };

    // Event pools: Poisson(γ_c) times, redrawn while empty.
    let pools: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut r = rng::stream(seed, domain::HMMB_POOL, c as u64, 0);
            let mut size = poisson(&mut r, params.coordination[c]);
            let mut redraws = 0;
            while size == 0 {
                redraws += 1;
                if params.coordination[c] == 0.0 || redraws > 10_000 {
                    size = 1;
                    break;
                }
                size = poisson(&mut r, params.coordination[c]);
            }
            (0..size).map(|_| r.random::<f64>() * params.horizon).collect()
        })
        .collect();

    let fg_community: Vec<bool> = (0..k).map(|c| params.foreground_communities.contains(&c)).collect();
    let rows: Vec<Vec<(Edge, (bool, bool))>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in i + 1..n {
                let mut r = rng::stream(seed, domain::HMMB_PAIR, i as u64, j as u64);
                if r.random::<f64>() >= indicator[block_of[i]][block_of[j]] {
                    continue;
                }
                let zi = categorical(&mut r, &membership[i]);
                let zj = categorical(&mut r, &membership[j]);
                let mean = rate[i] * rate[j] / rate_total * params.block[zi][zj];
                let count = poisson(&mut r, mean);
                if count == 0 {
                    continue;
                }
                let mut stamps = rng::stream(seed, domain::HMMB_STAMP, i as u64, j as u64);
                for _ in 0..count {
                    let ti = pools[zi][stamps.random_range(0..pools[zi].len())];
                    let tj = pools[zj][stamps.random_range(0..pools[zj].len())];
                    out.push((Edge { u: i, v: j, weight: 1.0, times: Some((ti, tj)) }, (fg_community[zi], fg_community[zj])));
                }
            }
            out
        })
        .collect();

    let (edges, ends): (Vec<Edge>, Vec<(bool, bool)>) = rows.into_iter().flatten().unzip();
    let graph = GraphBuilder::new(n).extend(edges).build()?;
    let truth = lifestyle.iter().map(|l| params.foreground_lifestyles.contains(l)).collect();
    let meta = serde_json::json!({
        "generator": "hmmb",
        "seed": seed,
        "params": params,
        "event_pool_sizes": pools.iter().map(Vec::len).collect::<Vec<_>>(),
    });
    Ok(GeneratedNetwork { graph, truth, foreground_ends: ends, meta })
}

/// Threat labels drawn from the random-walk model: `Θ_v ~ Bernoulli(ϑ_v)`.
pub fn sample_threat_labels(theta: &[f64], seed: u64, key: u64) -> Vec<bool> {
    let mut r = rng::stream(seed, domain::LABEL, key, 0);
    theta.iter().map(|&t| r.random::<f64>() < t).collect()
}

/// `G(n, p)` with unit weights. Attempt `a` of [`connected_erdos_renyi`]
/// uses key `a`.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph> {
    erdos_renyi_attempt(n, p, seed, 0)
}

fn erdos_renyi_attempt(n: usize, p: f64, seed: u64, attempt: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("edge probability {p} outside [0, 1]")));
    }
    let mut r = rng::stream(seed, domain::ER, attempt, 0);
    let mut builder = GraphBuilder::new(n);
    for u in 0..n {
        for v in u + 1..n {
            if r.random::<f64>() < p {
                builder.push(Edge { u, v, weight: 1.0, times: None });
            }
        }
    }
    builder.build()
}

/// First connected draw of `G(n, p)`.
pub fn connected_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph> {
    for attempt in 0..1000 {
        let g = erdos_renyi_attempt(n, p, seed, attempt)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::NotConnected(format!("no connected G({n}, {p}) in 1000 draws")))
}

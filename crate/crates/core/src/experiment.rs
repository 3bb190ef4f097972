//! Monte Carlo detection experiments: draw a network, cue one foreground
//! vertex, run every detector and aggregate ROC curves over trials.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generators::{generate_hmmb, generate_sbm, GeneratedNetwork, HmmbParams, SbmParams};
use crate::graph::Graph;
use crate::linsolve::SolverOptions;
use crate::observation::{Observation, ObservationModel, ObservationSet};
use crate::plot;
use crate::priors::{compute_prior, PriorSpec};
use crate::rng::{self, domain};
use crate::roc::{self, RocCurve, Thresholds, TrialScores};
use crate::spacetime::{self, EdgeMode, Reducer, SpaceTimeVariant, TimeGrid};
use crate::spatial;
use crate::spectral::{self, SpectralScore};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest tolerated fraction of aborted trials.
pub const MAX_ABORTED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GeneratorConfig {
    Sbm(SbmParams),
    Hmmb(HmmbParams),
}

impl GeneratorConfig {
    pub fn horizon(&self) -> f64 {
        match self {
            GeneratorConfig::Sbm(p) => p.horizon,
            GeneratorConfig::Hmmb(p) => p.horizon,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<GeneratedNetwork> {
        match self {
            GeneratorConfig::Sbm(p) => generate_sbm(p, seed),
            GeneratorConfig::Hmmb(p) => generate_hmmb(p, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DetectorKind {
    /// Space-time propagation with the coordination prior, optionally
    /// multiplied by a spatial prior.
    Sttp {
        bins: usize,
        /// Kernel rate; the median-gap rule on the whole network when absent.
        #[serde(default)]
        rate: Option<f64>,
        #[serde(default)]
        spatial_prior: Option<PriorSpec>,
        #[serde(default)]
        reducer: Reducer,
        #[serde(default)]
        mode: EdgeMode,
    },
    /// Spatial harmonic propagation.
    Spatial { prior: PriorSpec },
    /// Uncued spectral scores.
    Spec {
        #[serde(default)]
        score: SpectralScore,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub name: String,
    #[serde(flatten)]
    pub kind: DetectorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// All trials' (score, truth) pairs in one sweep.
    #[default]
    Pooled,
    /// Mean PD of per-trial curves at fixed PFA values.
    Vertical,
}

fn default_trials() -> usize {
    100
}

fn default_pfa_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub generator: GeneratorConfig,
    pub detectors: Vec<DetectorConfig>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub solver: SolverOptions,
    /// False-alarm rates reported in the summary.
    #[serde(default = "default_pfa_grid")]
    pub pfa_grid: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be positive".into()));
        }
        if self.detectors.is_empty() {
            return Err(Error::InvalidParameter("no detectors configured".into()));
        }
        let mut names: Vec<&str> = self.detectors.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("detector names must be unique".into()));
        }
        if let Some(d) = self.detectors.iter().find(|d| d.name.is_empty() || !d.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')) {
            return Err(Error::InvalidParameter(format!("detector name '{}' must be [A-Za-z0-9_-]+", d.name)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Hex SHA-256 of a value's JSON serialisation.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serialises");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Foreground vertex and time used as the single observation of a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cue {
    pub vertex: usize,
    pub time: f64,
}

/// A uniformly random foreground vertex among those with foreground
/// activity, observed at one of its foreground interaction times.
pub fn choose_cue(net: &GeneratedNetwork, seed: u64, trial: u64) -> Result<Cue> {
    let active = net.foreground_activity();
    if active.is_empty() {
        return Err(Error::Experiment("no foreground vertex has foreground interactions".into()));
    }
    let pick = rng::stream(seed, domain::CUE, trial, 0).random_range(0..active.len());
    let (vertex, times) = &active[pick];
    let time = times[rng::stream(seed, domain::CUE, trial, 1).random_range(0..times.len())];
    Ok(Cue { vertex: *vertex, time })
}

/// Scores of one detector over all vertices of `g` given the cue.
pub fn detector_scores(
    g: &Graph,
    cue: Cue,
    detector: &DetectorKind,
    horizon: f64,
    solver: &SolverOptions,
) -> Result<Vec<f64>> {
    if let DetectorKind::Spec { score } = detector {
        return Ok(spectral::spectral_scores(g, *score)?.scores);
    }
    // Cued detectors run on the cue's component; everything else scores 0.
    let component = g.component_of(cue.vertex);
    let whole = component.len() == g.order();
    let sub_owned;
    let sub = if whole {
        g
    } else {
        sub_owned = g.induced_subgraph(&component)?;
        &sub_owned
    };
    let local_cue = component.binary_search(&cue.vertex).expect("cue lies in its component");
    let local_scores = match detector {
        DetectorKind::Spatial { prior } => {
            let obs = ObservationSet::ideal(&[(local_cue, 1.0)])?;
            let psi = compute_prior(sub, *prior, &obs)?.psi;
            spatial::solve_harmonic(sub, &psi, &obs, solver)?.theta
        }
        DetectorKind::Sttp { bins, rate, spatial_prior, reducer, mode } => {
            let obs = ObservationSet::new(
                vec![Observation { vertex: local_cue, time: Some(cue.time), value: 1.0 }],
                ObservationModel::Ideal,
            )?;
            let grid = TimeGrid::new(0.0, horizon / *bins as f64, *bins)?;
            let rate = match rate {
                Some(r) => *r,
                None => spacetime::median_gap_rate(g)?,
            };
            let sys = spacetime::assemble_spacetime(sub, grid, &[rate], &[*mode])?;
            let variant = match spatial_prior {
                Some(spec) => SpaceTimeVariant::CoordinatedSpatialPrior(compute_prior(sub, *spec, &obs)?.psi),
                None => SpaceTimeVariant::Coordinated,
            };
            let st = spacetime::solve_spacetime(&sys, &obs, &variant, solver)?;
            spacetime::reduce_to_vertex_scores(&st, *reducer)
        }
        DetectorKind::Spec { .. } => unreachable!(),
    };
    let mut scores = vec![0.0; g.order()];
    for (local, &v) in component.iter().enumerate() {
        scores[v] = local_scores[local];
    }
    Ok(scores)
}

/// Scores and truth of every detector for one trial, cue excluded.
pub fn run_trial(config: &ExperimentConfig, trial: u64) -> Result<Vec<TrialScores>> {
    let net = config.generator.generate(rng::derive_seed(config.seed, domain::TRIAL, trial))?;
    let cue = choose_cue(&net, config.seed, trial)?;
    let keep: Vec<usize> = (0..net.graph.order()).filter(|&v| v != cue.vertex).collect();
    let truth: Vec<bool> = keep.iter().map(|&v| net.truth[v]).collect();
    config
        .detectors
        .iter()
        .map(|d| {
            let scores = detector_scores(&net.graph, cue, &d.kind, config.generator.horizon(), &config.solver)
                .map_err(|e| Error::Experiment(format!("trial {trial}, detector {}: {e}", d.name)))?;
            Ok(TrialScores { scores: keep.iter().map(|&v| scores[v]).collect(), truth: truth.clone() })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DetectorResult {
    pub name: String,
    pub curve: RocCurve,
    pub convexity_defect: f64,
    pub trials: Vec<TrialScores>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub completed: usize,
    pub aborted: usize,
    pub detectors: Vec<DetectorResult>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let outcomes: Vec<Result<Vec<TrialScores>>> =
        (0..config.trials as u64).into_par_iter().map(|t| run_trial(config, t)).collect();
    let mut per_detector: Vec<Vec<TrialScores>> = vec![Vec::new(); config.detectors.len()];
    let mut aborted = 0;
    for outcome in outcomes {
        match outcome {
            Ok(scores) => {
                for (slot, s) in per_detector.iter_mut().zip(scores) {
                    slot.push(s);
                }
            }
            Err(e) => {
                log::warn!("trial aborted: {e}");
                aborted += 1;
            }
        }
    }
    if aborted as f64 > MAX_ABORTED_FRACTION * config.trials as f64 {
        return Err(Error::Experiment(format!("{aborted} of {} trials aborted", config.trials)));
    }
    let vertical_grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let detectors = config
        .detectors
        .iter()
        .zip(per_detector)
        .map(|(d, trials)| {
            let curve = match config.aggregation {
                Aggregation::Pooled => roc::pooled_roc(&trials, config.thresholds)?,
                Aggregation::Vertical => roc::vertical_average(&trials, &vertical_grid)?,
            };
            Ok(DetectorResult { name: d.name.clone(), convexity_defect: roc::convexity_defect(&curve), curve, trials })
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentResult {
        config: config.clone(),
        config_hash: config.hash(),
        completed: config.trials - aborted,
        aborted,
        detectors,
    })
}

impl ExperimentResult {
    pub fn detector(&self, name: &str) -> Option<&DetectorResult> {
        self.detectors.iter().find(|d| d.name == name)
    }

    pub fn summary(&self) -> serde_json::Value {
        let detectors: serde_json::Map<String, serde_json::Value> = self
            .detectors
            .iter()
            .map(|d| {
                let pd: Vec<serde_json::Value> = self
                    .config
                    .pfa_grid
                    .iter()
                    .map(|&x| serde_json::json!({ "pfa": x, "pd": roc::pd_at(&d.curve, x), "se": roc::se_at(&d.curve, x) }))
                    .collect();
                (
                    d.name.clone(),
                    serde_json::json!({
                        "auc": d.curve.auc,
                        "auc_se": d.curve.auc_se,
                        "convexity_defect": d.convexity_defect,
                        "points": d.curve.points.len(),
                        "positives": d.curve.positives,
                        "negatives": d.curve.negatives,
                        "pd_at_pfa": pd,
                    }),
                )
            })
            .collect();
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "name": self.config.name,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.config.seed,
            "config_hash": self.config_hash,
            "trials": { "requested": self.config.trials, "completed": self.completed, "aborted": self.aborted },
            "aggregation": self.config.aggregation,
            "detectors": detectors,
        })
    }

    /// Writes `roc_<detector>.csv`, `summary.json` and `roc.svg` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for d in &self.detectors {
            write_roc_csv(&d.curve, &dir.join(format!("roc_{}.csv", d.name)))?;
        }
        let summary = serde_json::to_string_pretty(&self.summary())?;
        std::fs::write(dir.join("summary.json"), summary + "\n")?;
        let curves: Vec<(String, &RocCurve)> = self.detectors.iter().map(|d| (d.name.clone(), &d.curve)).collect();
        let title = format!("{} ({} trials, seed {})", self.config.name, self.completed, self.config.seed);
        std::fs::write(dir.join("roc.svg"), plot::roc_svg(&curves, &title)?)?;
        Ok(())
    }
}

pub fn write_roc_csv(curve: &RocCurve, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    wtr.write_record(["threshold", "pfa", "pd", "se"])?;
    for p in &curve.points {
        wtr.write_record([p.threshold.to_string(), p.pfa.to_string(), p.pd.to_string(), p.se.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a curve written by [`write_roc_csv`]. Class sizes are not stored
/// and come back as zero.
pub fn read_roc_csv(path: &Path) -> Result<RocCurve> {
    let mut rdr = csv::Reader::from_path(path)?;
    let points = rdr.deserialize().collect::<std::result::Result<Vec<roc::RocPoint>, _>>()?;
    if points.len() < 2 {
        return Err(Error::InvalidParameter(format!("{} holds fewer than two ROC points", path.display())));
    }
    let auc = points.windows(2).map(|w| (w[1].pfa - w[0].pfa) * (w[1].pd + w[0].pd) / 2.0).sum();
    Ok(RocCurve { points, auc, auc_se: 0.0, trials: 0, positives: 0, negatives: 0, degenerate: false })
}

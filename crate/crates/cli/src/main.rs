use std::fs::File;
use std::hash::{BuildHasher, Hasher};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use threatprop::experiment::{self, config_hash, ExperimentConfig};
use threatprop::generators::{self, HmmbParams, SbmParams};
use threatprop::linsolve::SolverOptions;
use threatprop::plot;
use threatprop::priors::{compute_prior, PriorSpec};
use threatprop::spacetime::{self, EdgeMode, Reducer, SpaceTimeVariant, TimeGrid};
use threatprop::spatial;
use threatprop::spectral::{self, SpectralScore};
use threatprop::validate::{self, Fault, Level};
use threatprop::{Error, Graph, ObservationModel, ObservationSet};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "threatprop", version, about = "Threat propagation and covert-network detection")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random network with ground truth.
    #[command(subcommand)]
    Generate(Generate),
    /// Propagate threat from observations.
    #[command(subcommand)]
    Propagate(Propagate),
    /// Uncued detection.
    #[command(subcommand)]
    Detect(Detect),
    /// Monte Carlo ROC experiment.
    Experiment(ExperimentArgs),
    /// Run the self-check suite.
    Validate(ValidateArgs),
    /// Render ROC curves to SVG.
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum Generate {
    /// Blockmodel with an embedded foreground community.
    Sbm {
        /// JSON parameters; the embedded-foreground preset when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Foreground activity of the preset.
        #[arg(long, default_value_t = 2.0)]
        r_fg: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hybrid mixed-membership blockmodel.
    Hmmb {
        /// JSON parameters; the eleven-lifestyle preset when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Foreground coordination of the preset.
        #[arg(long, default_value_t = 1.0)]
        gamma_fg: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GraphInput {
    /// Edge list `src,dst,weight,t_src,t_dst`.
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    directed: bool,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "iteration")]
    solver: SolverChoice,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverChoice {
    Iteration,
    Bicgstab,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        let base = match self.solver {
            SolverChoice::Iteration => SolverOptions::default(),
            SolverChoice::Bicgstab => SolverOptions::bicgstab(),
        };
        SolverOptions { tol: self.tol, max_iter: self.max_iter, ..base }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorChoice {
    Dwtp,
    Lwtp,
    Bfs,
    Uniform,
}

fn prior_spec(choice: PriorChoice, psi: f64) -> PriorSpec {
    match choice {
        PriorChoice::Dwtp => PriorSpec::Dwtp,
        PriorChoice::Lwtp => PriorSpec::Lwtp,
        PriorChoice::Bfs => PriorSpec::Bfs,
        PriorChoice::Uniform => PriorSpec::Uniform { psi },
    }
}

#[derive(Subcommand)]
enum Propagate {
    /// Harmonic threat on the graph.
    Spatial {
        #[command(flatten)]
        graph: GraphInput,
        /// Observations `vertex,p` or `vertex,t,p`.
        #[arg(long)]
        observations: PathBuf,
        #[arg(long, value_enum, default_value = "dwtp")]
        prior: PriorChoice,
        /// Value of the uniform prior.
        #[arg(long, default_value_t = 0.5)]
        psi: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threat on the space-time graph.
    Spacetime {
        #[command(flatten)]
        graph: GraphInput,
        #[arg(long)]
        observations: PathBuf,
        /// Time bins over the observed span; chosen from the rate when absent.
        #[arg(long)]
        bins: Option<usize>,
        /// Kernel rate λ; the median-gap rule when absent.
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long, value_enum, default_value = "kernel")]
        mode: ModeChoice,
        /// Multiply the coordination prior by a spatial prior.
        #[arg(long, value_enum)]
        spatial_prior: Option<PriorChoice>,
        #[arg(long, default_value_t = 0.5)]
        psi: f64,
        #[arg(long, value_enum, default_value = "max")]
        reducer: ReducerChoice,
        /// Write every space-time vertex instead of one score per vertex.
        #[arg(long)]
        per_bin: bool,
        /// Unit of the timestamps, recorded in the metadata.
        #[arg(long, default_value = "unspecified")]
        time_unit: String,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeChoice {
    Kernel,
    Instant,
    Clique,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReducerChoice {
    Max,
    Mean,
}

#[derive(Subcommand)]
enum Detect {
    /// Modularity or Fiedler eigenvector scores.
    Spec {
        #[command(flatten)]
        graph: GraphInput,
        #[arg(long, value_enum, default_value = "modularity")]
        score: ScoreChoice,
        /// Modularity eigenvector index counted from the top.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreChoice {
    Modularity,
    Fiedler,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    aggregation: Option<AggregationChoice>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationChoice {
    Pooled,
    Vertical,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value = "fast")]
    level: LevelChoice,
    /// Write the JSON report here as well as to standard output.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultChoice>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelChoice {
    Fast,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultChoice {
    FlipBoundaryCoupling,
}

#[derive(Args)]
struct PlotArgs {
    /// `name=path` of a `roc_<detector>.csv` file; repeatable.
    #[arg(long = "curve", required = true)]
    curves: Vec<String>,
    #[arg(long, default_value = "ROC")]
    title: String,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Numerical(String),
    Validation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult = std::result::Result<(), Failure>;

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = std::collections::hash_map::RandomState::new().build_hasher().finish();
        eprintln!("seed: {s}");
        s
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> std::result::Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn load_graph(input: &GraphInput) -> std::result::Result<Graph, Failure> {
    let file = File::open(&input.edges).map_err(|e| Failure::Usage(format!("{}: {e}", input.edges.display())))?;
    Ok(Graph::read_csv(file, input.directed)?)
}

fn load_observations(path: &Path, g: &Graph) -> std::result::Result<ObservationSet, Failure> {
    let file = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(ObservationSet::read_csv(file, g, ObservationModel::Ideal)?)
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn write_scores(out: &Path, g: &Graph, header: &str, scores: &[f64]) -> CliResult {
    let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(out)?));
    wtr.write_record(["vertex", header]).map_err(Error::from)?;
    for (v, s) in scores.iter().enumerate() {
        wtr.write_record([g.label(v), &s.to_string()]).map_err(Error::from)?;
    }
    wtr.flush()?;
    Ok(())
}

fn generate(cmd: Generate) -> CliResult {
    let (net, out) = match cmd {
        Generate::Sbm { config, r_fg, seed, out } => {
            let params = match config {
                Some(path) => read_json::<SbmParams>(&path)?,
                None => SbmParams::embedded_foreground(r_fg),
            };
            (generators::generate_sbm(&params, resolve_seed(seed))?, out)
        }
        Generate::Hmmb { config, gamma_fg, seed, out } => {
            let params = match config {
                Some(path) => read_json::<HmmbParams>(&path)?,
                None => HmmbParams::eleven_lifestyles(gamma_fg),
            };
            (generators::generate_hmmb(&params, resolve_seed(seed))?, out)
        }
    };
    let mut net = net;
    if let Some(meta) = net.meta.as_object_mut() {
        meta.insert("version".into(), json!(VERSION));
        meta.insert("config_hash".into(), json!(config_hash(&meta.get("params"))));
    }
    net.write_to(&out)?;
    log::info!("{} vertices, {} interactions written to {}", net.graph.order(), net.graph.edges().len(), out.display());
    Ok(())
}

fn propagate(cmd: Propagate) -> CliResult {
    match cmd {
        Propagate::Spatial { graph, observations, prior, psi, solver, out } => {
            let g = load_graph(&graph)?;
            let obs = load_observations(&observations, &g)?;
            let spec = prior_spec(prior, psi);
            let prior_out = compute_prior(&g, spec, &obs)?;
            let threat = spatial::solve_harmonic(&g, &prior_out.psi, &obs, &solver.options())?;
            write_scores(&out, &g, "theta", &threat.theta)?;
            let settings = json!({
                "command": "propagate spatial",
                "edges": graph.edges,
                "observations": observations,
                "prior": spec,
                "solver": solver.options(),
            });
            write_json(
                &meta_path(&out),
                &json!({
                    "version": VERSION,
                    "config": settings,
                    "config_hash": config_hash(&settings),
                    "iterations": threat.stats.iterations,
                    "residual": threat.stats.residual,
                    "clamped_by": threat.clamped_by,
                    "approximate_path_length": prior_out.approximate_path_length,
                }),
            )
        }
        Propagate::Spacetime {
            graph,
            observations,
            bins,
            rate,
            mode,
            spatial_prior,
            psi,
            reducer,
            per_bin,
            time_unit,
            solver,
            out,
        } => {
            let g = load_graph(&graph)?;
            let obs = load_observations(&observations, &g)?;
            let rate = match rate {
                Some(r) => r,
                None => spacetime::median_gap_rate(&g)?,
            };
            let grid = match bins {
                Some(b) => {
                    let (lo, hi) = time_span(&g, &obs)?;
                    TimeGrid::spanning(lo, hi, b)?
                }
                None => spacetime::default_grid(&g, rate)?,
            };
            let mode = match mode {
                ModeChoice::Kernel => EdgeMode::Kernel,
                ModeChoice::Instant => EdgeMode::Instant,
                ModeChoice::Clique => EdgeMode::Clique,
            };
            let reducer = match reducer {
                ReducerChoice::Max => Reducer::Max,
                ReducerChoice::Mean => Reducer::Mean,
            };
            let sys = spacetime::assemble_spacetime(&g, grid, &[rate], &[mode])?;
            let variant = match spatial_prior {
                Some(p) => SpaceTimeVariant::CoordinatedSpatialPrior(compute_prior(&g, prior_spec(p, psi), &obs)?.psi),
                None => SpaceTimeVariant::Coordinated,
            };
            let st = spacetime::solve_spacetime(&sys, &obs, &variant, &solver.options())?;
            if per_bin {
                let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(&out)?));
                wtr.write_record(["vertex", "bin", "t", "theta"]).map_err(Error::from)?;
                for v in 0..g.order() {
                    for k in 0..grid.bins {
                        wtr.write_record([
                            g.label(v).to_string(),
                            k.to_string(),
                            grid.center(k).to_string(),
                            st.at(v, k).to_string(),
                        ])
                        .map_err(Error::from)?;
                    }
                }
                wtr.flush()?;
            } else {
                write_scores(&out, &g, "theta", &spacetime::reduce_to_vertex_scores(&st, reducer))?;
            }
            let settings = json!({
                "command": "propagate spacetime",
                "edges": graph.edges,
                "observations": observations,
                "grid": grid,
                "rate": rate,
                "mode": mode,
                "spatial_prior": spatial_prior.map(|p| prior_spec(p, psi)),
                "reducer": reducer,
                "per_bin": per_bin,
                "time_unit": time_unit,
                "solver": solver.options(),
            });
            write_json(
                &meta_path(&out),
                &json!({
                    "version": VERSION,
                    "config": settings,
                    "config_hash": config_hash(&settings),
                    "iterations": st.stats.iterations,
                    "residual": st.stats.residual,
                    "unreachable": st.unreachable,
                    "clamped_by": st.clamped_by,
                }),
            )
        }
    }
}

/// Smallest and largest time among edges and timed observations.
fn time_span(g: &Graph, obs: &ObservationSet) -> std::result::Result<(f64, f64), Failure> {
    let times = g
        .edges()
        .iter()
        .filter_map(|e| e.times)
        .flat_map(|(a, b)| [a, b])
        .chain(obs.entries().iter().filter_map(|o| o.time));
    let (lo, hi) = times.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
    if lo > hi {
        return Err(Failure::Usage("no timestamps in the edge list".into()));
    }
    Ok((lo, hi))
}

fn detect(cmd: Detect) -> CliResult {
    let Detect::Spec { graph, score, index, out } = cmd;
    let g = load_graph(&graph)?;
    let which = match (score, index) {
        (ScoreChoice::Fiedler, _) => SpectralScore::Fiedler,
        (ScoreChoice::Modularity, 0) => SpectralScore::PrincipalModularity,
        (ScoreChoice::Modularity, k) => SpectralScore::ModularityEigvec(k),
    };
    let result = spectral::spectral_scores(&g, which)?;
    write_scores(&out, &g, "score", &result.scores)?;
    let settings = json!({ "command": "detect spec", "edges": graph.edges, "score": which });
    write_json(
        &meta_path(&out),
        &json!({
            "version": VERSION,
            "config": settings,
            "config_hash": config_hash(&settings),
            "eigenvalue": result.eigenvalue,
            "residual": result.residual,
        }),
    )
}

fn run_experiment(args: ExperimentArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.config.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(a) = args.aggregation {
        config.aggregation = match a {
            AggregationChoice::Pooled => experiment::Aggregation::Pooled,
            AggregationChoice::Vertical => experiment::Aggregation::Vertical,
        };
    }
    let result = experiment::run_experiment(&config)?;
    result.write_outputs(&args.out)?;
    write_json(&args.out.join("config.json"), &serde_json::to_value(&config)?)?;
    for d in &result.detectors {
        eprintln!("{:<12} AUC {:.4} ± {:.4}", d.name, d.curve.auc, d.curve.auc_se);
    }
    Ok(())
}

fn run_validate(args: ValidateArgs) -> CliResult {
    let level = match args.level {
        LevelChoice::Fast => Level::Fast,
        LevelChoice::Full => Level::Full,
    };
    let fault = args.inject_fault.map(|f| match f {
        FaultChoice::FlipBoundaryCoupling => Fault::FlipBoundaryCoupling,
    });
    let report = validate::run_suite(level, fault);
    let text = serde_json::to_string_pretty(&report)? + "\n";
    print!("{text}");
    if let Some(path) = &args.report {
        std::fs::write(path, &text)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Validation(format!("failed checks: {}", report.failed().join(", "))))
    }
}

fn run_plot(args: PlotArgs) -> CliResult {
    let mut curves = Vec::new();
    for spec in &args.curves {
        let (name, path) =
            spec.split_once('=').ok_or_else(|| Failure::Usage(format!("--curve expects name=path, got '{spec}'")))?;
        curves.push((name.to_string(), experiment::read_roc_csv(Path::new(path))?));
    }
    let refs: Vec<(String, &threatprop::roc::RocCurve)> = curves.iter().map(|(n, c)| (n.clone(), c)).collect();
    std::fs::write(&args.out, plot::roc_svg(&refs, &args.title)?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    let threads = cli.threads.unwrap_or(0);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(1);
    }
    let outcome = match cli.command {
        Command::Generate(g) => generate(g),
        Command::Propagate(p) => propagate(p),
        Command::Detect(d) => detect(d),
        Command::Experiment(a) => run_experiment(a),
        Command::Validate(a) => run_validate(a),
        Command::Plot(a) => run_plot(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(3)
        }
    }
}

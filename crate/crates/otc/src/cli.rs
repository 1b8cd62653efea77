//! Command-line interface.
//!
//! Subcommands: `compress` (one graph or a whole dataset entry point),
//! `distance` (exact transport distance between two distributions),
//! `project` (direct access to the projection operators), `certify`
//! (support-exactness check), `gen-tree` (the 21-node reference tree), and
//! `batch` (compress every graph in a benchmark-dataset directory).
//!
//! Exit codes: 0 success, 1 input/usage error, 2 solver failure. Log
//! verbosity comes from the `OTC_LOG` environment variable.

use std::ffi::OsString;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::compressor::{self, SaddleOptions};
use crate::graph::{self, Convention, Graph, NodeDistribution};
use crate::io::{
    self, apply_setting, CostMode, IoError, PriorMode, ReportFormat, RunConfig,
};
use crate::projections::{self, DiagonalWeights, SlabOptions};
use crate::transport;

#[derive(Parser)]
#[command(
    name = "otc",
    version,
    about = "Compress node distributions on graphs via exact optimal transport"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a graph's prior distribution onto at most k nodes
    Compress(CompressArgs),
    /// Exact transport distance between two node distributions
    Distance(DistanceArgs),
    /// Apply one of the projection operators to a vector
    Project(ProjectArgs),
    /// Check whether a node support is provably optimal
    Certify(CertifyArgs),
    /// Emit the 21-node reference tree as an edge list
    GenTree(GenTreeArgs),
    /// Compress every graph in a benchmark-dataset directory
    Batch(BatchArgs),
}

/// Solver settings; every flag overrides the config file.
#[derive(Args, Clone, Default)]
struct SolverFlags {
    /// key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// support budget (node count)
    #[arg(short, long)]
    k: Option<usize>,
    /// support budget as a fraction of |V|, rounded up
    #[arg(long, conflicts_with = "k")]
    k_frac: Option<f64>,
    /// regularization weight
    #[arg(long)]
    lambda: Option<f64>,
    /// extragradient iterations
    #[arg(short = 'T', long)]
    iterations: Option<usize>,
    /// step size for the selector block
    #[arg(long)]
    alpha: Option<f64>,
    /// step size for the potential block
    #[arg(long)]
    beta: Option<f64>,
    /// step size for the scalar dual
    #[arg(long)]
    gamma: Option<f64>,
    /// incidence convention: oriented | as-written
    #[arg(long)]
    convention: Option<String>,
    /// edge-cost source: from-file | label
    #[arg(long)]
    cost_mode: Option<String>,
    /// cost for same-label endpoints (implies label costs)
    #[arg(long)]
    same_cost: Option<f64>,
    /// cost for different-label endpoints (implies label costs)
    #[arg(long)]
    diff_cost: Option<f64>,
    /// prior distribution: degree | file:PATH
    #[arg(long)]
    prior: Option<String>,
    /// seed recorded in run metadata
    #[arg(long)]
    seed: Option<u64>,
}

impl SolverFlags {
    fn resolve(&self) -> Result<RunConfig, IoError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| IoError::File {
                    path: path.display().to_string(),
                    source,
                })?;
                io::parse_config(&text, &path.display().to_string())?
            }
            None => RunConfig::default(),
        };
        let overrides: [(&str, Option<String>); 12] = [
            ("k", self.k.map(|v| v.to_string())),
            ("k-frac", self.k_frac.map(|v| v.to_string())),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("iterations", self.iterations.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("convention", self.convention.clone()),
            ("cost-mode", self.cost_mode.clone()),
            ("same-cost", self.same_cost.map(|v| v.to_string())),
            ("diff-cost", self.diff_cost.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                apply_setting(&mut config, key, &value)?;
            }
        }
        if let Some(prior) = &self.prior {
            apply_setting(&mut config, "prior", prior)?;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct CompressArgs {
    /// edge-list file; `-` or omitted reads stdin
    graph: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
    /// output format
    #[arg(long, default_value = "json")]
    format: String,
    /// write the report here instead of stdout
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DistanceArgs {
    /// edge-list file; `-` or omitted reads stdin
    graph: Option<PathBuf>,
    /// source distribution file (one value per line); default degree prior
    #[arg(long)]
    rho0: Option<PathBuf>,
    /// target distribution file (one value per line)
    #[arg(long)]
    rho1: PathBuf,
    /// incidence convention: oriented | as-written
    #[arg(long, default_value = "oriented")]
    convention: String,
}

#[derive(Args)]
struct ProjectArgs {
    /// which operator: simplex | capped-box | slab
    kind: String,
    /// input vector file, one value per line
    #[arg(long)]
    input: PathBuf,
    /// weight vector file for the simplex projection
    #[arg(long)]
    eps: Option<PathBuf>,
    /// budget for the capped-box projection
    #[arg(short, long)]
    k: Option<usize>,
    /// edge-list file defining the slab set
    #[arg(long)]
    graph: Option<PathBuf>,
    /// incidence convention: oriented | as-written
    #[arg(long, default_value = "oriented")]
    convention: String,
}

#[derive(Args)]
struct CertifyArgs {
    /// edge-list file; `-` or omitted reads stdin
    graph: Option<PathBuf>,
    /// comma-separated node ids
    #[arg(long)]
    support: String,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value = "oriented")]
    convention: String,
}

#[derive(Args)]
struct GenTreeArgs {
    /// write the edge list here instead of stdout
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    /// benchmark-dataset directory
    dataset: PathBuf,
    /// directory for per-graph reports and the summary
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    /// worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

/// Anything that maps to exit code 1.
#[derive(Debug, thiserror::Error)]
enum InputError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error("{0}")]
    Invalid(String),
}

fn read_graph_input(path: &Option<PathBuf>) -> Result<Graph, InputError> {
    let (text, origin) = match path {
        Some(p) if p.as_os_str() != "-" => {
            let text = fs::read_to_string(p).map_err(|source| IoError::File {
                path: p.display().to_string(),
                source,
            })?;
            (text, p.display().to_string())
        }
        _ => {
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|source| IoError::File {
                    path: "<stdin>".to_string(),
                    source,
                })?;
            (text, "<stdin>".to_string())
        }
    };
    Ok(io::parse_edgelist_str(&text, &origin)?)
}

fn apply_cost_mode(graph: Graph, mode: &CostMode) -> Result<Graph, InputError> {
    match mode {
        CostMode::FromFile => Ok(graph),
        CostMode::Label { same, diff } => Ok(graph::label_costs(&graph, *same, *diff)?),
    }
}

fn build_prior(graph: &Graph, mode: &PriorMode) -> Result<NodeDistribution, InputError> {
    match mode {
        PriorMode::DegreeStationary => Ok(graph::stationary_prior(graph)?),
        PriorMode::FromFile(path) => {
            let values = io::parse_distribution(path)?;
            Ok(NodeDistribution::simplex(values)?)
        }
    }
}

fn parse_convention_arg(s: &str) -> Result<Convention, InputError> {
    Ok(io::parse_convention(s)?)
}

fn write_or_print(content: &str, output: &Option<PathBuf>) -> Result<(), InputError> {
    match output {
        Some(path) => fs::write(path, content).map_err(|source| {
            IoError::Write {
                path: path.display().to_string(),
                source,
            }
            .into()
        }),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Entry point; returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("OTC_LOG")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Compress(args) => run_compress(args),
        Command::Distance(args) => run_distance(args),
        Command::Project(args) => run_project(args),
        Command::Certify(args) => run_certify(args),
        Command::GenTree(args) => run_gen_tree(args),
        Command::Batch(args) => run_batch(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(CliFailure::Input(err)) => {
            eprintln!("error: {err}");
            1
        }
        Err(CliFailure::Solver(err)) => {
            eprintln!("solver error: {err}");
            2
        }
    }
}

enum CliFailure {
    Input(InputError),
    Solver(compressor::CompressError),
}

impl From<InputError> for CliFailure {
    fn from(e: InputError) -> Self {
        CliFailure::Input(e)
    }
}

impl From<IoError> for CliFailure {
    fn from(e: IoError) -> Self {
        CliFailure::Input(e.into())
    }
}

impl From<compressor::CompressError> for CliFailure {
    fn from(e: compressor::CompressError) -> Self {
        use compressor::CompressError as E;
        match e {
            E::BadBudget { .. } | E::NonpositiveLambda(_) | E::NoIterations | E::Graph(_) => {
                CliFailure::Input(InputError::Invalid(e.to_string()))
            }
            other => CliFailure::Solver(other),
        }
    }
}

fn saddle_options(config: &RunConfig, k: usize) -> SaddleOptions {
    SaddleOptions {
        k,
        lambda: config.lambda,
        iterations: config.iterations,
        steps: config.steps,
        convention: config.convention,
        slab: SlabOptions::default(),
    }
}

fn parse_format(s: &str) -> Result<ReportFormat, InputError> {
    match s {
        "json" => Ok(ReportFormat::Json),
        "dot" => Ok(ReportFormat::Dot),
        other => Err(InputError::Invalid(format!(
            "unknown format `{other}` (expected `json` or `dot`)"
        ))),
    }
}

fn run_compress(args: CompressArgs) -> Result<(), CliFailure> {
    let config = args.solver.resolve().map_err(InputError::from)?;
    let format = parse_format(&args.format)?;
    let graph = read_graph_input(&args.graph)?;
    let graph = apply_cost_mode(graph, &config.cost_mode)?;
    let rho0 = build_prior(&graph, &config.prior_mode)?;
    let k = config.budget.resolve(graph.num_nodes());
    let report = compressor::compress(&graph, &rho0, &saddle_options(&config, k))?;
    let rendered = io::emit_report(&report, &graph, format)?;
    write_or_print(&rendered, &args.output)?;
    Ok(())
}

#[derive(Serialize)]
struct DistanceOutput {
    feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dual_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    potentials: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jplus: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jminus: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    active_edges: Option<Vec<usize>>,
}

fn run_distance(args: DistanceArgs) -> Result<(), CliFailure> {
    let convention = parse_convention_arg(&args.convention)?;
    let graph = read_graph_input(&args.graph)?;
    let rho0 = match &args.rho0 {
        Some(path) => {
            NodeDistribution::simplex(io::parse_distribution(path)?).map_err(InputError::from)?
        }
        None => graph::stationary_prior(&graph).map_err(InputError::from)?,
    };
    let rho1 = NodeDistribution::simplex(io::parse_distribution(&args.rho1)?)
        .map_err(InputError::from)?;
    let output = match transport::ot_distance(&graph, &rho0, &rho1, convention) {
        Ok(sol) => DistanceOutput {
            feasible: true,
            distance: Some(sol.primal_value),
            dual_value: Some(sol.dual_value),
            potentials: Some(sol.potentials),
            jplus: Some(sol.jplus),
            jminus: Some(sol.jminus),
            active_edges: Some(sol.active_edges),
        },
        Err(transport::TransportError::Infeasible(_)) => DistanceOutput {
            feasible: false,
            distance: None,
            dual_value: None,
            potentials: None,
            jplus: None,
            jminus: None,
            active_edges: None,
        },
        Err(e) => return Err(CliFailure::Solver(e.into())),
    };
    println!("{}", serde_json::to_string_pretty(&output).map_err(IoError::from)?);
    Ok(())
}

fn run_project(args: ProjectArgs) -> Result<(), CliFailure> {
    let y = io::parse_distribution(&args.input)?;
    let projected = match args.kind.as_str() {
        "simplex" => {
            let eps_path = args.eps.as_ref().ok_or_else(|| {
                InputError::Invalid("`simplex` needs --eps".to_string())
            })?;
            let eps = io::parse_distribution(eps_path)?;
            let weights = DiagonalWeights::new(eps).map_err(solver_input)?;
            projections::project_diag_simplex(&y, &weights).map_err(solver_input)?
        }
        "capped-box" => {
            let k = args.k.ok_or_else(|| {
                InputError::Invalid("`capped-box` needs --k".to_string())
            })?;
            projections::project_capped_box(&y, k).map_err(solver_input)?
        }
        "slab" => {
            let convention = parse_convention_arg(&args.convention)?;
            let graph = read_graph_input(&args.graph)?;
            if y.len() != graph.num_nodes() {
                return Err(InputError::Invalid(format!(
                    "vector length {} does not match |V| = {}",
                    y.len(),
                    graph.num_nodes()
                ))
                .into());
            }
            let incidence = graph::build_incidence(&graph, convention);
            let costs = graph.costs();
            projections::project_slabs(&y, &incidence, &costs, SlabOptions::default())
                .map_err(|e| CliFailure::Solver(e.into()))?
        }
        other => {
            return Err(InputError::Invalid(format!(
                "unknown projection `{other}` (expected simplex | capped-box | slab)"
            ))
            .into())
        }
    };
    for v in projected {
        println!("{v}");
    }
    Ok(())
}

fn solver_input(e: projections::ProjectionError) -> CliFailure {
    CliFailure::Input(InputError::Invalid(e.to_string()))
}

#[derive(Serialize)]
struct CertifyOutput {
    certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

fn run_certify(args: CertifyArgs) -> Result<(), CliFailure> {
    let convention = parse_convention_arg(&args.convention)?;
    let graph = read_graph_input(&args.graph)?;
    let support: Vec<usize> = args
        .support
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| InputError::Invalid(format!("bad node id `{s}` in --support")))
        })
        .collect::<Result<_, _>>()?;
    for &v in &support {
        if v >= graph.num_nodes() {
            return Err(InputError::Invalid(format!(
                "support node {v} out of range (|V| = {})",
                graph.num_nodes()
            ))
            .into());
        }
    }
    let rho0 = graph::stationary_prior(&graph).map_err(InputError::from)?;
    let cert = compressor::certify(&graph, &rho0, &support, args.lambda, convention)?;
    let output = match cert {
        compressor::Certificate::Exact { margin } => CertifyOutput {
            certified: true,
            margin: Some(margin),
            reason: None,
        },
        compressor::Certificate::NotCertified { reason } => CertifyOutput {
            certified: false,
            margin: None,
            reason: Some(reason),
        },
    };
    println!("{}", serde_json::to_string_pretty(&output).map_err(IoError::from)?);
    Ok(())
}

fn run_gen_tree(args: GenTreeArgs) -> Result<(), CliFailure> {
    let tree = io::make_fig2_tree();
    write_or_print(&io::emit_edgelist(&tree), &args.output)?;
    Ok(())
}

#[derive(Serialize)]
struct BatchSummary {
    num_graphs: usize,
    skipped_invalid: usize,
    compressed: usize,
    failures: Vec<BatchFailure>,
}

#[derive(Serialize)]
struct BatchFailure {
    graph_id: String,
    error: String,
}

fn run_batch(args: BatchArgs) -> Result<(), CliFailure> {
    let config = args.solver.resolve().map_err(InputError::from)?;
    let bundle = io::parse_tudataset(&args.dataset)?;
    fs::create_dir_all(&args.output).map_err(|source| IoError::Write {
        path: args.output.display().to_string(),
        source,
    })?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| InputError::Invalid(e.to_string()))?;

    let results: Vec<(String, Result<(), String>)> = pool.install(|| {
        bundle
            .graphs
            .par_iter()
            .map(|(id, graph)| {
                let outcome = compress_one(graph, &config, &args.output, id);
                (id.clone(), outcome.map_err(|e| e.to_string()))
            })
            .collect()
    });

    let mut failures: Vec<BatchFailure> = results
        .iter()
        .filter_map(|(id, r)| {
            r.as_ref().err().map(|e| BatchFailure {
                graph_id: id.clone(),
                error: e.clone(),
            })
        })
        .collect();
    failures.sort_by(|a, b| a.graph_id.cmp(&b.graph_id));
    let summary = BatchSummary {
        num_graphs: bundle.graphs.len(),
        skipped_invalid: bundle.skipped,
        compressed: bundle.graphs.len() - failures.len(),
        failures,
    };
    let text = format!(
        "{}\n",
        serde_json::to_string_pretty(&summary).map_err(IoError::from)?
    );
    fs::write(args.output.join("summary.json"), &text).map_err(|source| IoError::Write {
        path: args.output.join("summary.json").display().to_string(),
        source,
    })?;
    print!("{text}");
    Ok(())
}

fn compress_one(
    graph: &Graph,
    config: &RunConfig,
    out_dir: &Path,
    id: &str,
) -> Result<(), String> {
    let graph = apply_cost_mode(graph.clone(), &config.cost_mode).map_err(|e| e.to_string())?;
    let rho0 = build_prior(&graph, &config.prior_mode).map_err(|e| e.to_string())?;
    let k = config.budget.resolve(graph.num_nodes());
    let report = compressor::compress(&graph, &rho0, &saddle_options(config, k))
        .map_err(|e| e.to_string())?;
    let rendered =
        io::emit_report(&report, &graph, ReportFormat::Json).map_err(|e| e.to_string())?;
    fs::write(out_dir.join(format!("graph_{id}.json")), rendered).map_err(|e| e.to_string())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::BudgetSpec;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "k = 3\nlambda = 2.0\n").unwrap();
        let flags = SolverFlags {
            config: Some(path),
            lambda: Some(0.5),
            ..Default::default()
        };
        let config = flags.resolve().unwrap();
        assert_eq!(config.budget, BudgetSpec::Count(3));
        assert_eq!(config.lambda, 0.5);
    }

    #[test]
    fn unknown_flag_exits_one() {
        assert_eq!(cli_main(["otc", "--definitely-not-a-flag"]), 1);
        assert_eq!(cli_main(["otc", "compress", "--bogus"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(cli_main(["otc", "--help"]), 0);
    }
}

//! File formats and report emission.
//!
//! Two graph input formats are supported: a plain edge-list text format
//! (one `u v [cost] [D]` record per line, `node id label` records for
//! labels, `#` comments) and the common benchmark-dataset directory layout
//! with `*_A.txt` / `*_graph_indicator.txt` / `*_node_labels.txt` files.
//! Reports serialize to a versioned JSON schema or to DOT with the removed
//! parts of the graph shown in gray. Also here: the 21-node reference tree
//! used throughout the documentation and tests, and the run configuration
//! shared by the CLI and config files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compressor::{CompressionReport, StepSizes};
use crate::graph::{Convention, Edge, EdgeKind, Graph, GraphError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{origin}:{line}: {message}")]
    Malformed {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("missing required file: {0}")]
    MissingFile(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One or many parsed graphs with stable string ids.
#[derive(Debug)]
pub struct GraphBundle {
    pub graphs: Vec<(String, Graph)>,
    /// graphs dropped because their skeleton failed validation
    pub skipped: usize,
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Parse the edge-list text format from a file. The bundle holds exactly
/// one graph, id = file stem.
pub fn parse_edgelist(path: &Path) -> Result<GraphBundle, IoError> {
    let text = read_to_string(path)?;
    let origin = path.display().to_string();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "graph".to_string());
    let graph = parse_edgelist_str(&text, &origin)?;
    Ok(GraphBundle {
        graphs: vec![(id, graph)],
        skipped: 0,
    })
}

/// Parse the edge-list text format:
///
/// ```text
/// # comment
/// node 0 3          label record: node 0 carries label 3
/// 0 1               undirected edge, cost 1.0
/// 1 2 0.5           undirected edge, cost 0.5
/// 2 0 0.5 D         directed edge 2 -> 0, cost 0.5
/// ```
///
/// Nodes are 0..=max referenced id. Errors carry the 1-based line number.
pub fn parse_edgelist_str(text: &str, origin: &str) -> Result<Graph, IoError> {
    let fail = |line: usize, message: String| IoError::Malformed {
        origin: origin.to_string(),
        line,
        message,
    };
    let mut edges: Vec<Edge> = Vec::new();
    let mut labels: HashMap<usize, i64> = HashMap::new();
    let mut max_id: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens[0] == "node" {
            if tokens.len() != 3 {
                return Err(fail(line, "expected `node <id> <label>`".to_string()));
            }
            let id: usize = tokens[1]
                .parse()
                .map_err(|_| fail(line, format!("bad node id `{}`", tokens[1])))?;
            let label: i64 = tokens[2]
                .parse()
                .map_err(|_| fail(line, format!("bad label `{}`", tokens[2])))?;
            labels.insert(id, label);
            max_id = Some(max_id.map_or(id, |m| m.max(id)));
            continue;
        }
        if tokens.len() < 2 || tokens.len() > 4 {
            return Err(fail(line, "expected `u v [cost] [D]`".to_string()));
        }
        let u: usize = tokens[0]
            .parse()
            .map_err(|_| fail(line, format!("bad endpoint `{}`", tokens[0])))?;
        let v: usize = tokens[1]
            .parse()
            .map_err(|_| fail(line, format!("bad endpoint `{}`", tokens[1])))?;
        let mut cost = 1.0f64;
        let mut directed = false;
        match tokens.len() {
            3 => {
                if tokens[2] == "D" {
                    directed = true;
                } else {
                    cost = tokens[2]
                        .parse()
                        .map_err(|_| fail(line, format!("bad cost `{}`", tokens[2])))?;
                }
            }
            4 => {
                cost = tokens[2]
                    .parse()
                    .map_err(|_| fail(line, format!("bad cost `{}`", tokens[2])))?;
                if tokens[3] != "D" {
                    return Err(fail(line, format!("expected `D`, got `{}`", tokens[3])));
                }
                directed = true;
            }
            _ => {}
        }
        if !cost.is_finite() {
            return Err(fail(line, format!("non-finite cost `{cost}`")));
        }
        edges.push(if directed {
            Edge::directed(u, v, cost)
        } else {
            Edge::undirected(u, v, cost)
        });
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
    }

    let Some(max_id) = max_id else {
        return Err(IoError::Invalid(format!("{origin}: no records found")));
    };
    let n = max_id + 1;
    let label_vec: Vec<Option<i64>> = (0..n).map(|v| labels.get(&v).copied()).collect();
    Ok(Graph::with_labels(n, edges, label_vec)?)
}

/// Inverse of [`parse_edgelist_str`]: emits label records then edge
/// records, in stored order, with costs printed exactly round-trippable.
pub fn emit_edgelist(graph: &Graph) -> String {
    let mut out = String::new();
    for (v, label) in graph.labels().iter().enumerate() {
        if let Some(label) = label {
            writeln!(out, "node {v} {label}").unwrap();
        }
    }
    for edge in graph.edges() {
        match edge.kind {
            EdgeKind::Undirected => writeln!(out, "{} {} {}", edge.tail, edge.head, edge.cost),
            EdgeKind::Directed => writeln!(out, "{} {} {} D", edge.tail, edge.head, edge.cost),
        }
        .unwrap();
    }
    out
}

/// Parse a benchmark-dataset directory: `PREFIX_A.txt` holds 1-indexed
/// `u, v` pairs, `PREFIX_graph_indicator.txt` maps each node to its graph,
/// `PREFIX_node_labels.txt` (optional) one integer label per node.
/// Reversed duplicate pairs collapse into single undirected edges; graphs
/// whose skeleton fails validation are skipped and counted, not fatal.
pub fn parse_tudataset(dir: &Path) -> Result<GraphBundle, IoError> {
    let entries = fs::read_dir(dir).map_err(|source| IoError::File {
        path: dir.display().to_string(),
        source,
    })?;
    let mut a_path: Option<PathBuf> = None;
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with("_A.txt") {
            a_path = Some(entry.path());
            break;
        }
    }
    let a_path = a_path.ok_or_else(|| {
        IoError::MissingFile(format!("{}/<prefix>_A.txt", dir.display()))
    })?;
    let prefix = a_path
        .file_name()
        .unwrap()
        .to_string_lossy()
        .trim_end_matches("_A.txt")
        .to_string();
    let indicator_path = dir.join(format!("{prefix}_graph_indicator.txt"));
    if !indicator_path.exists() {
        return Err(IoError::MissingFile(indicator_path.display().to_string()));
    }

    let parse_ints = |path: &Path| -> Result<Vec<i64>, IoError> {
        let text = read_to_string(path)?;
        let origin = path.display().to_string();
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(idx, l)| {
                l.trim().parse::<i64>().map_err(|_| IoError::Malformed {
                    origin: origin.clone(),
                    line: idx + 1,
                    message: format!("bad integer `{}`", l.trim()),
                })
            })
            .collect()
    };

    let indicator = parse_ints(&indicator_path)?;
    let labels_path = dir.join(format!("{prefix}_node_labels.txt"));
    let labels: Option<Vec<i64>> = if labels_path.exists() {
        let l = parse_ints(&labels_path)?;
        if l.len() != indicator.len() {
            return Err(IoError::Invalid(format!(
                "{}: {} labels for {} nodes",
                labels_path.display(),
                l.len(),
                indicator.len()
            )));
        }
        Some(l)
    } else {
        None
    };

    // global 1-indexed node -> (graph id, local 0-indexed id)
    let mut graph_ids: Vec<i64> = indicator.clone();
    graph_ids.sort_unstable();
    graph_ids.dedup();
    let mut local: Vec<usize> = vec![0; indicator.len()];
    let mut sizes: HashMap<i64, usize> = HashMap::new();
    for (node, &gid) in indicator.iter().enumerate() {
        let next = sizes.entry(gid).or_insert(0);
        local[node] = *next;
        *next += 1;
    }

    let a_text = read_to_string(&a_path)?;
    let a_origin = a_path.display().to_string();
    let mut per_graph_edges: HashMap<i64, Vec<Edge>> = HashMap::new();
    // unordered pair -> pending occurrence awaiting its reverse
    let mut pending: HashMap<(i64, usize, usize), usize> = HashMap::new();
    for (idx, raw) in a_text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() {
            continue;
        }
        let fail = |message: String| IoError::Malformed {
            origin: a_origin.clone(),
            line,
            message,
        };
        let mut parts = content.split(',');
        let u: usize = parts
            .next()
            .map(str::trim)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fail("expected `u, v`".to_string()))?;
        let v: usize = parts
            .next()
            .map(str::trim)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fail("expected `u, v`".to_string()))?;
        if u == 0 || v == 0 || u > indicator.len() || v > indicator.len() {
            return Err(fail(format!("node id out of range in `{content}`")));
        }
        let (gu, gv) = (indicator[u - 1], indicator[v - 1]);
        if gu != gv {
            return Err(fail(format!("edge {u},{v} crosses graphs {gu} and {gv}")));
        }
        let (lu, lv) = (local[u - 1], local[v - 1]);
        let key = (gu, lu.min(lv), lu.max(lv));
        let slot = pending.entry(key).or_insert(0);
        if *slot > 0 {
            *slot -= 1; // reverse of an already-recorded pair
        } else {
            per_graph_edges
                .entry(gu)
                .or_default()
                .push(Edge::undirected(lu, lv, 1.0));
            *slot = 1;
        }
    }

    let mut graphs = Vec::new();
    let mut skipped = 0;
    for &gid in &graph_ids {
        let n = sizes[&gid];
        let edges = per_graph_edges.remove(&gid).unwrap_or_default();
        let label_vec: Vec<Option<i64>> = match &labels {
            Some(all) => {
                let mut v = vec![None; n];
                for (node, &g) in indicator.iter().enumerate() {
                    if g == gid {
                        v[local[node]] = Some(all[node]);
                    }
                }
                v
            }
            None => vec![None; n],
        };
        match Graph::with_labels(n, edges, label_vec) {
            Ok(g) => graphs.push((gid.to_string(), g)),
            Err(err) => {
                log::warn!("skipping graph {gid}: {err}");
                skipped += 1;
            }
        }
    }
    Ok(GraphBundle { graphs, skipped })
}

/// The 21-node reference tree: a 4-ary tree of depth 2. Root 0 connects to
/// internals 1..4 at cost 0.3; internal i owns leaves 4i+1..4i+4; internal
/// i has exactly i heavy (0.5) leaf edges, the highest-id leaves, and the
/// rest are light (0.1).
pub fn make_fig2_tree() -> Graph {
    let mut edges = Vec::new();
    for i in 1..=4 {
        edges.push(Edge::undirected(0, i, 0.3));
    }
    for i in 1..=4usize {
        for leaf in (4 * i + 1)..=(4 * i + 4) {
            let heavy = leaf > 4 * i + 4 - i; // the i highest-id children
            let cost = if heavy { 0.5 } else { 0.1 };
            edges.push(Edge::undirected(i, leaf, cost));
        }
    }
    Graph::new(21, edges).expect("reference tree is valid")
}

/// Versioned envelope for serialized compression reports.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub report: CompressionReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Dot,
}

/// Render a report. JSON output is the versioned schema; DOT output draws
/// the whole graph with the removed nodes and their edges in gray. Both
/// renderings are byte-deterministic functions of their inputs.
pub fn emit_report(
    report: &CompressionReport,
    graph: &Graph,
    format: ReportFormat,
) -> Result<String, IoError> {
    match format {
        ReportFormat::Json => {
            let doc = ReportDocument {
                schema_version: REPORT_SCHEMA_VERSION,
                report: report.clone(),
            };
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Dot => Ok(render_dot(report, graph)),
    }
}

/// Write a report to a file (or stdout handled by the caller).
pub fn write_report(
    report: &CompressionReport,
    graph: &Graph,
    format: ReportFormat,
    path: &Path,
) -> Result<(), IoError> {
    let rendered = emit_report(report, graph, format)?;
    fs::write(path, rendered).map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn render_dot(report: &CompressionReport, graph: &Graph) -> String {
    let mut kept = vec![false; graph.num_nodes()];
    for &v in &report.support {
        kept[v] = true;
    }
    let mut out = String::from("graph compressed {\n  node [style=filled];\n");
    for v in 0..graph.num_nodes() {
        let color = if kept[v] { "palegreen" } else { "gray" };
        let label = match graph.label(v) {
            Some(l) => format!("{v} ({l})"),
            None => format!("{v}"),
        };
        writeln!(out, "  {v} [label=\"{label}\", fillcolor={color}];").unwrap();
    }
    for edge in graph.edges() {
        let live = kept[edge.tail] && kept[edge.head];
        let mut attrs = vec![format!("label=\"{}\"", edge.cost)];
        if !live {
            attrs.push("color=gray".to_string());
        }
        if edge.kind == EdgeKind::Directed {
            attrs.push("dir=forward".to_string());
        }
        writeln!(
            out,
            "  {} -- {} [{}];",
            edge.tail,
            edge.head,
            attrs.join(", ")
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

/// Budget given either as an absolute count or as a fraction of the node
/// count (rounded up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetSpec {
    Count(usize),
    Fraction(f64),
}

impl BudgetSpec {
    pub fn resolve(&self, num_nodes: usize) -> usize {
        match *self {
            BudgetSpec::Count(k) => k,
            BudgetSpec::Fraction(f) => ((f * num_nodes as f64).ceil() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostMode {
    /// keep costs as parsed (default 1.0 where the format has none)
    FromFile,
    /// reassign by endpoint-label equality
    Label { same: f64, diff: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorMode {
    DegreeStationary,
    /// dense vector, one value per line
    FromFile(PathBuf),
}

/// Solver and pipeline settings shared by the CLI and config files.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub budget: BudgetSpec,
    pub lambda: f64,
    pub iterations: usize,
    pub steps: StepSizes,
    pub convention: Convention,
    pub cost_mode: CostMode,
    pub prior_mode: PriorMode,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            budget: BudgetSpec::Fraction(0.5),
            lambda: 1.0,
            iterations: 25,
            steps: StepSizes::default(),
            convention: Convention::Oriented,
            cost_mode: CostMode::FromFile,
            prior_mode: PriorMode::DegreeStationary,
            seed: 0,
        }
    }
}

pub fn parse_convention(s: &str) -> Result<Convention, IoError> {
    match s {
        "oriented" => Ok(Convention::Oriented),
        "as-written" => Ok(Convention::AsWritten),
        other => Err(IoError::Invalid(format!(
            "unknown convention `{other}` (expected `oriented` or `as-written`)"
        ))),
    }
}

/// Apply one `key = value` setting to a config. Shared by the config-file
/// parser and CLI overrides.
pub fn apply_setting(config: &mut RunConfig, key: &str, value: &str) -> Result<(), IoError> {
    let bad = |what: &str| IoError::Invalid(format!("bad value `{value}` for {what}"));
    match key {
        "k" => config.budget = BudgetSpec::Count(value.parse().map_err(|_| bad("k"))?),
        "k-frac" | "k_frac" => {
            let f: f64 = value.parse().map_err(|_| bad("k-frac"))?;
            if !(0.0..=1.0).contains(&f) || f == 0.0 {
                return Err(bad("k-frac"));
            }
            config.budget = BudgetSpec::Fraction(f);
        }
        "lambda" => {
            config.lambda = value.parse().map_err(|_| bad("lambda"))?;
            if config.lambda <= 0.0 {
                return Err(bad("lambda"));
            }
        }
        "iterations" | "T" => config.iterations = value.parse().map_err(|_| bad("iterations"))?,
        "alpha" => config.steps.alpha = value.parse().map_err(|_| bad("alpha"))?,
        "beta" => config.steps.beta = value.parse().map_err(|_| bad("beta"))?,
        "gamma" => config.steps.gamma = value.parse().map_err(|_| bad("gamma"))?,
        "convention" => config.convention = parse_convention(value)?,
        "cost-mode" | "cost_mode" => match value {
            "from-file" => config.cost_mode = CostMode::FromFile,
            "label" => {
                config.cost_mode = CostMode::Label {
                    same: crate::graph::DEFAULT_SAME_LABEL_COST,
                    diff: crate::graph::DEFAULT_DIFF_LABEL_COST,
                }
            }
            _ => return Err(bad("cost-mode")),
        },
        "same-cost" | "same_cost" => {
            let same: f64 = value.parse().map_err(|_| bad("same-cost"))?;
            match &mut config.cost_mode {
                CostMode::Label { same: s, .. } => *s = same,
                CostMode::FromFile => {
                    config.cost_mode = CostMode::Label {
                        same,
                        diff: crate::graph::DEFAULT_DIFF_LABEL_COST,
                    }
                }
            }
        }
        "diff-cost" | "diff_cost" => {
            let diff: f64 = value.parse().map_err(|_| bad("diff-cost"))?;
            match &mut config.cost_mode {
                CostMode::Label { diff: d, .. } => *d = diff,
                CostMode::FromFile => {
                    config.cost_mode = CostMode::Label {
                        same: crate::graph::DEFAULT_SAME_LABEL_COST,
                        diff,
                    }
                }
            }
        }
        "prior" => {
            config.prior_mode = if value == "degree" {
                PriorMode::DegreeStationary
            } else if let Some(path) = value.strip_prefix("file:") {
                PriorMode::FromFile(PathBuf::from(path))
            } else {
                return Err(bad("prior"));
            }
        }
        "seed" => config.seed = value.parse().map_err(|_| bad("seed"))?,
        other => {
            return Err(IoError::Invalid(format!("unknown config key `{other}`")));
        }
    }
    Ok(())
}

/// Parse a `key = value` config file; `#` starts a comment.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig, IoError> {
    let mut config = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(IoError::Malformed {
                origin: origin.to_string(),
                line: idx + 1,
                message: "expected `key = value`".to_string(),
            });
        };
        apply_setting(&mut config, key.trim(), value.trim()).map_err(|e| IoError::Malformed {
            origin: origin.to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
    }
    Ok(config)
}

/// Parse a distribution file: one value per line, `#` comments.
pub fn parse_distribution(path: &Path) -> Result<Vec<f64>, IoError> {
    let text = read_to_string(path)?;
    let origin = path.display().to_string();
    text.lines()
        .enumerate()
        .map(|(idx, raw)| (idx, raw.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(idx, l)| {
            l.parse::<f64>().map_err(|_| IoError::Malformed {
                origin: origin.clone(),
                line: idx + 1,
                message: format!("bad value `{l}`"),
            })
        })
        .collect()
}

//! Batch commands behind the `wasstree` binary.
//!
//! Every command returns a [`RunReport`]; the binary prints it as JSON on
//! stdout. Commands are generic over the scalar so `--exact` runs the same
//! code path on rationals.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use wasstree::io::{
    coupling_json, embedding_json, embedding_vector_json, parse_distance_csv, parse_embedding,
    parse_measure, parse_points_csv, parse_tree, scalar_json, LabeledTree, Labels,
};
use wasstree::oracle::transport_lp;
use wasstree::random::{random_measure, random_tree};
use wasstree::stochastic::{frt_sample, validate_embedding, wasserstein_distortion_audit};
use wasstree::tree_ot::{coupling_cost, embed_measure, optimal_coupling, tree_wasserstein};
use wasstree::{DiscreteMeasure, EmbeddingError, Exact, FiniteMetric, MetricTree, Scalar};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Support size of the random measures drawn by `audit` and `bench`.
pub const RANDOM_SUPPORT: usize = 8;

/// Trees up to this size get an oracle check in `bench`.
pub const BENCH_ORACLE_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Input path to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, Value>,
    pub timings_ms: BTreeMap<String, f64>,
    /// False when a validation run by the command failed.
    pub ok: bool,
}

impl RunReport {
    fn new(command: &str, exact: bool) -> Self {
        Self {
            command: command.to_string(),
            version: VERSION.to_string(),
            exact,
            seed: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
            ok: true,
        }
    }

    fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(
            path.display().to_string(),
            hex::encode(Sha256::digest(&bytes)),
        );
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    fn write(&mut self, path: &Path, doc: &Value) -> Result<()> {
        let text = serde_json::to_string_pretty(doc)? + "\n";
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
        self.output("path", json!(path.display().to_string()));
        self.output(
            "sha256",
            json!(hex::encode(Sha256::digest(text.as_bytes()))),
        );
        Ok(())
    }

    fn output(&mut self, key: &str, value: Value) {
        self.outputs.insert(key.to_string(), value);
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let ms = start.elapsed().as_secs_f64() * 1e3;
        *self.timings_ms.entry(stage.to_string()).or_insert(0.0) += ms;
        out
    }

    /// Everything except wall-clock timings.
    pub fn without_timings(&self) -> Self {
        Self {
            timings_ms: BTreeMap::new(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputKind {
    /// Square distance matrix, optional header row of labels.
    Matrix,
    /// One point per row; Euclidean distances.
    Points,
}

fn load_tree<S: Scalar>(report: &mut RunReport, path: &Path) -> Result<LabeledTree<S>> {
    let text = report.read(path)?;
    parse_tree(&text).with_context(|| format!("tree file {}", path.display()))
}

fn load_measure<S: Scalar>(
    report: &mut RunReport,
    path: &Path,
    labels: &Labels,
) -> Result<DiscreteMeasure<S>> {
    let text = report.read(path)?;
    parse_measure(&text, labels).with_context(|| format!("measure file {}", path.display()))
}

/// Path metric on the union of both supports, with the measures relabelled
/// onto it. Keeps the oracle independent of the tree size.
fn support_metric<S: Scalar>(
    t: &MetricTree<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
) -> Result<(FiniteMetric<S>, DiscreteMeasure<S>, DiscreteMeasure<S>)> {
    let points: Vec<usize> = mu
        .support()
        .chain(nu.support())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<usize, usize> = points.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let rows = points
        .iter()
        .map(|&a| points.iter().map(|&b| t.path_distance(a, b)).collect())
        .collect::<Result<Vec<Vec<S>>, _>>()?;
    let relabel = |m: &DiscreteMeasure<S>| m.pushforward(|p| index.get(&p).copied());
    Ok((FiniteMetric::new(rows)?, relabel(mu)?, relabel(nu)?))
}

fn oracle_value<S: Scalar>(
    t: &MetricTree<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
) -> Result<S> {
    let (m, a, b) = support_metric(t, mu, nu)?;
    Ok(transport_lp(&m, &a, &b)?.value)
}

pub fn cmd_dist<S: Scalar>(
    tree: &Path,
    mu: &Path,
    nu: &Path,
    check_oracle: bool,
) -> Result<RunReport> {
    let mut report = RunReport::new("dist", S::EXACT);
    let LabeledTree { tree, labels } = load_tree::<S>(&mut report, tree)?;
    let mu = load_measure(&mut report, mu, &labels)?;
    let nu = load_measure(&mut report, nu, &labels)?;
    let value = report.time("tree_wasserstein", || tree_wasserstein(&tree, &mu, &nu))?;
    report.output("value", scalar_json(&value));
    if check_oracle {
        let lp = report.time("transport_lp", || oracle_value(&tree, &mu, &nu))?;
        let delta = (value - lp.clone()).abs();
        report.output("oracle_value", scalar_json(&lp));
        report.output("oracle_delta", scalar_json(&delta));
        report.ok = delta <= S::tol(1e-9) * S::max_of(S::one(), lp);
    }
    Ok(report)
}

pub fn cmd_coupling<S: Scalar>(tree: &Path, mu: &Path, nu: &Path, out: &Path) -> Result<RunReport> {
    let mut report = RunReport::new("coupling", S::EXACT);
    let LabeledTree { tree, labels } = load_tree::<S>(&mut report, tree)?;
    let mu = load_measure(&mut report, mu, &labels)?;
    let nu = load_measure(&mut report, nu, &labels)?;
    let coupling = report.time("optimal_coupling", || optimal_coupling(&tree, &mu, &nu))?;
    let cost = coupling_cost(&tree, &coupling)?;
    let value = report.time("tree_wasserstein", || tree_wasserstein(&tree, &mu, &nu))?;

    // marginals recomputed from the entries alone
    let mut rows: BTreeMap<usize, S> = BTreeMap::new();
    let mut cols: BTreeMap<usize, S> = BTreeMap::new();
    for (&(x, y), m) in coupling.entries() {
        *rows.entry(x).or_insert_with(S::zero) += m.clone();
        *cols.entry(y).or_insert_with(S::zero) += m.clone();
    }
    let error = |got: &BTreeMap<usize, S>, want: &DiscreteMeasure<S>| {
        let keys: BTreeSet<usize> = got.keys().copied().chain(want.support()).collect();
        keys.into_iter()
            .map(|k| (got.get(&k).cloned().unwrap_or_else(S::zero) - want.mass(k)).abs())
            .fold(S::zero(), S::max_of)
    };
    let marginal_error = S::max_of(error(&rows, &mu), error(&cols, &nu));
    let marginals_ok = marginal_error <= S::tol(1e-10);
    let cost_ok =
        (cost.clone() - value.clone()).abs() <= S::tol(1e-9) * S::max_of(S::one(), value.clone());

    report.write(out, &coupling_json(&coupling, &cost, &labels))?;
    report.output("cost", scalar_json(&cost));
    report.output("value", scalar_json(&value));
    report.output("entries", json!(coupling.entries().len()));
    report.output("marginal_error", scalar_json(&marginal_error));
    report.output(
        "marginals",
        json!(if marginals_ok { "PASS" } else { "FAIL" }),
    );
    report.ok = marginals_ok && cost_ok;
    Ok(report)
}

pub fn cmd_embed<S: Scalar>(tree: &Path, measure: &Path, out: &Path) -> Result<RunReport> {
    let mut report = RunReport::new("embed", S::EXACT);
    let LabeledTree { tree, labels } = load_tree::<S>(&mut report, tree)?;
    let m = load_measure(&mut report, measure, &labels)?;
    let v = report.time("embed_measure", || embed_measure(&tree, &m))?;
    report.write(out, &embedding_vector_json(&v, &tree, &labels))?;
    report.output("nonzero", json!(v.len()));
    report.output("l1_norm", scalar_json(&v.l1_norm()));
    Ok(report)
}

pub fn cmd_frt<S: Scalar>(
    input: &Path,
    kind: InputKind,
    seed: u64,
    count: usize,
    out: &Path,
) -> Result<RunReport> {
    let mut report = RunReport::new("frt", S::EXACT);
    report.seed = Some(seed);
    let text = report.read(input)?;
    let context = || format!("metric file {}", input.display());
    let (metric, labels) = match kind {
        InputKind::Matrix => parse_distance_csv::<S>(&text).with_context(context)?,
        InputKind::Points => {
            let points = parse_points_csv(&text).with_context(context)?;
            let n = points.len();
            (
                FiniteMetric::from_points(&points).with_context(context)?,
                Labels::numbered(n),
            )
        }
    };
    let e = report.time("frt_sample", || frt_sample(&metric, seed, count))?;
    report.output("points", json!(metric.len()));
    report.output("components", json!(e.components().len()));
    if metric.len() >= 2 {
        let d = report.time("validate_embedding", || validate_embedding(&e))?;
        report.output("max_ratio", scalar_json(&d.max_ratio));
        report.output("mean_ratio", json!(d.mean_ratio));
    }
    report.write(out, &embedding_json(&e, &labels))?;
    Ok(report)
}

pub fn cmd_audit<S: Scalar>(embedding: &Path, pairs: usize, seed: u64) -> Result<RunReport> {
    let mut report = RunReport::new("audit", S::EXACT);
    report.seed = Some(seed);
    let text = report.read(embedding)?;
    let (e, points) = parse_embedding::<S>(&text)
        .with_context(|| format!("embedding file {}", embedding.display()))?;
    let n = e.source().len();
    let bound = if n >= 2 {
        match report.time("validate_embedding", || validate_embedding(&e)) {
            Ok(d) => {
                report.output("point_min_ratio", scalar_json(&d.min_ratio));
                report.output("point_max_ratio", scalar_json(&d.max_ratio));
                d.max_ratio
            }
            Err(EmbeddingError::NonContractionViolated {
                component, x, y, ..
            }) => {
                report.output(
                    "contracted",
                    json!({"component": component, "x": points.name(x), "y": points.name(y)}),
                );
                report.output("verdict", json!("FAIL"));
                report.ok = false;
                return Ok(report);
            }
            Err(other) => return Err(other.into()),
        }
    } else {
        S::one()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<_> = (0..pairs)
        .map(|_| {
            (
                random_measure::<S, _>(&mut rng, n, RANDOM_SUPPORT),
                random_measure::<S, _>(&mut rng, n, RANDOM_SUPPORT),
            )
        })
        .collect();
    let r = report.time("wasserstein_audit", || {
        wasserstein_distortion_audit(&e, &samples)
    })?;
    let pass = r.within_sandwich(&bound) && r.per_component_noncontraction.iter().all(|&f| f);
    report.output("distortion_bound", scalar_json(&bound));
    report.output("min_ratio", scalar_json(&r.min_ratio));
    report.output("max_ratio", scalar_json(&r.max_ratio));
    report.output("mean_ratio", json!(r.mean_ratio));
    report.output("pairs", json!(r.pairs));
    report.output(
        "noncontracting_components",
        json!(r.per_component_noncontraction),
    );
    report.output("verdict", json!(if pass { "PASS" } else { "FAIL" }));
    report.ok = pass;
    Ok(report)
}

/// One timed stage of a benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub stage: &'static str,
    pub vertices: usize,
    pub repeat: usize,
    pub ms: f64,
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("stage,vertices,repeat,ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.3}\n",
            r.stage, r.vertices, r.repeat, r.ms
        ));
    }
    out
}

/// Times the formula and the coupling on a random float tree with `n`
/// vertices. Reported stage timings are minima over `repeats`.
pub fn cmd_bench(n: usize, seed: u64, repeats: usize) -> Result<(RunReport, Vec<BenchRow>)> {
    if n < 2 {
        bail!("bench needs at least 2 vertices, got {n}");
    }
    let repeats = repeats.max(1);
    let mut report = RunReport::new("bench", false);
    report.seed = Some(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree: MetricTree<f64> = report.time("generate", || random_tree(&mut rng, n, 0.1, 10.0));
    let mu: DiscreteMeasure<f64> = random_measure(&mut rng, n, RANDOM_SUPPORT);
    let nu: DiscreteMeasure<f64> = random_measure(&mut rng, n, RANDOM_SUPPORT);

    let mut rows = Vec::new();
    let mut value = 0.0;
    let mut cost = 0.0;
    for repeat in 0..repeats {
        let start = Instant::now();
        value = tree_wasserstein(&tree, &mu, &nu)?;
        rows.push(BenchRow {
            stage: "tree_wasserstein",
            vertices: n,
            repeat,
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
        let start = Instant::now();
        let c = optimal_coupling(&tree, &mu, &nu)?;
        rows.push(BenchRow {
            stage: "optimal_coupling",
            vertices: n,
            repeat,
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
        cost = coupling_cost(&tree, &c)?;
    }
    for stage in ["tree_wasserstein", "optimal_coupling"] {
        let best = rows
            .iter()
            .filter(|r| r.stage == stage)
            .map(|r| r.ms)
            .fold(f64::INFINITY, f64::min);
        report.timings_ms.insert(stage.to_string(), best);
    }
    report.output("vertices", json!(n));
    report.output("value", json!(value));
    report.output("coupling_cost", json!(cost));
    report.ok = (cost - value).abs() <= 1e-9 * value.max(1.0);
    if n <= BENCH_ORACLE_LIMIT {
        let lp = report.time("transport_lp", || oracle_value(&tree, &mu, &nu))?;
        report.output("oracle_value", json!(lp));
        report.output("oracle_delta", json!((value - lp).abs()));
        report.ok &= (value - lp).abs() <= 1e-8 * lp.max(1.0);
    }
    Ok((report, rows))
}

/// Command line of the `wasstree` binary.
#[derive(Debug, clap::Parser)]
#[command(
    name = "wasstree",
    version,
    about = "Exact Wasserstein distances on weighted trees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Subcommand)]
pub enum Command {
    /// Wasserstein distance between two measures on a tree.
    Dist {
        tree: PathBuf,
        mu: PathBuf,
        nu: PathBuf,
        /// Also solve the transportation problem and report the difference.
        #[arg(long)]
        check_oracle: bool,
        #[arg(long)]
        exact: bool,
    },
    /// Optimal coupling between two measures on a tree.
    Coupling {
        tree: PathBuf,
        mu: PathBuf,
        nu: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        exact: bool,
    },
    /// Edge-coordinate l1 embedding of a measure on a tree.
    Embed {
        tree: PathBuf,
        measure: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        exact: bool,
    },
    /// Sample an FRT stochastic tree embedding of a finite metric.
    Frt {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "matrix")]
        kind: InputKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        exact: bool,
    },
    /// Audit the Wasserstein distortion of a stochastic tree embedding.
    Audit {
        embedding: PathBuf,
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        exact: bool,
    },
    /// Time the formula and the coupling on a random tree.
    Bench {
        #[arg(long)]
        vertices: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Timing rows as CSV; printed to stderr when absent.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Runs a parsed command line. Bench CSV rows go to `--csv` or stderr.
pub fn run(cli: Cli) -> Result<RunReport> {
    match cli.command {
        Command::Dist {
            tree,
            mu,
            nu,
            check_oracle,
            exact,
        } => {
            if exact {
                cmd_dist::<Exact>(&tree, &mu, &nu, check_oracle)
            } else {
                cmd_dist::<f64>(&tree, &mu, &nu, check_oracle)
            }
        }
        Command::Coupling {
            tree,
            mu,
            nu,
            out,
            exact,
        } => {
            if exact {
                cmd_coupling::<Exact>(&tree, &mu, &nu, &out)
            } else {
                cmd_coupling::<f64>(&tree, &mu, &nu, &out)
            }
        }
        Command::Embed {
            tree,
            measure,
            out,
            exact,
        } => {
            if exact {
                cmd_embed::<Exact>(&tree, &measure, &out)
            } else {
                cmd_embed::<f64>(&tree, &measure, &out)
            }
        }
        Command::Frt {
            input,
            kind,
            seed,
            count,
            out,
            exact,
        } => {
            if exact {
                cmd_frt::<Exact>(&input, kind, seed, count, &out)
            } else {
                cmd_frt::<f64>(&input, kind, seed, count, &out)
            }
        }
        Command::Audit {
            embedding,
            pairs,
            seed,
            exact,
        } => {
            if exact {
                cmd_audit::<Exact>(&embedding, pairs, seed)
            } else {
                cmd_audit::<f64>(&embedding, pairs, seed)
            }
        }
        Command::Bench {
            vertices,
            seed,
            repeats,
            csv,
        } => {
            let (mut report, rows) = cmd_bench(vertices, seed, repeats)?;
            let text = bench_csv(&rows);
            match csv {
                Some(path) => {
                    fs::write(&path, &text)
                        .with_context(|| format!("writing {}", path.display()))?;
                    report.output("csv", json!(path.display().to_string()));
                }
                None => eprint!("{text}"),
            }
            Ok(report)
        }
    }
}

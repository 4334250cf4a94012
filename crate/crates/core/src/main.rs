use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fairkm::cost::cost_med;
use fairkm::fairlet::SelectionPolicy;
use fairkm::io::{
    bench, evaluate, load_csv, run_on_dataset, write_bench_csv, BenchSource, Mode, ResultDocument, RunConfig,
};
use fairkm::kmedian::CenterPolicy;
use fairkm::oracle::{brute_optimal_fair_kmedian, brute_optimal_fairlet_cost, FairletObjective, OracleBudget};
use fairkm::{FairError, Result};

#[derive(Parser, Debug)]
#[command(name = "fairkm", version, about = "Fair k-median clustering via fairlet decomposition")]
struct Cli {
    /// TOML or JSON file with run settings; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute a fairlet decomposition and write the result document.
    Decompose {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Decompose, then merge fairlets into k clusters.
    Cluster {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Re-audit a stored result document against its dataset.
    Eval {
        /// Result document produced by `decompose` or `cluster`.
        result: PathBuf,
        /// Dataset path, if it moved since the document was written.
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Time the pipeline over several sample sizes.
    Bench {
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// Use uniform synthetic data of this dimension instead of `--input`.
        #[arg(long)]
        synthetic_dim: Option<usize>,
        /// Time only embedding and decomposition.
        #[arg(long)]
        no_cluster: bool,
        #[command(flatten)]
        run: RunArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare against exhaustive optimum on a tiny dataset.
    Oracle {
        #[command(flatten)]
        run: RunArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Comma-separated numeric feature columns.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Column holding the protected attribute.
    #[arg(long)]
    sensitive: Option<String>,
    /// Value of the sensitive column that maps to blue.
    #[arg(long)]
    blue_value: Option<String>,
    #[arg(short)]
    r: Option<u64>,
    #[arg(short)]
    b: Option<u64>,
    #[arg(short)]
    k: Option<usize>,
    #[arg(long)]
    gamma: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_depth: Option<u32>,
    /// Uniform subsample size.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    selection: Option<SelectionArg>,
    #[arg(long, value_enum)]
    center: Option<CenterArg>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum SelectionArg {
    DepthFirst,
    ShallowFirst,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum CenterArg {
    Medoid,
    FirstMember,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Write the JSON document here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write a tab-separated dump of the tree.
    #[arg(long)]
    dump_tree: Option<PathBuf>,
}

impl RunArgs {
    fn apply(self, base: Option<&Path>) -> Result<RunConfig> {
        let mut c = match base {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.input {
            c.input = Some(v);
        }
        if let Some(v) = self.features {
            c.features = v;
        }
        if let Some(v) = self.sensitive {
            c.sensitive = Some(v);
        }
        if let Some(v) = self.blue_value {
            c.blue_value = Some(v);
        }
        c.r = self.r.unwrap_or(c.r);
        c.b = self.b.unwrap_or(c.b);
        c.k = self.k.unwrap_or(c.k);
        c.gamma = self.gamma.unwrap_or(c.gamma);
        c.seed = self.seed.unwrap_or(c.seed);
        c.max_depth = self.max_depth.or(c.max_depth);
        c.sample = self.sample.or(c.sample);
        c.trials = self.trials.unwrap_or(c.trials);
        if let Some(s) = self.selection {
            c.selection = match s {
                SelectionArg::DepthFirst => SelectionPolicy::DepthFirst,
                SelectionArg::ShallowFirst => SelectionPolicy::ShallowFirst,
            };
        }
        if let Some(s) = self.center {
            c.center = match s {
                CenterArg::Medoid => CenterPolicy::Medoid,
                CenterArg::FirstMember => CenterPolicy::FirstMember,
            };
        }
        Ok(c)
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct OracleReport {
    n: usize,
    fairlet_cost_tree: f64,
    optimal_fairlet_cost_tree: f64,
    fairlet_cost_euclidean: f64,
    optimal_fairlet_cost_euclidean: f64,
    clustering_cost: f64,
    optimal_clustering_cost: f64,
}

fn run(cli: Cli) -> Result<()> {
    let base = cli.config.as_deref();
    match cli.command {
        Command::Decompose { run, out } => pipeline(run.apply(base)?, out, Mode::Decompose),
        Command::Cluster { run, out } => pipeline(run.apply(base)?, out, Mode::Cluster),
        Command::Eval { result, input, output } => {
            let mut doc = ResultDocument::from_json(&std::fs::read_to_string(&result)?)?;
            if input.is_some() {
                doc.config.input = input;
            }
            let loaded = load_csv(&doc.config)?;
            let report = evaluate(&loaded, &doc)?;
            write_json(&report, output.as_deref())?;
            if report.passed() {
                Ok(())
            } else {
                let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
                Err(FairError::AuditFailed(names.join(", ")))
            }
        }
        Command::Bench { sizes, synthetic_dim, no_cluster, run, output } => {
            let cfg = run.apply(base)?;
            let rows = match synthetic_dim {
                Some(dim) => bench(&cfg, &sizes, BenchSource::Synthetic { dim }, !no_cluster)?,
                None => {
                    let loaded = load_csv(&cfg)?;
                    bench(&cfg, &sizes, BenchSource::Dataset(&loaded.data), !no_cluster)?
                }
            };
            write_bench_csv(&rows, sink(output.as_deref())?)
        }
        Command::Oracle { run, output } => {
            let cfg = run.apply(base)?;
            let loaded = load_csv(&cfg)?;
            let outcome = run_on_dataset(&loaded, &cfg, Mode::Cluster)?;
            let data = &loaded.data;
            let p = cfg.validate()?;
            let budget = OracleBudget::default();
            let all: Vec<usize> = (0..data.len()).collect();
            let ours_tree = outcome
                .fairlets
                .fairlets()
                .iter()
                .map(|f| cost_med(&f.members, &outcome.tree))
                .sum::<Result<f64>>()?;
            let report = OracleReport {
                n: data.len(),
                fairlet_cost_tree: ours_tree,
                optimal_fairlet_cost_tree: brute_optimal_fairlet_cost(
                    data,
                    &all,
                    p,
                    FairletObjective::TreeMed(&outcome.tree),
                    &budget,
                )?,
                fairlet_cost_euclidean: outcome.document.report.fairlet_cost_euclidean,
                optimal_fairlet_cost_euclidean: brute_optimal_fairlet_cost(
                    data,
                    &all,
                    p,
                    FairletObjective::EuclideanMedian(data),
                    &budget,
                )?,
                clustering_cost: outcome.document.report.clustering_cost.unwrap_or(f64::NAN),
                optimal_clustering_cost: brute_optimal_fair_kmedian(data, &all, p, cfg.k.min(data.len()), &budget)?,
            };
            write_json(&report, output.as_deref())
        }
    }
}

fn pipeline(cfg: RunConfig, out: OutArgs, mode: Mode) -> Result<()> {
    let loaded = load_csv(&cfg)?;
    let outcome = run_on_dataset(&loaded, &cfg, mode)?;
    if let Some(path) = &out.dump_tree {
        let mut w = BufWriter::new(File::create(path)?);
        outcome.tree.write_dump(&mut w)?;
        w.flush()?;
    }
    let mut w = sink(out.output.as_deref())?;
    w.write_all(outcome.document.to_json()?.as_bytes())?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

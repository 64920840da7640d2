//! `asearch` command-line interface.

use std::path::{Path, PathBuf};

use active_search::{build_knn_graph, Dataset, Metric, NeighborGraph};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use harness::baseline::stratified_baseline;
use harness::config::{DatasetSource, ExperimentConfig, FileFormat, OutputConfig, SeedRule};
use harness::experiment::{run_experiment, RunOutput};
use harness::output::{
    read_records_csv, write_mean_trace_csv, write_points_csv, write_records_csv, write_summary_json,
};
use harness::stats::paired_t_test;
use harness::tables::{adaptivity_ratio_table, budget_waypoint_table, mean_trace};
use harness::HarnessError;

#[derive(Parser)]
#[command(
    name = "asearch",
    about = "Budgeted active search: k-NN posterior models, nonmyopic policies, batch policies, and experiment tooling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the exact k-NN graph of a dataset and save it.
    KnnBuild(KnnBuildArgs),
    /// Run the experiment described by a JSON config.
    Run(RunArgs),
    /// Run the toy protocol: fresh 500-point instances per replication,
    /// seeded at the point closest to the center.
    Toy(ToyArgs),
    /// Empirical adaptivity-ratio table from batch-size-grouped record CSVs.
    Gap(GapArgs),
    /// Paired t-test between a column of two CSV files.
    Ttest(TtestArgs),
    /// Mean cumulative targets at fixed query waypoints, per run.
    Waypoints(WaypointsArgs),
    /// Stratified-sample classification baseline on a dataset file.
    Stratified(StratifiedArgs),
}

#[derive(Args)]
struct KnnBuildArgs {
    /// Dataset file.
    dataset: PathBuf,
    #[arg(long)]
    k: usize,
    /// euclidean-unit or jaccard-weighted.
    #[arg(long)]
    metric: String,
    /// dense-csv or sparse-fingerprint; inferred from the metric by default.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 200)]
    budget: usize,
    #[arg(long, default_value = "ens")]
    policy: String,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    points: usize,
    #[arg(long, default_value_t = 25)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    prior: f64,
    /// Output directory for records.csv, summary.json, mean_trace.csv and
    /// points.csv.
    #[arg(long, default_value = "toy-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GapArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct TtestArgs {
    csv_a: PathBuf,
    csv_b: PathBuf,
    /// Column to compare. When the files carry a `replication` column the
    /// rows are first reduced to the last value per replication, so record
    /// CSVs compare terminal values.
    #[arg(long)]
    column: String,
}

#[derive(Args)]
struct WaypointsArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated query waypoints, e.g. `100,300,500`.
    #[arg(long, value_delimiter = ',')]
    at: Vec<usize>,
}

#[derive(Args)]
struct StratifiedArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    fraction: f64,
}

/// Config for `gap`: record CSVs grouped by batch size.
#[derive(Deserialize)]
struct GapConfig {
    runs: Vec<GapRun>,
    #[serde(default)]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct GapRun {
    batch_size: usize,
    records: PathBuf,
}

/// Config for `waypoints`: labeled record CSVs.
#[derive(Deserialize)]
struct WaypointsConfig {
    runs: Vec<WaypointRun>,
    #[serde(default)]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct WaypointRun {
    label: String,
    records: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::KnnBuild(args) => knn_build(args),
        Command::Run(args) => {
            let cfg = ExperimentConfig::load(&args.config)?;
            let out = run_experiment(&cfg)?;
            emit_outputs(&cfg, &args.config, &out)?;
            println!(
                "{}: {} replications, mean terminal targets {:.2} (sd {:.2})",
                cfg.policy,
                cfg.replications,
                out.summary.mean_terminal_targets,
                out.summary.sd_terminal_targets
            );
            Ok(())
        }
        Command::Toy(args) => toy(args),
        Command::Gap(args) => gap(args),
        Command::Ttest(args) => ttest(args),
        Command::Waypoints(args) => waypoints(args),
        Command::Stratified(args) => stratified(args),
    }
}

fn knn_build(args: KnnBuildArgs) -> Result<(), HarnessError> {
    let metric: Metric = args.metric.parse().map_err(HarnessError::config)?;
    let format = match args.format.as_deref() {
        Some("dense-csv") => FileFormat::DenseCsv,
        Some("sparse-fingerprint") => FileFormat::SparseFingerprint,
        Some(other) => return Err(HarnessError::config(format!("unknown format `{other}`"))),
        None => match metric {
            Metric::EuclideanUnit => FileFormat::DenseCsv,
            Metric::JaccardWeighted => FileFormat::SparseFingerprint,
        },
    };
    let dataset = match format {
        FileFormat::DenseCsv => Dataset::load_dense_csv(&args.dataset),
        FileFormat::SparseFingerprint => Dataset::load_sparse(&args.dataset),
    }
    .map_err(HarnessError::data)?;
    let graph = build_knn_graph(&dataset, args.k, metric).map_err(HarnessError::config)?;
    graph.save(&args.out).map_err(HarnessError::data)?;
    // Round-trip validation: the loader re-checks every structural invariant.
    NeighborGraph::load(&args.out).map_err(HarnessError::data)?;
    println!(
        "wrote k={} graph for {} points to {}",
        args.k,
        dataset.len(),
        args.out.display()
    );
    Ok(())
}

fn toy(args: ToyArgs) -> Result<(), HarnessError> {
    let cfg = ExperimentConfig {
        dataset: DatasetSource::Toy { n: args.points },
        metric: "euclidean-unit".into(),
        k: args.k,
        gamma: args.gamma,
        prior: args.prior,
        policy: args.policy,
        budget: args.budget,
        batch_size: args.batch,
        replications: args.reps,
        base_seed: args.seed,
        seed_rule: SeedRule::ClosestToCenter,
        output: Some(OutputConfig {
            records: Some(args.out_dir.join("records.csv")),
            summary: Some(args.out_dir.join("summary.json")),
            mean_trace: Some(args.out_dir.join("mean_trace.csv")),
            points: Some(args.out_dir.join("points.csv")),
        }),
    };
    let out = run_experiment(&cfg)?;
    emit_outputs(&cfg, Path::new("."), &out)?;
    println!(
        "toy protocol: policy {}, {} replications, budget {}: mean terminal targets {:.2} (sd {:.2})",
        cfg.policy,
        cfg.replications,
        cfg.budget,
        out.summary.mean_terminal_targets,
        out.summary.sd_terminal_targets
    );
    Ok(())
}

fn emit_outputs(
    cfg: &ExperimentConfig,
    config_path: &Path,
    out: &RunOutput,
) -> Result<(), HarnessError> {
    let defaults = default_output(config_path);
    let output = cfg.output.clone().unwrap_or(defaults);
    if let Some(path) = &output.records {
        write_records_csv(path, &out.records)?;
    }
    if let Some(path) = &output.summary {
        write_summary_json(path, &out.summary)?;
    }
    if let Some(path) = &output.mean_trace {
        write_mean_trace_csv(path, &mean_trace(&out.records))?;
    }
    if let Some(path) = &output.points {
        if out.dataset.dim() == Some(2) {
            write_points_csv(path, &out.dataset, &out.records)?;
        }
    }
    Ok(())
}

/// Without an explicit output block, records and summary land next to the
/// config file.
fn default_output(config_path: &Path) -> OutputConfig {
    let stem = config_path.with_extension("");
    OutputConfig {
        records: Some(PathBuf::from(format!("{}.records.csv", stem.display()))),
        summary: Some(PathBuf::from(format!("{}.summary.json", stem.display()))),
        mean_trace: None,
        points: None,
    }
}

fn gap(args: GapArgs) -> Result<(), HarnessError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| HarnessError::config(format!("{}: {e}", args.config.display())))?;
    let cfg: GapConfig = serde_json::from_str(&text)
        .map_err(|e| HarnessError::config(format!("{}: {e}", args.config.display())))?;
    let mut runs = Vec::new();
    for run in &cfg.runs {
        runs.push((run.batch_size, read_records_csv(&run.records)?));
    }
    let table = adaptivity_ratio_table(&runs)?;
    let mut csv_text = String::from("batch_size,adaptivity_ratio\n");
    println!("batch_size  adaptivity_ratio");
    for (b, ratio) in &table {
        println!("{b:>10}  {ratio:.4}");
        csv_text.push_str(&format!("{b},{ratio}\n"));
    }
    if let Some(out) = &cfg.out {
        std::fs::write(out, csv_text)
            .map_err(|e| HarnessError::data(format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

fn ttest(args: TtestArgs) -> Result<(), HarnessError> {
    let a = read_column(&args.csv_a, &args.column)?;
    let b = read_column(&args.csv_b, &args.column)?;
    let result = paired_t_test(&a, &b).map_err(HarnessError::data)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&result).map_err(HarnessError::data)?
    );
    Ok(())
}

/// Reads a numeric column. Files with a `replication` column are reduced to
/// the last value per replication (terminal values of record CSVs).
fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| HarnessError::data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| HarnessError::data(format!("{}: {e}", path.display())))?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| HarnessError::data(format!("{}: no column `{column}`", path.display())))?;
    let rep_col = headers.iter().position(|h| h == "replication");

    let mut raw: Vec<f64> = Vec::new();
    let mut by_rep: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| HarnessError::data(format!("{}: {e}", path.display())))?;
        let value: f64 = row.get(col).unwrap_or("").parse().map_err(|e| {
            HarnessError::data(format!("{}: column `{column}`: {e}", path.display()))
        })?;
        match rep_col {
            Some(rc) => {
                let rep: u64 = row.get(rc).unwrap_or("").parse().map_err(|e| {
                    HarnessError::data(format!("{}: column `replication`: {e}", path.display()))
                })?;
                by_rep.insert(rep, value);
            }
            None => raw.push(value),
        }
    }
    Ok(if rep_col.is_some() {
        by_rep.into_values().collect()
    } else {
        raw
    })
}

fn waypoints(args: WaypointsArgs) -> Result<(), HarnessError> {
    if args.at.is_empty() {
        return Err(HarnessError::config("--at needs at least one waypoint"));
    }
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| HarnessError::config(format!("{}: {e}", args.config.display())))?;
    let cfg: WaypointsConfig = serde_json::from_str(&text)
        .map_err(|e| HarnessError::config(format!("{}: {e}", args.config.display())))?;
    let mut runs = Vec::new();
    for run in &cfg.runs {
        runs.push((run.label.clone(), read_records_csv(&run.records)?));
    }
    let table = budget_waypoint_table(&runs, &args.at);

    let mut csv_text = String::from("policy");
    print!("{:<18}", "policy");
    for w in &args.at {
        csv_text.push_str(&format!(",{w}"));
        print!("{w:>10}");
    }
    csv_text.push('\n');
    println!();
    for (label, cells) in &table {
        print!("{label:<18}");
        csv_text.push_str(label);
        for cell in cells {
            match cell {
                Some(v) => {
                    print!("{v:>10.1}");
                    csv_text.push_str(&format!(",{v}"));
                }
                None => {
                    print!("{:>10}", "-");
                    csv_text.push(',');
                }
            }
        }
        println!();
        csv_text.push('\n');
    }
    if let Some(out) = &cfg.out {
        std::fs::write(out, csv_text)
            .map_err(|e| HarnessError::data(format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

fn stratified(args: StratifiedArgs) -> Result<(), HarnessError> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let resolved = cfg.validate()?;
    let dataset = match &cfg.dataset {
        DatasetSource::File { path, format } => match format {
            FileFormat::DenseCsv => Dataset::load_dense_csv(path).map_err(HarnessError::data)?,
            FileFormat::SparseFingerprint => {
                Dataset::load_sparse(path).map_err(HarnessError::data)?
            }
        },
        DatasetSource::Toy { n } => harness::instance::generate_toy_instance(cfg.base_seed, *n),
        DatasetSource::Synthetic {
            n,
            clusters,
            radius,
        } => harness::instance::generate_cluster_instance(cfg.base_seed, *n, *clusters, *radius),
    };
    let outcome = stratified_baseline(
        &dataset,
        resolved.metric,
        cfg.k,
        cfg.gamma,
        cfg.prior,
        args.fraction,
        cfg.budget,
        cfg.base_seed,
    )?;
    println!(
        "stratified baseline: sampled {} points ({} targets), queried {}, found {} targets",
        outcome.sample_size,
        outcome.sample_targets,
        outcome.queried.len(),
        outcome.targets_found
    );
    Ok(())
}

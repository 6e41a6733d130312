//! `shrinknas` — progressive architecture search over DAG cells by edge
//! shrinking.
//!
//! Subcommands: `search` runs the shrinking loop and writes a run directory;
//! `build` expands a cell document into a staged architecture; `export-dot`
//! renders a cell as Graphviz; `compare-priors` scores random-graph baselines
//! against a searched cell; `k-sweep` reruns the search across candidate
//! budgets; `selfcheck` executes the built-in verification suites.
//!
//! Exit codes: 0 success, 2 bad configuration or usage, 3 evaluator failure,
//! 1 other runtime errors. Logging is controlled by `SHRINKNAS_LOG`
//! (`error`, `info`, or `debug`; default `error`).

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use shrinknas_core::builder::{self, ExportFormat};
use shrinknas_core::priors::compare_topologies;
use shrinknas_core::shrink::{k_sweep, run_shrink, write_trajectory_csv, SearchConfig};
use shrinknas_core::topology::CellTopology;
use shrinknas_core::{selfcheck, Error};

use config::ArchSection;

/// Failure classification that drives the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration, flags, or input documents (exit 2).
    Usage(String),
    /// An evaluator failed while scoring a candidate (exit 3).
    Evaluator(String),
    /// Everything else, e.g. filesystem trouble (exit 1).
    Runtime(String),
}

impl Failure {
    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Evaluator(m) | Failure::Runtime(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Evaluator(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        match e {
            Error::Eval(_) => Failure::Evaluator(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn io_failure(context: &str, path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{context} {}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "shrinknas",
    version,
    about = "Progressive architecture search over DAG cells by edge shrinking"
)]
struct Cli {
    /// Config file: TOML with [search], [evaluator], [arch], [priors].
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap candidate-evaluation parallelism (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; commands write canonical file names inside it.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Output encoding for commands that support several.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Debug, ValueEnum)]
enum Format {
    Json,
    Dot,
    Summary,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run the shrinking search and write a run-<timestamp>-<seed> directory.
    Search,
    /// Expand a cell document into a staged architecture.
    Build(BuildArgs),
    /// Render a cell document as Graphviz DOT.
    ExportDot(CellArg),
    /// Score random-graph baselines (WS/ER/BA) against a searched cell.
    ComparePriors(ComparePriorsArgs),
    /// Rerun the search across several candidate budgets K.
    KSweep(KSweepArgs),
    /// Run the built-in verification suites; exit 0 iff every check passes.
    Selfcheck,
}

#[derive(Args)]
struct CellArg {
    /// Path to a cell topology document (e.g. gopt.json from a run).
    cell: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    /// Path to a cell topology document (e.g. gopt.json from a run).
    cell: PathBuf,
    /// CNN: number of stages.
    #[arg(long)]
    stages: Option<usize>,
    /// CNN: cells stacked per stage.
    #[arg(long)]
    cells_per_stage: Option<usize>,
    /// CNN: filters per node in the first stage.
    #[arg(long)]
    base_filters: Option<usize>,
    /// CNN: input image height.
    #[arg(long)]
    input_height: Option<usize>,
    /// CNN: input image width.
    #[arg(long)]
    input_width: Option<usize>,
    /// CNN: input image channels.
    #[arg(long)]
    input_channels: Option<usize>,
    /// CNN: classifier output classes.
    #[arg(long)]
    num_classes: Option<usize>,
    /// CNN: disable the cell-level residual connection.
    #[arg(long)]
    no_residual: bool,
    /// RNN: hidden state width.
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// RNN: token embedding width.
    #[arg(long)]
    embed_dim: Option<usize>,
    /// RNN: vocabulary size.
    #[arg(long)]
    vocab_size: Option<usize>,
}

#[derive(Args)]
struct ComparePriorsArgs {
    /// Cell document to compare against; omitted = run the search first.
    #[arg(long, value_name = "PATH")]
    cell: Option<PathBuf>,
    /// Seeded samples per family (default from config, else 10).
    #[arg(long)]
    trials: Option<usize>,
    /// Node count of the generated prior graphs (default from config, else 15).
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Args)]
struct KSweepArgs {
    /// Candidate budgets to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,28")]
    ks: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::default().filter_or("SHRINKNAS_LOG", "error"),
    )
    .format_timestamp(None)
    .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let file = config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Search => cmd_search(&cli, &file),
        Command::Build(args) => cmd_build(&cli, &file, args),
        Command::ExportDot(args) => cmd_export_dot(&cli, args),
        Command::ComparePriors(args) => cmd_compare_priors(&cli, &file, args),
        Command::KSweep(args) => cmd_k_sweep(&cli, &file, args),
        Command::Selfcheck => cmd_selfcheck(&cli),
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn read_cell(path: &Path) -> Result<CellTopology, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read cell document {}: {e}", path.display())))?;
    Ok(CellTopology::from_json(&text)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure("cannot write", path, e))
}

/// Writes into `dir/name`, creating `dir` first.
fn write_into(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure("cannot create", dir, e))?;
    let path = dir.join(name);
    write_file(&path, contents)?;
    Ok(path)
}

/// Emits one rendered artifact: into `--out` under `name` when given
/// (printing the path), to stdout otherwise.
fn emit(out: Option<&Path>, name: &str, contents: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            let path = write_into(dir, name, contents)?;
            println!("{}", path.display());
        }
        None => print!("{contents}"),
    }
    Ok(())
}

fn unsupported_format(command: &str, format: Format, supported: &str) -> Failure {
    Failure::Usage(format!(
        "{command} cannot render {format:?} output; supported formats: {supported}"
    ))
}

// ---------------------------------------------------------------------------
// search
// ---------------------------------------------------------------------------

/// Everything needed to reproduce and audit one search run; `wallclock`
/// varies between runs, every other field is a pure function of the config.
#[derive(Serialize)]
struct RunManifest<'a> {
    tool_version: &'static str,
    created_unix: u64,
    seed: u64,
    config: &'a SearchConfig,
    outputs: Vec<String>,
    evaluations: usize,
    best_score: f64,
    best_edges: usize,
    wallclock_seconds: f64,
}

fn cmd_search(cli: &Cli, file: &config::FileConfig) -> Result<(), Failure> {
    let search = file.resolve_search(cli.seed, cli.workers)?;
    info!("searching: {} nodes, k={}, seed={}", search.nodes, search.k, search.seed);

    let started = Instant::now();
    let outcome = run_shrink(&search)?;
    let wallclock = started.elapsed().as_secs_f64();
    info!(
        "done: {} evaluations, best score {:.6} with {} edges",
        outcome.evaluations,
        outcome.best_score,
        outcome.best.edge_count()
    );

    let parent = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let created_unix =
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut dir = parent.join(format!("run-{created_unix}-{}", search.seed));
    let mut bump = 1;
    while dir.exists() {
        dir = parent.join(format!("run-{created_unix}-{}-{bump}", search.seed));
        bump += 1;
    }

    let arch = file.build_arch(outcome.best.clone(), &ArchSection::default())?;
    let mut outputs = Vec::new();
    for (name, contents) in [
        ("trajectory.csv", write_trajectory_csv(&outcome.trajectory)),
        ("gopt.json", outcome.best.to_json()),
        ("arch.json", arch.to_json()),
        ("arch_summary.txt", builder::summary(&arch)?),
    ] {
        write_into(&dir, name, &contents)?;
        outputs.push(name.to_string());
    }

    // The manifest is written last, atomically: its presence marks a
    // completed run.
    outputs.push("manifest.json".to_string());
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        created_unix,
        seed: search.seed,
        config: &search,
        outputs,
        evaluations: outcome.evaluations,
        best_score: outcome.best_score,
        best_edges: outcome.best.edge_count(),
        wallclock_seconds: wallclock,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Failure::Runtime(format!("cannot encode manifest: {e}")))?;
    let tmp = dir.join("manifest.json.tmp");
    write_file(&tmp, &(text + "\n"))?;
    fs::rename(&tmp, dir.join("manifest.json"))
        .map_err(|e| io_failure("cannot finalize", &tmp, e))?;

    println!("{}", dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// build / export-dot
// ---------------------------------------------------------------------------

fn cmd_build(cli: &Cli, file: &config::FileConfig, args: &BuildArgs) -> Result<(), Failure> {
    let cell = read_cell(&args.cell)?;
    let overrides = ArchSection {
        stages: args.stages,
        cells_per_stage: args.cells_per_stage,
        base_filters: args.base_filters,
        input_height: args.input_height,
        input_width: args.input_width,
        input_channels: args.input_channels,
        num_classes: args.num_classes,
        residual: args.no_residual.then_some(false),
        hidden_dim: args.hidden_dim,
        embed_dim: args.embed_dim,
        vocab_size: args.vocab_size,
    };
    let arch = file.build_arch(cell, &overrides)?;

    if let Some(dir) = &cli.out {
        // Directory mode emits the full artifact pair.
        let json = write_into(dir, "arch.json", &arch.to_json())?;
        let summary = write_into(dir, "arch_summary.txt", &builder::summary(&arch)?)?;
        println!("{}", json.display());
        println!("{}", summary.display());
        return Ok(());
    }
    let rendered = match cli.format.unwrap_or(Format::Summary) {
        Format::Json => builder::export(&arch, ExportFormat::Json)?,
        Format::Dot => builder::export(&arch, ExportFormat::Dot)?,
        Format::Summary => builder::export(&arch, ExportFormat::Summary)?,
        Format::Csv => return Err(unsupported_format("build", Format::Csv, "json, dot, summary")),
    };
    print!("{rendered}");
    Ok(())
}

fn cmd_export_dot(cli: &Cli, args: &CellArg) -> Result<(), Failure> {
    if let Some(format) = cli.format {
        if format != Format::Dot {
            return Err(unsupported_format("export-dot", format, "dot"));
        }
    }
    let cell = read_cell(&args.cell)?;
    emit(cli.out.as_deref(), "cell.dot", &cell.to_dot())
}

// ---------------------------------------------------------------------------
// compare-priors / k-sweep / selfcheck
// ---------------------------------------------------------------------------

fn cmd_compare_priors(
    cli: &Cli,
    file: &config::FileConfig,
    args: &ComparePriorsArgs,
) -> Result<(), Failure> {
    let search = file.resolve_search(cli.seed, cli.workers)?;
    let (specs, config_trials) = file.resolve_priors(search.seed, args.nodes)?;
    let trials = args.trials.unwrap_or(config_trials);
    let cell = match &args.cell {
        Some(path) => read_cell(path)?,
        None => {
            info!("no --cell given; running the search first");
            run_shrink(&search)?.best
        }
    };
    let report = compare_topologies(&specs, &cell, &search, trials)?;
    let (name, rendered) = match cli.format.unwrap_or(Format::Summary) {
        Format::Summary => ("priors.txt", report.to_table()),
        Format::Csv => ("priors.csv", report.to_csv()),
        Format::Json => (
            "priors.json",
            serde_json::to_string_pretty(&report)
                .map_err(|e| Failure::Runtime(format!("cannot encode report: {e}")))?
                + "\n",
        ),
        Format::Dot => {
            return Err(unsupported_format("compare-priors", Format::Dot, "summary, csv, json"))
        }
    };
    emit(cli.out.as_deref(), name, &rendered)
}

fn cmd_k_sweep(cli: &Cli, file: &config::FileConfig, args: &KSweepArgs) -> Result<(), Failure> {
    if args.ks.is_empty() {
        return Err(Failure::Usage("k-sweep needs at least one K value".to_string()));
    }
    let search = file.resolve_search(cli.seed, cli.workers)?;
    let report = k_sweep(&search, &args.ks)?;
    let (name, rendered) = match cli.format.unwrap_or(Format::Summary) {
        Format::Summary => ("ksweep.txt", report.to_table()),
        Format::Csv => ("ksweep.csv", report.to_csv()),
        Format::Json => (
            "ksweep.json",
            serde_json::to_string_pretty(&report)
                .map_err(|e| Failure::Runtime(format!("cannot encode report: {e}")))?
                + "\n",
        ),
        Format::Dot => {
            return Err(unsupported_format("k-sweep", Format::Dot, "summary, csv, json"))
        }
    };
    emit(cli.out.as_deref(), name, &rendered)
}

fn cmd_selfcheck(cli: &Cli) -> Result<(), Failure> {
    // Test hook: deliberately poison one expected value to prove failures
    // propagate to the exit code.
    let corrupt = std::env::var("SHRINKNAS_SELFCHECK_CORRUPT")
        .map(|v| v == "1" || v.eq_ignore_ascii_case("true"))
        .unwrap_or(false);
    let report = selfcheck::run(corrupt);
    let rendered = match cli.format.unwrap_or(Format::Summary) {
        Format::Summary => report.to_text(),
        Format::Json => {
            serde_json::to_string_pretty(&report)
                .map_err(|e| Failure::Runtime(format!("cannot encode report: {e}")))?
                + "\n"
        }
        other => return Err(unsupported_format("selfcheck", other, "summary, json")),
    };
    emit(cli.out.as_deref(), "selfcheck.txt", &rendered)?;
    if report.all_passed() {
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        Err(Failure::Runtime(format!("{failed} of {} checks failed", report.checks.len())))
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowshop_core::bench::{
    emit_report, generate_instance, run_experiment, ExperimentPlan, ReportFormat, RunOptions,
    UniformTimes,
};
use flowshop_core::engine::{run_algorithm, Algorithm, AlgorithmSpec, TimelineDocument};
use flowshop_core::{Capacity, Instance, Sequence};

#[derive(Parser)]
#[command(
    name = "flowshop",
    version,
    about = "Finite-buffer flow-shop scheduling engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance with uniform integer processing times.
    Gen(GenArgs),
    /// Evaluate the timeline and makespan of a job sequence.
    Eval(EvalArgs),
    /// Run an experiment plan and emit a comparison report.
    Run(RunArgs),
    /// Johnson's rule (two machines).
    Johnson(AlgArgs),
    /// Simulated annealing.
    Sa(AlgArgs),
    /// Evolve a dispatching rule-set with the genetic algorithm.
    Gbml(AlgArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    lo: u64,
    #[arg(long, default_value_t = 10)]
    hi: u64,
    /// Comma-separated capacities (`inf` for unbounded); one value applies to every stage.
    #[arg(long)]
    buffers: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    instance: PathBuf,
    /// JSON file: an array of job indices, or an object with `order` or `sequence`.
    #[arg(long, conflicts_with = "order")]
    sequence: Option<PathBuf>,
    /// Inline comma-separated job order.
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    buffers: Option<String>,
    /// `json` (full timeline document) or `text` (makespan only).
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Overrides the plan's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// JSON-lines file of finished cells; existing cells are skipped.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct AlgArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    buffers: Option<String>,
    /// Algorithm config file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-generation history as CSV (gbml only).
    #[arg(long)]
    history_csv: Option<PathBuf>,
}

enum CliError {
    Invalid(String),
    Failed(String),
}

type CliResult<T> = Result<T, CliError>;

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| failed(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| failed(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_buffers(text: &str, stages: usize) -> CliResult<Vec<Capacity>> {
    let caps = text
        .split(',')
        .map(|s| s.parse::<Capacity>().map_err(invalid))
        .collect::<CliResult<Vec<_>>>()?;
    match caps.as_slice() {
        [single] => Ok(vec![*single; stages]),
        _ => Ok(caps),
    }
}

fn load_instance(path: &Path, buffers: Option<&str>) -> CliResult<Instance> {
    let inst = Instance::from_json(&read(path)?).map_err(invalid)?;
    match buffers {
        Some(b) => inst
            .with_buffers(parse_buffers(b, inst.machines() - 1)?)
            .map_err(invalid),
        None => Ok(inst),
    }
}

fn parse_order(value: &serde_json::Value) -> CliResult<Vec<usize>> {
    let list = match value {
        serde_json::Value::Object(map) => map
            .get("order")
            .or_else(|| map.get("sequence"))
            .ok_or_else(|| invalid("sequence file needs an `order` or `sequence` field"))?,
        other => other,
    };
    serde_json::from_value(list.clone()).map_err(invalid)
}

fn gen(args: GenArgs) -> CliResult<()> {
    if args.m < 1 || args.n < 1 {
        return Err(invalid("n and m must be positive"));
    }
    let buffers = match &args.buffers {
        Some(b) => parse_buffers(b, args.m - 1)?,
        None => vec![Capacity::Unbounded; args.m - 1],
    };
    let dist = UniformTimes {
        lo: args.lo,
        hi: args.hi,
    };
    let inst = generate_instance(args.n, args.m, dist, buffers, args.seed).map_err(invalid)?;
    emit(args.out.as_deref(), &(inst.to_json() + "\n"))
}

fn eval(args: EvalArgs) -> CliResult<()> {
    let inst = load_instance(&args.instance, args.buffers.as_deref())?;
    let order = match (&args.sequence, &args.order) {
        (Some(path), _) => parse_order(&serde_json::from_str(&read(path)?).map_err(invalid)?)?,
        (None, Some(text)) => text
            .split(',')
            .map(|s| s.trim().parse::<usize>().map_err(invalid))
            .collect::<CliResult<_>>()?,
        (None, None) => return Err(invalid("pass --sequence or --order")),
    };
    let seq = Sequence::new(order, inst.jobs()).map_err(invalid)?;
    let doc = TimelineDocument::new(&inst, &seq);
    let text = match args.format.as_str() {
        "json" => serde_json::to_string(&doc).map_err(failed)? + "\n",
        "text" => format!("{}\n", doc.makespan),
        other => return Err(invalid(format!("unknown format `{other}`"))),
    };
    emit(args.out.as_deref(), &text)
}

fn run(args: RunArgs) -> CliResult<()> {
    let mut plan = match &args.plan {
        Some(p) => ExperimentPlan::from_json(&read(p)?).map_err(invalid)?,
        None => ExperimentPlan::default(),
    };
    if let Some(seed) = args.seed {
        plan.master_seed = seed;
    }
    let format: ReportFormat = args.format.parse().map_err(invalid)?;
    let opts = RunOptions {
        workers: args.workers,
        resume: args.resume,
    };
    let table = run_experiment(&plan, &opts).map_err(|e| match e {
        flowshop_core::BenchError::Io(_) => failed(e),
        other => invalid(other),
    })?;
    for f in &table.failures {
        eprintln!(
            "cell failed: example {} buffer {} {} trial {}: {}",
            f.example + 1,
            f.buffer,
            f.algorithm,
            f.trial,
            f.error.as_deref().unwrap_or("unknown error")
        );
    }
    emit(args.out.as_deref(), &emit_report(&table, format))
}

fn single(algorithm: Algorithm, args: AlgArgs) -> CliResult<()> {
    let inst = load_instance(&args.instance, args.buffers.as_deref())?;
    let config = match &args.config {
        Some(p) => serde_json::from_str(&read(p)?).map_err(invalid)?,
        None => serde_json::Value::Null,
    };
    let mut spec = AlgorithmSpec::from_json(algorithm, &config).map_err(invalid)?;
    if let Some(seed) = args.seed {
        spec = spec.with_seed(seed);
    }
    let outcome = run_algorithm(&inst, &spec, &mut ()).map_err(invalid)?;
    if let Some(path) = &args.history_csv {
        let mut csv = String::from("generation,best_objective,mean_objective,best_fitness\n");
        for h in &outcome.result.history {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                h.step,
                h.best_objective,
                h.mean_objective.map(|v| v.to_string()).unwrap_or_default(),
                h.best_fitness.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
        fs::write(path, csv).map_err(failed)?;
    }
    emit(args.out.as_deref(), &(outcome.result.to_json() + "\n"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Eval(a) => eval(a),
        Command::Run(a) => run(a),
        Command::Johnson(a) => single(Algorithm::Johnson, a),
        Command::Sa(a) => single(Algorithm::Sa, a),
        Command::Gbml(a) => single(Algorithm::Gbml, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

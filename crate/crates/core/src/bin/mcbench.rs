use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use mcbench::analysis::Aggregation;
use mcbench::dataset::{write_dataset, LoadOptions};
use mcbench::finetune::{build_training_corpus, export_finetune_bundle, FinetuneConfig};
use mcbench::prompt::PromptForge;
use mcbench::runner::{
    analyze_cells, build_report, enumerate_matrix, http_factory, mock_factory, prepare_dataset, read_cells_table,
    run_campaign, CellStatus, RunConfig, RunManifest,
};
use mcbench::synthetic;

#[derive(Parser)]
#[command(name = "mcbench", version, about = "Mode-choice benchmarking for chat-completion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    CellMeans,
    Pooled,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the experiment matrix and report progress per cell.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// Print one line per cell.
        #[arg(long)]
        list: bool,
    },
    /// Execute pending and partial cells.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Fingerprint prefix or file stem; repeatable.
        #[arg(long)]
        only: Vec<String>,
        /// In-flight requests per cell; overrides the config.
        #[arg(long)]
        parallel: Option<usize>,
        /// Answer with deterministic synthetic respondents instead of HTTP.
        #[arg(long)]
        mock: bool,
    },
    /// Score complete cells and write the run-level tables.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
    /// Cross-configuration analysis of a user-supplied cell table.
    Analyze {
        /// CSV with model, dataset, shot, style, temperature, f1_weighted.
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "cell-means")]
        aggregation: AggregationArg,
    },
    /// Export an instruction corpus and adapter configuration.
    Finetune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        out: PathBuf,
        /// Shuffle seed for the validation hold-out; defaults to the run seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a synthetic three-mode dataset, its schema and a sample config.
    DemoData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        respondents: usize,
        #[arg(long, default_value_t = 9)]
        scenarios: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
}

const SAMPLE_CONFIG: &str = r#"[run]
output_dir = "results"
seed = 7
k = 5
parallel = 4

[[datasets]]
name = "demo"
path = "demo.csv"
schema_file = "demo_schema.toml"
n_respondents = 100
n_test = 200

[[endpoints]]
name = "model-a"
base_url = "http://localhost:8000"

[[endpoints]]
name = "model-b"
base_url = "http://localhost:8001"

[matrix]
models = ["model-a", "model-b"]
datasets = ["demo"]
"#;

fn plan(config: PathBuf, list: bool) -> Result<ExitCode> {
    let config = RunConfig::load(&config)?;
    let cells = enumerate_matrix(&config, &config.template()?)?;
    let manifest = RunManifest::scan(cells, &config.output_dir())?;
    if list {
        for e in &manifest.entries {
            println!(
                "{}  {:<8}  {:>4}/{:<4}  {}",
                e.fingerprint,
                e.status.as_str(),
                e.persisted,
                e.config.n_test,
                e.config.stem()
            );
        }
    }
    println!("configurations: {}", manifest.entries.len());
    println!("planned calls: {}", manifest.planned_calls());
    println!("persisted calls: {}", manifest.persisted_calls());
    for s in [CellStatus::Complete, CellStatus::Partial, CellStatus::Pending] {
        println!("{}: {}", s.as_str(), manifest.count(s));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(config: PathBuf, only: Vec<String>, parallel: Option<usize>, mock: bool) -> Result<ExitCode> {
    let config = RunConfig::load(&config)?;
    let summaries = if mock {
        run_campaign(&config, &only, parallel, &mock_factory(config.run.seed))?
    } else {
        run_campaign(&config, &only, parallel, &http_factory(&config))?
    };
    let mut failed = 0;
    for s in &summaries {
        let f1 = s.metrics.as_ref().map(|m| format!("{:.4}", m.f1_weighted)).unwrap_or_else(|| "-".into());
        println!("{}  {:<8}  +{:<4} f1_w={}  {}", s.fingerprint, s.status.as_str(), s.new_records, f1, s.stem);
        if let Some(e) = &s.error {
            failed += 1;
            eprintln!("  error: {e}");
        }
    }
    if failed > 0 {
        eprintln!("{failed} cell(s) stopped on endpoint errors; rerun to resume");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn report(config: PathBuf) -> Result<ExitCode> {
    let config = RunConfig::load(&config)?;
    let summary = build_report(&config)?;
    println!("scored cells: {}", summary.rows.len());
    println!("incomplete cells: {}", summary.incomplete.len());
    for n in &summary.notes {
        println!("note: {n}");
    }
    println!("written to {}", summary.report_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn analyze(table: PathBuf, out: PathBuf, aggregation: AggregationArg) -> Result<ExitCode> {
    let cells = read_cells_table(&table).with_context(|| format!("reading {}", table.display()))?;
    if cells.is_empty() {
        bail!("{} holds no cells", table.display());
    }
    let aggregation = match aggregation {
        AggregationArg::CellMeans => Aggregation::CellMeans,
        AggregationArg::Pooled => Aggregation::Pooled,
    };
    let outputs = analyze_cells(&cells, aggregation, &out)?;
    for (dataset, v) in &outputs.variance {
        let shares: Vec<String> = v.factors.iter().map(|f| format!("{:?}={:.3}", f.factor, f.share)).collect();
        println!("{dataset}: {}", shares.join(" "));
    }
    for n in &outputs.notes {
        println!("note: {n}");
    }
    println!("written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn finetune(config: PathBuf, dataset: String, out: PathBuf, seed: Option<u64>) -> Result<ExitCode> {
    let config = RunConfig::load(&config)?;
    let dcfg = config.dataset(&dataset).with_context(|| format!("no dataset `{dataset}` in config"))?;
    let data = prepare_dataset(&config, dcfg)?;
    let template = config.template()?;
    let forge = PromptForge::new(&data.schema, &template, config.run.k);
    let corpus = build_training_corpus(&data.split.train, &data.split.test, &forge, seed.unwrap_or(config.run.seed))?;
    let dir = export_finetune_bundle(&corpus, &FinetuneConfig::default(), &out)?;
    println!(
        "train: {}  validation: {}  written to {}",
        corpus.manifest.n_train,
        corpus.manifest.n_validation,
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn demo_data(out: PathBuf, respondents: usize, scenarios: usize, seed: u64) -> Result<ExitCode> {
    std::fs::create_dir_all(&out)?;
    let (schema, data) = synthetic::swissmetro_like(respondents, scenarios, seed);
    write_dataset(BufWriter::new(File::create(out.join("demo.csv"))?), &data, &schema, &LoadOptions::default())?;
    std::fs::write(out.join("demo_schema.toml"), toml::to_string(&schema)?)?;
    std::fs::write(out.join("mcbench.toml"), SAMPLE_CONFIG)?;
    println!("{} rows written to {}", data.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Command::Plan { config, list } => plan(config, list),
        Command::Run { config, only, parallel, mock } => run(config, only, parallel, mock),
        Command::Report { config } => report(config),
        Command::Analyze { table, out, aggregation } => analyze(table, out, aggregation),
        Command::Finetune { config, dataset, out, seed } => finetune(config, dataset, out, seed),
        Command::DemoData { out, respondents, scenarios, seed } => demo_data(out, respondents, scenarios, seed),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use coref_core::conllu::{parse_document, serialize_corpus, Document};
use coref_core::framing::{export_training_tuples, Budgets, LengthUnit};
use coref_core::inference::{DecodeConfig, ErrorPolicy};
use coref_core::instructions::InstructionSpec;
use coref_core::pipeline::{infer_corpus, BackendSpec, DocumentResult, PipelineConfig};
use coref_core::scorer::{render_table, score_dataset, DatasetScore, ScoreOptions};

#[derive(Parser)]
#[command(name = "coref", version, about = "Instruction-driven coreference resolution over CoNLL-U")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write instruction/input/output training records as JSON lines.
    ExportTrain {
        input: PathBuf,
        #[command(flatten)]
        framing: FramingArgs,
        /// Output file; stdout when omitted.
        #[arg(long, env = "COREF_OUT")]
        out: Option<PathBuf>,
    },
    /// Cluster the mentions of a CoNLL-U file and write it back with `e<N>` entities.
    Infer {
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Output file; stdout when omitted.
        #[arg(long, env = "COREF_OUT")]
        out: Option<PathBuf>,
    },
    /// Score response files against key files, one dataset per pair.
    Score {
        /// KEY RESPONSE [KEY RESPONSE ...]
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        scoring: ScoringArgs,
    },
    /// Infer on the key file and score the result against it.
    Pipeline {
        key: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        scoring: ScoringArgs,
        /// Also write the annotated CoNLL-U here.
        #[arg(long, env = "COREF_OUT")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FramingArgs {
    /// Instruction set, 1 through 5.
    #[arg(long, env = "COREF_INSTRUCTION", default_value_t = 5)]
    instruction: u8,
    /// Language name substituted into instruction 1.
    #[arg(long, env = "COREF_LANGUAGE", default_value = "English")]
    language: String,
    /// Append the zero-mention line to the instruction.
    #[arg(long, env = "COREF_ZERO_SUFFIX")]
    zero_suffix: bool,
    #[arg(long, env = "COREF_FRAME_BUDGET", default_value_t = 1600)]
    frame_budget: usize,
    #[arg(long, env = "COREF_TUPLE_BUDGET", default_value_t = 7168)]
    tuple_budget: usize,
    /// `words` or `chars`.
    #[arg(long, env = "COREF_LENGTH_UNIT", default_value = "words")]
    length_unit: LengthUnit,
}

impl FramingArgs {
    fn instruction(&self) -> InstructionSpec {
        InstructionSpec::new(self.instruction, self.language.clone(), self.zero_suffix)
    }

    fn budgets(&self) -> Budgets {
        Budgets {
            frame: self.frame_budget,
            tuple: self.tuple_budget,
            unit: self.length_unit,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    framing: FramingArgs,
    /// `oracle`, `replay:<file>` or `remote:<url>`.
    #[arg(long, env = "COREF_BACKEND", default_value = "oracle")]
    backend: BackendSpec,
    /// Worker threads for document-level parallelism.
    #[arg(long, env = "COREF_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Retries per slot before a fresh local number is assigned.
    #[arg(long, env = "COREF_MAX_RETRIES", default_value_t = 2)]
    max_retries: u32,
    /// Token limit per generation request.
    #[arg(long, env = "COREF_MAX_NEW_TOKENS", default_value_t = 8)]
    max_new_tokens: usize,
    /// Recorded with the diagnostics; every stage is deterministic.
    #[arg(long, env = "COREF_SEED", default_value_t = 0)]
    seed: u64,
    /// Bearer token for the remote backend.
    #[arg(long, env = "COREF_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Remote request timeout in seconds.
    #[arg(long, env = "COREF_TIMEOUT", default_value_t = 60)]
    timeout: u64,
    /// Diagnostics file (retries, fallbacks, chain breaks); stderr when omitted.
    #[arg(long, env = "COREF_DIAGNOSTICS")]
    diagnostics: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            instruction: self.framing.instruction(),
            budgets: self.framing.budgets(),
            backend: self.backend.clone(),
            decode: DecodeConfig {
                policy: ErrorPolicy {
                    max_retries: self.max_retries,
                },
                max_new_tokens: self.max_new_tokens,
            },
            jobs: self.jobs,
            seed: self.seed,
            remote_token: self.token.clone(),
            remote_timeout: Duration::from_secs(self.timeout),
        }
    }
}

#[derive(Args)]
struct ScoringArgs {
    /// Drop single-mention entities on both sides before scoring.
    #[arg(long, env = "COREF_REMOVE_SINGLETONS")]
    remove_singletons: bool,
    /// Write one flat JSON record per document and dataset here.
    #[arg(long, env = "COREF_RECORDS")]
    records: Option<PathBuf>,
}

fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_document(&text).with_context(|| format!("cannot parse {}", path.display()))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
        None => io::stdout().write_all(bytes).context("cannot write to stdout"),
    }
}

fn export_train(input: &Path, framing: &FramingArgs, out: Option<&Path>) -> Result<()> {
    let docs = read_corpus(input)?;
    let spec = framing.instruction();
    let budgets = framing.budgets();
    let mut buf = String::new();
    for doc in &docs {
        let records = export_training_tuples(doc, &spec, &budgets)
            .with_context(|| format!("document {:?}", doc.doc_id))?;
        for r in records {
            buf.push_str(&serde_json::to_string(&r)?);
            buf.push('\n');
        }
    }
    write_output(out, buf.as_bytes())
}

fn run_inference(input: &Path, run: &RunArgs) -> Result<(Vec<Document>, Vec<DocumentResult>)> {
    let docs = read_corpus(input)?;
    let config = run.config();
    log::info!("backend {}, {} jobs, seed {}", config.backend, config.jobs, config.seed);
    let results = infer_corpus(&docs, &config)?;
    let mut lines = String::new();
    for r in &results {
        for d in &r.diagnostics {
            lines.push_str(&format!("{}\t{d}\n", r.document.doc_id));
        }
    }
    match &run.diagnostics {
        Some(p) => fs::write(p, &lines).with_context(|| format!("cannot write {}", p.display()))?,
        None => eprint!("{lines}"),
    }
    Ok((docs, results))
}

fn annotated(results: &[DocumentResult]) -> Vec<Document> {
    results.iter().map(|r| r.document.clone()).collect()
}

fn report(datasets: &[DatasetScore], records: Option<&Path>) -> Result<()> {
    let rows: Vec<_> = datasets.iter().map(|d| (d.name.clone(), d.report.clone())).collect();
    print!("{}", render_table(&rows));
    for d in datasets {
        for line in &d.report.diagnostics {
            eprintln!("{}: {line}", d.name);
        }
    }
    if let Some(path) = records {
        let mut buf = String::new();
        for d in datasets {
            for doc in &d.documents {
                let mut rec = doc.report.to_record("document", &doc.doc_id);
                rec.insert("dataset".into(), d.name.clone().into());
                buf.push_str(&serde_json::to_string(&rec)?);
                buf.push('\n');
            }
            buf.push_str(&serde_json::to_string(&d.report.to_record("dataset", &d.name))?);
            buf.push('\n');
        }
        fs::write(path, buf).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn options(scoring: &ScoringArgs) -> ScoreOptions {
    ScoreOptions {
        remove_singletons: scoring.remove_singletons,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ExportTrain { input, framing, out } => export_train(&input, &framing, out.as_deref()),
        Command::Infer { input, run, out } => {
            let (_, results) = run_inference(&input, &run)?;
            write_output(out.as_deref(), serialize_corpus(&annotated(&results)).as_bytes())
        }
        Command::Score { files, scoring } => {
            if files.len() % 2 != 0 {
                bail!("score expects KEY RESPONSE pairs, got {} paths", files.len());
            }
            let datasets = files
                .chunks(2)
                .map(|pair| {
                    let key = read_corpus(&pair[0])?;
                    let response = read_corpus(&pair[1])?;
                    Ok(score_dataset(&dataset_name(&pair[0]), &key, &response, options(&scoring))?)
                })
                .collect::<Result<Vec<_>>>()?;
            report(&datasets, scoring.records.as_deref())
        }
        Command::Pipeline {
            key,
            run,
            scoring,
            out,
        } => {
            let (gold, results) = run_inference(&key, &run)?;
            let response = annotated(&results);
            if let Some(out) = &out {
                write_output(Some(out), serialize_corpus(&response).as_bytes())?;
            }
            let dataset = score_dataset(&dataset_name(&key), &gold, &response, options(&scoring))?;
            report(&[dataset], scoring.records.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the cause chain, skipping causes already quoted by the outer message.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

mod files;
mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use loke_core::backend::{BackendConfig, BackendError, CachedBackend, CompletionBackend, HttpBackend, ReplayBackend};
use loke_core::dataset::{sample_and_filter, save_carb_gold, save_tekgen, Source};
use loke_core::evaluator::{linkability_with, score_corpus_with, CorpusItem, LinkabilityReport, ScoreOptions};
use loke_core::extractor::{extract_batch, PromptTemplate};
use loke_core::index::{build_from_dump, LabelIndex};
use loke_core::linker::{link_batch, ConfidenceParams};
use loke_core::rdf::{emit_with, EmitPolicy};
use loke_core::{ExecMode, LinkedStatement, RecordKind};
use serde::Serialize;

use files::LinkedSentence;

/// Exit status 1: bad input. Exit status 2: the completion backend failed.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Backend(String),
}

impl Failure {
    pub fn input(msg: impl Into<String>) -> Self {
        Failure::Input(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Backend(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            Failure::Input(m) | Failure::Backend(m) => m,
        };
        // one line, always
        f.write_str(&msg.lines().collect::<Vec<_>>().join(" "))
    }
}

impl From<loke_core::Error> for Failure {
    fn from(e: loke_core::Error) -> Self {
        match e {
            loke_core::Error::Backend { .. } => Failure::Backend(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Fixture { .. } | BackendError::Io(_) => Failure::Input(e.to_string()),
            BackendError::MissingCredential(ref var) => {
                Failure::Backend(format!("environment variable {var} is not set; export it with your API key"))
            }
            other => Failure::Backend(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "loke", version, about = "Extract, link, score and publish knowledge triples")]
struct Cli {
    /// Run batch stages on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a label index from a JSON-lines record dump.
    BuildIndex(BuildIndexArgs),
    /// Send sentences through the prompt and parse the returned triples.
    Extract(ExtractArgs),
    /// Link extracted triples against entity and property indices.
    Link(LinkArgs),
    /// Score predictions against gold triples.
    Evaluate(EvaluateArgs),
    /// Fraction of slots and triples that link confidently.
    Linkability(LinkabilityArgs),
    /// Write linked statements as N-Triples.
    EmitRdf(EmitRdfArgs),
    /// Draw a seeded sample of benchmark sentences.
    Sample(SampleArgs),
}

#[derive(Args, Debug, Serialize)]
struct BuildIndexArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// JSON-lines dump: {"id", "label", "aliases"}
    #[arg(long)]
    dump: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum KindArg {
    Entity,
    Property,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
enum BackendKind {
    Replay,
    Live,
}

#[derive(Args, Debug, Serialize)]
struct ExtractArgs {
    /// Sentences: .jsonl with a "sentence" field, CaRB .tsv, or plain text.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "replay")]
    backend: BackendKind,
    /// Recorded completions, required for the replay backend.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Prompt template containing "$prompt" once; defaults to the built-in one.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Completion cache (JSON-lines), created if missing.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value_t = BackendConfig::default().endpoint)]
    endpoint: String,
    #[arg(long, default_value_t = BackendConfig::default().model)]
    model: String,
    /// Name of the environment variable that holds the API key.
    #[arg(long, default_value_t = BackendConfig::default().credential_env)]
    credential_env: String,
    #[arg(long, default_value_t = BackendConfig::default().requests_per_minute)]
    requests_per_minute: u32,
    #[arg(long, default_value_t = BackendConfig::default().max_retries)]
    max_retries: u32,
    #[arg(long, default_value_t = BackendConfig::default().timeout_secs)]
    timeout_secs: u64,
}

#[derive(Args, Debug, Serialize, Clone, Copy)]
struct ParamArgs {
    #[arg(long, default_value_t = 0.999)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    u: f64,
    #[arg(long, default_value_t = 0.999)]
    theta_link: f64,
}

impl ParamArgs {
    fn params(self) -> Result<ConfidenceParams, Failure> {
        let params = ConfidenceParams { p: self.p, u: self.u, theta_link: self.theta_link };
        params.validate().map_err(Failure::Input)?;
        Ok(params)
    }
}

#[derive(Args, Debug, Serialize)]
struct LinkArgs {
    /// Output of `extract`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    entities: PathBuf,
    #[arg(long)]
    properties: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    /// Output of `link` or `extract`.
    #[arg(long)]
    preds: PathBuf,
    /// TekGen JSON-lines or CaRB .tsv.
    #[arg(long)]
    gold: PathBuf,
    /// Directory for report.json, curve.csv, curve.svg and the manifest.
    #[arg(long)]
    out_dir: PathBuf,
    /// Sweep thresholds over statement confidence.
    #[arg(long)]
    use_confidence: bool,
    /// Score preferred labels of linked slots instead of the raw text.
    #[arg(long)]
    corrected: bool,
}

#[derive(Args, Debug, Serialize)]
struct LinkabilityArgs {
    /// Any file carrying triples: extraction, linked, TekGen or CaRB.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    entities: PathBuf,
    #[arg(long)]
    properties: PathBuf,
    /// Label for the CSV row.
    #[arg(long, default_value = "dataset")]
    dataset: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args, Debug, Serialize)]
struct EmitRdfArgs {
    /// Output of `link`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    min_confidence: f64,
    #[arg(long, default_value_t = EmitPolicy::default().entity_base)]
    entity_base: String,
    #[arg(long, default_value_t = EmitPolicy::default().property_base)]
    property_base: String,
    #[arg(long, default_value_t = EmitPolicy::default().local_base)]
    local_base: String,
}

#[derive(Args, Debug, Serialize)]
struct SampleArgs {
    /// TekGen JSON-lines or CaRB .tsv; the output uses the same format.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn mode(sequential: bool) -> ExecMode {
    if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    }
}

#[derive(Serialize)]
struct Snapshot<'a, A: Serialize> {
    sequential: bool,
    #[serde(flatten)]
    args: &'a A,
}

fn build_index(a: &BuildIndexArgs) -> Result<(), Failure> {
    let kind = match a.kind {
        KindArg::Entity => RecordKind::Entity,
        KindArg::Property => RecordKind::Property,
    };
    let index = build_from_dump(kind, &a.dump)?;
    index.save(&a.out)?;
    eprintln!("indexed {} {} records ({} distinct tokens)", index.len(), kind, index.vocabulary_len());
    manifest::write("build-index", None, a, &[&a.dump], &[&a.out], &a.out)?;
    Ok(())
}

fn extract(a: &ExtractArgs, exec: ExecMode) -> Result<(), Failure> {
    let template = match &a.template {
        Some(p) => PromptTemplate::from_file(p)?,
        None => PromptTemplate::default(),
    };
    let sentences = files::read_sentences(&a.input)?;
    let backend: Box<dyn CompletionBackend> = match a.backend {
        BackendKind::Replay => {
            let path = a
                .fixtures
                .as_ref()
                .ok_or_else(|| Failure::input("the replay backend needs --fixtures <FILE>"))?;
            Box::new(ReplayBackend::from_jsonl(path)?)
        }
        BackendKind::Live => {
            let config = BackendConfig {
                endpoint: a.endpoint.clone(),
                model: a.model.clone(),
                credential_env: a.credential_env.clone(),
                timeout_secs: a.timeout_secs,
                max_retries: a.max_retries,
                requests_per_minute: a.requests_per_minute,
                ..BackendConfig::default()
            };
            Box::new(HttpBackend::from_env(config)?)
        }
    };
    let backend: Box<dyn CompletionBackend> = match &a.cache {
        Some(path) => Box::new(CachedBackend::persistent(backend, path)?),
        None => backend,
    };
    let results = extract_batch(backend.as_ref(), &template, &sentences, exec)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let warnings: usize = results.iter().map(|r| r.parse_warnings.len()).sum();
    let triples: usize = results.iter().map(|r| r.triples.len()).sum();
    files::write_json_lines(&a.out, &results)?;
    eprintln!("extracted {triples} triples from {} sentences ({warnings} parse warnings)", results.len());

    let mut inputs: Vec<&Path> = vec![&a.input];
    inputs.extend(a.fixtures.as_deref().filter(|_| a.backend == BackendKind::Replay));
    inputs.extend(a.template.as_deref());
    #[derive(Serialize)]
    struct Config<'a> {
        #[serde(flatten)]
        args: &'a ExtractArgs,
        template_sha256: String,
    }
    let config = Config { args: a, template_sha256: template.digest() };
    manifest::write("extract", None, Snapshot { sequential: exec == ExecMode::Sequential, args: &config }, &inputs, &[&a.out], &a.out)?;
    Ok(())
}

fn load_index(path: &Path, kind: RecordKind) -> Result<LabelIndex, Failure> {
    let index = LabelIndex::load(path)?;
    if index.kind() != kind {
        return Err(Failure::input(format!(
            "{} is an index of {} records; {kind} records are needed here",
            path.display(),
            index.kind()
        )));
    }
    Ok(index)
}

fn link(a: &LinkArgs, exec: ExecMode) -> Result<(), Failure> {
    let params = a.params.params()?;
    let entities = load_index(&a.entities, RecordKind::Entity)?;
    let properties = load_index(&a.properties, RecordKind::Property)?;
    let extractions = files::read_extractions(&a.input)?;
    let out: Vec<LinkedSentence> = extractions
        .into_iter()
        .map(|e| LinkedSentence {
            statements: link_batch(&e.triples, &entities, &properties, &params, exec),
            sentence: e.sentence,
        })
        .collect();
    let total: usize = out.iter().map(|s| s.statements.len()).sum();
    let scored = out.iter().flat_map(|s| &s.statements).filter(|s| s.statement_confidence.is_some()).count();
    files::write_json_lines(&a.out, &out)?;
    eprintln!("linked {scored} of {total} statements");
    manifest::write(
        "link",
        None,
        Snapshot { sequential: exec == ExecMode::Sequential, args: a },
        &[&a.input, &a.entities, &a.properties],
        &[&a.out],
        &a.out,
    )?;
    Ok(())
}

fn evaluate(a: &EvaluateArgs, exec: ExecMode) -> Result<(), Failure> {
    let gold = files::read_gold(&a.gold)?;
    let mut preds = files::by_sentence(files::read_predictions(&a.preds)?);
    // duplicate gold sentences are merged; predictions attach to the first
    let mut items: Vec<(String, CorpusItem)> = Vec::new();
    for rec in gold {
        match items.iter_mut().find(|(s, _)| *s == rec.sentence) {
            Some((_, item)) => item.golds.extend(rec.gold_triples),
            None => {
                let p: Vec<LinkedStatement> = preds.remove(&rec.sentence).unwrap_or_default();
                items.push((rec.sentence, CorpusItem { preds: p, golds: rec.gold_triples }));
            }
        }
    }
    let unmatched: usize = preds.values().map(Vec::len).sum();
    let items: Vec<CorpusItem> = items.into_iter().map(|(_, i)| i).collect();
    let options = ScoreOptions { use_confidence: a.use_confidence, corrected: a.corrected };
    let mut report = score_corpus_with(&items, options, exec)?;
    if unmatched > 0 {
        report.warnings.push(format!(
            "{unmatched} predictions belong to {} sentences absent from the gold file and were ignored",
            preds.len()
        ));
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::input(format!("cannot create {}: {e}", a.out_dir.display())))?;
    let json = a.out_dir.join("report.json");
    let csv = a.out_dir.join("curve.csv");
    let svg = a.out_dir.join("curve.svg");
    let title = a.gold.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    files::write_text(&json, &report.to_json())?;
    files::write_text(&csv, &report.curve_csv())?;
    files::write_text(&svg, &report.curve_svg(&title))?;
    println!(
        "AUC {:.3}  P {:.3}  R {:.3}  F1 {:.3}  ({} predictions, {} gold, {} sentences)",
        report.auc, report.optimal.precision, report.optimal.recall, report.optimal.f1, report.predictions, report.golds, report.sentences
    );
    manifest::write(
        "evaluate",
        None,
        Snapshot { sequential: exec == ExecMode::Sequential, args: a },
        &[&a.preds, &a.gold],
        &[&json, &csv, &svg],
        &a.out_dir,
    )?;
    Ok(())
}

fn linkability(a: &LinkabilityArgs, exec: ExecMode) -> Result<(), Failure> {
    let params = a.params.params()?;
    let entities = load_index(&a.entities, RecordKind::Entity)?;
    let properties = load_index(&a.properties, RecordKind::Property)?;
    let triples = files::read_triples(&a.input)?;
    let report = linkability_with(&triples, &entities, &properties, &params, exec);
    if report.empty {
        eprintln!("warning: {} holds no triples; all fractions are 0", a.input.display());
    }
    let row = report.csv_row(&a.dataset);
    files::write_text(&a.out, &format!("{}\n{row}\n", LinkabilityReport::CSV_HEADER))?;
    println!("{row}");
    manifest::write(
        "linkability",
        None,
        Snapshot { sequential: exec == ExecMode::Sequential, args: a },
        &[&a.input, &a.entities, &a.properties],
        &[&a.out],
        &a.out,
    )?;
    Ok(())
}

fn emit_rdf(a: &EmitRdfArgs, exec: ExecMode) -> Result<(), Failure> {
    let policy = EmitPolicy {
        entity_base: a.entity_base.clone(),
        property_base: a.property_base.clone(),
        local_base: a.local_base.clone(),
        min_confidence: a.min_confidence,
    };
    policy.validate().map_err(Failure::Input)?;
    let statements: Vec<LinkedStatement> = files::read_predictions(&a.input)?
        .into_iter()
        .flat_map(|s| s.statements)
        .collect();
    let nt = emit_with(&statements, &policy, exec);
    files::write_text(&a.out, &nt)?;
    eprintln!("wrote {} triples from {} statements", nt.lines().count(), statements.len());
    manifest::write(
        "emit-rdf",
        None,
        Snapshot { sequential: exec == ExecMode::Sequential, args: a },
        &[&a.input],
        &[&a.out],
        &a.out,
    )?;
    Ok(())
}

fn sample(a: &SampleArgs) -> Result<(), Failure> {
    let records = files::read_gold(&a.input)?;
    let n = usize::try_from(a.n).map_err(|_| Failure::input("--n is too large"))?;
    let picked = sample_and_filter(&records, n, a.seed);
    let w = files::create(&a.out)?;
    let carb = records.first().is_some_and(|r| r.source == Source::Carb);
    if carb {
        save_carb_gold(w, &picked)?;
    } else {
        save_tekgen(w, &picked)?;
    }
    eprintln!(
        "kept {} of {} sampled sentences ({} in input)",
        picked.len(),
        n.min(records.len()),
        records.len()
    );
    manifest::write("sample", Some(a.seed), a, &[&a.input], &[&a.out], &a.out)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let exec = mode(cli.sequential);
    match &cli.command {
        Command::BuildIndex(a) => build_index(a),
        Command::Extract(a) => extract(a, exec),
        Command::Link(a) => link(a, exec),
        Command::Evaluate(a) => evaluate(a, exec),
        Command::Linkability(a) => linkability(a, exec),
        Command::EmitRdf(a) => emit_rdf(a, exec),
        Command::Sample(a) => sample(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: {first} (see `loke --help`)");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

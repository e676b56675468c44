//! Subcommands of the `matra` binary.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use matra_core::corpus::{build_bidirectional, declared_languages, ingest_news, Corpus, LanguageTag, Rejection};
use matra_core::inference::{transliterate_text, transliterate_word, TransliterationRequest};
use matra_core::metrics::{phonetic_accuracy, phonetic_accuracy_matrix, read_annotations, reference_metrics, score_predictions, Scored};
use matra_core::model::ModelConfig;
use matra_core::training::{load_checkpoint, save_checkpoint, train, Checkpoint, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::AppError;
use crate::ratelimit::RateLimiter;
use crate::server::{self, AppState, ServeConfig, DEFAULT_MAX_BODY_BYTES, DEFAULT_RATE_LIMIT};
use crate::store::AnnotationStore;

#[derive(Debug, Parser)]
#[command(name = "matra", version, about = "Character-level transliteration among English, Hindi, Bengali, Tamil and Kannada")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a directory of NEWS XML files into one tagged, bi-directional TSV.
    ParseCorpus(ParseCorpusArgs),
    /// Train a model on a tagged TSV corpus.
    Train(TrainArgs),
    /// Score a checkpoint on a test TSV, or summarise human annotations.
    Evaluate(EvaluateArgs),
    /// Transliterate a word or sentence.
    Transliterate(TransliterateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write predictions on a test TSV as pending annotation items.
    AnnotationsExport(ExportArgs),
    /// Validate an annotation JSONL file and append it to a store.
    AnnotationsImport(ImportArgs),
}

#[derive(Debug, Args)]
pub struct ParseCorpusArgs {
    /// Directory holding `*.xml` files.
    pub input_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Rejection report; defaults to `<out>.rejections.jsonl`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Fail on schema deviations instead of skipping the entry.
    #[arg(long)]
    pub strict: bool,
    /// Extra file-name language codes, e.g. `Ba=bengali`. Used when a file
    /// does not declare its languages on the root element.
    #[arg(long = "lang-code", value_name = "CODE=LANG", value_parser = parse_code)]
    pub lang_codes: Vec<(String, LanguageTag)>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSON model config; `vocab_size` 0 takes the size from the corpus.
    #[arg(long)]
    pub model_config: PathBuf,
    /// JSON training config; missing fields take their defaults.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    /// Held-out TSV scored after every epoch.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>.history.jsonl`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, env = "MATRA_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, required_unless_present = "annotations", conflicts_with = "annotations")]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransliterateArgs {
    #[arg(long, env = "MATRA_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[arg(long, value_parser = parse_lang)]
    pub from: LanguageTag,
    #[arg(long, value_parser = parse_lang)]
    pub to: LanguageTag,
    /// Print the full result as JSON.
    #[arg(long)]
    pub json: bool,
    #[arg(required = true, num_args = 1..)]
    pub text: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "MATRA_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[arg(long, env = "MATRA_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Requests per minute per client address.
    #[arg(long, default_value_t = DEFAULT_RATE_LIMIT, value_parser = clap::value_parser!(u32).range(1..))]
    pub rate_limit: u32,
    #[arg(long, default_value_t = DEFAULT_MAX_BODY_BYTES)]
    pub max_body_bytes: usize,
    #[arg(long, default_value = "annotations.jsonl")]
    pub annotations: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, env = "MATRA_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
}

fn parse_lang(s: &str) -> Result<LanguageTag, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = LanguageTag::ALL.iter().map(|l| l.name()).collect();
        format!("unknown language {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_code(s: &str) -> Result<(String, LanguageTag), String> {
    let (code, lang) = s.split_once('=').ok_or_else(|| format!("expected CODE=LANG, got {s:?}"))?;
    Ok((code.to_owned(), parse_lang(lang)?))
}

/// File-name codes as used by the NEWS shared task: `EnHi`, `EnBa`, `EnTa`,
/// `EnKa`.
pub fn default_lang_codes() -> HashMap<String, LanguageTag> {
    [
        ("En", LanguageTag::English),
        ("Hi", LanguageTag::Hindi),
        ("Ba", LanguageTag::Bengali),
        ("Bn", LanguageTag::Bengali),
        ("Ta", LanguageTag::Tamil),
        ("Ka", LanguageTag::Kannada),
        ("Kn", LanguageTag::Kannada),
    ]
    .into_iter()
    .map(|(c, l)| (c.to_owned(), l))
    .collect()
}

/// Direction from the first pair of adjacent two-letter codes in `name`
/// with English on exactly one side, e.g. `NEWS2018_M-EnHi_trn.xml`.
pub fn languages_from_file_name(name: &str, codes: &HashMap<String, LanguageTag>) -> Option<(LanguageTag, LanguageTag)> {
    let chars: Vec<char> = name.chars().collect();
    (0..chars.len().saturating_sub(3)).find_map(|i| {
        let a: String = chars[i..i + 2].iter().collect();
        let b: String = chars[i + 2..i + 4].iter().collect();
        let (s, t) = (*codes.get(&a)?, *codes.get(&b)?);
        (s.is_english() != t.is_english()).then_some((s, t))
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, AppError> {
    std::fs::read(path).map_err(|source| AppError::Read {
        path: path.to_owned(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, AppError> {
    File::create(path).map(BufWriter::new).map_err(|source| AppError::Write {
        path: path.to_owned(),
        source,
    })
}

fn finish(path: &Path, mut out: BufWriter<File>) -> Result<(), AppError> {
    out.flush().map_err(|source| AppError::Write {
        path: path.to_owned(),
        source,
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load(path: &Path) -> Result<Checkpoint, AppError> {
    load_checkpoint(path).map_err(|source| AppError::Checkpoint {
        path: path.to_owned(),
        source,
    })
}

fn read_corpus(path: &Path) -> Result<Corpus, AppError> {
    let file = File::open(path).map_err(|source| AppError::Read {
        path: path.to_owned(),
        source,
    })?;
    Corpus::read_tsv(BufReader::new(file)).map_err(|source| AppError::Corpus {
        path: path.to_owned(),
        source,
    })
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, AppError> {
    let config_err = |message: String| AppError::Config {
        path: path.to_owned(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| config_err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| config_err(e.to_string()))
}

#[derive(Serialize)]
struct ReportLine<'a> {
    file: &'a str,
    #[serde(flatten)]
    rejection: &'a Rejection,
}

pub fn parse_corpus(args: &ParseCorpusArgs, mut log: impl Write) -> Result<Corpus, AppError> {
    let mut codes = default_lang_codes();
    codes.extend(args.lang_codes.iter().cloned());
    let entries = std::fs::read_dir(&args.input_dir).map_err(|source| AppError::Read {
        path: args.input_dir.clone(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(AppError::Data(format!("no .xml files in {}", args.input_dir.display())));
    }

    let mut datasets = Vec::new();
    let mut report = Vec::new();
    let mut rule_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut warnings = 0;
    for path in &files {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let xml = read_bytes(path)?;
        let (source, target) = declared_languages(&xml)
            .or_else(|| languages_from_file_name(&name, &codes))
            .ok_or_else(|| AppError::Data(format!("{name}: no language attributes and no language code in the file name")))?;
        let file = ingest_news(&xml, source, target, args.strict, name.clone()).map_err(|e| AppError::Corpus {
            path: path.clone(),
            source: e,
        })?;
        writeln!(log, "{name}: {source} -> {target}, {} pairs kept, {} rejected", file.dataset.triples.len(), file.rejections.len()).ok();
        for r in &file.rejections {
            *rule_counts.entry(serde_json::to_value(r.rule).expect("rule").as_str().unwrap_or_default().to_owned()).or_default() += 1;
            report.push(serde_json::to_string(&ReportLine { file: &name, rejection: r }).expect("plain record"));
        }
        warnings += file.warnings;
        datasets.push(file.dataset);
    }
    let corpus = build_bidirectional(&datasets).map_err(|e| AppError::Data(e.to_string()))?;

    let mut out = create(&args.out)?;
    corpus.write_tsv(&mut out).map_err(|source| AppError::Write {
        path: args.out.clone(),
        source,
    })?;
    finish(&args.out, out)?;
    let report_path = args.report.clone().unwrap_or_else(|| with_suffix(&args.out, ".rejections.jsonl"));
    let mut rep = create(&report_path)?;
    for line in &report {
        writeln!(rep, "{line}").map_err(|source| AppError::Write {
            path: report_path.clone(),
            source,
        })?;
    }
    finish(&report_path, rep)?;

    let rules: Vec<String> = rule_counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
    writeln!(
        log,
        "{} files, {} triples, {} rejected ({}), {warnings} schema warnings",
        files.len(),
        corpus.len(),
        report.len(),
        if rules.is_empty() { "none".into() } else { rules.join(", ") }
    )
    .ok();
    Ok(corpus)
}

pub fn run_train(args: &TrainArgs, mut log: impl Write) -> Result<Checkpoint, AppError> {
    let model_config: ModelConfig = read_config(&args.model_config)?;
    let train_config: TrainConfig = match &args.train_config {
        Some(p) => read_config(p)?,
        None => TrainConfig::default(),
    };
    let corpus = read_corpus(&args.corpus)?;
    let dev = match &args.dev {
        Some(p) => read_corpus(p)?.triples,
        None => Vec::new(),
    };
    let (checkpoint, history) = train(&corpus, &dev, &model_config, &train_config)?;
    save_checkpoint(&checkpoint, &args.out).map_err(|source| AppError::Checkpoint {
        path: args.out.clone(),
        source,
    })?;
    let history_path = args.history.clone().unwrap_or_else(|| with_suffix(&args.out, ".history.jsonl"));
    std::fs::write(&history_path, history.to_jsonl()).map_err(|source| AppError::Write {
        path: history_path.clone(),
        source,
    })?;
    writeln!(
        log,
        "{} steps, final loss {}, wrote {}",
        checkpoint.metadata.steps,
        checkpoint.metadata.final_loss.map_or("n/a".into(), |l| format!("{l:.4}")),
        args.out.display()
    )
    .ok();
    Ok(checkpoint)
}

/// Predictions for every triple; a word the model cannot take (too long,
/// wrong script) counts as an empty prediction.
fn predict(checkpoint: &Checkpoint, corpus: &Corpus) -> (Vec<Scored>, usize) {
    let mut failed = 0;
    let items = corpus
        .iter()
        .map(|t| {
            let prediction = match transliterate_word(checkpoint, &t.source, t.source_lang, t.target_lang) {
                Ok(r) => r.output,
                Err(e) => {
                    log::warn!("{} ({} -> {}): {e}", t.source, t.source_lang, t.target_lang);
                    failed += 1;
                    String::new()
                }
            };
            Scored {
                source_lang: t.source_lang,
                target_lang: t.target_lang,
                prediction,
                reference: t.target.clone(),
            }
        })
        .collect();
    (items, failed)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<serde_json::Value, AppError> {
    let report = if let Some(test) = &args.test {
        let path = args
            .checkpoint
            .as_ref()
            .ok_or_else(|| AppError::Usage("--test needs --checkpoint (or MATRA_CHECKPOINT)".into()))?;
        let checkpoint = load(path)?;
        let corpus = read_corpus(test)?;
        let (items, failed) = predict(&checkpoint, &corpus);
        let metrics = score_predictions(&items)?;
        json!({ "items": items.len(), "failed": failed, "metrics": metrics })
    } else {
        let path = args.annotations.as_ref().expect("clap requires one input");
        let file = File::open(path).map_err(|source| AppError::Read {
            path: path.clone(),
            source,
        })?;
        let records = read_annotations(BufReader::new(file))?;
        let summary = phonetic_accuracy(&records)?;
        let reference = reference_metrics(&records)?;
        json!({
            "correct_sounding_count": summary.correct_sounding_count,
            "total_count": summary.total_count,
            "phonetic_accuracy": summary.phonetic_accuracy,
            "phonetic_accuracy_matrix": phonetic_accuracy_matrix(&records)?,
            "reference_metrics": reference,
        })
    };
    let text = serde_json::to_string_pretty(&report).expect("plain JSON") + "\n";
    match &args.out {
        Some(p) => std::fs::write(p, &text).map_err(|source| AppError::Write { path: p.clone(), source })?,
        None => print!("{text}"),
    }
    Ok(report)
}

pub fn run_transliterate(args: &TransliterateArgs, mut out: impl Write) -> Result<(), AppError> {
    let checkpoint = load(&args.checkpoint)?;
    let request = TransliterationRequest {
        text: args.text.join(" "),
        source_lang: args.from,
        target_lang: args.to,
    };
    let result = transliterate_text(&checkpoint, &request)?;
    let line = if args.json {
        serde_json::to_string(&result).expect("plain JSON")
    } else {
        result.output
    };
    writeln!(out, "{line}").ok();
    Ok(())
}

/// An annotation record still waiting for a verdict.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingAnnotation {
    pub id: String,
    pub source_lang: LanguageTag,
    pub target_lang: LanguageTag,
    pub input: String,
    pub prediction: String,
}

pub fn export_annotations(args: &ExportArgs) -> Result<Vec<PendingAnnotation>, AppError> {
    let checkpoint = load(&args.checkpoint)?;
    let corpus = read_corpus(&args.test)?;
    let mut pending = Vec::new();
    for (i, t) in corpus.iter().enumerate() {
        match transliterate_word(&checkpoint, &t.source, t.source_lang, t.target_lang) {
            Ok(r) => pending.push(PendingAnnotation {
                id: format!("{}-{}-{i}", t.source_lang, t.target_lang),
                source_lang: t.source_lang,
                target_lang: t.target_lang,
                input: r.input,
                prediction: r.output,
            }),
            Err(e) => log::warn!("skipping {}: {e}", t.source),
        }
    }
    let mut out = create(&args.out)?;
    for p in &pending {
        serde_json::to_writer(&mut out, p).expect("plain record");
        out.write_all(b"\n").map_err(|source| AppError::Write {
            path: args.out.clone(),
            source,
        })?;
    }
    finish(&args.out, out)?;
    Ok(pending)
}

pub fn import_annotations(args: &ImportArgs) -> Result<usize, AppError> {
    let file = File::open(&args.input).map_err(|source| AppError::Read {
        path: args.input.clone(),
        source,
    })?;
    let reader: Box<dyn BufRead> = Box::new(BufReader::new(file));
    let records = read_annotations(reader)?;
    AnnotationStore::open(&args.store)?.append(&records)
}

pub fn serve(args: &ServeArgs) -> Result<(), AppError> {
    let checkpoint = load(&args.checkpoint)?;
    let config = ServeConfig {
        addr: SocketAddr::new(args.host, args.port),
        checkpoint: args.checkpoint.clone(),
        annotations: args.annotations.clone(),
        rate_limit: args.rate_limit,
        max_body_bytes: args.max_body_bytes,
    };
    let state = AppState {
        checkpoint,
        store: AnnotationStore::open(&config.annotations)?,
        limiter: RateLimiter::per_minute(config.rate_limit),
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| AppError::Usage(format!("cannot start runtime: {e}")))?;
    runtime
        .block_on(server::serve(config.clone(), state))
        .map_err(|e| AppError::Usage(format!("cannot serve on {}: {e}", config.addr)))
}

pub fn run(cli: Cli) -> Result<(), AppError> {
    let stderr = std::io::stderr();
    match cli.command {
        Command::ParseCorpus(a) => parse_corpus(&a, stderr).map(drop),
        Command::Train(a) => run_train(&a, stderr).map(drop),
        Command::Evaluate(a) => evaluate(&a).map(drop),
        Command::Transliterate(a) => run_transliterate(&a, std::io::stdout()),
        Command::Serve(a) => serve(&a),
        Command::AnnotationsExport(a) => {
            let n = export_annotations(&a)?.len();
            eprintln!("wrote {n} pending items to {}", a.out.display());
            Ok(())
        }
        Command::AnnotationsImport(a) => {
            let n = import_annotations(&a)?;
            eprintln!("appended {n} records to {}", a.store.display());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_name_hints() {
        let codes = default_lang_codes();
        assert_eq!(
            languages_from_file_name("NEWS2018_M-EnHi_trn.xml", &codes),
            Some((LanguageTag::English, LanguageTag::Hindi))
        );
        assert_eq!(languages_from_file_name("KaEn.xml", &codes), Some((LanguageTag::Kannada, LanguageTag::English)));
        assert_eq!(languages_from_file_name("EnEn.xml", &codes), None);
        assert_eq!(languages_from_file_name("names.xml", &codes), None);
    }

    #[test]
    fn lang_code_flag() {
        assert_eq!(parse_code("Be=bengali").unwrap(), ("Be".into(), LanguageTag::Bengali));
        assert!(parse_code("Be").is_err());
        assert!(parse_code("Fr=french").is_err());
    }
}

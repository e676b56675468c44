//! Corpus ingestion: NEWS XML parsing, cleaning, direction merging, the
//! character vocabulary, splits and token encoding.

mod clean;
mod encode;
mod language;
mod news;
mod split;
mod vocab;

pub use clean::{clean_pairs, CleaningRule, Rejection};
pub use encode::{encode_example, Encoded, EncodedExample};
pub use language::LanguageTag;
pub use news::{declared_languages, parse_news_xml, ParsedNews};
pub use split::{split_corpus, Split, SplitRatios};
pub use vocab::{build_vocab, Vocabulary, EOS_ID, PAD_ID, RESERVED_TOKENS, UNK_ID};

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed XML at line {line}: {message}")]
    Xml { line: usize, message: String },
    #[error("schema deviation at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("unknown language {0:?}; expected one of english, hindi, bengali, tamil, kannada")]
    UnknownLanguage(String),
    #[error("direction {source_lang}->{target_lang} has no English side")]
    NoEnglishSide {
        source_lang: LanguageTag,
        target_lang: LanguageTag,
    },
    #[error("triple ({word}, {output}) does not belong to direction {expected}")]
    WrongDirection {
        word: String,
        output: String,
        expected: String,
    },
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("TSV line {line}: {message}")]
    Tsv { line: usize, message: String },
    #[error("empty {0} word")]
    EmptyWord(&'static str),
    #[error("encoded length {len} exceeds max_seq_len {max}")]
    TooLong { len: usize, max: usize },
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `[source, target, <target-lang>]` training item; the source language is
/// kept alongside for filtering and reporting.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransliterationTriple {
    pub source: String,
    pub target: String,
    pub target_lang: LanguageTag,
    pub source_lang: LanguageTag,
}

impl TransliterationTriple {
    pub fn new(source: impl Into<String>, target: impl Into<String>, source_lang: LanguageTag, target_lang: LanguageTag) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            target_lang,
            source_lang,
        }
    }

    /// Same pair in the opposite direction.
    pub fn reversed(&self) -> Self {
        Self {
            source: self.target.clone(),
            target: self.source.clone(),
            target_lang: self.source_lang,
            source_lang: self.target_lang,
        }
    }

    pub fn direction(&self) -> (LanguageTag, LanguageTag) {
        (self.source_lang, self.target_lang)
    }

    /// `source \t target \t <target-lang> \t <source-lang>`, no newline.
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.source,
            self.target,
            self.target_lang.token(),
            self.source_lang.token()
        )
    }

    pub fn from_tsv(line: &str) -> Result<Self, String> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(format!("expected 4 tab-separated columns, found {}", cols.len()));
        }
        let lang = |s: &str| LanguageTag::from_token(s).ok_or_else(|| format!("unknown language token {s:?}"));
        Ok(Self {
            source: cols[0].to_owned(),
            target: cols[1].to_owned(),
            target_lang: lang(cols[2])?,
            source_lang: lang(cols[3])?,
        })
    }
}

/// Cleaned triples of one direction, e.g. English→Hindi from one file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectionDataset {
    pub source_lang: LanguageTag,
    pub target_lang: LanguageTag,
    pub triples: Vec<TransliterationTriple>,
    pub provenance: String,
}

impl DirectionDataset {
    pub fn reversed(&self) -> Self {
        Self {
            source_lang: self.target_lang,
            target_lang: self.source_lang,
            triples: self.triples.iter().map(TransliterationTriple::reversed).collect(),
            provenance: format!("{} (reversed)", self.provenance),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub triples: Vec<TransliterationTriple>,
    pub provenance: Vec<String>,
}

impl Corpus {
    pub fn new(triples: Vec<TransliterationTriple>) -> Self {
        Self {
            triples,
            provenance: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TransliterationTriple> {
        self.triples.iter()
    }

    pub fn write_tsv(&self, mut out: impl Write) -> std::io::Result<()> {
        for t in &self.triples {
            out.write_all(t.to_tsv().as_bytes())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_tsv(input: impl BufRead) -> Result<Self, CorpusError> {
        let mut triples = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let t = TransliterationTriple::from_tsv(&line).map_err(|message| CorpusError::Tsv { line: i + 1, message })?;
            triples.push(t);
        }
        Ok(Self::new(triples))
    }
}

/// One NEWS file after parsing and cleaning.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IngestedFile {
    pub dataset: DirectionDataset,
    pub rejections: Vec<Rejection>,
    /// Schema deviations skipped by the parser.
    pub warnings: usize,
}

/// Parses and cleans one NEWS XML file of the given direction.
pub fn ingest_news(
    xml: &[u8],
    source_lang: LanguageTag,
    target_lang: LanguageTag,
    strict: bool,
    provenance: impl Into<String>,
) -> Result<IngestedFile, CorpusError> {
    let parsed = parse_news_xml(xml, source_lang, target_lang, strict)?;
    let (triples, rejections) = clean_pairs(parsed.triples);
    Ok(IngestedFile {
        dataset: DirectionDataset {
            source_lang,
            target_lang,
            triples,
            provenance: provenance.into(),
        },
        rejections,
        warnings: parsed.warnings,
    })
}

/// Merges per-direction datasets into one corpus. Each triple keeps its
/// output-language tag; repeats across datasets are dropped.
///
/// Every dataset must have English on one side.
pub fn tag_and_merge(datasets: &[DirectionDataset]) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::default();
    let mut seen = HashSet::new();
    for ds in datasets {
        if !ds.source_lang.is_english() && !ds.target_lang.is_english() {
            return Err(CorpusError::NoEnglishSide {
                source_lang: ds.source_lang,
                target_lang: ds.target_lang,
            });
        }
        for t in &ds.triples {
            if t.direction() != (ds.source_lang, ds.target_lang) {
                return Err(CorpusError::WrongDirection {
                    word: t.source.clone(),
                    output: t.target.clone(),
                    expected: format!("{}->{}", ds.source_lang, ds.target_lang),
                });
            }
            if seen.insert((t.source.clone(), t.target.clone(), t.target_lang)) {
                corpus.triples.push(t.clone());
            }
        }
        corpus.provenance.push(ds.provenance.clone());
    }
    Ok(corpus)
}

/// Adds the reverse of every dataset, then merges; English→X files become
/// both English→X and X→English training data.
pub fn build_bidirectional(datasets: &[DirectionDataset]) -> Result<Corpus, CorpusError> {
    let both: Vec<DirectionDataset> = datasets
        .iter()
        .flat_map(|d| [d.clone(), d.reversed()])
        .collect();
    tag_and_merge(&both)
}

//! Greedy decoding and word/sentence transliteration.
//!
//! English is the pivot: Indic→Indic requests run Indic→English, then feed
//! the English output back in as English→target.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{LanguageTag, Vocabulary, EOS_ID};
use crate::model::{ModelError, ModelParams};
use crate::numerics::Scalar;
use crate::training::Checkpoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("source and target language are both {0}")]
    SameLanguage(LanguageTag),
    #[error("input text is empty")]
    EmptyText,
    #[error("character {character:?} (U+{code:04X}) in {word:?} is not {lang} script", code = *character as u32)]
    Script { word: String, character: char, lang: LanguageTag },
    #[error("word {word:?} needs {len} positions, the model allows {max}")]
    TooLong { word: String, len: usize, max: usize },
    #[error("max_len {max_len} exceeds the model's max_seq_len {max_seq_len}")]
    MaxLen { max_len: usize, max_seq_len: usize },
    #[error("word {index}: {source}")]
    Word {
        index: usize,
        #[source]
        source: Box<InferenceError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl InferenceError {
    /// The innermost error, skipping word-index wrappers.
    pub fn root(&self) -> &InferenceError {
        match self {
            Self::Word { source, .. } => source.root(),
            other => other,
        }
    }
}

/// One word or a whitespace-separated sentence to transliterate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransliterationRequest {
    pub text: String,
    pub source_lang: LanguageTag,
    pub target_lang: LanguageTag,
}

/// Decoded characters outside the target script. They are kept in the
/// output; this records where they are.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFlag {
    pub word_index: usize,
    pub word: String,
    pub characters: Vec<char>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordResult {
    pub input: String,
    pub output: String,
    /// English pivot form; only for Indic→Indic.
    pub intermediate: Option<String>,
    /// Tokens produced by each decoding pass (one or two).
    pub decode_lengths: Vec<usize>,
    pub out_of_script: Vec<char>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransliterationResult {
    pub output: String,
    pub words: Vec<WordResult>,
}

impl TransliterationResult {
    /// Per-word English forms, present only when the request was Indic→Indic.
    pub fn intermediate(&self) -> Option<Vec<String>> {
        self.words.iter().map(|w| w.intermediate.clone()).collect()
    }

    pub fn flags(&self) -> Vec<ScriptFlag> {
        self.words
            .iter()
            .enumerate()
            .filter(|(_, w)| !w.out_of_script.is_empty())
            .map(|(i, w)| ScriptFlag {
                word_index: i,
                word: w.output.clone(),
                characters: w.out_of_script.clone(),
            })
            .collect()
    }
}

/// Index of the largest value; the lowest index wins ties.
fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding seeded with the target-language token. Returns the
/// generated tokens without the language token and `<EOS>`; at most
/// `max_len` tokens are generated.
pub fn greedy_decode<T: Scalar>(
    params: &ModelParams<T>,
    src_ids: &[usize],
    target_lang: LanguageTag,
    max_len: usize,
) -> Result<Vec<usize>, InferenceError> {
    let max_seq_len = params.config.max_seq_len;
    if max_len > max_seq_len {
        return Err(InferenceError::MaxLen { max_len, max_seq_len });
    }
    let memory = params.encode(src_ids)?;
    let mut prefix = vec![Vocabulary::lang_id(target_lang)];
    while prefix.len() <= max_len {
        let logits = params.decode_logits(&memory, &prefix)?;
        let next = argmax(logits.row(prefix.len() - 1));
        if next == EOS_ID {
            break;
        }
        prefix.push(next);
    }
    prefix.remove(0);
    Ok(prefix)
}

/// Encoder input `[<target-lang>, chars.., <EOS>]`; characters missing from
/// the vocabulary become `<UNK>`.
pub fn source_ids(vocab: &Vocabulary, word: &str, target_lang: LanguageTag) -> Vec<usize> {
    let mut ids = vec![Vocabulary::lang_id(target_lang)];
    ids.extend(vocab.encode_word(word).0);
    ids.push(EOS_ID);
    ids
}

/// Case-normalized NFC form of `word`, or the first character outside the
/// language's script.
pub fn validate_word(word: &str, lang: LanguageTag) -> Result<String, InferenceError> {
    let normalized: String = lang.normalize_case(word).nfc().collect();
    if normalized.is_empty() {
        return Err(InferenceError::EmptyText);
    }
    if let Some(character) = normalized.chars().find(|&c| !lang.in_script(c)) {
        return Err(InferenceError::Script {
            word: word.to_owned(),
            character,
            lang,
        });
    }
    Ok(normalized)
}

fn single_pass(checkpoint: &Checkpoint, word: &str, target_lang: LanguageTag) -> Result<Vec<usize>, InferenceError> {
    let ids = source_ids(&checkpoint.vocab, word, target_lang);
    let max = checkpoint.config().max_seq_len;
    if ids.len() > max {
        return Err(InferenceError::TooLong {
            word: word.to_owned(),
            len: ids.len(),
            max,
        });
    }
    greedy_decode(&checkpoint.params, &ids, target_lang, max)
}

/// Transliterates one word, pivoting through English when neither side is
/// English.
pub fn transliterate_word(
    checkpoint: &Checkpoint,
    word: &str,
    source_lang: LanguageTag,
    target_lang: LanguageTag,
) -> Result<WordResult, InferenceError> {
    if source_lang == target_lang {
        return Err(InferenceError::SameLanguage(source_lang));
    }
    let input = validate_word(word, source_lang)?;
    if source_lang.is_english() || target_lang.is_english() {
        let ids = single_pass(checkpoint, &input, target_lang)?;
        let output = checkpoint.vocab.decode_ids(&ids);
        return Ok(WordResult {
            out_of_script: output.chars().filter(|&c| !target_lang.in_script(c)).collect(),
            input,
            output,
            intermediate: None,
            decode_lengths: vec![ids.len()],
        });
    }
    let first = transliterate_word(checkpoint, &input, source_lang, LanguageTag::English)?;
    let second = transliterate_word(checkpoint, &first.output, LanguageTag::English, target_lang)?;
    Ok(WordResult {
        input,
        output: second.output,
        intermediate: Some(first.output),
        decode_lengths: vec![first.decode_lengths[0], second.decode_lengths[0]],
        out_of_script: second.out_of_script,
    })
}

/// Splits on whitespace runs, transliterates each word on its own and joins
/// the outputs with single spaces.
pub fn transliterate_text(checkpoint: &Checkpoint, request: &TransliterationRequest) -> Result<TransliterationResult, InferenceError> {
    let words: Vec<&str> = request.text.split_whitespace().collect();
    if words.is_empty() {
        return Err(InferenceError::EmptyText);
    }
    let results = words
        .iter()
        .enumerate()
        .map(|(index, w)| {
            transliterate_word(checkpoint, w, request.source_lang, request.target_lang).map_err(|e| InferenceError::Word {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TransliterationResult {
        output: results.iter().map(|r| r.output.as_str()).collect::<Vec<_>>().join(" "),
        words: results,
    })
}

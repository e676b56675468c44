use serde::{Deserialize, Serialize};

use super::{CorpusError, TransliterationTriple, Vocabulary, EOS_ID};

/// Token ids for one triple. Both sequences start with the target-language
/// token and end with `<EOS>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub src_ids: Vec<usize>,
    pub tgt_ids: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub example: EncodedExample,
    /// Characters replaced by `<UNK>`.
    pub unknown: usize,
}

/// `[<lang>, chars.., <EOS>]` for both sides, where `<lang>` is the output
/// language token. Sequences longer than `max_seq_len` are rejected.
pub fn encode_example(triple: &TransliterationTriple, vocab: &Vocabulary, max_seq_len: usize) -> Result<Encoded, CorpusError> {
    if triple.source.is_empty() {
        return Err(CorpusError::EmptyWord("source"));
    }
    if triple.target.is_empty() {
        return Err(CorpusError::EmptyWord("target"));
    }
    let lang = Vocabulary::lang_id(triple.target_lang);
    let wrap = |word: &str| -> (Vec<usize>, usize) {
        let (chars, unknown) = vocab.encode_word(word);
        let mut ids = Vec::with_capacity(chars.len() + 2);
        ids.push(lang);
        ids.extend(chars);
        ids.push(EOS_ID);
        (ids, unknown)
    };
    let (src_ids, src_unknown) = wrap(&triple.source);
    let (tgt_ids, tgt_unknown) = wrap(&triple.target);
    let len = src_ids.len().max(tgt_ids.len());
    if len > max_seq_len {
        return Err(CorpusError::TooLong { len, max: max_seq_len });
    }
    Ok(Encoded {
        example: EncodedExample { src_ids, tgt_ids },
        unknown: src_unknown + tgt_unknown,
    })
}

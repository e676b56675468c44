use std::collections::{BTreeSet, HashMap};

use super::{CorpusError, LanguageTag, TransliterationTriple};

pub const PAD_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const UNK_ID: usize = 2;

/// Ids 0..8 in order. Language tokens follow [`LanguageTag::ALL`].
pub const RESERVED_TOKENS: [&str; 8] = [
    "<PAD>",
    "<EOS>",
    "<UNK>",
    "<english>",
    "<hindi>",
    "<bengali>",
    "<tamil>",
    "<kannada>",
];

/// Bijection between tokens and ids shared by encoder and decoder: the
/// reserved tokens followed by single characters in code point order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Reserved tokens plus `chars` (deduplicated and sorted).
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let sorted: BTreeSet<char> = chars.into_iter().collect();
        let tokens = RESERVED_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(sorted.into_iter().map(String::from))
            .collect();
        Self::from_tokens(tokens).expect("reserved prefix and distinct characters")
    }

    /// Rebuilds a vocabulary from its id-ordered token list, checking the
    /// reserved prefix and that every other token is one distinct character.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.len() < RESERVED_TOKENS.len() || tokens[..RESERVED_TOKENS.len()] != RESERVED_TOKENS {
            return Err(CorpusError::Vocabulary("reserved tokens missing or out of order".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if id >= RESERVED_TOKENS.len() && tok.chars().count() != 1 {
                return Err(CorpusError::Vocabulary(format!("token {tok:?} at id {id} is not a single character")));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(CorpusError::Vocabulary(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn char_id(&self, c: char) -> Option<usize> {
        let mut buf = [0u8; 4];
        self.id(c.encode_utf8(&mut buf))
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn lang_id(lang: LanguageTag) -> usize {
        3 + LanguageTag::ALL.iter().position(|&l| l == lang).unwrap()
    }

    pub fn is_special(id: usize) -> bool {
        id < RESERVED_TOKENS.len()
    }

    /// Character ids of `word`; unknown characters map to `<UNK>`. Returns
    /// the ids and the number of substitutions.
    pub fn encode_word(&self, word: &str) -> (Vec<usize>, usize) {
        let mut unknown = 0;
        let ids = word
            .chars()
            .map(|c| {
                self.char_id(c).unwrap_or_else(|| {
                    unknown += 1;
                    UNK_ID
                })
            })
            .collect();
        (ids, unknown)
    }

    /// Concatenates the character tokens among `ids`; special tokens are skipped.
    pub fn decode_ids(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&id| !Self::is_special(id))
            .filter_map(|&id| self.token(id))
            .collect()
    }
}

/// Vocabulary over every character of every source and target word.
pub fn build_vocab<'a>(triples: impl IntoIterator<Item = &'a TransliterationTriple>) -> Vocabulary {
    Vocabulary::from_chars(
        triples
            .into_iter()
            .flat_map(|t| t.source.chars().chain(t.target.chars())),
    )
}

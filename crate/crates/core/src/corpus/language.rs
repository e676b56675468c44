use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// One of the five supported languages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageTag {
    English,
    Hindi,
    Bengali,
    Tamil,
    Kannada,
}

impl LanguageTag {
    pub const ALL: [LanguageTag; 5] = [
        LanguageTag::English,
        LanguageTag::Hindi,
        LanguageTag::Bengali,
        LanguageTag::Tamil,
        LanguageTag::Kannada,
    ];

    pub const INDIC: [LanguageTag; 4] = [
        LanguageTag::Hindi,
        LanguageTag::Bengali,
        LanguageTag::Tamil,
        LanguageTag::Kannada,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LanguageTag::English => "english",
            LanguageTag::Hindi => "hindi",
            LanguageTag::Bengali => "bengali",
            LanguageTag::Tamil => "tamil",
            LanguageTag::Kannada => "kannada",
        }
    }

    /// The special vocabulary token, e.g. `<hindi>`.
    pub fn token(self) -> &'static str {
        match self {
            LanguageTag::English => "<english>",
            LanguageTag::Hindi => "<hindi>",
            LanguageTag::Bengali => "<bengali>",
            LanguageTag::Tamil => "<tamil>",
            LanguageTag::Kannada => "<kannada>",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.token() == token)
    }

    pub fn is_english(self) -> bool {
        self == LanguageTag::English
    }

    /// Inclusive code point range of the language's script block. English is
    /// restricted to upper-case `A`–`Z`.
    pub fn script_range(self) -> (char, char) {
        match self {
            LanguageTag::English => ('A', 'Z'),
            LanguageTag::Hindi => ('\u{0900}', '\u{097F}'),
            LanguageTag::Bengali => ('\u{0980}', '\u{09FF}'),
            LanguageTag::Tamil => ('\u{0B80}', '\u{0BFF}'),
            LanguageTag::Kannada => ('\u{0C80}', '\u{0CFF}'),
        }
    }

    pub fn in_script(self, c: char) -> bool {
        let (lo, hi) = self.script_range();
        (lo..=hi).contains(&c)
    }

    /// Language whose script block contains `c`, if any.
    pub fn of_char(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.in_script(c))
    }

    /// Upper-cases Latin text; other scripts pass through unchanged.
    pub fn normalize_case(self, word: &str) -> String {
        if self.is_english() {
            word.to_uppercase()
        } else {
            word.to_owned()
        }
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LanguageTag {
    type Err = CorpusError;

    /// Accepts the lower-case name (`"hindi"`), the token (`"<hindi>"`) or a
    /// common short code (`"hi"`, `"hin"`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let found = match lower.as_str() {
            "english" | "<english>" | "en" | "eng" => LanguageTag::English,
            "hindi" | "<hindi>" | "hi" | "hin" => LanguageTag::Hindi,
            "bengali" | "bangla" | "<bengali>" | "bn" | "ben" => LanguageTag::Bengali,
            "tamil" | "<tamil>" | "ta" | "tam" => LanguageTag::Tamil,
            "kannada" | "<kannada>" | "kn" | "kan" => LanguageTag::Kannada,
            _ => return Err(CorpusError::UnknownLanguage(s.to_owned())),
        };
        Ok(found)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_language_has_a_distinct_block_and_token() {
        for a in LanguageTag::ALL {
            assert_eq!(LanguageTag::from_token(a.token()), Some(a));
            assert_eq!(a.name().parse::<LanguageTag>().unwrap(), a);
            for b in LanguageTag::ALL {
                if a != b {
                    let (lo, hi) = a.script_range();
                    assert!(!b.in_script(lo) && !b.in_script(hi));
                }
            }
        }
    }

    #[test]
    fn script_membership() {
        assert!(LanguageTag::Hindi.in_script('ल'));
        assert!(!LanguageTag::Hindi.in_script('2'));
        assert!(LanguageTag::English.in_script('Q'));
        assert!(!LanguageTag::English.in_script('q'));
        assert_eq!(LanguageTag::of_char('ಕ'), Some(LanguageTag::Kannada));
        assert_eq!(LanguageTag::of_char('-'), None);
    }

    #[test]
    fn french_is_unknown() {
        assert!(matches!("french".parse::<LanguageTag>(), Err(CorpusError::UnknownLanguage(_))));
    }
}

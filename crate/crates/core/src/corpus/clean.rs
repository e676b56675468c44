use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{LanguageTag, TransliterationTriple};

/// Why a pair was dropped or rewritten during cleaning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CleaningRule {
    /// Source and target have different whitespace-token counts (dropped).
    WordCount,
    /// Equal multi-word counts; split into word-aligned pairs (kept).
    MultiWordSplit,
    /// Out-of-script characters removed (kept).
    ForeignCharsStripped,
    /// Nothing left on one side after stripping (dropped).
    EmptyAfterStrip,
    /// Exact repeat of an earlier `(source, target, target_lang)` (dropped).
    Duplicate,
}

impl CleaningRule {
    pub fn drops(self) -> bool {
        matches!(self, Self::WordCount | Self::EmptyAfterStrip | Self::Duplicate)
    }
}

impl fmt::Display for CleaningRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::WordCount => "word-count",
            Self::MultiWordSplit => "multi-word-split",
            Self::ForeignCharsStripped => "foreign-chars-stripped",
            Self::EmptyAfterStrip => "empty-after-strip",
            Self::Duplicate => "duplicate",
        };
        f.write_str(s)
    }
}

/// One line of the rejection report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub source: String,
    pub target: String,
    pub rule: CleaningRule,
    pub detail: String,
}

fn strip_foreign(word: &str, lang: LanguageTag) -> (String, Vec<char>) {
    let mut removed = Vec::new();
    let kept = lang
        .normalize_case(word)
        .chars()
        .filter(|&c| {
            let ok = lang.in_script(c);
            if !ok {
                removed.push(c);
            }
            ok
        })
        .collect();
    (kept, removed)
}

/// Applies the cleaning rules in order: word-count agreement, word-aligned
/// splitting, foreign-character stripping, de-duplication.
///
/// Returns the kept triples in input order and a report entry for every pair
/// that was dropped or rewritten.
pub fn clean_pairs(triples: impl IntoIterator<Item = TransliterationTriple>) -> (Vec<TransliterationTriple>, Vec<Rejection>) {
    let mut kept = Vec::new();
    let mut report = Vec::new();
    let mut seen = HashSet::new();
    for triple in triples {
        let src_words: Vec<&str> = triple.source.split_whitespace().collect();
        let tgt_words: Vec<&str> = triple.target.split_whitespace().collect();
        if src_words.len() != tgt_words.len() || src_words.is_empty() {
            report.push(Rejection {
                source: triple.source.clone(),
                target: triple.target.clone(),
                rule: CleaningRule::WordCount,
                detail: format!("{} source words vs {} target words", src_words.len(), tgt_words.len()),
            });
            continue;
        }
        if src_words.len() > 1 {
            report.push(Rejection {
                source: triple.source.clone(),
                target: triple.target.clone(),
                rule: CleaningRule::MultiWordSplit,
                detail: format!("split into {} word pairs", src_words.len()),
            });
        }
        for (s, t) in src_words.iter().zip(&tgt_words) {
            let (source, src_removed) = strip_foreign(s, triple.source_lang);
            let (target, tgt_removed) = strip_foreign(t, triple.target_lang);
            if source.is_empty() || target.is_empty() {
                report.push(Rejection {
                    source: s.to_string(),
                    target: t.to_string(),
                    rule: CleaningRule::EmptyAfterStrip,
                    detail: format!("removed {src_removed:?} / {tgt_removed:?}"),
                });
                continue;
            }
            if !src_removed.is_empty() || !tgt_removed.is_empty() {
                report.push(Rejection {
                    source: s.to_string(),
                    target: t.to_string(),
                    rule: CleaningRule::ForeignCharsStripped,
                    detail: format!("removed {src_removed:?} / {tgt_removed:?}"),
                });
            }
            let cleaned = TransliterationTriple {
                source,
                target,
                target_lang: triple.target_lang,
                source_lang: triple.source_lang,
            };
            if !seen.insert((cleaned.source.clone(), cleaned.target.clone(), cleaned.target_lang)) {
                report.push(Rejection {
                    source: cleaned.source,
                    target: cleaned.target,
                    rule: CleaningRule::Duplicate,
                    detail: String::new(),
                });
                continue;
            }
            kept.push(cleaned);
        }
    }
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use LanguageTag::{English, Hindi};

    fn eh(source: &str, target: &str) -> TransliterationTriple {
        TransliterationTriple::new(source, target, English, Hindi)
    }

    #[test]
    fn clean_pair_is_kept_unchanged() {
        let (kept, report) = clean_pairs(vec![eh("QIN", "किन")]);
        assert_eq!(kept, vec![eh("QIN", "किन")]);
        assert!(report.is_empty());
    }

    #[test]
    fn word_count_mismatch_is_dropped() {
        let (kept, report) = clean_pairs(vec![eh("NEW YORK", "न्यूयॉर्क")]);
        assert!(kept.is_empty());
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].rule, CleaningRule::WordCount);
    }

    #[test]
    fn digit_inside_word_is_stripped() {
        let (kept, report) = clean_pairs(vec![eh("LEAGUE", "ली2ग")]);
        assert_eq!(kept, vec![eh("LEAGUE", "लीग")]);
        assert_eq!(report[0].rule, CleaningRule::ForeignCharsStripped);
    }

    #[test]
    fn hyphen_and_apostrophe_are_foreign() {
        let (kept, _) = clean_pairs(vec![eh("o'neil-x", "ओनील")]);
        assert_eq!(kept[0].source, "ONEILX");
    }

    #[test]
    fn nothing_left_drops_the_pair() {
        let (kept, report) = clean_pairs(vec![eh("123", "लीग")]);
        assert!(kept.is_empty());
        assert_eq!(report[0].rule, CleaningRule::EmptyAfterStrip);
    }

    #[test]
    fn equal_word_counts_split() {
        let (kept, report) = clean_pairs(vec![eh("NEW DELHI", "न्यू दिल्ली")]);
        assert_eq!(kept, vec![eh("NEW", "न्यू"), eh("DELHI", "दिल्ली")]);
        assert_eq!(report[0].rule, CleaningRule::MultiWordSplit);
    }

    #[test]
    fn duplicates_are_dropped() {
        let (kept, report) = clean_pairs(vec![eh("QIN", "किन"), eh("qin", "किन")]);
        assert_eq!(kept.len(), 1);
        assert_eq!(report[0].rule, CleaningRule::Duplicate);
    }

    #[test]
    fn report_line_serializes_with_kebab_rule() {
        let r = Rejection {
            source: "A".into(),
            target: "B".into(),
            rule: CleaningRule::WordCount,
            detail: String::new(),
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"source":"A","target":"B","rule":"word-count","detail":""}"#
        );
    }
}

//! Reader for NEWS shared-task XML files.
//!
//! ```xml
//! <TransliterationCorpus>
//!   <Name ID="1">
//!     <SourceName>LEAGUE</SourceName>
//!     <TargetName ID="1">लीग</TargetName>
//!   </Name>
//! </TransliterationCorpus>
//! ```
//!
//! Attributes are ignored. Every `TargetName` of a `Name` yields its own
//! triple with the source word repeated.

use unicode_normalization::UnicodeNormalization;

use super::{CorpusError, LanguageTag, TransliterationTriple};

const ROOT: &str = "TransliterationCorpus";
const NAME: &str = "Name";
const SOURCE: &str = "SourceName";
const TARGET: &str = "TargetName";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedNews {
    pub triples: Vec<TransliterationTriple>,
    /// Unknown elements and incomplete `Name` entries that were skipped.
    pub warnings: usize,
}

/// Parses a NEWS XML document into uncleaned triples.
///
/// With `strict` set, any deviation from the expected schema is an error
/// instead of a warning.
pub fn parse_news_xml(
    xml: &[u8],
    source_lang: LanguageTag,
    target_lang: LanguageTag,
    strict: bool,
) -> Result<ParsedNews, CorpusError> {
    let text = std::str::from_utf8(xml).map_err(|e| {
        let line = 1 + xml[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count();
        CorpusError::Xml {
            line,
            message: format!("invalid UTF-8: {e}"),
        }
    })?;
    let doc = roxmltree::Document::parse(text).map_err(|e| CorpusError::Xml {
        line: e.pos().row as usize,
        message: e.to_string(),
    })?;
    let line_of = |node: roxmltree::Node| doc.text_pos_at(node.range().start).row as usize;

    let mut out = ParsedNews::default();
    let deviation = |node: roxmltree::Node, what: String| -> Result<(), CorpusError> {
        if strict {
            Err(CorpusError::Schema {
                line: line_of(node),
                message: what,
            })
        } else {
            log::warn!("line {}: {what}", line_of(node));
            Ok(())
        }
    };

    let root = doc.root_element();
    if root.tag_name().name() != ROOT {
        return Err(CorpusError::Schema {
            line: line_of(root),
            message: format!("root element is <{}>, expected <{ROOT}>", root.tag_name().name()),
        });
    }
    for name in root.children().filter(|n| n.is_element()) {
        if name.tag_name().name() != NAME {
            out.warnings += 1;
            deviation(name, format!("unknown element <{}>", name.tag_name().name()))?;
            continue;
        }
        let mut sources = Vec::new();
        let mut targets = Vec::new();
        for child in name.children().filter(|n| n.is_element()) {
            match child.tag_name().name() {
                SOURCE => sources.push(element_text(child)),
                TARGET => targets.push(element_text(child)),
                other => {
                    out.warnings += 1;
                    deviation(child, format!("unknown element <{other}>"))?;
                }
            }
        }
        if sources.len() != 1 || targets.is_empty() {
            out.warnings += 1;
            deviation(
                name,
                format!(
                    "<{NAME}> needs one <{SOURCE}> and at least one <{TARGET}>, found {} and {}",
                    sources.len(),
                    targets.len()
                ),
            )?;
            continue;
        }
        let source = source_lang.normalize_case(&sources[0]);
        for target in targets {
            out.triples.push(TransliterationTriple {
                source: source.clone(),
                target: target_lang.normalize_case(&target),
                target_lang,
                source_lang,
            });
        }
    }
    Ok(out)
}

fn element_text(node: roxmltree::Node) -> String {
    let raw: String = node
        .descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect();
    raw.trim().nfc().collect()
}

/// Reads the `SourceLang`/`TargetLang` attributes some NEWS files carry on
/// their root element.
pub fn declared_languages(xml: &[u8]) -> Option<(LanguageTag, LanguageTag)> {
    let text = std::str::from_utf8(xml).ok()?;
    let doc = roxmltree::Document::parse(text).ok()?;
    let root = doc.root_element();
    let source = root.attribute("SourceLang")?.parse().ok()?;
    let target = root.attribute("TargetLang")?.parse().ok()?;
    Some((source, target))
}

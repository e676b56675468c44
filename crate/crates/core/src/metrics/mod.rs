//! Evaluation metrics: exact-match accuracy, character error rates,
//! character-level BLEU, and phonetic accuracy from human annotations.

mod annotation;
mod bleu;
mod edit;

pub use annotation::{
    phonetic_accuracy, phonetic_accuracy_matrix, read_annotations, reference_metrics, write_annotations, AnnotationRecord,
    AnnotationSummary, ReferenceMetrics, Verdict,
};
pub use bleu::{char_bleu, BleuReport};
pub use edit::{cer, edit_ops, EditOps};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LanguageTag;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{predictions} predictions but {references} references")]
    LengthMismatch { predictions: usize, references: usize },
    #[error("no {0} to score")]
    EmptyInput(&'static str),
    #[error("undefined: {0}")]
    ZeroDenominator(&'static str),
    #[error("reference is empty")]
    EmptyReference,
    #[error("record {id} is marked incorrect but has no reference")]
    MissingReference { id: String },
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Exact-match rate of aligned predictions and references.
pub fn top1_accuracy<S: AsRef<str>>(predictions: &[S], references: &[S]) -> Result<f64, MetricsError> {
    if predictions.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            references: references.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::EmptyInput("predictions"));
    }
    let hits = predictions
        .iter()
        .zip(references)
        .filter(|(p, r)| p.as_ref() == r.as_ref())
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Metric values by language pair: rows are source languages, columns are
/// target languages. Serializes as `{source: {target: value}}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairwiseMatrix {
    cells: BTreeMap<LanguageTag, BTreeMap<LanguageTag, f64>>,
}

impl PairwiseMatrix {
    pub fn get(&self, source: LanguageTag, target: LanguageTag) -> Option<f64> {
        self.cells.get(&source)?.get(&target).copied()
    }

    pub fn set(&mut self, source: LanguageTag, target: LanguageTag, value: f64) {
        self.cells.entry(source).or_default().insert(target, value);
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `(source, target, value)` in row-major language order.
    pub fn iter(&self) -> impl Iterator<Item = (LanguageTag, LanguageTag, f64)> + '_ {
        self.cells
            .iter()
            .flat_map(|(&s, row)| row.iter().map(move |(&t, &v)| (s, t, v)))
    }

    /// Mean over the cells whose source and target are both Indic.
    pub fn indic_mean(&self) -> Option<f64> {
        let values: Vec<f64> = self
            .iter()
            .filter(|(s, t, _)| !s.is_english() && !t.is_english())
            .map(|(_, _, v)| v)
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// `{metric: {source: {target: value}}}`.
pub type MetricReport = BTreeMap<String, PairwiseMatrix>;

/// One scored test item.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scored {
    pub source_lang: LanguageTag,
    pub target_lang: LanguageTag,
    pub prediction: String,
    pub reference: String,
}

/// Top-1, both CERs, and individual and cumulative BLEU-1..4, each averaged
/// per language pair.
pub fn score_predictions(items: &[Scored]) -> Result<MetricReport, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptyInput("test items"));
    }
    let mut groups: BTreeMap<(LanguageTag, LanguageTag), Vec<&Scored>> = BTreeMap::new();
    for item in items {
        groups.entry((item.source_lang, item.target_lang)).or_default().push(item);
    }
    let mut report = MetricReport::new();
    for ((s, t), group) in groups {
        let n = group.len() as f64;
        let mut add = |name: String, total: f64| report.entry(name).or_default().set(s, t, total / n);
        let predictions: Vec<&str> = group.iter().map(|i| i.prediction.as_str()).collect();
        let references: Vec<&str> = group.iter().map(|i| i.reference.as_str()).collect();
        add("top1".into(), top1_accuracy(&predictions, &references)? * n);
        let mut cer_norm = 0.0;
        let mut cer_van = 0.0;
        let mut individual = [0.0; 4];
        let mut cumulative = [0.0; 4];
        for item in &group {
            let ops = edit_ops(&item.prediction, &item.reference);
            cer_norm += ops.cer_normalized()?;
            cer_van += ops.cer_vanilla()?;
            let bleu = char_bleu(&item.prediction, &item.reference, 4)?;
            for k in 0..4 {
                individual[k] += bleu.individual[k];
                cumulative[k] += bleu.cumulative[k];
            }
        }
        add("cer".into(), cer_norm);
        add("cer_vanilla".into(), cer_van);
        for k in 0..4 {
            add(format!("bleu{}_individual", k + 1), individual[k]);
            add(format!("bleu{}_cumulative", k + 1), cumulative[k]);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use LanguageTag::{Bengali, English, Hindi};

    #[test]
    fn top1() {
        assert_eq!(top1_accuracy(&["A", "B"], &["A", "B"]).unwrap(), 1.0);
        assert_eq!(top1_accuracy(&["A", "B"], &["A", "C"]).unwrap(), 0.5);
        assert!(top1_accuracy(&["A"], &["A", "B"]).is_err());
    }

    #[test]
    fn matrix_rows_are_sources() {
        let mut m = PairwiseMatrix::default();
        m.set(Hindi, Bengali, 0.25);
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"hindi":{"bengali":0.25}}"#
        );
        assert_eq!(m.get(Bengali, Hindi), None);
        m.set(Hindi, English, 1.0);
        assert_eq!(m.indic_mean(), Some(0.25));
    }

    #[test]
    fn perfect_predictions_report() {
        let items = vec![Scored {
            source_lang: English,
            target_lang: Hindi,
            prediction: "लीग".into(),
            reference: "लीग".into(),
        }];
        let report = score_predictions(&items).unwrap();
        assert_eq!(report["top1"].get(English, Hindi), Some(1.0));
        assert_eq!(report["cer"].get(English, Hindi), Some(0.0));
        assert_eq!(report["bleu1_cumulative"].get(English, Hindi), Some(1.0));
        assert!(score_predictions(&[]).is_err());
    }
}

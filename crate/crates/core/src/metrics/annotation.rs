use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{char_bleu, edit_ops, MetricsError, PairwiseMatrix};
use crate::corpus::LanguageTag;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
}

/// One human judgement of a model prediction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub source_lang: LanguageTag,
    pub target_lang: LanguageTag,
    pub input: String,
    pub prediction: String,
    pub verdict: Verdict,
    /// Corrected word; required when the verdict is incorrect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub annotator_id: String,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.verdict == Verdict::Incorrect && self.reference.as_deref().map_or(true, str::is_empty) {
            return Err(MetricsError::MissingReference { id: self.id.clone() });
        }
        Ok(())
    }

    /// The word the prediction should have been: the reference for incorrect
    /// records, the prediction itself for correct ones.
    pub fn effective_reference(&self) -> Result<&str, MetricsError> {
        self.validate()?;
        Ok(match self.verdict {
            Verdict::Correct => &self.prediction,
            Verdict::Incorrect => self.reference.as_deref().unwrap_or_default(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub correct_sounding_count: usize,
    pub total_count: usize,
    pub phonetic_accuracy: f64,
}

/// Share of records judged correct.
pub fn phonetic_accuracy(records: &[AnnotationRecord]) -> Result<AnnotationSummary, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput("annotation records"));
    }
    let correct = records.iter().filter(|r| r.verdict == Verdict::Correct).count();
    Ok(AnnotationSummary {
        correct_sounding_count: correct,
        total_count: records.len(),
        phonetic_accuracy: correct as f64 / records.len() as f64,
    })
}

/// Phonetic accuracy of each (source, target) pair.
pub fn phonetic_accuracy_matrix(records: &[AnnotationRecord]) -> Result<PairwiseMatrix, MetricsError> {
    let mut groups: BTreeMap<(LanguageTag, LanguageTag), Vec<AnnotationRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.source_lang, r.target_lang)).or_default().push(r.clone());
    }
    let mut matrix = PairwiseMatrix::default();
    for ((s, t), group) in groups {
        matrix.set(s, t, phonetic_accuracy(&group)?.phonetic_accuracy);
    }
    Ok(matrix)
}

/// Mean normalized CER and mean cumulative BLEU-1..4 per pair, against the
/// effective references.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMetrics {
    pub cer: PairwiseMatrix,
    pub cer_vanilla: PairwiseMatrix,
    /// Index `k` holds cumulative BLEU-(k+1).
    pub bleu_cumulative: Vec<PairwiseMatrix>,
}

pub fn reference_metrics(records: &[AnnotationRecord]) -> Result<ReferenceMetrics, MetricsError> {
    let mut sums: BTreeMap<(LanguageTag, LanguageTag), (usize, f64, f64, [f64; 4])> = BTreeMap::new();
    for r in records {
        let reference = r.effective_reference()?;
        if reference.is_empty() {
            return Err(MetricsError::MissingReference { id: r.id.clone() });
        }
        let ops = edit_ops(&r.prediction, reference);
        let bleu = char_bleu(&r.prediction, reference, 4)?;
        let entry = sums.entry((r.source_lang, r.target_lang)).or_insert((0, 0.0, 0.0, [0.0; 4]));
        entry.0 += 1;
        entry.1 += ops.cer_normalized()?;
        entry.2 += ops.cer_vanilla()?;
        for (acc, b) in entry.3.iter_mut().zip(&bleu.cumulative) {
            *acc += b;
        }
    }
    let mut out = ReferenceMetrics {
        bleu_cumulative: vec![PairwiseMatrix::default(); 4],
        ..ReferenceMetrics::default()
    };
    for ((s, t), (count, cer, vanilla, bleu)) in sums {
        let n = count as f64;
        out.cer.set(s, t, cer / n);
        out.cer_vanilla.set(s, t, vanilla / n);
        for (m, b) in out.bleu_cumulative.iter_mut().zip(bleu) {
            m.set(s, t, b / n);
        }
    }
    Ok(out)
}

/// Reads JSON-lines records, validating each; blank lines are skipped.
pub fn read_annotations(input: impl BufRead) -> Result<Vec<AnnotationRecord>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord = serde_json::from_str(&line).map_err(|e| MetricsError::Json {
            line: i + 1,
            message: e.to_string(),
        })?;
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_annotations(records: &[AnnotationRecord], mut out: impl Write) -> Result<(), MetricsError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| MetricsError::Json {
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use LanguageTag::{Bengali, English, Hindi};

    pub(crate) fn record(id: &str, prediction: &str, reference: Option<&str>) -> AnnotationRecord {
        AnnotationRecord {
            id: id.into(),
            source_lang: Hindi,
            target_lang: English,
            input: "किन".into(),
            prediction: prediction.into(),
            verdict: if reference.is_some() { Verdict::Incorrect } else { Verdict::Correct },
            reference: reference.map(String::from),
            annotator_id: "a1".into(),
        }
    }

    #[test]
    fn three_of_four() {
        let records = vec![
            record("1", "QIN", None),
            record("2", "QIN", None),
            record("3", "QIN", None),
            record("4", "QIN", Some("KIN")),
        ];
        let s = phonetic_accuracy(&records).unwrap();
        assert_eq!((s.correct_sounding_count, s.total_count, s.phonetic_accuracy), (3, 4, 0.75));
        assert!(phonetic_accuracy(&[]).is_err());
    }

    #[test]
    fn reference_metrics_single_record() {
        let m = reference_metrics(&[record("1", "QIN", Some("KIN"))]).unwrap();
        assert_eq!(m.cer.get(Hindi, English), Some(1.0 / 3.0));
        assert_eq!(m.cer.get(English, Hindi), None);
    }

    #[test]
    fn all_correct_gives_zero_cer() {
        let mut b = record("2", "AMAR", None);
        b.source_lang = Bengali;
        let m = reference_metrics(&[record("1", "QIN", None), b]).unwrap();
        assert_eq!(m.cer.get(Hindi, English), Some(0.0));
        assert_eq!(m.cer.get(Bengali, English), Some(0.0));
        assert_eq!(m.bleu_cumulative[0].get(Bengali, English), Some(1.0));
    }

    #[test]
    fn incorrect_without_reference_is_rejected() {
        let mut r = record("7", "QIN", Some(""));
        assert!(matches!(r.validate(), Err(MetricsError::MissingReference { id }) if id == "7"));
        r.reference = None;
        assert!(reference_metrics(&[r]).is_err());
    }

    #[test]
    fn jsonl_round_trip_uses_snake_case() {
        let records = vec![record("1", "QIN", None), record("2", "QIN", Some("KIN"))];
        let mut buf = Vec::new();
        write_annotations(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"id":"1","source_lang":"hindi","target_lang":"english","input":"किन","prediction":"QIN","verdict":"correct","annotator_id":"a1"}"#));
        assert_eq!(read_annotations(buf.as_slice()).unwrap(), records);
    }
}

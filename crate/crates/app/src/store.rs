//! Append-only JSON-lines annotation store.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use matra_core::metrics::{read_annotations, AnnotationRecord, MetricsError};
use serde::Serialize;

use crate::error::AppError;

struct Inner {
    file: File,
    records: Vec<AnnotationRecord>,
}

/// The file and its in-memory copy sit behind one lock, so readers never
/// see records that are not yet on disk and appends never interleave.
pub struct AnnotationStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl AnnotationStore {
    /// Opens `path`, creating it if missing, and loads the records already
    /// there.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AppError> {
        let path = path.as_ref().to_path_buf();
        let read_err = |source| AppError::Read { path: path.clone(), source };
        let file = OpenOptions::new().create(true).append(true).read(true).open(&path).map_err(read_err)?;
        let records = read_annotations(BufReader::new(File::open(&path).map_err(read_err)?))
            .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path,
            inner: Mutex::new(Inner { file, records }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes all of `records` or none of them.
    pub fn append(&self, records: &[AnnotationRecord]) -> Result<usize, AppError> {
        let mut buf = Vec::new();
        for r in records {
            r.validate()?;
            serde_json::to_writer(&mut buf, r).expect("records serialize");
            buf.push(b'\n');
        }
        let mut inner = self.inner.lock().expect("store lock poisoned");
        let write_err = |source| AppError::Write {
            path: self.path.clone(),
            source,
        };
        inner.file.write_all(&buf).map_err(write_err)?;
        inner.file.sync_data().map_err(write_err)?;
        inner.records.extend_from_slice(records);
        Ok(records.len())
    }

    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.inner.lock().expect("store lock poisoned").records.clone()
    }
}

/// Phonetic accuracy over a possibly empty store; the ratio is `None`
/// when there is nothing to count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StoreSummary {
    pub correct_sounding_count: usize,
    pub total_count: usize,
    pub phonetic_accuracy: Option<f64>,
}

impl StoreSummary {
    pub fn of(records: &[AnnotationRecord]) -> Self {
        match matra_core::metrics::phonetic_accuracy(records) {
            Ok(s) => Self {
                correct_sounding_count: s.correct_sounding_count,
                total_count: s.total_count,
                phonetic_accuracy: Some(s.phonetic_accuracy),
            },
            Err(_) => Self {
                correct_sounding_count: 0,
                total_count: 0,
                phonetic_accuracy: None,
            },
        }
    }
}

/// A JSON array of records or one record per line. Every record is checked
/// before any is returned.
pub fn parse_annotation_body(body: &str) -> Result<Vec<AnnotationRecord>, MetricsError> {
    let trimmed = body.trim_start();
    let records: Vec<AnnotationRecord> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed).map_err(|e| MetricsError::Json {
            line: e.line(),
            message: e.to_string(),
        })?
    } else {
        read_annotations(body.as_bytes())?
    };
    for r in &records {
        r.validate()?;
    }
    if records.is_empty() {
        return Err(MetricsError::EmptyInput("annotation records"));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"id":"1","source_lang":"english","target_lang":"hindi","input":"KIN","prediction":"किन","verdict":"correct","annotator_id":"a"}"#;

    #[test]
    fn both_body_shapes_parse() {
        assert_eq!(parse_annotation_body(&format!("{LINE}\n\n{LINE}\n")).unwrap().len(), 2);
        assert_eq!(parse_annotation_body(&format!(" [{LINE},{LINE}]")).unwrap().len(), 2);
        assert!(parse_annotation_body("[]").is_err());
        let missing = LINE.replace("\"correct\"", "\"incorrect\"");
        assert!(matches!(
            parse_annotation_body(&format!("{LINE}\n{missing}")),
            Err(MetricsError::MissingReference { .. })
        ));
    }

    #[test]
    fn reopened_store_keeps_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let store = AnnotationStore::open(&path).unwrap();
        assert_eq!(StoreSummary::of(&store.records()).phonetic_accuracy, None);
        let records = parse_annotation_body(LINE).unwrap();
        store.append(&records).unwrap();
        drop(store);
        let again = AnnotationStore::open(&path).unwrap();
        assert_eq!(again.records(), records);
    }
}

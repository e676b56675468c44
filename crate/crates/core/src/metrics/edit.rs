use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Counts of a minimal alignment turning a prediction into the truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOps {
    pub substitutions: usize,
    /// Prediction characters removed.
    pub deletions: usize,
    /// Truth characters added.
    pub insertions: usize,
    pub correct: usize,
    /// Length of the truth.
    pub truth_len: usize,
}

impl EditOps {
    /// Levenshtein distance `S + D + I`.
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `(S + D + I) / N`; exceeds 1 when the prediction is much longer than
    /// the truth.
    pub fn cer_vanilla(&self) -> Result<f64, MetricsError> {
        if self.truth_len == 0 {
            return Err(MetricsError::ZeroDenominator("vanilla CER of an empty truth"));
        }
        Ok(self.distance() as f64 / self.truth_len as f64)
    }

    /// `(S + D + I) / (S + D + I + C)`, always in `[0, 1]`.
    pub fn cer_normalized(&self) -> Result<f64, MetricsError> {
        let denom = self.distance() + self.correct;
        if denom == 0 {
            return Err(MetricsError::ZeroDenominator("normalized CER of two empty strings"));
        }
        Ok(self.distance() as f64 / denom as f64)
    }
}

/// `(vanilla, normalized)` character error rates.
pub fn cer(ops: &EditOps) -> Result<(f64, f64), MetricsError> {
    Ok((ops.cer_vanilla()?, ops.cer_normalized()?))
}

/// Unit-cost edit alignment over Unicode scalar values. Among minimal
/// alignments the backtrace prefers, at each cell, a match, then a
/// substitution, then a deletion, then an insertion.
pub fn edit_ops(prediction: &str, truth: &str) -> EditOps {
    let p: Vec<char> = prediction.chars().collect();
    let t: Vec<char> = truth.chars().collect();
    let (m, n) = (p.len(), t.len());
    let width = n + 1;
    let mut d = vec![0usize; (m + 1) * width];
    for i in 0..=m {
        d[i * width] = i;
    }
    for j in 0..=n {
        d[j] = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let diag = d[(i - 1) * width + j - 1] + usize::from(p[i - 1] != t[j - 1]);
            let del = d[(i - 1) * width + j] + 1;
            let ins = d[i * width + j - 1] + 1;
            d[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = EditOps {
        truth_len: n,
        ..EditOps::default()
    };
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 && p[i - 1] == t[j - 1] && d[(i - 1) * width + j - 1] == here {
            ops.correct += 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && p[i - 1] != t[j - 1] && d[(i - 1) * width + j - 1] + 1 == here {
            ops.substitutions += 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && d[(i - 1) * width + j] + 1 == here {
            ops.deletions += 1;
            i -= 1;
        } else {
            ops.insertions += 1;
            j -= 1;
        }
    }
    ops
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ops(s: usize, d: usize, i: usize, c: usize, n: usize) -> EditOps {
        EditOps {
            substitutions: s,
            deletions: d,
            insertions: i,
            correct: c,
            truth_len: n,
        }
    }

    #[test]
    fn identity() {
        assert_eq!(edit_ops("QIN", "QIN"), ops(0, 0, 0, 3, 3));
        assert_eq!(cer(&edit_ops("QIN", "QIN")).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn one_substitution() {
        let e = edit_ops("QIN", "KIN");
        assert_eq!(e, ops(1, 0, 0, 2, 3));
        assert_eq!(cer(&e).unwrap(), (1.0 / 3.0, 1.0 / 3.0));
    }

    #[test]
    fn vanilla_cer_can_exceed_one() {
        let e = edit_ops("ABCDE", "A");
        assert_eq!(e, ops(0, 4, 0, 1, 1));
        assert_eq!(cer(&e).unwrap(), (4.0, 0.8));
    }

    #[test]
    fn empty_sides() {
        assert_eq!(edit_ops("", "AB"), ops(0, 0, 2, 0, 2));
        assert_eq!(edit_ops("AB", ""), ops(0, 2, 0, 0, 0));
        assert!(edit_ops("AB", "").cer_vanilla().is_err());
        assert_eq!(edit_ops("AB", "").cer_normalized().unwrap(), 1.0);
        assert!(edit_ops("", "").cer_normalized().is_err());
    }

    #[test]
    fn counts_code_points_not_bytes() {
        assert_eq!(edit_ops("लीग", "लिग"), ops(1, 0, 0, 2, 3));
    }
}

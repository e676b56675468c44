use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Character-level BLEU for orders `1..=max_n`; index `k` holds order `k + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    /// `BP · p_n`.
    pub individual: Vec<f64>,
    /// `BP · (p_1 ⋯ p_n)^(1/n)`.
    pub cumulative: Vec<f64>,
}

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut counts = HashMap::new();
    for gram in chars.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram precisions over Unicode scalar values, no smoothing. A
/// prediction shorter than `n` has `p_n = 0`; an empty prediction has
/// brevity penalty 0.
pub fn char_bleu(prediction: &str, reference: &str, max_n: usize) -> Result<BleuReport, MetricsError> {
    let pred: Vec<char> = prediction.chars().collect();
    let refr: Vec<char> = reference.chars().collect();
    if refr.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let brevity_penalty = if pred.is_empty() {
        0.0
    } else if pred.len() >= refr.len() {
        1.0
    } else {
        (1.0 - refr.len() as f64 / pred.len() as f64).exp()
    };
    let precisions: Vec<f64> = (1..=max_n)
        .map(|n| {
            if pred.len() < n {
                return 0.0;
            }
            let ref_counts = ngram_counts(&refr, n);
            let matched: usize = ngram_counts(&pred, n)
                .iter()
                .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
                .sum();
            matched as f64 / (pred.len() - n + 1) as f64
        })
        .collect();
    let individual = precisions.iter().map(|p| brevity_penalty * p).collect();
    let mut product = 1.0;
    let cumulative = precisions
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            product *= p;
            brevity_penalty * product.powf(1.0 / (k + 1) as f64)
        })
        .collect();
    Ok(BleuReport {
        precisions,
        brevity_penalty,
        individual,
        cumulative,
    })
}

//! Character BLEU from sorted n-gram lists.

/// Sorted character n-grams of `s`.
fn ngrams(s: &[char], n: usize) -> Vec<&[char]> {
    let mut grams: Vec<&[char]> = if s.len() < n { Vec::new() } else { s.windows(n).collect() };
    grams.sort_unstable();
    grams
}

/// Clipped matches: walk both sorted lists like a merge and count pairs.
fn clipped_matches(pred: &[&[char]], reference: &[&[char]]) -> usize {
    let (mut i, mut j, mut hits) = (0, 0, 0);
    while i < pred.len() && j < reference.len() {
        match pred[i].cmp(reference[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                hits += 1;
                i += 1;
                j += 1;
            }
        }
    }
    hits
}

/// `(individual, cumulative)` scores for n = 1..=max_n, without smoothing.
/// The reference must be non-empty.
pub fn hand_bleu(prediction: &str, reference: &str, max_n: usize) -> (Vec<f64>, Vec<f64>) {
    let p: Vec<char> = prediction.chars().collect();
    let r: Vec<char> = reference.chars().collect();
    assert!(!r.is_empty());
    let bp = if p.is_empty() {
        0.0
    } else if p.len() >= r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / p.len() as f64).exp()
    };
    let precisions: Vec<f64> = (1..=max_n)
        .map(|n| {
            let pg = ngrams(&p, n);
            if pg.is_empty() {
                0.0
            } else {
                clipped_matches(&pg, &ngrams(&r, n)) as f64 / pg.len() as f64
            }
        })
        .collect();
    let individual = precisions.iter().map(|q| bp * q).collect();
    let cumulative = (1..=max_n)
        .map(|n| {
            let ps = &precisions[..n];
            if ps.iter().any(|&q| q == 0.0) {
                0.0
            } else {
                bp * (ps.iter().map(|q| q.ln()).sum::<f64>() / n as f64).exp()
            }
        })
        .collect();
    (individual, cumulative)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_counts_each_reference_gram_once() {
        let (ind, cum) = hand_bleu("AAB", "AB", 1);
        assert!((ind[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ind[0], cum[0]);
    }
}

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, CorpusError, LanguageTag};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<(), CorpusError> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(CorpusError::InvalidRatios(format!("{parts:?} must be non-negative")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidRatios(format!("{parts:?} sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

type GroupKey = (String, LanguageTag, LanguageTag);

/// Seeded train/dev/test partition. All triples that share a source word and
/// direction land in the same partition, so words with several accepted
/// outputs never straddle train and test.
pub fn split_corpus(corpus: &Corpus, seed: u64, ratios: SplitRatios) -> Result<Split, CorpusError> {
    ratios.validate()?;
    let mut sizes: BTreeMap<GroupKey, usize> = BTreeMap::new();
    for t in &corpus.triples {
        *sizes.entry((t.source.clone(), t.source_lang, t.target_lang)).or_default() += 1;
    }
    let mut groups: Vec<(GroupKey, usize)> = sizes.into_iter().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n = corpus.len() as f64;
    let train_target = (ratios.train * n).round() as usize;
    let dev_target = ((ratios.dev * n).round() as usize).min(corpus.len() - train_target.min(corpus.len()));
    let targets = [train_target, dev_target, corpus.len().saturating_sub(train_target + dev_target)];
    let mut filled = [0usize; 3];
    let mut assignment: HashMap<GroupKey, usize> = HashMap::with_capacity(groups.len());
    for (key, size) in groups {
        let part = (0..3)
            .find(|&p| filled[p] < targets[p])
            .unwrap_or_else(|| {
                (0..3)
                    .max_by_key(|&p| (targets[p] as i64 - filled[p] as i64, std::cmp::Reverse(p)))
                    .unwrap()
            });
        filled[part] += size;
        assignment.insert(key, part);
    }

    let mut parts: [Corpus; 3] = Default::default();
    for t in &corpus.triples {
        let part = assignment[&(t.source.clone(), t.source_lang, t.target_lang)];
        parts[part].triples.push(t.clone());
    }
    for p in parts.iter_mut() {
        p.provenance = corpus.provenance.clone();
    }
    let [train, dev, test] = parts;
    Ok(Split { train, dev, test })
}

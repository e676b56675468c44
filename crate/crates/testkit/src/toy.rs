//! The toy model: a synthetic five-language corpus, the memorization run and
//! the full-model gradient-check point.

use std::sync::OnceLock;

use matra_core::corpus::{Corpus, EncodedExample, LanguageTag, TransliterationTriple};
use matra_core::inference::{greedy_decode, source_ids};
use matra_core::model::{init_model, loss_on_graph, Batch, ModelConfig, ModelError, ModelParams};
use matra_core::numerics::{grad_check_with, GradCheckOptions, GradCheckReport, NumericsError, Stencil, Tensor};
use matra_core::training::{train, Checkpoint, TrainConfig, TrainMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: [&str; 8] = ["ABC", "BAD", "CAB", "DAC", "ABBA", "CDDC", "BCAD", "DABC"];

/// Letters standing in for A, B, C and D in each Indic script.
pub const LETTERS: [(LanguageTag, [char; 4]); 4] = [
    (LanguageTag::Hindi, ['क', 'ख', 'ग', 'घ']),
    (LanguageTag::Bengali, ['ক', 'খ', 'গ', 'ঘ']),
    (LanguageTag::Tamil, ['க', 'ங', 'ச', 'ஞ']),
    (LanguageTag::Kannada, ['ಕ', 'ಖ', 'ಗ', 'ಘ']),
];

pub fn spell(word: &str, letters: [char; 4]) -> String {
    word.chars().map(|c| letters[(c as u8 - b'A') as usize]).collect()
}

/// 8 words × 4 Indic languages × both directions = 64 triples.
pub fn synthetic_corpus() -> Corpus {
    let mut triples = Vec::new();
    for w in WORDS {
        for (lang, letters) in LETTERS {
            let fwd = TransliterationTriple::new(w, spell(w, letters), LanguageTag::English, lang);
            triples.push(fwd.reversed());
            triples.push(fwd);
        }
    }
    Corpus::new(triples)
}

/// 62 epochs of 8 batches: 496 optimizer steps.
pub fn memorization_config() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        epochs: 62,
        warmup_steps: 30,
        peak_lr: 1e-2,
        seed: 0,
        mode: TrainMode::Bidirectional,
    }
}

pub fn memorization_model() -> ModelConfig {
    ModelConfig::toy(0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Steering {
    pub pure: usize,
    pub total: usize,
    /// `(source word, requested language, output)` for impure outputs.
    pub failures: Vec<(String, LanguageTag, String)>,
}

impl Steering {
    pub fn rate(&self) -> f64 {
        self.pure as f64 / self.total as f64
    }
}

/// Greedy-decodes every distinct source of `corpus` under each of the four
/// other language tokens and counts non-empty outputs that lie entirely in
/// the requested script.
pub fn steering(checkpoint: &Checkpoint, corpus: &Corpus) -> Steering {
    let mut sources: Vec<(String, LanguageTag)> = corpus.iter().map(|t| (t.source.clone(), t.source_lang)).collect();
    sources.sort();
    sources.dedup();
    let max = checkpoint.config().max_seq_len;
    let mut result = Steering {
        pure: 0,
        total: 0,
        failures: Vec::new(),
    };
    for (word, lang) in &sources {
        for target in LanguageTag::ALL.into_iter().filter(|t| t != lang) {
            let ids = source_ids(&checkpoint.vocab, word, target);
            let out = checkpoint
                .vocab
                .decode_ids(&greedy_decode(&checkpoint.params, &ids, target, max).expect("toy words fit"));
            result.total += 1;
            if !out.is_empty() && out.chars().all(|c| target.in_script(c)) {
                result.pure += 1;
            } else {
                result.failures.push((word.clone(), target, out));
            }
        }
    }
    result
}

/// A toy-config point where every feed-forward pre-activation is far from
/// the ReLU kink: expand biases are ±5 with seeded random signs. Both ReLU
/// branches are exercised and the loss is smooth around the point.
pub fn kink_free_point(vocab_size: usize, seed: u64) -> ModelParams<f64> {
    let mut params = init_model::<f64>(&ModelConfig::toy(vocab_size), seed).expect("toy config is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flip = |t: &mut Tensor<f64>| {
        for v in t.data_mut() {
            *v = if rng.random_bool(0.5) { 5.0 } else { -5.0 };
        }
    };
    for layer in &mut params.weights.encoder {
        flip(&mut layer.feed_forward.expand.bias);
    }
    for layer in &mut params.weights.decoder {
        flip(&mut layer.feed_forward.expand.bias);
    }
    params
}

/// Two examples of different lengths and directions, so padding, both
/// masks and several language tokens take part in the loss.
pub fn gradient_batch() -> Batch {
    Batch::from_examples(&[
        EncodedExample {
            src_ids: vec![4, 8, 9, 10, 1],
            tgt_ids: vec![4, 12, 13, 1],
        },
        EncodedExample {
            src_ids: vec![3, 12, 1],
            tgt_ids: vec![3, 8, 9, 11, 1],
        },
    ])
    .expect("non-empty batch")
}

/// Options for the full-model check: a seven-point stencil at h = 1e-2.
/// Smaller steps lose the smallest gradient components (around 1e-7) to
/// roundoff in the loss.
pub fn model_options(coords_per_input: Option<usize>) -> GradCheckOptions {
    GradCheckOptions {
        epsilon: 1e-2,
        stencil: Stencil::SevenPoint,
        coords_per_input,
        seed: 3,
    }
}

/// Gradient check of the toy-model loss over every parameter tensor.
pub fn check_model(params: &ModelParams<f64>, batch: &Batch, options: &GradCheckOptions) -> Result<GradCheckReport, NumericsError> {
    let point: Vec<Tensor<f64>> = params.weights.named().into_iter().map(|(_, t)| t.clone()).collect();
    let config = &params.config;
    grad_check_with(
        |g, vars| {
            let w = params.weights.from_leaves(vars);
            loss_on_graph(g, &w, config, batch).map_err(|e| match e {
                ModelError::Numerics(n) => n,
                other => NumericsError::InvalidArgument(other.to_string()),
            })
        },
        &point,
        options,
    )
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Causality {
    pub cases: usize,
    /// Cases where some logits row before the perturbed position changed.
    pub violations: usize,
}

/// Random (source, prefix, position) cases: the prefix token at `position`
/// is replaced by a different one, and every logits row before `position`
/// must stay bit-identical.
pub fn causality(params: &ModelParams<f32>, cases: usize, seed: u64) -> Causality {
    let vocab = params.config.vocab_size;
    let max = params.config.max_seq_len;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..cases {
        let src_len = rng.random_range(2..=max);
        let src: Vec<usize> = (0..src_len).map(|_| rng.random_range(1..vocab)).collect();
        let prefix_len = rng.random_range(2..=max);
        let mut prefix: Vec<usize> = (0..prefix_len).map(|_| rng.random_range(1..vocab)).collect();
        let position = rng.random_range(1..prefix_len);
        let memory = params.encode(&src).expect("valid source");
        let before = params.decode_logits(&memory, &prefix).expect("valid prefix");
        let old = prefix[position];
        while prefix[position] == old {
            prefix[position] = rng.random_range(1..vocab);
        }
        let after = params.decode_logits(&memory, &prefix).expect("valid prefix");
        let stable = (0..position).all(|r| {
            before.row(r).iter().zip(after.row(r)).all(|(a, b)| a.to_bits() == b.to_bits())
        });
        if !stable {
            violations += 1;
        }
    }
    Causality { cases, violations }
}

/// The memorization run, trained once per process.
pub fn memorized() -> &'static Checkpoint {
    static CHECKPOINT: OnceLock<Checkpoint> = OnceLock::new();
    CHECKPOINT.get_or_init(|| {
        train(&synthetic_corpus(), &[], &memorization_model(), &memorization_config())
            .expect("toy training succeeds")
            .0
    })
}

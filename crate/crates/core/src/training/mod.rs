//! Teacher-forced training: mode filtering, batching, Adam with a warmup
//! schedule, and checkpoints.

mod checkpoint;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, TrainMetadata, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use optim::{clip_global_norm, lr_multiplier, optimizer_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{build_vocab, encode_example, Corpus, CorpusError, EncodedExample, TransliterationTriple, Vocabulary};
use crate::inference::{greedy_decode, source_ids};
use crate::model::{init_model, Batch, ModelConfig, ModelError, ModelParams};

/// Global gradient norm bound applied before every update.
pub const GRAD_CLIP_NORM: f64 = 1.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("learning-rate schedule: {0}")]
    Schedule(String),
    #[error("no {mode} triples in the corpus")]
    EmptyCorpus { mode: TrainMode },
    #[error("non-finite gradient in {tensor}")]
    NonFiniteGradient { tensor: String },
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Which directions a model is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Every Indic language to English.
    Indic2eng,
    /// English to every Indic language.
    Eng2indic,
    Bidirectional,
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Indic2eng => "indic2eng",
            Self::Eng2indic => "eng2indic",
            Self::Bidirectional => "bidirectional",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_steps: u64,
    pub peak_lr: f64,
    pub seed: u64,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    /// Batch 32, 16 epochs, 300 warmup steps, bi-directional.
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 16,
            warmup_steps: 300,
            peak_lr: 3e-4,
            seed: 0,
            mode: TrainMode::Bidirectional,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(TrainError::Config(format!("peak_lr must be positive, got {}", self.peak_lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Greedy-decode exact-match rate on the dev set; `None` without one.
    pub dev_top1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain record") + "\n")
            .collect()
    }
}

fn keeps(mode: TrainMode, t: &TransliterationTriple) -> bool {
    match mode {
        TrainMode::Indic2eng => t.target_lang.is_english(),
        TrainMode::Eng2indic => t.source_lang.is_english(),
        TrainMode::Bidirectional => true,
    }
}

/// Triples used by `mode`; an empty result is an error.
pub fn filter_by_mode(corpus: &Corpus, mode: TrainMode) -> Result<Corpus, TrainError> {
    let triples: Vec<_> = corpus.iter().filter(|t| keeps(mode, t)).cloned().collect();
    if triples.is_empty() {
        return Err(TrainError::EmptyCorpus { mode });
    }
    Ok(Corpus {
        triples,
        provenance: corpus.provenance.clone(),
    })
}

/// Fraction of `triples` whose greedy decode equals the target exactly.
pub fn greedy_top1<T: crate::numerics::Scalar>(
    params: &ModelParams<T>,
    vocab: &Vocabulary,
    triples: &[TransliterationTriple],
) -> Result<f64, ModelError> {
    if triples.is_empty() {
        return Ok(0.0);
    }
    let max = params.config.max_seq_len;
    let mut correct = 0usize;
    for t in triples {
        let ids = source_ids(vocab, &t.source, t.target_lang);
        if ids.len() > max {
            continue;
        }
        let out = greedy_decode(params, &ids, t.target_lang, max).map_err(|e| match e {
            crate::inference::InferenceError::Model(m) => m,
            other => ModelError::Config(other.to_string()),
        })?;
        if vocab.decode_ids(&out) == t.target {
            correct += 1;
        }
    }
    Ok(correct as f64 / triples.len() as f64)
}

fn encode_all(triples: &[TransliterationTriple], vocab: &Vocabulary, max_seq_len: usize) -> Vec<EncodedExample> {
    let mut out = Vec::with_capacity(triples.len());
    for t in triples {
        match encode_example(t, vocab, max_seq_len) {
            Ok(e) => out.push(e.example),
            Err(err) => log::warn!("skipping {} -> {}: {err}", t.source, t.target),
        }
    }
    out
}

/// Trains a fresh model on the `mode` subset of `corpus`.
///
/// The vocabulary is built from the training triples; `model_config.vocab_size`
/// must be 0 (filled in) or equal to its size. `dev` triples outside the mode
/// are ignored.
pub fn train(
    corpus: &Corpus,
    dev: &[TransliterationTriple],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(Checkpoint, TrainHistory), TrainError> {
    config.validate()?;
    let corpus = filter_by_mode(corpus, config.mode)?;
    let dev: Vec<TransliterationTriple> = dev.iter().filter(|t| keeps(config.mode, t)).cloned().collect();
    let vocab = build_vocab(corpus.iter());
    let mut model_config = model_config.clone();
    if model_config.vocab_size == 0 {
        model_config.vocab_size = vocab.len();
    } else if model_config.vocab_size != vocab.len() {
        return Err(TrainError::Config(format!(
            "vocab_size {} does not match the corpus vocabulary of {}",
            model_config.vocab_size,
            vocab.len()
        )));
    }
    let mut params = init_model::<f32>(&model_config, config.seed)?;

    let examples = encode_all(&corpus.triples, &vocab, model_config.max_seq_len);
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus { mode: config.mode });
    }
    let batches_per_epoch = examples.len().div_ceil(config.batch_size) as u64;
    let total_steps = batches_per_epoch * config.epochs as u64;
    let mut history = TrainHistory::default();
    if total_steps == 0 {
        let metadata = TrainMetadata {
            mode: Some(config.mode),
            steps: 0,
            final_loss: None,
        };
        return Ok((Checkpoint::new(params, vocab, metadata)?, history));
    }
    lr_multiplier(0, config.warmup_steps, total_steps)?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut adam = AdamState::new(&params.weights);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut step = 0u64;
    let mut final_loss = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch_examples: Vec<EncodedExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let batch = Batch::from_examples(&batch_examples)?;
            let (loss, mut grads) = params.loss_and_gradients(&batch, Some(&mut dropout_rng))?;
            let loss = f64::from(loss);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { step });
            }
            clip_global_norm(&mut grads, GRAD_CLIP_NORM);
            let lr = config.peak_lr * lr_multiplier(step, config.warmup_steps, total_steps)?;
            optimizer_step(&mut params.weights, &grads, &mut adam, lr)?;
            loss_sum += loss;
            final_loss = Some(loss);
            step += 1;
        }
        let mean_loss = loss_sum / batches_per_epoch as f64;
        let dev_top1 = if dev.is_empty() {
            None
        } else {
            Some(greedy_top1(&params, &vocab, &dev)?)
        };
        log::info!("epoch {epoch}: mean loss {mean_loss:.4}, dev top-1 {dev_top1:?}");
        history.epochs.push(EpochRecord {
            epoch,
            mean_loss,
            dev_top1,
        });
    }
    let metadata = TrainMetadata {
        mode: Some(config.mode),
        steps: step,
        final_loss,
    };
    Ok((Checkpoint::new(params, vocab, metadata)?, history))
}

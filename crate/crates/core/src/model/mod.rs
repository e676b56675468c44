//! Character-level transformer encoder–decoder.
//!
//! Post-norm layers, learned positional embeddings, an untied output
//! projection. The encoder input starts with the *target* language token,
//! which is the only signal telling the model which script to produce.

mod forward;
mod params;

pub use params::{Attention, DecoderLayer, EncoderLayer, FeedForward, LayerNorm, Linear, Weights};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EncodedExample, LanguageTag, Vocabulary, EOS_ID, PAD_ID, RESERVED_TOKENS};
use crate::numerics::{Graph, NumericsError, Scalar, Tensor, Var};
use forward::Net;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence length {len} outside {min}..={max}")]
    SequenceLength { len: usize, min: usize, max: usize },
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("target sequence needs at least a language token and <EOS>")]
    TargetTooShort,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_encoder_layers: usize,
    pub num_decoder_layers: usize,
    pub embed_size: usize,
    pub heads: usize,
    pub hidden_dim: usize,
    pub max_seq_len: usize,
    #[serde(default)]
    pub dropout: f64,
    /// Zero in configuration files means "take it from the vocabulary".
    #[serde(default)]
    pub vocab_size: usize,
}

impl ModelConfig {
    /// Full-size configuration: 12+12 layers, width 768, 12 heads.
    pub fn full(vocab_size: usize) -> Self {
        Self {
            num_encoder_layers: 12,
            num_decoder_layers: 12,
            embed_size: 768,
            heads: 12,
            hidden_dim: 3072,
            max_seq_len: 50,
            dropout: 0.0,
            vocab_size,
        }
    }

    /// Two layers each side, width 32; small enough for exhaustive tests.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            num_encoder_layers: 2,
            num_decoder_layers: 2,
            embed_size: 32,
            heads: 4,
            hidden_dim: 64,
            max_seq_len: 16,
            dropout: 0.0,
            vocab_size,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_size / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.num_encoder_layers == 0 || self.num_decoder_layers == 0 {
            return err("layer counts must be positive".into());
        }
        if self.embed_size == 0 || self.heads == 0 || self.hidden_dim == 0 {
            return err("embed_size, heads and hidden_dim must be positive".into());
        }
        if self.embed_size % self.heads != 0 {
            return err(format!("embed_size {} is not divisible by heads {}", self.embed_size, self.heads));
        }
        if self.max_seq_len < 2 {
            return err("max_seq_len must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.vocab_size < RESERVED_TOKENS.len() {
            return err(format!(
                "vocab_size {} is smaller than the {} reserved tokens",
                self.vocab_size,
                RESERVED_TOKENS.len()
            ));
        }
        Ok(())
    }

    /// Name and shape of every parameter tensor in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        Weights::shapes(self)
            .named()
            .into_iter()
            .map(|(n, s)| (n, s.clone()))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Encoder output for one source sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Memory<T> {
    /// `[src_len, embed]`.
    pub states: Tensor<T>,
    /// True where the source token is `<PAD>`.
    pub key_padding: Vec<bool>,
}

/// Padded, row-major teacher-forcing batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub size: usize,
    pub src_len: usize,
    pub tgt_len: usize,
    /// `[size, src_len]`.
    pub src: Vec<usize>,
    /// `[size, tgt_len]`; position 0 is the language token.
    pub tgt: Vec<usize>,
}

impl Batch {
    /// Pads every example with `<PAD>` to the longest source and target.
    pub fn from_examples(examples: &[EncodedExample]) -> Result<Self, ModelError> {
        if examples.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        if examples.iter().any(|e| e.tgt_ids.len() < 2) {
            return Err(ModelError::TargetTooShort);
        }
        let src_len = examples.iter().map(|e| e.src_ids.len()).max().unwrap_or(0);
        let tgt_len = examples.iter().map(|e| e.tgt_ids.len()).max().unwrap_or(0);
        let pad = |ids: &[usize], len: usize| ids.iter().copied().chain(std::iter::repeat(PAD_ID)).take(len).collect::<Vec<_>>();
        Ok(Self {
            size: examples.len(),
            src_len,
            tgt_len,
            src: examples.iter().flat_map(|e| pad(&e.src_ids, src_len)).collect(),
            tgt: examples.iter().flat_map(|e| pad(&e.tgt_ids, tgt_len)).collect(),
        })
    }

    /// Decoder input (all but the last target position) and the tokens it
    /// must predict (all but the first); `<PAD>` targets are ignored.
    fn teacher_forcing(&self) -> (Vec<usize>, Vec<Option<usize>>) {
        let mut input = Vec::with_capacity(self.size * (self.tgt_len - 1));
        let mut targets = Vec::with_capacity(input.capacity());
        for row in self.tgt.chunks(self.tgt_len) {
            input.extend_from_slice(&row[..self.tgt_len - 1]);
            targets.extend(row[1..].iter().map(|&id| (id != PAD_ID).then_some(id)));
        }
        (input, targets)
    }
}

/// Weights with the configuration they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub weights: Weights<Tensor<T>>,
}

/// Draws fresh weights: embeddings ~ N(0, embed^-1/2), projection matrices
/// ~ N(0, fan_in^-1/2), biases 0, layer-norm gains 1.
pub fn init_model<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embed_std = (config.embed_size as f64).powf(-0.5);
    let mut build = |name: &str, shape: &Vec<usize>| -> Result<Tensor<T>, NumericsError> {
        if name.ends_with("gain") {
            Tensor::ones(shape)
        } else if name.ends_with("bias") {
            Tensor::zeros(shape)
        } else {
            let std = if name.ends_with("embedding") {
                embed_std
            } else {
                (shape[0] as f64).powf(-0.5)
            };
            let normal = Normal::new(0.0, std).expect("finite positive std");
            Tensor::from_fn(shape, |_| T::lit(normal.sample(&mut rng)))
        }
    };
    let shapes = Weights::shapes(config);
    let built = shapes.map(&mut |name, shape| build(name, shape));
    let mut tensors = Vec::new();
    for (_, t) in built.named() {
        tensors.push(t.clone()?);
    }
    Ok(ModelParams {
        config: config.clone(),
        weights: shapes.from_leaves(&tensors),
    })
}

/// Records every weight on `g`, as leaves when `trainable` and as constants
/// otherwise.
pub fn weights_on_graph<T: Scalar>(g: &mut Graph<T>, weights: &Weights<Tensor<T>>, trainable: bool) -> Weights<Var> {
    weights.map(&mut |_, t| if trainable { g.leaf(t.clone()) } else { g.constant(t.clone()) })
}

fn check_ids(ids: &[usize], min_len: usize, config: &ModelConfig) -> Result<(), ModelError> {
    if ids.len() < min_len || ids.len() > config.max_seq_len {
        return Err(ModelError::SequenceLength {
            len: ids.len(),
            min: min_len,
            max: config.max_seq_len,
        });
    }
    if let Some(&id) = ids.iter().find(|&&id| id >= config.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            id,
            vocab: config.vocab_size,
        });
    }
    Ok(())
}

fn check_batch(batch: &Batch, config: &ModelConfig) -> Result<(), ModelError> {
    if batch.size == 0 {
        return Err(ModelError::EmptyBatch);
    }
    if batch.tgt_len < 2 {
        return Err(ModelError::TargetTooShort);
    }
    for row in batch.src.chunks(batch.src_len) {
        check_ids(row, 2, config)?;
    }
    for row in batch.tgt.chunks(batch.tgt_len) {
        check_ids(&row[..batch.tgt_len - 1], 1, config)?;
        check_ids(&row[1..], 1, config)?;
    }
    Ok(())
}

/// Mean token cross-entropy of `batch` recorded on `g` with weights `w`.
/// No dropout is applied.
pub fn loss_on_graph<T: Scalar>(g: &mut Graph<T>, w: &Weights<Var>, config: &ModelConfig, batch: &Batch) -> Result<Var, ModelError> {
    check_batch(batch, config)?;
    record_loss(g, w, config, batch, None)
}

fn record_loss<T: Scalar>(
    g: &mut Graph<T>,
    w: &Weights<Var>,
    config: &ModelConfig,
    batch: &Batch,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<Var, ModelError> {
    let (input, targets) = batch.teacher_forcing();
    let dec_len = batch.tgt_len - 1;
    let src_padding: Vec<bool> = batch.src.iter().map(|&id| id == PAD_ID).collect();
    let mut net = Net { g, w, config, dropout };
    let memory = net.encode(&batch.src, batch.size, batch.src_len)?;
    let logits = net.decode(memory, &src_padding, &input, batch.size, dec_len)?;
    let flat = g.reshape(logits, &[batch.size * dec_len, config.vocab_size])?;
    Ok(g.cross_entropy(flat, &targets)?)
}

impl<T: Scalar> ModelParams<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            weights: self.weights.map(&mut |_, t| t.cast()),
        }
    }

    /// Runs the encoder over `[target-lang token, chars.., <EOS>]`.
    pub fn encode(&self, src_ids: &[usize]) -> Result<Memory<T>, ModelError> {
        check_ids(src_ids, 2, &self.config)?;
        let mut g = Graph::new();
        let w = weights_on_graph(&mut g, &self.weights, false);
        let mut net = Net {
            g: &mut g,
            w: &w,
            config: &self.config,
            dropout: None,
        };
        let states = net.encode(src_ids, 1, src_ids.len())?;
        let states = g.value(states).clone().reshape(vec![src_ids.len(), self.config.embed_size])?;
        Ok(Memory {
            states,
            key_padding: src_ids.iter().map(|&id| id == PAD_ID).collect(),
        })
    }

    /// Next-token logits `[prefix_len, vocab]`: row `t` is the distribution
    /// over the token following `prefix[..=t]`.
    pub fn decode_logits(&self, memory: &Memory<T>, prefix: &[usize]) -> Result<Tensor<T>, ModelError> {
        check_ids(prefix, 1, &self.config)?;
        let src_len = memory.key_padding.len();
        if memory.states.shape() != [src_len, self.config.embed_size] {
            return Err(NumericsError::ShapeMismatch {
                op: "decode_logits",
                shapes: vec![memory.states.shape().to_vec(), vec![src_len, self.config.embed_size]],
            }
            .into());
        }
        let mut g = Graph::new();
        let w = weights_on_graph(&mut g, &self.weights, false);
        let mem = g.constant(memory.states.clone().reshape(vec![1, src_len, self.config.embed_size])?);
        let mut net = Net {
            g: &mut g,
            w: &w,
            config: &self.config,
            dropout: None,
        };
        let logits = net.decode(mem, &memory.key_padding, prefix, 1, prefix.len())?;
        Ok(g.value(logits).clone().reshape(vec![prefix.len(), self.config.vocab_size])?)
    }

    /// Mean teacher-forced cross-entropy over the non-padding target tokens.
    pub fn forward_loss(&self, batch: &Batch) -> Result<T, ModelError> {
        check_batch(batch, &self.config)?;
        let mut g = Graph::new();
        let w = weights_on_graph(&mut g, &self.weights, false);
        let loss = record_loss(&mut g, &w, &self.config, batch, None)?;
        Ok(g.value(loss).item())
    }

    /// Loss and its gradient for every weight. Dropout masks are drawn from
    /// `dropout_rng` when one is given and the configured rate is nonzero.
    pub fn loss_and_gradients(&self, batch: &Batch, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<(T, Weights<Tensor<T>>), ModelError> {
        check_batch(batch, &self.config)?;
        let mut g = Graph::new();
        let w = weights_on_graph(&mut g, &self.weights, true);
        let loss = record_loss(&mut g, &w, &self.config, batch, dropout_rng)?;
        let grads = g.backward(loss)?;
        let grad_weights = w.map(&mut |_, &v| grads.get_or_zeros(v, g.shape(v)));
        Ok((g.value(loss).item(), grad_weights))
    }

    /// Mean relative L2 distance between encoder states of the same word
    /// prefixed by each pair of distinct language tokens. Zero would mean the
    /// encoder ignores the language token.
    pub fn language_token_sensitivity(&self, char_ids: &[usize], langs: &[LanguageTag]) -> Result<f64, ModelError> {
        let memories = langs
            .iter()
            .map(|&lang| {
                let mut src = vec![Vocabulary::lang_id(lang)];
                src.extend_from_slice(char_ids);
                src.push(EOS_ID);
                self.encode(&src)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut total = 0.0;
        let mut pairs = 0usize;
        for (i, a) in memories.iter().enumerate() {
            for b in &memories[i + 1..] {
                let diff: f64 = a
                    .states
                    .data()
                    .iter()
                    .zip(b.states.data())
                    .map(|(x, y)| (x.to_f64().unwrap() - y.to_f64().unwrap()).powi(2))
                    .sum();
                let norm = a.states.squared_norm().to_f64().unwrap();
                total += (diff / norm).sqrt();
                pairs += 1;
            }
        }
        Ok(if pairs == 0 { 0.0 } else { total / pairs as f64 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(src: &[usize], tgt: &[usize]) -> EncodedExample {
        EncodedExample {
            src_ids: src.to_vec(),
            tgt_ids: tgt.to_vec(),
        }
    }

    #[test]
    fn full_preset_shapes() {
        let config = ModelConfig::full(100);
        config.validate().unwrap();
        let shapes = config.parameter_shapes();
        let get = |name: &str| shapes.iter().find(|(n, _)| n == name).unwrap().1.clone();
        assert_eq!(get("token_embedding"), vec![100, 768]);
        assert_eq!(get("position_embedding"), vec![50, 768]);
        assert_eq!(get("encoder.11.feed_forward.expand.weight"), vec![768, 3072]);
        assert_eq!(get("decoder.11.cross_attn.key.weight"), vec![768, 768]);
        assert_eq!(get("output.weight"), vec![768, 100]);
        assert!(!shapes.iter().any(|(n, _)| n.starts_with("encoder.12") || n.starts_with("decoder.12")));
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::toy(7).validate().is_err());
        let mut c = ModelConfig::toy(20);
        c.heads = 5;
        assert!(c.validate().is_err());
        c = ModelConfig::toy(20);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_statistics() {
        let config = ModelConfig::toy(20);
        let p = init_model::<f64>(&config, 7).unwrap();
        let layer = &p.weights.encoder[0];
        assert!(layer.self_attn_norm.gain.data().iter().all(|&v| v == 1.0));
        assert!(layer.self_attn.query.bias.data().iter().all(|&v| v == 0.0));
        let w = p.weights.decoder[0].feed_forward.contract.weight.data();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 1.0 / 64.0).abs() < 0.25 / 64.0, "variance {var}");
        assert_eq!(init_model::<f64>(&config, 7).unwrap(), p);
        assert_ne!(init_model::<f64>(&config, 8).unwrap(), p);
    }

    #[test]
    fn batch_padding_and_teacher_forcing() {
        let b = Batch::from_examples(&[example(&[4, 8, 1], &[4, 9, 1]), example(&[4, 8, 8, 8, 1], &[4, 1])]).unwrap();
        assert_eq!((b.size, b.src_len, b.tgt_len), (2, 5, 3));
        assert_eq!(b.src[5..], [4, 8, 8, 8, 1]);
        assert_eq!(b.src[..5], [4, 8, 1, 0, 0]);
        let (input, targets) = b.teacher_forcing();
        assert_eq!(input, vec![4, 9, 4, 1]);
        assert_eq!(targets, vec![Some(9), Some(1), Some(1), None]);
    }

    #[test]
    fn loss_is_near_uniform_at_init_and_gradients_match_shapes() {
        let config = ModelConfig::toy(12);
        let p = init_model::<f64>(&config, 1).unwrap();
        let b = Batch::from_examples(&[example(&[4, 8, 9, 1], &[3, 10, 11, 1])]).unwrap();
        let loss = p.forward_loss(&b).unwrap();
        assert!((loss - (12f64).ln()).abs() < 1.5, "loss {loss}");
        let (l2, grads) = p.loss_and_gradients(&b, None).unwrap();
        assert_eq!(loss, l2);
        for ((_, t), (_, g)) in p.weights.named().into_iter().zip(grads.named()) {
            assert_eq!(t.shape(), g.shape());
        }
    }

    #[test]
    fn rejects_bad_ids() {
        let p = init_model::<f32>(&ModelConfig::toy(12), 1).unwrap();
        assert!(matches!(p.encode(&[]), Err(ModelError::SequenceLength { .. })));
        assert!(matches!(p.encode(&[4]), Err(ModelError::SequenceLength { len: 1, .. })));
        assert!(matches!(p.encode(&[4, 12]), Err(ModelError::TokenOutOfRange { id: 12, .. })));
        assert!(matches!(p.encode(&[4; 17]), Err(ModelError::SequenceLength { len: 17, max: 16, .. })));
    }

    #[test]
    fn decode_rows_match_full_decoding() {
        let p = init_model::<f64>(&ModelConfig::toy(12), 3).unwrap();
        let m = p.encode(&[4, 8, 9, 1]).unwrap();
        let full = p.decode_logits(&m, &[4, 10, 11]).unwrap();
        let short = p.decode_logits(&m, &[4, 10]).unwrap();
        assert!(full.data()[..24].iter().zip(short.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}

//! Encoder–decoder forward pass recorded on a [`Graph`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Attention, FeedForward, LayerNorm, Linear, Weights};
use super::ModelConfig;
use crate::corpus::PAD_ID;
use crate::numerics::{Graph, NumericsError, Scalar, Tensor, Var};

/// Score given to blocked attention positions before the softmax.
const BLOCKED_SCORE: f64 = -1e9;

type Result<T> = std::result::Result<T, NumericsError>;

pub(crate) struct Net<'a, T: Scalar> {
    pub g: &'a mut Graph<T>,
    pub w: &'a Weights<Var>,
    pub config: &'a ModelConfig,
    /// Present only while training with a nonzero dropout rate.
    pub dropout: Option<&'a mut ChaCha8Rng>,
}

impl<T: Scalar> Net<'_, T> {
    fn linear(&mut self, l: &Linear<Var>, x: Var) -> Result<Var> {
        let y = self.g.matmul(x, l.weight)?;
        self.g.add(y, l.bias)
    }

    fn dropout(&mut self, x: Var) -> Result<Var> {
        let rate = self.config.dropout;
        let Some(rng) = self.dropout.as_deref_mut() else {
            return Ok(x);
        };
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let shape = self.g.shape(x).to_vec();
        let mask = Tensor::from_fn(&shape, |_| if rng.random::<f64>() < rate { T::zero() } else { keep })?;
        let mask = self.g.constant(mask);
        self.g.mul(x, mask)
    }

    fn add_norm(&mut self, x: Var, sub: Var, norm: &LayerNorm<Var>) -> Result<Var> {
        let sub = self.dropout(sub)?;
        let sum = self.g.add(x, sub)?;
        self.g.layer_norm(sum, norm.gain, norm.bias)
    }

    /// Token plus positional embedding of `ids: [batch, len]`.
    fn embed(&mut self, ids: &[usize], batch: usize, len: usize) -> Result<Var> {
        let tok = self.g.embedding(self.w.token_embedding, ids, &[batch, len])?;
        let pos = self.g.slice(self.w.position_embedding, 0, 0, len)?;
        let x = self.g.add(tok, pos)?;
        self.dropout(x)
    }

    /// `[b, l, e]` → `[b·heads, l, head_dim]`.
    fn split_heads(&mut self, x: Var, b: usize, l: usize) -> Result<Var> {
        let h = self.config.heads;
        let dh = self.config.head_dim();
        let x = self.g.reshape(x, &[b, l, h, dh])?;
        let x = self.g.transpose(x, 1, 2)?;
        self.g.reshape(x, &[b * h, l, dh])
    }

    fn merge_heads(&mut self, x: Var, b: usize, l: usize) -> Result<Var> {
        let h = self.config.heads;
        let dh = self.config.head_dim();
        let x = self.g.reshape(x, &[b, h, l, dh])?;
        let x = self.g.transpose(x, 1, 2)?;
        self.g.reshape(x, &[b, l, h * dh])
    }

    /// Multi-head attention of `queries: [b, lq, e]` over `keys: [b, lk, e]`.
    /// `blocked: [b, lq, lk]` marks key positions a query may not see.
    fn attention(&mut self, a: &Attention<Var>, queries: Var, keys: Var, blocked: &[bool]) -> Result<Var> {
        let (b, lq) = (self.g.shape(queries)[0], self.g.shape(queries)[1]);
        let lk = self.g.shape(keys)[1];
        let q = self.linear(&a.query, queries)?;
        let q = self.split_heads(q, b, lq)?;
        let k = self.linear(&a.key, keys)?;
        let k = self.split_heads(k, b, lk)?;
        let v = self.linear(&a.value, keys)?;
        let v = self.split_heads(v, b, lk)?;

        let kt = self.g.transpose(k, 1, 2)?;
        let scores = self.g.matmul(q, kt)?;
        let scores = self.g.scale(scores, T::lit(1.0 / (self.config.head_dim() as f64).sqrt()));
        let per_seq = lq * lk;
        let mask: Vec<bool> = blocked
            .chunks(per_seq)
            .flat_map(|m| std::iter::repeat(m).take(self.config.heads).flatten().copied())
            .collect();
        let scores = self.g.masked_fill(scores, &mask, T::lit(BLOCKED_SCORE))?;
        let weights = self.g.softmax(scores);
        let ctx = self.g.matmul(weights, v)?;
        let ctx = self.merge_heads(ctx, b, lq)?;
        self.linear(&a.output, ctx)
    }

    fn feed_forward(&mut self, ff: &FeedForward<Var>, x: Var) -> Result<Var> {
        let h = self.linear(&ff.expand, x)?;
        let h = self.g.relu(h);
        self.linear(&ff.contract, h)
    }

    /// Encoder states `[batch, len, embed]` of `src: [batch, len]`.
    pub fn encode(&mut self, src: &[usize], batch: usize, len: usize) -> Result<Var> {
        let w = self.w;
        let blocked = key_padding_mask(src, batch, len, len);
        let mut x = self.embed(src, batch, len)?;
        for layer in &w.encoder {
            let a = self.attention(&layer.self_attn, x, x, &blocked)?;
            x = self.add_norm(x, a, &layer.self_attn_norm)?;
            let f = self.feed_forward(&layer.feed_forward, x)?;
            x = self.add_norm(x, f, &layer.feed_forward_norm)?;
        }
        Ok(x)
    }

    /// Output logits `[batch, tgt_len, vocab]` for decoder input `tgt`
    /// attending to `memory: [batch, src_len, embed]`.
    pub fn decode(&mut self, memory: Var, src_padding: &[bool], tgt: &[usize], batch: usize, tgt_len: usize) -> Result<Var> {
        let w = self.w;
        let src_len = self.g.shape(memory)[1];
        let self_blocked = causal_mask(tgt, batch, tgt_len);
        let cross_blocked: Vec<bool> = src_padding
            .chunks(src_len)
            .flat_map(|row| std::iter::repeat(row).take(tgt_len).flatten().copied())
            .collect();
        let mut y = self.embed(tgt, batch, tgt_len)?;
        for layer in &w.decoder {
            let a = self.attention(&layer.self_attn, y, y, &self_blocked)?;
            y = self.add_norm(y, a, &layer.self_attn_norm)?;
            let c = self.attention(&layer.cross_attn, y, memory, &cross_blocked)?;
            y = self.add_norm(y, c, &layer.cross_attn_norm)?;
            let f = self.feed_forward(&layer.feed_forward, y)?;
            y = self.add_norm(y, f, &layer.feed_forward_norm)?;
        }
        self.linear(&w.output, y)
    }
}

/// `[batch, queries, len]` mask blocking padded key positions.
fn key_padding_mask(ids: &[usize], batch: usize, queries: usize, len: usize) -> Vec<bool> {
    let mut mask = Vec::with_capacity(batch * queries * len);
    for row in ids.chunks(len) {
        for _ in 0..queries {
            mask.extend(row.iter().map(|&id| id == PAD_ID));
        }
    }
    mask
}

/// Blocks future positions and padded keys: query `i` sees keys `j <= i`.
fn causal_mask(ids: &[usize], batch: usize, len: usize) -> Vec<bool> {
    let mut mask = Vec::with_capacity(batch * len * len);
    for row in ids.chunks(len) {
        for i in 0..len {
            mask.extend(row.iter().enumerate().map(|(j, &id)| j > i || id == PAD_ID));
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causal_mask_is_lower_triangular() {
        let m = causal_mask(&[3, 9, 0], 1, 3);
        assert_eq!(m, vec![false, true, true, false, false, true, false, false, true]);
    }

    #[test]
    fn padding_mask_repeats_per_query() {
        let m = key_padding_mask(&[3, 0, 4, 5], 2, 2, 2);
        assert_eq!(m, vec![false, true, false, true, false, false, false, false]);
    }
}

//! Parameter tree of the encoder–decoder.
//!
//! The same structs hold stored tensors (`Weights<Tensor<T>>`), graph handles
//! during a forward pass (`Weights<Var>`), gradients, and shape templates
//! (`Weights<Vec<usize>>`). Every traversal visits leaves in one fixed order,
//! which is also the checkpoint manifest order.

use super::ModelConfig;

fn join(path: &str, field: &str) -> String {
    if path.is_empty() {
        field.to_owned()
    } else {
        format!("{path}.{field}")
    }
}

macro_rules! param_node {
    ($ty:ident { leaves: [$($leaf:ident),*], nodes: [$($node:ident),*] }) => {
        impl<P> $ty<P> {
            pub fn map<'a, Q>(&'a self, path: &str, f: &mut impl FnMut(&str, &'a P) -> Q) -> $ty<Q> {
                $ty {
                    $($leaf: f(&join(path, stringify!($leaf)), &self.$leaf),)*
                    $($node: self.$node.map(&join(path, stringify!($node)), f),)*
                }
            }

            pub fn visit_mut<'a>(&'a mut self, path: &str, f: &mut impl FnMut(String, &'a mut P)) {
                $(f(join(path, stringify!($leaf)), &mut self.$leaf);)*
                $(self.$node.visit_mut(&join(path, stringify!($node)), f);)*
            }
        }
    };
}

/// `y = x · weight + bias` with `weight: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<P> {
    pub weight: P,
    pub bias: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm<P> {
    pub gain: P,
    pub bias: P,
}

/// Multi-head attention; the heads are column groups of each projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention<P> {
    pub query: Linear<P>,
    pub key: Linear<P>,
    pub value: Linear<P>,
    pub output: Linear<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedForward<P> {
    pub expand: Linear<P>,
    pub contract: Linear<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer<P> {
    pub self_attn: Attention<P>,
    pub self_attn_norm: LayerNorm<P>,
    pub feed_forward: FeedForward<P>,
    pub feed_forward_norm: LayerNorm<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderLayer<P> {
    pub self_attn: Attention<P>,
    pub self_attn_norm: LayerNorm<P>,
    pub cross_attn: Attention<P>,
    pub cross_attn_norm: LayerNorm<P>,
    pub feed_forward: FeedForward<P>,
    pub feed_forward_norm: LayerNorm<P>,
}

param_node!(Linear { leaves: [weight, bias], nodes: [] });
param_node!(LayerNorm { leaves: [gain, bias], nodes: [] });
param_node!(Attention { leaves: [], nodes: [query, key, value, output] });
param_node!(FeedForward { leaves: [], nodes: [expand, contract] });
param_node!(EncoderLayer { leaves: [], nodes: [self_attn, self_attn_norm, feed_forward, feed_forward_norm] });
param_node!(DecoderLayer {
    leaves: [],
    nodes: [self_attn, self_attn_norm, cross_attn, cross_attn_norm, feed_forward, feed_forward_norm]
});

/// All learned tensors. Token and positional tables are shared by encoder
/// and decoder; the output projection is separate from the token table.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<P> {
    pub token_embedding: P,
    pub position_embedding: P,
    pub encoder: Vec<EncoderLayer<P>>,
    pub decoder: Vec<DecoderLayer<P>>,
    pub output: Linear<P>,
}

impl<P> Weights<P> {
    pub fn map<'a, Q>(&'a self, f: &mut impl FnMut(&str, &'a P) -> Q) -> Weights<Q> {
        Weights {
            token_embedding: f("token_embedding", &self.token_embedding),
            position_embedding: f("position_embedding", &self.position_embedding),
            encoder: self
                .encoder
                .iter()
                .enumerate()
                .map(|(i, l)| l.map(&format!("encoder.{i}"), f))
                .collect(),
            decoder: self
                .decoder
                .iter()
                .enumerate()
                .map(|(i, l)| l.map(&format!("decoder.{i}"), f))
                .collect(),
            output: self.output.map("output", f),
        }
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut impl FnMut(String, &'a mut P)) {
        f("token_embedding".into(), &mut self.token_embedding);
        f("position_embedding".into(), &mut self.position_embedding);
        for (i, l) in self.encoder.iter_mut().enumerate() {
            l.visit_mut(&format!("encoder.{i}"), f);
        }
        for (i, l) in self.decoder.iter_mut().enumerate() {
            l.visit_mut(&format!("decoder.{i}"), f);
        }
        self.output.visit_mut("output", f);
    }

    /// `(name, leaf)` pairs in traversal order.
    pub fn named(&self) -> Vec<(String, &P)> {
        let mut out = Vec::new();
        self.map(&mut |name, p| out.push((name.to_owned(), p)));
        out
    }

    pub fn leaves_mut(&mut self) -> Vec<(String, &mut P)> {
        let mut out = Vec::new();
        self.visit_mut(&mut |name, p| out.push((name, p)));
        out
    }

    /// Rebuilds a tree with this shape from leaves given in traversal order.
    pub fn from_leaves<Q: Clone>(&self, leaves: &[Q]) -> Weights<Q> {
        let mut i = 0;
        self.map(&mut |_, _| {
            let q = leaves[i].clone();
            i += 1;
            q
        })
    }
}

fn linear_shape(input: usize, output: usize) -> Linear<Vec<usize>> {
    Linear {
        weight: vec![input, output],
        bias: vec![output],
    }
}

fn norm_shape(width: usize) -> LayerNorm<Vec<usize>> {
    LayerNorm {
        gain: vec![width],
        bias: vec![width],
    }
}

fn attention_shape(e: usize) -> Attention<Vec<usize>> {
    Attention {
        query: linear_shape(e, e),
        key: linear_shape(e, e),
        value: linear_shape(e, e),
        output: linear_shape(e, e),
    }
}

fn feed_forward_shape(e: usize, hidden: usize) -> FeedForward<Vec<usize>> {
    FeedForward {
        expand: linear_shape(e, hidden),
        contract: linear_shape(hidden, e),
    }
}

impl Weights<Vec<usize>> {
    /// Shape template for `config`.
    pub fn shapes(config: &ModelConfig) -> Self {
        let e = config.embed_size;
        let h = config.hidden_dim;
        Weights {
            token_embedding: vec![config.vocab_size, e],
            position_embedding: vec![config.max_seq_len, e],
            encoder: (0..config.num_encoder_layers)
                .map(|_| EncoderLayer {
                    self_attn: attention_shape(e),
                    self_attn_norm: norm_shape(e),
                    feed_forward: feed_forward_shape(e, h),
                    feed_forward_norm: norm_shape(e),
                })
                .collect(),
            decoder: (0..config.num_decoder_layers)
                .map(|_| DecoderLayer {
                    self_attn: attention_shape(e),
                    self_attn_norm: norm_shape(e),
                    cross_attn: attention_shape(e),
                    cross_attn_norm: norm_shape(e),
                    feed_forward: feed_forward_shape(e, h),
                    feed_forward_norm: norm_shape(e),
                })
                .collect(),
            output: linear_shape(e, config.vocab_size),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traversal_orders_agree() {
        let config = ModelConfig::toy(20);
        let mut shapes = Weights::shapes(&config);
        let names: Vec<String> = shapes.named().into_iter().map(|(n, _)| n).collect();
        let mut_names: Vec<String> = shapes.leaves_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, mut_names);
        assert_eq!(names[0], "token_embedding");
        assert!(names.contains(&"decoder.1.cross_attn.value.weight".to_string()));
        assert_eq!(names.last().unwrap(), "output.bias");
        let unique: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
    }

    #[test]
    fn from_leaves_inverts_named() {
        let shapes = Weights::shapes(&ModelConfig::toy(20));
        let flat: Vec<Vec<usize>> = shapes.named().into_iter().map(|(_, s)| s.clone()).collect();
        assert_eq!(shapes.from_leaves(&flat), shapes);
    }
}

//! Gradient-check cases for every graph primitive.

use matra_core::numerics::{grad_check_with, GradCheckOptions, Graph, NumericsError, Stencil, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    Matmul,
    MatmulBatched,
    MatmulSharedRhs,
    Add,
    AddBroadcast,
    Mul,
    Scale,
    Softmax,
    LayerNorm,
    Relu,
    Embedding,
    Concat,
    Slice,
    Transpose,
    Reshape,
    MaskedFill,
    Sum,
    Mean,
    CrossEntropy,
}

impl Primitive {
    pub const ALL: [Primitive; 19] = [
        Self::Matmul,
        Self::MatmulBatched,
        Self::MatmulSharedRhs,
        Self::Add,
        Self::AddBroadcast,
        Self::Mul,
        Self::Scale,
        Self::Softmax,
        Self::LayerNorm,
        Self::Relu,
        Self::Embedding,
        Self::Concat,
        Self::Slice,
        Self::Transpose,
        Self::Reshape,
        Self::MaskedFill,
        Self::Sum,
        Self::Mean,
        Self::CrossEntropy,
    ];
}

/// Step and stencil used for the primitive checks. Inputs are O(1) and
/// ReLU inputs stay at least 0.1 away from zero, well beyond `3h`. The large
/// step keeps roundoff negligible for gradient components near 1e-7.
pub fn primitive_options(seed: u64) -> GradCheckOptions {
    GradCheckOptions {
        epsilon: 1e-2,
        stencil: Stencil::SevenPoint,
        coords_per_input: None,
        seed,
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
}

/// Reduces `out` to a scalar through a fixed random weighting, so that
/// gradients differ between output elements.
fn weighted_sum(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var, NumericsError> {
    let shape = g.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = g.constant(uniform(&mut rng, &shape));
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

/// Max relative error of `primitive` on random inputs whose sizes are drawn
/// from `dims` (each in 1..=8).
pub fn check_primitive(primitive: Primitive, dims: [usize; 3], seed: u64) -> Result<f64, NumericsError> {
    let [m, n, k] = dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: Vec<Vec<usize>> = match primitive {
        Primitive::Matmul => vec![vec![m, k], vec![k, n]],
        Primitive::MatmulBatched => vec![vec![2, m, k], vec![2, k, n]],
        Primitive::MatmulSharedRhs => vec![vec![2, m, k], vec![k, n]],
        Primitive::Add | Primitive::Mul => vec![vec![m, n], vec![m, n]],
        Primitive::AddBroadcast => vec![vec![k, m, n], vec![n]],
        Primitive::LayerNorm => vec![vec![m, n], vec![n], vec![n]],
        Primitive::Embedding => vec![vec![k, n]],
        Primitive::Concat => vec![vec![m, n], vec![m, k]],
        Primitive::Transpose => vec![vec![m, n, k]],
        _ => vec![vec![m, n]],
    };
    let mut point: Vec<Tensor<f64>> = shapes.iter().map(|s| uniform(&mut rng, s)).collect();
    if primitive == Primitive::Relu {
        for v in point[0].data_mut() {
            *v = v.signum() * (0.1 + v.abs());
        }
    }
    if primitive == Primitive::LayerNorm {
        // Neighbouring entries differ by at least 1, so no row is nearly
        // constant; such rows curve on the scale of sqrt(LAYER_NORM_EPS),
        // far below any usable step.
        for (i, v) in point[0].data_mut().iter_mut().enumerate() {
            *v += 3.0 * (i % n) as f64;
        }
    }
    let ids: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
    let mask: Vec<bool> = (0..m * n).map(|_| rng.random_bool(0.4)).collect();
    let (start, end) = {
        let a = rng.random_range(0..n);
        (a, rng.random_range(a + 1..=n))
    };
    let mut targets: Vec<Option<usize>> = (0..m).map(|_| rng.random_bool(0.8).then(|| rng.random_range(0..n))).collect();
    targets[0] = Some(rng.random_range(0..n));

    let f = move |g: &mut Graph<f64>, x: &[Var]| -> Result<Var, NumericsError> {
        let out = match primitive {
            Primitive::Matmul | Primitive::MatmulBatched | Primitive::MatmulSharedRhs => g.matmul(x[0], x[1])?,
            Primitive::Add | Primitive::AddBroadcast => g.add(x[0], x[1])?,
            Primitive::Mul => g.mul(x[0], x[1])?,
            Primitive::Scale => g.scale(x[0], 0.7),
            Primitive::Softmax => g.softmax(x[0]),
            Primitive::LayerNorm => g.layer_norm(x[0], x[1], x[2])?,
            Primitive::Relu => g.relu(x[0]),
            Primitive::Embedding => g.embedding(x[0], &ids, &[m])?,
            Primitive::Concat => g.concat(&[x[0], x[1]], 1)?,
            Primitive::Slice => g.slice(x[0], 1, start, end)?,
            Primitive::Transpose => g.transpose(x[0], 0, 2)?,
            Primitive::Reshape => g.reshape(x[0], &[n, m])?,
            Primitive::MaskedFill => g.masked_fill(x[0], &mask, -3.0)?,
            Primitive::Sum => g.sum(x[0]),
            Primitive::Mean => g.mean(x[0]),
            Primitive::CrossEntropy => g.cross_entropy(x[0], &targets)?,
        };
        weighted_sum(g, out, seed)
    };
    grad_check_with(f, &point, &primitive_options(seed)).map(|r| r.max_relative_error)
}

/// Two-layer feed-forward network `relu(x W1 + b1) W2 + b2` under a
/// cross-entropy loss; parameters are the four weights.
pub fn check_two_layer(dims: [usize; 3], seed: u64) -> Result<f64, NumericsError> {
    let [batch, hidden, classes] = dims;
    let width = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, &[batch, width]);
    let mut b1 = uniform(&mut rng, &[hidden]);
    // Hidden pre-activations stay clear of the ReLU kink: |b1| >= 0.5 while
    // |x W1| <= 0.4. Small activations keep every softmax probability, and so
    // every gradient component, far above the roundoff floor.
    for v in b1.data_mut() {
        *v = v.signum() * 0.5 + *v;
    }
    let point = vec![
        uniform(&mut rng, &[width, hidden]).map(|v| v * 0.1),
        b1,
        uniform(&mut rng, &[hidden, classes]).map(|v| v * 0.5),
        uniform(&mut rng, &[classes]),
    ];
    let targets: Vec<Option<usize>> = (0..batch).map(|_| Some(rng.random_range(0..classes))).collect();
    let f = move |g: &mut Graph<f64>, p: &[Var]| -> Result<Var, NumericsError> {
        let input = g.constant(x.clone());
        let h = g.matmul(input, p[0])?;
        let h = g.add(h, p[1])?;
        let h = g.relu(h);
        let o = g.matmul(h, p[2])?;
        let o = g.add(o, p[3])?;
        g.cross_entropy(o, &targets)
    };
    grad_check_with(f, &point, &primitive_options(seed)).map(|r| r.max_relative_error)
}

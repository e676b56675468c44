use matra_core::numerics::{grad_check, Graph, Tensor, LAYER_NORM_EPS};
use matra_testkit::gradients::{check_primitive, check_two_layer, Primitive};
use matra_testkit::toy::{check_model, gradient_batch, kink_free_point, model_options};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = [usize; 3]> {
    [1usize..=8, 1usize..=8, 1usize..=8]
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(-4.0f64..4.0, rows * cols).prop_map(move |d| Tensor::new(vec![rows, cols], d).unwrap())
}

#[test]
fn every_primitive_at_a_fixed_size() {
    for p in Primitive::ALL {
        let err = check_primitive(p, [3, 5, 4], 1).unwrap();
        assert!(err < 1e-8, "{p:?}: {err:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn primitives_match_finite_differences(i in 0..Primitive::ALL.len(), d in dims(), seed in any::<u64>()) {
        let p = Primitive::ALL[i];
        let err = check_primitive(p, d, seed).unwrap();
        prop_assert!(err < 1e-5, "{:?} {:?}: {:e}", p, d, err);
    }

    #[test]
    fn two_layer_network_gradients(d in dims(), seed in any::<u64>()) {
        let err = check_two_layer(d, seed).unwrap();
        prop_assert!(err < 1e-5, "{:?}: {:e}", d, err);
    }

    #[test]
    fn softmax_rows_are_distributions((r, c) in (1usize..=8, 1usize..=8), seed in any::<u64>()) {
        let x = Tensor::from_fn(&[r, c], |i| ((i as u64 ^ seed) % 97) as f64 - 48.0).unwrap();
        let mut g = Graph::new();
        let v = g.leaf(x);
        let s = g.softmax(v);
        for row in 0..r {
            let p = g.value(s).row(row);
            prop_assert!(p.iter().all(|&q| q > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_standardizes_rows(x in (1usize..=8, 2usize..=8).prop_flat_map(|(r, c)| matrix(r, c))) {
        let (rows, width) = (x.shape()[0], x.shape()[1]);
        let mut g = Graph::new();
        let v = g.leaf(x.clone());
        let gain = g.leaf(Tensor::ones(&[width]).unwrap());
        let bias = g.leaf(Tensor::zeros(&[width]).unwrap());
        let y = g.layer_norm(v, gain, bias).unwrap();
        for r in 0..rows {
            let src = x.row(r);
            let mu = src.iter().sum::<f64>() / width as f64;
            let var = src.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / width as f64;
            let out = g.value(y).row(r);
            let mean = out.iter().sum::<f64>() / width as f64;
            let spread = out.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / width as f64;
            prop_assert!(mean.abs() < 1e-12);
            prop_assert!((spread - var / (var + LAYER_NORM_EPS)).abs() < 1e-9);
        }
    }
}

#[test]
fn cross_entropy_of_uniform_logits_is_log_classes() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::<f64>::zeros(&[3, 4]).unwrap());
    let l = g.cross_entropy(x, &[Some(0), Some(3), None]).unwrap();
    assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-15);
}

#[test]
fn plain_grad_check_contract() {
    let err = grad_check(
        |g, x| {
            let s = g.softmax(x[0]);
            let w = g.constant(Tensor::new(vec![1, 3], vec![1.0, -2.0, 0.5]).unwrap());
            let p = g.mul(s, w)?;
            Ok(g.sum(p))
        },
        &[Tensor::new(vec![1, 3], vec![0.3, -0.1, 0.8]).unwrap()],
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn toy_model_gradients_sampled() {
    let params = kink_free_point(16, 11);
    let report = check_model(&params, &gradient_batch(), &model_options(Some(6))).unwrap();
    assert!(report.max_relative_error < 1e-5, "{report:?}");
}

/// Every coordinate of the toy model; about two and a half minutes on one core.
#[test]
#[ignore]
fn toy_model_gradients_exhaustive() {
    let params = kink_free_point(16, 11);
    let report = check_model(&params, &gradient_batch(), &model_options(None)).unwrap();
    assert_eq!(report.coordinates_checked, params.config.parameter_count());
    assert!(report.max_relative_error < 1e-5, "{report:?}");
}

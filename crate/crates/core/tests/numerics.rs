mod common;

use common::*;
use hsbit::numerics::{finite_diff_check, FiniteDiffConfig, Graph, Tensor};
use hsbit::Error;

fn graph_with(tensors: &[Tensor]) -> (Graph, Vec<hsbit::numerics::Var>) {
    let mut g = Graph::new();
    let vars = tensors.iter().map(|t| g.leaf(t.clone())).collect();
    (g, vars)
}

fn assert_close(actual: &[f32], expected: &[f64], tol: f64) {
    assert_eq!(actual.len(), expected.len());
    for (i, (&a, &e)) in actual.iter().zip(expected).enumerate() {
        assert!((a as f64 - e).abs() <= tol, "element {i}: {a} vs {e}");
    }
}

#[test]
fn conv2d_identity_kernel() {
    let mut r = rng(1);
    let x = random_tensor(&[1, 1, 4, 5], &mut r);
    let (mut g, v) = graph_with(&[x.clone(), Tensor::full(&[1, 1, 1, 1], 1.0), Tensor::zeros(&[1])]);
    let y = g.conv2d(v[0], v[1], v[2], 1, 0).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn conv2d_zero_kernel_gives_zero() {
    let mut r = rng(2);
    let x = random_tensor(&[2, 3, 6, 6], &mut r);
    let (mut g, v) = graph_with(&[x, Tensor::zeros(&[4, 3, 3, 3]), Tensor::zeros(&[4])]);
    let y = g.conv2d(v[0], v[1], v[2], 1, 1).unwrap();
    assert!(g.value(y).data().iter().all(|&z| z == 0.0));
}

#[test]
fn conv2d_matches_loop_oracle() {
    let mut r = rng(3);
    let x = random_tensor(&[1, 2, 5, 5], &mut r);
    let k = random_tensor(&[3, 2, 3, 3], &mut r);
    let b = random_tensor(&[3], &mut r);
    let (mut g, v) = graph_with(&[x.clone(), k.clone(), b.clone()]);
    let y = g.conv2d(v[0], v[1], v[2], 1, 0).unwrap();
    let (shape, expected) = conv2d_ref(&x, &k, &b, 1, 0);
    assert_eq!(g.value(y).shape(), shape.as_slice());
    assert_close(g.value(y).data(), &expected, 1e-6);
}

#[test]
fn conv2d_channel_mismatch_names_both_shapes() {
    let (mut g, v) = graph_with(&[Tensor::zeros(&[1, 2, 4, 4]), Tensor::zeros(&[3, 5, 3, 3]), Tensor::zeros(&[3])]);
    let err = g.conv2d(v[0], v[1], v[2], 1, 1).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Dimension(_)));
    assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[3, 5, 3, 3]"), "{msg}");
}

#[test]
fn conv_transpose_expands_single_pixel() {
    let (mut g, v) = graph_with(&[Tensor::full(&[1, 1, 1, 1], 0.7), Tensor::full(&[1, 1, 2, 2], 1.0), Tensor::zeros(&[1])]);
    let y = g.conv_transpose2d(v[0], v[1], v[2], 2, 0).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 1, 2, 2]);
    assert!(g.value(y).data().iter().all(|&z| z == 0.7));
}

#[test]
fn conv_transpose_zero_input() {
    let mut r = rng(4);
    let (mut g, v) = graph_with(&[Tensor::zeros(&[1, 3, 4, 4]), random_tensor(&[3, 2, 2, 2], &mut r), Tensor::zeros(&[2])]);
    let y = g.conv_transpose2d(v[0], v[1], v[2], 2, 0).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 2, 8, 8]);
    assert!(g.value(y).data().iter().all(|&z| z == 0.0));
}

#[test]
fn conv_transpose_matches_scatter_oracle() {
    let mut r = rng(5);
    let x = random_tensor(&[2, 3, 4, 3], &mut r);
    let k = random_tensor(&[3, 2, 3, 3], &mut r);
    let b = random_tensor(&[2], &mut r);
    let (mut g, v) = graph_with(&[x.clone(), k.clone(), b.clone()]);
    let y = g.conv_transpose2d(v[0], v[1], v[2], 2, 1).unwrap();
    let (shape, expected) = conv_transpose2d_ref(&x, &k, &b, 2, 1);
    assert_eq!(g.value(y).shape(), shape.as_slice());
    assert_close(g.value(y).data(), &expected, 1e-6);
}

#[test]
fn maxpool_cases() {
    let (mut g, v) = graph_with(&[Tensor::full(&[1, 2, 4, 4], 3.5)]);
    let y = g.maxpool2d(v[0], 2, 2).unwrap();
    assert!(g.value(y).data().iter().all(|&z| z == 3.5));

    let (mut g, v) = graph_with(&[Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()]);
    let y = g.maxpool2d(v[0], 2, 2).unwrap();
    assert_eq!(g.value(y).data(), &[4.0]);
    assert_eq!(g.pool_indices(y).unwrap(), &[3]);

    let mut r = rng(6);
    let x = random_tensor(&[1, 1, 8, 8], &mut r);
    let (mut g, v) = graph_with(&[x.clone()]);
    let y = g.maxpool2d(v[0], 2, 2).unwrap();
    let (shape, expected) = maxpool_ref(&x, 2, 2);
    assert_eq!(g.value(y).shape(), shape.as_slice());
    assert_eq!(g.value(y).data(), expected.as_slice());

    let (mut g, v) = graph_with(&[Tensor::zeros(&[1, 1, 3, 8])]);
    assert!(matches!(g.maxpool2d(v[0], 4, 4), Err(Error::Dimension(_))));
}

#[test]
fn activations() {
    let (mut g, v) = graph_with(&[Tensor::new(&[5], vec![0.0, 0.5, -0.5, 2.0, -2.0]).unwrap()]);
    let y = g.tanh(v[0]);
    assert_eq!(g.value(y).data()[0], 0.0);
    for (&out, &inp) in g.value(y).data().iter().zip(&[0.0, 0.5, -0.5, 2.0, -2.0]).skip(1) {
        assert!((out as f64 - tanh_series(inp)).abs() < 1e-6, "tanh({inp})");
    }

    let (mut g, v) = graph_with(&[Tensor::full(&[1, 8], 0.3)]);
    let y = g.softmax(v[0], 1).unwrap();
    assert!(g.value(y).data().iter().all(|&p| (p - 0.125).abs() < 1e-7));

    let (mut g, v) = graph_with(&[Tensor::new(&[4], vec![-1.0, 0.0, 2.0, -0.0]).unwrap()]);
    let y = g.relu(v[0]);
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0, 0.0]);
}

#[test]
fn nan_propagates_through_relu_and_pool() {
    let (mut g, v) = graph_with(&[Tensor::new(&[1, 1, 2, 2], vec![1.0, f32::NAN, 3.0, -4.0]).unwrap()]);
    let r = g.relu(v[0]);
    assert!(g.value(r).data()[1].is_nan());
    let p = g.maxpool2d(v[0], 2, 2).unwrap();
    assert!(g.value(p).data()[0].is_nan());
}

#[test]
fn softmax_is_stable_for_large_logits() {
    let (mut g, v) = graph_with(&[Tensor::new(&[1, 3, 1, 1], vec![1000.0, 999.0, -1000.0]).unwrap()]);
    let y = g.softmax(v[0], 1).unwrap();
    let p = g.value(y).data();
    assert!(p.iter().all(|x| x.is_finite()));
    assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
}

#[test]
fn losses() {
    let (mut g, v) = graph_with(&[Tensor::new(&[2], vec![1.0, -1.0]).unwrap(), Tensor::new(&[2], vec![-1.0, 1.0]).unwrap()]);
    let l = g.mse_loss(v[0], v[1]).unwrap();
    assert_eq!(g.value(l).item().unwrap(), 4.0);
    let same = g.mse_loss(v[0], v[0]).unwrap();
    assert_eq!(g.value(same).item().unwrap(), 0.0);

    let (mut g, v) = graph_with(&[Tensor::zeros(&[1, 8, 2, 2])]);
    let ce = g.cross_entropy(v[0], &[0, 3, 7, 5]).unwrap();
    assert!((g.value(ce).item().unwrap() as f64 - 8f64.ln()).abs() < 1e-6);
    assert!(matches!(g.cross_entropy(v[0], &[0, 8, 1, 1]), Err(Error::Dimension(_))));
    assert!(matches!(g.cross_entropy(v[0], &[0]), Err(Error::Dimension(_))));

    let (mut g, v) = graph_with(&[Tensor::zeros(&[2]), Tensor::zeros(&[3])]);
    assert!(matches!(g.mse_loss(v[0], v[1]), Err(Error::Dimension(_))));
}

#[test]
fn backward_of_sum_is_ones() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap().with_grad());
    let s = g.sum(x);
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0; 6]);
}

#[test]
fn backward_requires_scalar_loss() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros(&[3]).with_grad());
    let y = g.tanh(x);
    assert!(matches!(g.backward(y), Err(Error::Usage(_))));
}

#[test]
fn detached_tensor_gets_no_gradient() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(&[3], vec![0.1, 0.2, 0.3]).unwrap().with_grad());
    let d = g.detach(x);
    let y = g.tanh(d);
    let s = g.sum(y);
    let grads = g.backward(s).unwrap();
    assert!(grads.get(x).is_none());
    assert!(grads.get(d).is_none());
}

#[test]
fn mse_of_tanh_matmul_matches_finite_differences() {
    // loss = mse(tanh(W·x), t) with W 3×3
    let mut r = rng(11);
    let w = random_tensor(&[3, 3], &mut r);
    let x = random_tensor(&[3, 1], &mut r);
    let t = random_tensor(&[3, 1], &mut r);
    let t = t.cast::<f64>();
    let report = finite_diff_check(
        &[w.cast::<f64>(), x.cast::<f64>()],
        |g, v| {
            let wx = g.matmul(v[0], v[1])?;
            let y = g.tanh(wx);
            let target = g.leaf(t.clone());
            g.mse_loss(y, target)
        },
        FiniteDiffConfig { step: 1e-3, tolerance: 1e-4, ..Default::default() },
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn gradient_check_reports_a_wrong_gradient() {
    // relu at a kink: analytic 0 vs numeric 0.5
    let report = finite_diff_check(
        &[Tensor::new(&[2], vec![0.0f32, 1.0]).unwrap()],
        |g, v| Ok(g.relu(v[0])),
        FiniteDiffConfig::default(),
    )
    .unwrap();
    assert!(!report.passed());
    assert_eq!(report.failures[0].index, 0);
}

#[test]
fn forward_backward_is_bit_identical() {
    let run = || {
        let mut r = rng(21);
        let mut g = Graph::new();
        let x = g.leaf(random_tensor(&[2, 3, 8, 8], &mut r));
        let k = g.leaf(random_tensor(&[4, 3, 3, 3], &mut r).with_grad());
        let b = g.leaf(random_tensor(&[4], &mut r).with_grad());
        let y = g.conv2d(x, k, b, 1, 1).unwrap();
        let p = g.maxpool2d(y, 2, 2).unwrap();
        let a = g.tanh(p);
        let s = g.sum(a);
        let grads = g.backward(s).unwrap();
        (g.value(a).to_le_bytes(), grads.get(k).unwrap().to_le_bytes(), grads.get(b).unwrap().to_le_bytes())
    };
    assert_eq!(run(), run());
}

#[test]
fn channel_affine_scales_each_channel() {
    let x: Vec<f32> = (0..24).map(|i| i as f32 * 0.5 - 3.0).collect();
    let (mut g, v) = graph_with(&[Tensor::new(&[2, 3, 2, 2], x.clone()).unwrap()]);
    let (scale, shift) = ([2.0, -1.0, 0.25], [1.0, 0.5, -4.0]);
    let y = g.channel_affine(v[0], &scale, &shift).unwrap();
    let mut expected = Vec::new();
    for n in 0..2 {
        for c in 0..3 {
            for p in 0..4 {
                let xi = x[(n * 3 + c) * 4 + p] as f64;
                expected.push(xi * scale[c] as f64 + shift[c] as f64);
            }
        }
    }
    assert_close(g.value(y).data(), &expected, 1e-6);
    assert!(matches!(g.channel_affine(v[0], &scale[..2], &shift[..2]), Err(Error::Dimension(_))));
}

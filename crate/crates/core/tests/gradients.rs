mod common;

use common::*;
use ndarray::{Array2, Array3, ArrayView3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use timehut::data::CropPair;
use timehut::encoder::{Encoder, EncoderConfig, MaskMode};
use timehut::losses::{self, LossConfig};

fn rebuild(shape: (usize, usize, usize), v: &[f64]) -> Array3<f64> {
    Array3::from_shape_vec(shape, v.to_vec()).unwrap()
}

type GradFn = fn(ArrayView3<'_, f64>, ArrayView3<'_, f64>) -> (f64, Array3<f64>, Array3<f64>);

fn check_embedding_grads(name: &str, shape: (usize, usize, usize), seed: u64, f: GradFn) {
    let z1 = random_tensor(shape, seed);
    let z2 = random_tensor(shape, seed + 1);
    let (_, g1, g2) = f(z1.view(), z2.view());
    let n1 = central_diff(z1.as_slice().unwrap(), 1e-5, |v| {
        f(rebuild(shape, v).view(), z2.view()).0
    });
    let n2 = central_diff(z2.as_slice().unwrap(), 1e-5, |v| {
        f(z1.view(), rebuild(shape, v).view()).0
    });
    let e1 = relative_error(g1.as_slice().unwrap(), &n1);
    let e2 = relative_error(g2.as_slice().unwrap(), &n2);
    assert!(
        e1 < 1e-4 && e2 < 1e-4,
        "{name}: rel err z1={e1:e} z2={e2:e}"
    );
}

#[test]
fn softmax_term_gradients() {
    check_embedding_grads("temporal", (2, 5, 3), 1, |a, b| {
        let l = losses::temporal_contrastive_with_grad(a, b, 0.7).unwrap();
        (l.value, l.grad_z1, l.grad_z2)
    });
    check_embedding_grads("instance", (4, 3, 3), 2, |a, b| {
        let l = losses::instance_contrastive_with_grad(a, b, 0.4).unwrap();
        (l.value, l.grad_z1, l.grad_z2)
    });
}

#[test]
fn angular_term_gradients() {
    check_embedding_grads("temporal angular", (2, 5, 3), 3, |a, b| {
        let l = losses::temporal_angular_with_grad(a, b, 1.2).unwrap();
        (l.value, l.grad_z1, l.grad_z2)
    });
    check_embedding_grads("instance angular", (4, 3, 3), 4, |a, b| {
        let l = losses::instance_angular_with_grad(a, b, 1.2).unwrap();
        (l.value, l.grad_z1, l.grad_z2)
    });
}

#[test]
fn hierarchical_gradients() {
    check_embedding_grads("hier sched", (3, 7, 4), 5, |a, b| {
        let l = losses::hierarchical_sched_overlap(a, b, 0.5).unwrap();
        (l.value, l.grad_z1, l.grad_z2)
    });
    check_embedding_grads("hier angular", (3, 7, 4), 6, |a, b| {
        let cfg = LossConfig {
            m_a: 1.1,
            c_i: 0.8,
            c_t: 1.7,
            ..LossConfig::default()
        };
        let l = losses::hierarchical_angular_overlap(a, b, &cfg).unwrap();
        (l.value, l.grad_z1, l.grad_z2)
    });
}

#[test]
fn total_loss_gradient_through_crops() {
    let crop = CropPair::new(1, 6, 3, 8).unwrap();
    let cfg = LossConfig::default();
    let s1 = (2, crop.len1(), 3);
    let s2 = (2, crop.len2(), 3);
    let z1 = random_tensor(s1, 7);
    let z2 = random_tensor(s2, 8);
    let t = losses::total_loss(z1.view(), z2.view(), &crop, 0.6, &cfg).unwrap();
    let n1 = central_diff(z1.as_slice().unwrap(), 1e-5, |v| {
        losses::total_loss(rebuild(s1, v).view(), z2.view(), &crop, 0.6, &cfg)
            .unwrap()
            .total
    });
    let n2 = central_diff(z2.as_slice().unwrap(), 1e-5, |v| {
        losses::total_loss(z1.view(), rebuild(s2, v).view(), &crop, 0.6, &cfg)
            .unwrap()
            .total
    });
    assert!(relative_error(t.grad_z1.as_slice().unwrap(), &n1) < 1e-4);
    assert!(relative_error(t.grad_z2.as_slice().unwrap(), &n2) < 1e-4);
}

fn encoder_loss(
    enc: &Encoder,
    x1: &Array3<f64>,
    x2: &Array3<f64>,
    k1: &Array2<bool>,
    k2: &Array2<bool>,
    crop: &CropPair,
) -> f64 {
    let (z1, _) = enc.forward_with_mask(x1.view(), k1).unwrap();
    let (z2, _) = enc.forward_with_mask(x2.view(), k2).unwrap();
    losses::total_loss(z1.view(), z2.view(), crop, 0.5, &LossConfig::default())
        .unwrap()
        .total
}

#[test]
fn encoder_parameter_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = EncoderConfig {
        input_dims: 2,
        hidden_dims: 6,
        output_dims: 5,
        depth: 2,
        mask_mode: MaskMode::Binomial,
    };
    let mut enc = Encoder::new(cfg, &mut rng).unwrap();
    let crop = CropPair::new(0, 7, 2, 10).unwrap();
    let x = random_tensor((2, 10, 2), 12);
    let x1 = x.slice(ndarray::s![.., 0..7, ..]).to_owned();
    let x2 = x.slice(ndarray::s![.., 2..10, ..]).to_owned();
    let k1 = timehut::encoder::generate_batch_mask(2, 7, MaskMode::Binomial, &mut rng).unwrap();
    let k2 = timehut::encoder::generate_batch_mask(2, 8, MaskMode::Binomial, &mut rng).unwrap();

    let (z1, c1) = enc.forward_with_mask(x1.view(), &k1).unwrap();
    let (z2, c2) = enc.forward_with_mask(x2.view(), &k2).unwrap();
    let t = losses::total_loss(z1.view(), z2.view(), &crop, 0.5, &LossConfig::default()).unwrap();
    let mut grad = enc.zeros_like();
    enc.backward(&c1, t.grad_z1.view(), &mut grad).unwrap();
    enc.backward(&c2, t.grad_z2.view(), &mut grad).unwrap();
    let analytic: Vec<Vec<f64>> = grad.tensors().into_iter().map(<[f64]>::to_vec).collect();

    let h = 1e-4;
    for (ti, ga) in analytic.iter().enumerate() {
        let mut numeric = Vec::with_capacity(ga.len());
        for k in 0..ga.len() {
            let orig = enc.tensors()[ti][k];
            enc.tensors_mut()[ti][k] = orig + h;
            let up = encoder_loss(&enc, &x1, &x2, &k1, &k2, &crop);
            enc.tensors_mut()[ti][k] = orig - h;
            let down = encoder_loss(&enc, &x1, &x2, &k1, &k2, &crop);
            enc.tensors_mut()[ti][k] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
        let err = relative_error(ga, &numeric);
        assert!(err < 1e-3, "tensor {ti}: rel err {err:e}");
    }
}

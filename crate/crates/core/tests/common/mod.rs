//! Test-only reference implementations. These evaluate every loss index by index
//! straight from its definition and share no code with the library kernels.

#![allow(dead_code)]

use ndarray::{Array, Array3, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn dot(z: &ArrayView3<f64>, i: usize, t: usize, w: &ArrayView3<f64>, j: usize, u: usize) -> f64 {
    let m = z.dim().2;
    (0..m).map(|c| z[[i, t, c]] * w[[j, u, c]]).sum()
}

fn cosine(z: &ArrayView3<f64>, i: usize, t: usize, w: &ArrayView3<f64>, j: usize, u: usize) -> f64 {
    let d = dot(z, i, t, w, j, u);
    let n1 = dot(z, i, t, z, i, t).sqrt();
    let n2 = dot(w, j, u, w, j, u).sqrt();
    d / (n1 * n2)
}

fn angle(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos()
}

fn hinge_sq(m: f64, theta: f64) -> f64 {
    let h = (m - theta).max(0.0);
    h * h
}

pub fn naive_temporal(z1: ArrayView3<f64>, z2: ArrayView3<f64>, tau: f64) -> f64 {
    let (b, t, _) = z1.dim();
    let mut total = 0.0;
    for i in 0..b {
        for s in 0..t {
            let num = (dot(&z1, i, s, &z2, i, s) / tau).exp();
            let mut den = 0.0;
            for u in 0..t {
                den += (dot(&z1, i, s, &z2, i, u) / tau).exp();
                if u != s {
                    den += (dot(&z1, i, s, &z1, i, u) / tau).exp();
                }
            }
            total += -(num / den).ln();
        }
    }
    total / (b * t) as f64
}

pub fn naive_instance(z1: ArrayView3<f64>, z2: ArrayView3<f64>, tau: f64) -> f64 {
    let (b, t, _) = z1.dim();
    let mut total = 0.0;
    for i in 0..b {
        for s in 0..t {
            let num = (dot(&z1, i, s, &z2, i, s) / tau).exp();
            let mut den = 0.0;
            for j in 0..b {
                den += (dot(&z1, i, s, &z2, j, s) / tau).exp();
                if j != i {
                    den += (dot(&z1, i, s, &z1, j, s) / tau).exp();
                }
            }
            total += -(num / den).ln();
        }
    }
    total / (b * t) as f64
}

pub fn naive_temporal_angular(z1: ArrayView3<f64>, z2: ArrayView3<f64>, m: f64) -> f64 {
    let (b, t, _) = z1.dim();
    let mut total = 0.0;
    for i in 0..b {
        for s in 0..t {
            let pos = angle(cosine(&z1, i, s, &z2, i, s)).powi(2);
            let mut negs = Vec::new();
            for u in 0..t {
                if u != s {
                    negs.push(hinge_sq(m, angle(cosine(&z1, i, s, &z2, i, u))));
                    negs.push(hinge_sq(m, angle(cosine(&z1, i, s, &z1, i, u))));
                }
            }
            let neg = if negs.is_empty() {
                0.0
            } else {
                negs.iter().sum::<f64>() / negs.len() as f64
            };
            total += pos + neg;
        }
    }
    total / (b * t) as f64
}

pub fn naive_instance_angular(z1: ArrayView3<f64>, z2: ArrayView3<f64>, m: f64) -> f64 {
    let (b, t, _) = z1.dim();
    let mut total = 0.0;
    for i in 0..b {
        for s in 0..t {
            let pos = angle(cosine(&z1, i, s, &z2, i, s)).powi(2);
            let mut negs = Vec::new();
            for j in 0..b {
                if j != i {
                    negs.push(hinge_sq(m, angle(cosine(&z1, i, s, &z1, j, s))));
                    negs.push(hinge_sq(m, angle(cosine(&z1, i, s, &z2, j, s))));
                }
            }
            let neg = if negs.is_empty() {
                0.0
            } else {
                negs.iter().sum::<f64>() / negs.len() as f64
            };
            total += pos + neg;
        }
    }
    total / (b * t) as f64
}

/// All max-pooled levels, materialised one by one.
pub fn explicit_levels(z: ArrayView3<f64>) -> Vec<Array3<f64>> {
    let mut levels = vec![z.to_owned()];
    loop {
        let cur = levels.last().unwrap();
        let (b, t, m) = cur.dim();
        if t <= 1 {
            break;
        }
        let mut next = Array3::zeros((b, t / 2, m));
        for i in 0..b {
            for k in 0..t / 2 {
                for c in 0..m {
                    next[[i, k, c]] = cur[[i, 2 * k, c]].max(cur[[i, 2 * k + 1, c]]);
                }
            }
        }
        levels.push(next);
    }
    levels
}

pub fn naive_hier_sched(z1: ArrayView3<f64>, z2: ArrayView3<f64>, tau: f64) -> f64 {
    let l1 = explicit_levels(z1);
    let l2 = explicit_levels(z2);
    let mut total = 0.0;
    for (a, b) in l1.iter().zip(&l2) {
        total += naive_instance(a.view(), b.view(), tau);
        if a.dim().1 > 1 {
            total += naive_temporal(a.view(), b.view(), tau);
        }
    }
    total / l1.len() as f64
}

pub fn naive_hier_angular(
    z1: ArrayView3<f64>,
    z2: ArrayView3<f64>,
    m: f64,
    c_i: f64,
    c_t: f64,
) -> f64 {
    let l1 = explicit_levels(z1);
    let l2 = explicit_levels(z2);
    let mut total = 0.0;
    for (a, b) in l1.iter().zip(&l2) {
        total += c_i * naive_instance_angular(a.view(), b.view(), m);
        if a.dim().1 > 1 {
            total += c_t * naive_temporal_angular(a.view(), b.view(), m);
        }
    }
    total / l1.len() as f64
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = probe[k];
            probe[k] = orig + h;
            let up = f(&probe);
            probe[k] = orig - h;
            let down = f(&probe);
            probe[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let den = na.max(nb);
    if den == 0.0 {
        0.0
    } else {
        diff / den
    }
}

//! Radial-basis-function support vector machine trained by SMO with
//! second-order working-set selection, on a precomputed kernel matrix.

use ndarray::{Array2, ArrayView1, ArrayView2};

const TAU: f64 = 1e-12;
const TOL: f64 = 1e-3;

/// `exp(-gamma · ‖a − b‖²)` for all row pairs.
pub fn rbf_kernel(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, gamma: f64) -> Array2<f64> {
    let na: Vec<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
    let nb: Vec<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut k = a.dot(&b.t());
    for ((i, j), v) in k.indexed_iter_mut() {
        let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
        *v = (-gamma * d2).exp();
    }
    k
}

/// Default kernel width `1 / (d · Var(X))` over every entry of `x`.
pub fn scale_gamma(x: ArrayView2<'_, f64>) -> f64 {
    let d = x.ncols().max(1) as f64;
    let n = x.len() as f64;
    if n == 0.0 {
        return 1.0;
    }
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (d * var)
    } else {
        1.0
    }
}

/// Dual solution of a binary soft-margin problem.
#[derive(Debug, Clone)]
pub struct BinarySvm {
    /// Indices into the kernel rows used for training.
    pub support: Vec<usize>,
    /// `alpha_i · y_i` for every entry of `support`.
    pub coef: Vec<f64>,
    pub rho: f64,
}

impl BinarySvm {
    /// Fit on the rows `idx` of the square kernel `k`, labels `y ∈ {−1, +1}`.
    pub fn fit(k: ArrayView2<'_, f64>, idx: &[usize], y: &[f64], c: f64) -> Self {
        let l = idx.len();
        let q = |i: usize, j: usize| y[i] * y[j] * k[[idx[i], idx[j]]];
        let qd: Vec<f64> = (0..l).map(|i| q(i, i)).collect();
        let mut alpha = vec![0.0; l];
        let mut g = vec![-1.0; l];
        let max_iter = (100 * l).max(10_000_000);
        let upper = |a: f64| a >= c;
        let lower = |a: f64| a <= 0.0;

        for _ in 0..max_iter {
            let mut gmax = f64::NEG_INFINITY;
            let mut i = usize::MAX;
            for t in 0..l {
                let v = if y[t] > 0.0 {
                    if upper(alpha[t]) {
                        continue;
                    } else {
                        -g[t]
                    }
                } else if lower(alpha[t]) {
                    continue;
                } else {
                    g[t]
                };
                if v >= gmax {
                    gmax = v;
                    i = t;
                }
            }
            if i == usize::MAX {
                break;
            }
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j = usize::MAX;
            let mut obj_min = f64::INFINITY;
            for t in 0..l {
                let (grad_diff, quad) = if y[t] > 0.0 {
                    if lower(alpha[t]) {
                        continue;
                    }
                    gmax2 = gmax2.max(g[t]);
                    (gmax + g[t], qd[i] + qd[t] - 2.0 * y[i] * q(i, t))
                } else {
                    if upper(alpha[t]) {
                        continue;
                    }
                    gmax2 = gmax2.max(-g[t]);
                    (gmax - g[t], qd[i] + qd[t] + 2.0 * y[i] * q(i, t))
                };
                if grad_diff > 0.0 {
                    let obj = -(grad_diff * grad_diff) / quad.max(TAU);
                    if obj <= obj_min {
                        obj_min = obj;
                        j = t;
                    }
                }
            }
            if gmax + gmax2 < TOL || j == usize::MAX {
                break;
            }

            let (old_i, old_j) = (alpha[i], alpha[j]);
            let qij = q(i, j);
            if y[i] != y[j] {
                let quad = (qd[i] + qd[j] + 2.0 * qij).max(TAU);
                let delta = (-g[i] - g[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let quad = (qd[i] + qd[j] - 2.0 * qij).max(TAU);
                let delta = (g[i] - g[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..l {
                g[t] += q(i, t) * di + q(j, t) * dj;
            }
        }

        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum_free) = (0usize, 0.0);
        for t in 0..l {
            let yg = y[t] * g[t];
            if upper(alpha[t]) {
                if y[t] < 0.0 {
                    ub = ub.min(yg)
                } else {
                    lb = lb.max(yg)
                }
            } else if lower(alpha[t]) {
                if y[t] > 0.0 {
                    ub = ub.min(yg)
                } else {
                    lb = lb.max(yg)
                }
            } else {
                free += 1;
                sum_free += yg;
            }
        }
        let rho = if free > 0 {
            sum_free / free as f64
        } else {
            (ub + lb) / 2.0
        };

        let (support, coef) = (0..l)
            .filter(|&t| alpha[t] > 0.0)
            .map(|t| (idx[t], alpha[t] * y[t]))
            .unzip();
        Self { support, coef, rho }
    }

    /// Decision value given one row of kernel values against the training rows.
    pub fn decision(&self, krow: ArrayView1<'_, f64>) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(&s, &c)| c * krow[s])
            .sum::<f64>()
            - self.rho
    }
}

//! Contrastive and angular-margin objectives over crop representations.
//!
//! Shapes are `B × T × M` throughout. The softmax losses use raw dot-product
//! similarity; the angular losses use cosine similarity. Every loss has a
//! `*_with_grad` variant returning analytic gradients w.r.t. both inputs.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::CropPair;
use crate::{Error, Result};

/// Clamp applied to cosine similarity before differentiating `arccos`.
pub const COS_EPS: f64 = 1e-7;
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Angular margin in radians, `(0, π/2]`.
    pub m_a: f64,
    /// Instance-wise angular coefficient.
    pub c_i: f64,
    /// Temporal angular coefficient.
    pub c_t: f64,
    pub enable_sched: bool,
    pub enable_angular: bool,
    /// Overrides the scheduled temperature when set.
    pub fixed_tau: Option<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            m_a: 0.5,
            c_i: 1.0,
            c_t: 1.0,
            enable_sched: true,
            enable_angular: true,
            fixed_tau: None,
        }
    }
}

impl LossConfig {
    /// Hierarchical contrastive loss at `τ = 1` with no angular term.
    pub fn baseline() -> Self {
        Self {
            enable_angular: false,
            fixed_tau: Some(1.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m_a > 0.0 && self.m_a <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config(format!(
                "m_a = {} outside (0, π/2]",
                self.m_a
            )));
        }
        if !(self.c_i >= 0.0 && self.c_t >= 0.0 && self.c_i.is_finite() && self.c_t.is_finite()) {
            return Err(Error::Config(
                "c_i and c_t must be finite and non-negative".into(),
            ));
        }
        if let Some(t) = self.fixed_tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("fixed_tau = {t} must be positive")));
            }
        }
        if !self.enable_sched && !self.enable_angular {
            return Err(Error::Config(
                "both loss terms disabled: no objective".into(),
            ));
        }
        Ok(())
    }

    /// Temperature actually used given the scheduled value.
    pub fn effective_tau(&self, scheduled: f64) -> f64 {
        self.fixed_tau.unwrap_or(scheduled)
    }
}

/// A scalar loss with gradients w.r.t. both representation tensors.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub grad_z1: Array3<f64>,
    pub grad_z2: Array3<f64>,
}

impl LossGrad {
    fn zeros(d1: (usize, usize, usize), d2: (usize, usize, usize)) -> Self {
        Self {
            value: 0.0,
            grad_z1: Array3::zeros(d1),
            grad_z2: Array3::zeros(d2),
        }
    }

    fn add_scaled(&mut self, other: &LossGrad, w: f64) {
        self.value += w * other.value;
        self.grad_z1.scaled_add(w, &other.grad_z1);
        self.grad_z2.scaled_add(w, &other.grad_z2);
    }
}

/// Breakdown returned by [`total_loss`].
#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub total: f64,
    pub sched: f64,
    pub angular: f64,
    pub grad_z1: Array3<f64>,
    pub grad_z2: Array3<f64>,
}

fn check_pair(z1: &ArrayView3<'_, f64>, z2: &ArrayView3<'_, f64>) -> Result<()> {
    if z1.dim() != z2.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", z1.dim(), z2.dim())));
    }
    let (b, t, m) = z1.dim();
    if b == 0 || t == 0 || m == 0 {
        return Err(Error::InvalidInput(format!(
            "empty representation {:?}",
            z1.dim()
        )));
    }
    if z1.iter().chain(z2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite representation".into()));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "temperature must be positive, got {tau}"
        )))
    }
}

/// Softmax contrast over rows: row `r` of `a` is the anchor, row `r` of `b` its
/// positive, every other row of `b` and of `a` a negative. Returns the summed
/// per-anchor loss and accumulates `scale ×` gradients into `ga`, `gb`.
fn contrast_rows(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    tau: f64,
    scale: f64,
    mut ga: ArrayViewMut2<'_, f64>,
    mut gb: ArrayViewMut2<'_, f64>,
) -> f64 {
    let n = a.nrows();
    let s_ab = a.dot(&b.t());
    let s_aa = a.dot(&a.t());
    let mut g_ab = Array2::<f64>::zeros((n, n));
    let mut g_aa = Array2::<f64>::zeros((n, n));
    let mut total = 0.0;
    for r in 0..n {
        let mut mx = f64::NEG_INFINITY;
        for c in 0..n {
            mx = mx.max(s_ab[[r, c]] / tau);
            if c != r {
                mx = mx.max(s_aa[[r, c]] / tau);
            }
        }
        let mut z = 0.0;
        for c in 0..n {
            z += (s_ab[[r, c]] / tau - mx).exp();
            if c != r {
                z += (s_aa[[r, c]] / tau - mx).exp();
            }
        }
        let lse = mx + z.ln();
        total += lse - s_ab[[r, r]] / tau;
        for c in 0..n {
            let p = (s_ab[[r, c]] / tau - lse).exp();
            g_ab[[r, c]] = scale * (p - if c == r { 1.0 } else { 0.0 }) / tau;
            if c != r {
                g_aa[[r, c]] = scale * (s_aa[[r, c]] / tau - lse).exp() / tau;
            }
        }
    }
    // s_ab = a bᵀ, s_aa = a aᵀ
    ga += &g_ab.dot(&b);
    ga += &(&g_aa + &g_aa.t()).dot(&a);
    gb += &g_ab.t().dot(&a);
    total
}

fn row_norms(x: ArrayView2<'_, f64>) -> Array1<f64> {
    x.rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt().max(NORM_EPS))
        .collect()
}

fn normalized(x: ArrayView2<'_, f64>, norms: &Array1<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for (mut r, n) in out.rows_mut().into_iter().zip(norms) {
        r /= *n;
    }
    out
}

/// `arccos` of a cosine, with the value taken on `[-1, 1]` and the derivative
/// evaluated at the `COS_EPS`-clamped point.
#[inline]
pub fn angle_and_slope(c: f64) -> (f64, f64) {
    let theta = c.clamp(-1.0, 1.0).acos();
    let ce = c.clamp(-1.0 + COS_EPS, 1.0 - COS_EPS);
    (theta, -1.0 / (1.0 - ce * ce).sqrt())
}

/// Angular-margin loss over rows. Per anchor `r`: `θ(a_r, b_r)²` plus the mean of
/// `max(0, m − θ)²` over negatives `b_c` and `a_c`, `c ≠ r`.
fn angular_rows(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    margin: f64,
    scale: f64,
    mut ga: ArrayViewMut2<'_, f64>,
    mut gb: ArrayViewMut2<'_, f64>,
) -> f64 {
    let n = a.nrows();
    let na = row_norms(a);
    let nb = row_norms(b);
    let ah = normalized(a, &na);
    let bh = normalized(b, &nb);
    let c_ab = ah.dot(&bh.t());
    let c_aa = ah.dot(&ah.t());
    // dL/dc for each cosine entry
    let mut g_ab = Array2::<f64>::zeros((n, n));
    let mut g_aa = Array2::<f64>::zeros((n, n));
    let neg_w = if n > 1 {
        1.0 / (2 * (n - 1)) as f64
    } else {
        0.0
    };
    let mut total = 0.0;
    for r in 0..n {
        let (theta, slope) = angle_and_slope(c_ab[[r, r]]);
        total += theta * theta;
        g_ab[[r, r]] = scale * 2.0 * theta * slope;
        for c in (0..n).filter(|&c| c != r) {
            for (cos, g) in [
                (c_ab[[r, c]], &mut g_ab[[r, c]]),
                (c_aa[[r, c]], &mut g_aa[[r, c]]),
            ] {
                let (theta, slope) = angle_and_slope(cos);
                let h = (margin - theta).max(0.0);
                total += neg_w * h * h;
                *g = scale * neg_w * (-2.0 * h * slope);
            }
        }
    }
    // dc/da_r = (b̂_c − c â_r) / |a_r|, and symmetrically for b.
    let rows_ab = (&g_ab * &c_ab).sum_axis(Axis(1));
    let cols_ab = (&g_ab * &c_ab).sum_axis(Axis(0));
    let h_aa = &g_aa + &g_aa.t();
    let rows_aa = (&h_aa * &c_aa).sum_axis(Axis(1));
    let mut da = g_ab.dot(&bh) + h_aa.dot(&ah);
    let mut db = g_ab.t().dot(&ah);
    for r in 0..n {
        let mut row = da.row_mut(r);
        row.scaled_add(-(rows_ab[r] + rows_aa[r]), &ah.row(r));
        row /= na[r];
        let mut row = db.row_mut(r);
        row.scaled_add(-cols_ab[r], &bh.row(r));
        row /= nb[r];
    }
    ga += &da;
    gb += &db;
    total
}

#[derive(Clone, Copy)]
enum Contrast {
    /// Rows are timestamps of one sample.
    Temporal,
    /// Rows are samples at one timestamp.
    Instance,
}

fn apply_rows<F>(
    z1: ArrayView3<'_, f64>,
    z2: ArrayView3<'_, f64>,
    axis: Contrast,
    mut f: F,
) -> LossGrad
where
    F: FnMut(
        ArrayView2<'_, f64>,
        ArrayView2<'_, f64>,
        f64,
        ArrayViewMut2<'_, f64>,
        ArrayViewMut2<'_, f64>,
    ) -> f64,
{
    let (b, t, _) = z1.dim();
    let scale = 1.0 / (b * t) as f64;
    let mut out = LossGrad::zeros(z1.dim(), z2.dim());
    let ax = match axis {
        Contrast::Temporal => Axis(0),
        Contrast::Instance => Axis(1),
    };
    let mut sum = 0.0;
    for (((a, bb), ga), gb) in z1
        .axis_iter(ax)
        .zip(z2.axis_iter(ax))
        .zip(out.grad_z1.axis_iter_mut(ax))
        .zip(out.grad_z2.axis_iter_mut(ax))
    {
        sum += f(a, bb, scale, ga, gb);
    }
    out.value = sum * scale;
    out
}

pub fn temporal_contrastive_with_grad(
    z1: ArrayView3<'_, f64>,
    z2: ArrayView3<'_, f64>,
    tau: f64,
) -> Result<LossGrad> {
    check_pair(&z1, &z2)?;
    check_tau(tau)?;
    Ok(apply_rows(
        z1,
        z2,
        Contrast::Temporal,
        |a, b, sc, ga, gb| contrast_rows(a, b, tau, sc, ga, gb),
    ))
}

pub fn instance_contrastive_with_grad(
    z1: ArrayView3<'_, f64>,
    z2: ArrayView3<'_, f64>,
    tau: f64,
) -> Result<LossGrad> {
    check_pair(&z1, &z2)?;
    check_tau(tau)?;
    Ok(apply_rows(
        z1,
        z2,
        Contrast::Instance,
        |a, b, sc, ga, gb| contrast_rows(a, b, tau, sc, ga, gb),
    ))
}

fn check_margin(m: f64) -> Result<()> {
    if m > 0.0 && m <= std::f64::consts::FRAC_PI_2 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("margin {m} outside (0, π/2]")))
    }
}

pub fn temporal_angular_with_grad(
    z1: ArrayView3<'_, f64>,
    z2: ArrayView3<'_, f64>,
    m_a: f64,
) -> Result<LossGrad> {
    check_pair(&z1, &z2)?;
    check_margin(m_a)?;
    Ok(apply_rows(
        z1,
        z2,
        Contrast::Temporal,
        |a, b, sc, ga, gb| angular_rows(a, b, m_a, sc, ga, gb),
    ))
}

pub fn instance_angular_with_grad(
    z1: ArrayView3<'_, f64>,
    z2: ArrayView3<'_, f64>,
    m_a: f64,
) -> Result<LossGrad> {
    check_pair(&z1, &z2)?;
    check_margin(m_a)?;
    Ok(apply_rows(
        z1,
        z2,
        Contrast::Instance,
        |a, b, sc, ga, gb| angular_rows(a, b, m_a, sc, ga, gb),
    ))
}

/// Temporal softmax contrast on overlap slices `z1`, `z2` (`B × T_ov × M`).
pub fn temporal_contrastive(
    z1: ArrayView3<'_, f64>,
    z2: ArrayView3<'_, f64>,
    tau: f64,
) -> Result<f64> {
    temporal_contrastive_with_grad(z1, z2, tau).map(|l| l.value)
}

/// Instance-wise softmax contrast on overlap slices.
pub fn instance_contrastive(
    z1: ArrayView3<'_, f64>,
    z2: ArrayView3<'_, f64>,
    tau: f64,
) -> Result<f64> {
    instance_contrastive_with_grad(z1, z2, tau).map(|l| l.value)
}

/// Temporal angular-margin loss on overlap slices.
pub fn temporal_angular(z1: ArrayView3<'_, f64>, z2: ArrayView3<'_, f64>, m_a: f64) -> Result<f64> {
    temporal_angular_with_grad(z1, z2, m_a).map(|l| l.value)
}

/// Instance-wise angular-margin loss on overlap slices.
pub fn instance_angular(z1: ArrayView3<'_, f64>, z2: ArrayView3<'_, f64>, m_a: f64) -> Result<f64> {
    instance_angular_with_grad(z1, z2, m_a).map(|l| l.value)
}

/// Max-pool along time with kernel 2, stride 2 (a trailing odd element is dropped).
/// Returns the pooled tensor and, per output cell, the source time index.
pub fn max_pool_time(z: ArrayView3<'_, f64>) -> (Array3<f64>, Array3<usize>) {
    let (b, t, m) = z.dim();
    let tp = t / 2;
    let mut out = Array3::zeros((b, tp, m));
    let mut arg = Array3::zeros((b, tp, m));
    for i in 0..b {
        for k in 0..tp {
            for c in 0..m {
                let (x0, x1) = (z[[i, 2 * k, c]], z[[i, 2 * k + 1, c]]);
                // Ties route to the first element.
                if x1 > x0 {
                    out[[i, k, c]] = x1;
                    arg[[i, k, c]] = 2 * k + 1;
                } else {
                    out[[i, k, c]] = x0;
                    arg[[i, k, c]] = 2 * k;
                }
            }
        }
    }
    (out, arg)
}

fn unpool(grad: &Array3<f64>, arg: &Array3<usize>, t_prev: usize) -> Array3<f64> {
    let (b, tp, m) = grad.dim();
    let mut out = Array3::zeros((b, t_prev, m));
    for i in 0..b {
        for k in 0..tp {
            for c in 0..m {
                out[[i, arg[[i, k, c]], c]] += grad[[i, k, c]];
            }
        }
    }
    out
}

/// Number of pyramid levels for an overlap of length `t`.
pub fn num_levels(t: usize) -> usize {
    let mut n = 1;
    let mut t = t;
    while t > 1 {
        t /= 2;
        n += 1;
    }
    n
}

/// Evaluate `level_fn` on every max-pooled level of `(z1, z2)` and average.
/// `level_fn` receives the level tensors and whether the level has length one.
fn pyramid<F>(z1: Array3<f64>, z2: Array3<f64>, mut level_fn: F) -> Result<LossGrad>
where
    F: FnMut(ArrayView3<'_, f64>, ArrayView3<'_, f64>, bool) -> Result<LossGrad>,
{
    let mut levels: Vec<(Array3<f64>, Array3<f64>)> = vec![(z1, z2)];
    let mut args: Vec<(Array3<usize>, Array3<usize>)> = Vec::new();
    while levels.last().expect("non-empty").0.len_of(Axis(1)) > 1 {
        let (a, b) = levels.last().expect("non-empty");
        let (pa, ia) = max_pool_time(a.view());
        let (pb, ib) = max_pool_time(b.view());
        levels.push((pa, pb));
        args.push((ia, ib));
    }
    let n_levels = levels.len() as f64;
    let mut value = 0.0;
    let mut carry: Option<(Array3<f64>, Array3<f64>)> = None;
    for d in (0..levels.len()).rev() {
        let (a, b) = &levels[d];
        let last = a.len_of(Axis(1)) == 1;
        let lg = level_fn(a.view(), b.view(), last)?;
        value += lg.value;
        let (mut g1, mut g2) = (lg.grad_z1, lg.grad_z2);
        if let Some((c1, c2)) = carry.take() {
            g1 += &c1;
            g2 += &c2;
        }
        if d > 0 {
            let (ia, ib) = &args[d - 1];
            let t_prev = levels[d - 1].0.len_of(Axis(1));
            carry = Some((unpool(&g1, ia, t_prev), unpool(&g2, ib, t_prev)));
        } else {
            carry = Some((g1, g2));
        }
    }
    let (mut g1, mut g2) = carry.expect("at least one level");
    g1 /= n_levels;
    g2 /= n_levels;
    Ok(LossGrad {
        value: value / n_levels,
        grad_z1: g1,
        grad_z2: g2,
    })
}

fn overlap_slices(
    z1_full: ArrayView3<'_, f64>,
    z2_full: ArrayView3<'_, f64>,
    crop: &CropPair,
) -> Result<(Array3<f64>, Array3<f64>)> {
    if crop.overlap_len() == 0 || crop.a2 >= crop.b1 {
        return Err(Error::InvalidInput("empty crop overlap".into()));
    }
    if z1_full.len_of(Axis(1)) != crop.len1() || z2_full.len_of(Axis(1)) != crop.len2() {
        return Err(Error::Shape(format!(
            "crop lengths ({}, {}) vs representations ({}, {})",
            crop.len1(),
            crop.len2(),
            z1_full.len_of(Axis(1)),
            z2_full.len_of(Axis(1))
        )));
    }
    let r1 = crop.overlap_in_first();
    let r2 = crop.overlap_in_second();
    Ok((
        z1_full.slice(s![.., r1, ..]).to_owned(),
        z2_full.slice(s![.., r2, ..]).to_owned(),
    ))
}

/// Scatter overlap gradients back into full-crop gradient tensors.
fn embed_grads(
    lg: LossGrad,
    z1_dim: (usize, usize, usize),
    z2_dim: (usize, usize, usize),
    crop: &CropPair,
) -> LossGrad {
    let mut g1 = Array3::zeros(z1_dim);
    let mut g2 = Array3::zeros(z2_dim);
    g1.slice_mut(s![.., crop.overlap_in_first(), ..])
        .assign(&lg.grad_z1);
    g2.slice_mut(s![.., crop.overlap_in_second(), ..])
        .assign(&lg.grad_z2);
    LossGrad {
        value: lg.value,
        grad_z1: g1,
        grad_z2: g2,
    }
}

/// Pyramid of temporal + instance softmax contrast on overlap slices.
pub fn hierarchical_sched_overlap(
    z1: ArrayView3<'_, f64>,
    z2: ArrayView3<'_, f64>,
    tau: f64,
) -> Result<LossGrad> {
    check_pair(&z1, &z2)?;
    check_tau(tau)?;
    pyramid(z1.to_owned(), z2.to_owned(), |a, b, last| {
        let mut lg = instance_contrastive_with_grad(a, b, tau)?;
        if !last {
            let t = temporal_contrastive_with_grad(a, b, tau)?;
            lg.add_scaled(&t, 1.0);
        }
        Ok(lg)
    })
}

/// Pyramid of weighted temporal + instance angular losses on overlap slices.
pub fn hierarchical_angular_overlap(
    z1: ArrayView3<'_, f64>,
    z2: ArrayView3<'_, f64>,
    cfg: &LossConfig,
) -> Result<LossGrad> {
    check_pair(&z1, &z2)?;
    check_margin(cfg.m_a)?;
    pyramid(z1.to_owned(), z2.to_owned(), |a, b, last| {
        let mut lg = LossGrad::zeros(a.dim(), b.dim());
        if cfg.c_i != 0.0 {
            lg.add_scaled(&instance_angular_with_grad(a, b, cfg.m_a)?, cfg.c_i);
        }
        if !last && cfg.c_t != 0.0 {
            lg.add_scaled(&temporal_angular_with_grad(a, b, cfg.m_a)?, cfg.c_t);
        }
        Ok(lg)
    })
}

pub fn hierarchical_sched_loss_with_grad(
    z1_full: ArrayView3<'_, f64>,
    z2_full: ArrayView3<'_, f64>,
    crop: &CropPair,
    tau: f64,
) -> Result<LossGrad> {
    let (a, b) = overlap_slices(z1_full, z2_full, crop)?;
    let lg = hierarchical_sched_overlap(a.view(), b.view(), tau)?;
    Ok(embed_grads(lg, z1_full.dim(), z2_full.dim(), crop))
}

pub fn hierarchical_angular_loss_with_grad(
    z1_full: ArrayView3<'_, f64>,
    z2_full: ArrayView3<'_, f64>,
    crop: &CropPair,
    cfg: &LossConfig,
) -> Result<LossGrad> {
    let (a, b) = overlap_slices(z1_full, z2_full, crop)?;
    let lg = hierarchical_angular_overlap(a.view(), b.view(), cfg)?;
    Ok(embed_grads(lg, z1_full.dim(), z2_full.dim(), crop))
}

/// Scheduled hierarchical contrastive loss on full-crop representations.
pub fn hierarchical_sched_loss(
    z1_full: ArrayView3<'_, f64>,
    z2_full: ArrayView3<'_, f64>,
    crop: &CropPair,
    tau: f64,
) -> Result<f64> {
    hierarchical_sched_loss_with_grad(z1_full, z2_full, crop, tau).map(|l| l.value)
}

/// Hierarchical angular-margin loss on full-crop representations.
pub fn hierarchical_angular_loss(
    z1_full: ArrayView3<'_, f64>,
    z2_full: ArrayView3<'_, f64>,
    crop: &CropPair,
    cfg: &LossConfig,
) -> Result<f64> {
    hierarchical_angular_loss_with_grad(z1_full, z2_full, crop, cfg).map(|l| l.value)
}

/// Sum of the enabled hierarchical losses. `tau` is the scheduled temperature;
/// `cfg.fixed_tau` overrides it.
pub fn total_loss(
    z1_full: ArrayView3<'_, f64>,
    z2_full: ArrayView3<'_, f64>,
    crop: &CropPair,
    tau: f64,
    cfg: &LossConfig,
) -> Result<TotalLoss> {
    cfg.validate()?;
    let mut grad_z1 = Array3::zeros(z1_full.dim());
    let mut grad_z2 = Array3::zeros(z2_full.dim());
    let mut sched = 0.0;
    let mut angular = 0.0;
    if cfg.enable_sched {
        let lg = hierarchical_sched_loss_with_grad(z1_full, z2_full, crop, cfg.effective_tau(tau))?;
        sched = lg.value;
        grad_z1 += &lg.grad_z1;
        grad_z2 += &lg.grad_z2;
    }
    if cfg.enable_angular {
        let lg = hierarchical_angular_loss_with_grad(z1_full, z2_full, crop, cfg)?;
        angular = lg.value;
        grad_z1 += &lg.grad_z1;
        grad_z2 += &lg.grad_z2;
    }
    Ok(TotalLoss {
        total: sched + angular,
        sched,
        angular,
        grad_z1,
        grad_z2,
    })
}

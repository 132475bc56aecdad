//! Evaluation and differentiation of the input-dependent linear recurrence
//!
//! ```text
//! H_t = alpha_t * H_{t-1} + (1 - alpha_t) * x_t
//! ```
//!
//! Every (batch, channel) lane is an independent first-order affine
//! recurrence `h_t = a_t * h_{t-1} + b_t`. Affine maps compose associatively,
//!
//! ```text
//! (a1, b1) . (a2, b2) = (a1 * a2, a2 * b1 + b2)
//! ```
//!
//! which is what makes a parallel scan possible. [`scan_parallel`] uses a
//! two-stage (reduce, then propagate) scheme: each chunk of
//! [`CHUNK_LEN`] steps is reduced to a single affine map, the chunk maps are
//! combined with a work-efficient up-sweep/down-sweep exclusive scan, and
//! each chunk is then replayed from its carry-in. Chunks and lanes run on the
//! rayon pool; the reduction order is fixed, so results do not depend on the
//! number of workers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Time steps per chunk in the two-stage scan.
pub const CHUNK_LEN: usize = 256;

/// Paired `(alpha, x)` sequences plus the initial state.
#[derive(Clone, Debug)]
pub struct ScanProblem {
    pub alpha: Tensor,
    pub x: Tensor,
    /// `[B, C]` initial state.
    pub h0: Tensor,
}

impl ScanProblem {
    pub fn new(alpha: Tensor, x: Tensor) -> Result<Self> {
        let (b, c, _) = alpha.dims3()?;
        let h0 = Tensor::zeros(&[b, c]);
        Self::with_h0(alpha, x, h0)
    }

    pub fn with_h0(alpha: Tensor, x: Tensor, h0: Tensor) -> Result<Self> {
        let (b, c, _) = alpha.dims3()?;
        alpha.expect_same_shape(&x, "ScanProblem")?;
        if h0.shape() != [b, c] {
            return Err(Error::ShapeMismatch {
                op: "ScanProblem h0",
                lhs: vec![b, c],
                rhs: h0.shape().to_vec(),
            });
        }
        Ok(Self { alpha, x, h0 })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.alpha.dims3().expect("validated at construction")
    }

    /// Affine coefficients `(a_t, b_t) = (alpha_t, (1 - alpha_t) x_t)`.
    fn affine_inputs(&self) -> Vec<f64> {
        self.alpha
            .data()
            .iter()
            .zip(self.x.data())
            .map(|(&a, &x)| (1.0 - a) * x)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { a: 1.0, b: 0.0 };

    /// Apply `self` first, then `later`.
    #[inline]
    pub fn then(self, later: Affine) -> Affine {
        Affine {
            a: self.a * later.a,
            b: later.a * self.b + later.b,
        }
    }

    #[inline]
    pub fn apply(self, h: f64) -> f64 {
        self.a * h + self.b
    }
}

/// Left fold of one lane: `out[t] = a[t] * out[t-1] + b[t]`.
pub fn affine_fold(a: &[f64], b: &[f64], h0: f64, out: &mut [f64]) {
    let mut h = h0;
    for ((o, &at), &bt) in out.iter_mut().zip(a).zip(b) {
        h = at * h + bt;
        *o = h;
    }
}

/// In-place exclusive scan of affine maps (up-sweep / down-sweep).
///
/// After the call `maps[i]` is the composition of the original
/// `maps[0..i]`, with `maps[0]` the identity.
pub fn exclusive_affine_scan(maps: &mut Vec<Affine>) {
    let n = maps.len();
    if n == 0 {
        return;
    }
    let padded = n.next_power_of_two();
    maps.resize(padded, Affine::IDENTITY);

    let mut stride = 1;
    while stride < padded {
        let step = stride * 2;
        for right in (step - 1..padded).step_by(step) {
            let left = right - stride;
            maps[right] = maps[left].then(maps[right]);
        }
        stride = step;
    }

    maps[padded - 1] = Affine::IDENTITY;
    while stride > 1 {
        let half = stride / 2;
        for right in (stride - 1..padded).step_by(stride) {
            let left = right - half;
            let left_sum = maps[left];
            maps[left] = maps[right];
            maps[right] = maps[right].then(left_sum);
        }
        stride = half;
    }
    maps.truncate(n);
}

/// Two-stage parallel scan of one lane.
pub fn affine_scan_lane(a: &[f64], b: &[f64], h0: f64, out: &mut [f64]) {
    let t = a.len();
    if t <= CHUNK_LEN {
        affine_fold(a, b, h0, out);
        return;
    }

    let mut carries: Vec<Affine> = a
        .par_chunks(CHUNK_LEN)
        .zip(b.par_chunks(CHUNK_LEN))
        .map(|(ac, bc)| {
            ac.iter()
                .zip(bc)
                .fold(Affine::IDENTITY, |acc, (&a, &b)| acc.then(Affine { a, b }))
        })
        .collect();
    exclusive_affine_scan(&mut carries);

    out.par_chunks_mut(CHUNK_LEN)
        .zip(a.par_chunks(CHUNK_LEN))
        .zip(b.par_chunks(CHUNK_LEN))
        .zip(carries.par_iter())
        .for_each(|(((oc, ac), bc), carry)| affine_fold(ac, bc, carry.apply(h0), oc));
}

fn check_finite_output(h: Tensor) -> Result<Tensor> {
    h.check_finite("scan")
}

/// Reference left fold.
pub fn scan_serial(p: &ScanProblem) -> Result<Tensor> {
    let (bs, cs, t) = p.dims();
    let b = p.affine_inputs();
    let mut out = vec![0.0; bs * cs * t];
    for lane in 0..bs * cs {
        let r = lane * t..(lane + 1) * t;
        affine_fold(&p.alpha.data()[r.clone()], &b[r.clone()], p.h0.data()[lane], &mut out[r]);
    }
    check_finite_output(Tensor::new(&[bs, cs, t], out)?)
}

/// Chunked parallel scan, parallel over lanes and over time chunks.
pub fn scan_parallel(p: &ScanProblem) -> Result<Tensor> {
    let (bs, cs, t) = p.dims();
    let b = p.affine_inputs();
    let out = affine_scan(p.alpha.data(), &b, p.h0.data(), bs * cs, t);
    check_finite_output(Tensor::new(&[bs, cs, t], out)?)
}

/// Parallel scan of `lanes` independent affine recurrences of length `t`.
pub fn affine_scan(a: &[f64], b: &[f64], h0: &[f64], lanes: usize, t: usize) -> Vec<f64> {
    let mut out = vec![0.0; lanes * t];
    if t == 0 {
        return out;
    }
    out.par_chunks_mut(t)
        .zip(a.par_chunks(t))
        .zip(b.par_chunks(t))
        .zip(h0.par_iter())
        .for_each(|(((o, a), b), &h)| affine_scan_lane(a, b, h, o));
    out
}

#[derive(Clone, Debug)]
pub struct ScanGrads {
    pub d_alpha: Tensor,
    pub d_x: Tensor,
    pub d_h0: Tensor,
}

/// Reverse-mode gradients of [`scan_serial`] / [`scan_parallel`].
///
/// The adjoint `g_t = dH_t + alpha_{t+1} g_{t+1}` is itself an affine
/// recurrence run backwards in time, so it goes through the same parallel
/// scan.
pub fn scan_backward(p: &ScanProblem, h: &Tensor, dh: &Tensor) -> Result<ScanGrads> {
    let (bs, cs, t) = p.dims();
    p.alpha.expect_same_shape(h, "scan_backward H")?;
    p.alpha.expect_same_shape(dh, "scan_backward dH")?;
    let lanes = bs * cs;

    // Reverse-time coefficients: rev_a[s] = alpha[t - s] (s >= 1), rev_b[s] = dH[t - 1 - s].
    let mut rev_a = vec![0.0; lanes * t];
    let mut rev_b = vec![0.0; lanes * t];
    for lane in 0..lanes {
        let alpha = p.alpha.lane_by_index(lane, t);
        let g = &dh.data()[lane * t..(lane + 1) * t];
        let ra = &mut rev_a[lane * t..(lane + 1) * t];
        let rb = &mut rev_b[lane * t..(lane + 1) * t];
        for s in 0..t {
            rb[s] = g[t - 1 - s];
            ra[s] = if s == 0 { 0.0 } else { alpha[t - s] };
        }
    }
    let zeros = vec![0.0; lanes];
    let rev_g = affine_scan(&rev_a, &rev_b, &zeros, lanes, t);

    let mut d_alpha = vec![0.0; lanes * t];
    let mut d_x = vec![0.0; lanes * t];
    let mut d_h0 = vec![0.0; lanes];
    for lane in 0..lanes {
        let base = lane * t;
        let alpha = &p.alpha.data()[base..base + t];
        let x = &p.x.data()[base..base + t];
        let hs = &h.data()[base..base + t];
        let h0 = p.h0.data()[lane];
        for i in 0..t {
            let g = rev_g[base + t - 1 - i];
            let prev = if i == 0 { h0 } else { hs[i - 1] };
            d_alpha[base + i] = g * (prev - x[i]);
            d_x[base + i] = g * (1.0 - alpha[i]);
        }
        if t > 0 {
            d_h0[lane] = rev_g[base + t - 1] * alpha[0];
        }
    }
    Ok(ScanGrads {
        d_alpha: Tensor::new(&[bs, cs, t], d_alpha)?,
        d_x: Tensor::new(&[bs, cs, t], d_x)?,
        d_h0: Tensor::new(&[bs, cs], d_h0)?,
    })
}

impl Tensor {
    fn lane_by_index(&self, lane: usize, t: usize) -> &[f64] {
        &self.data()[lane * t..(lane + 1) * t]
    }
}

/// Limits under which the explicit matrix form is evaluated at all.
#[derive(Clone, Copy, Debug)]
pub struct MatrixGuard {
    /// Every alpha must lie in `[alpha_min, 1 - alpha_min]`.
    pub alpha_min: f64,
    pub max_len: usize,
}

impl Default for MatrixGuard {
    fn default() -> Self {
        Self {
            alpha_min: 0.05,
            max_len: 512,
        }
    }
}

/// Smallest `ln P_T` accepted; below this `1 / P` overflows f64.
const MIN_LOG_PREFIX_PRODUCT: f64 = -700.0;

impl MatrixGuard {
    fn check(&self, alpha: &Tensor) -> Result<()> {
        if self.alpha_min < 0.05 {
            return Err(Error::InvalidParameter(format!(
                "matrix guard alpha_min must be >= 0.05, got {}",
                self.alpha_min
            )));
        }
        let (_, _, t) = alpha.dims3()?;
        if t > self.max_len {
            return Err(Error::StabilityGuard(format!(
                "sequence length {t} exceeds {}",
                self.max_len
            )));
        }
        let (lo, hi) = (self.alpha_min, 1.0 - self.alpha_min);
        if let Some(&bad) = alpha.data().iter().find(|&&a| !(lo..=hi).contains(&a)) {
            return Err(Error::StabilityGuard(format!(
                "alpha = {bad} outside [{lo}, {hi}]"
            )));
        }
        for lane in alpha.data().chunks(t.max(1)) {
            let log_p: f64 = lane.iter().map(|a| a.ln()).sum();
            if log_p < MIN_LOG_PREFIX_PRODUCT {
                return Err(Error::StabilityGuard(format!(
                    "prefix product underflows (ln P = {log_p:.1})"
                )));
            }
        }
        Ok(())
    }
}

/// `T x T` weight matrix of one lane, built from the prefix products
/// `P_j = prod_{k<=j} alpha_k` as `W_ij = ((1 - alpha_i) / P_i) * P_j` for
/// `j >= i` and zero below the diagonal.
pub fn decay_matrix(alpha: &[f64]) -> Vec<f64> {
    let t = alpha.len();
    let mut prefix = Vec::with_capacity(t);
    let mut p = 1.0;
    for &a in alpha {
        p *= a;
        prefix.push(p);
    }
    let mut w = vec![0.0; t * t];
    for i in 0..t {
        let row_scale = (1.0 - alpha[i]) / prefix[i];
        for j in i..t {
            w[i * t + j] = row_scale * prefix[j];
        }
    }
    w
}

/// Closed-form `H = X W (+ P h0)`. Quantitatively unstable as `P` shrinks,
/// so it is refused outside [`MatrixGuard`]; use it as a cross-check only.
pub fn matrix_form(p: &ScanProblem) -> Result<Tensor> {
    matrix_form_guarded(p, MatrixGuard::default())
}

pub fn matrix_form_guarded(p: &ScanProblem, guard: MatrixGuard) -> Result<Tensor> {
    guard.check(&p.alpha)?;
    let (bs, cs, t) = p.dims();
    let mut out = vec![0.0; bs * cs * t];
    for lane in 0..bs * cs {
        let alpha = p.alpha.lane_by_index(lane, t);
        let x = p.x.lane_by_index(lane, t);
        let w = decay_matrix(alpha);
        let h = &mut out[lane * t..(lane + 1) * t];
        crate::numerics::tensor::matmul_into(x, &w, h, 1, t, t);
        let mut prefix = 1.0;
        let h0 = p.h0.data()[lane];
        for (hj, &a) in h.iter_mut().zip(alpha) {
            prefix *= a;
            *hj += prefix * h0;
        }
    }
    check_finite_output(Tensor::new(&[bs, cs, t], out)?)
}

//! Parallel spiking neurons: the membrane is a learnable linear map over
//! time, `H_i = sum_j W_ij x_j`, followed by a threshold.
//!
//! * `Full` uses a dense `T x T` matrix and sees the whole sequence, future
//!   included.
//! * `Masked { k }` keeps only the band `0 <= i - j < k` of a `T x T` matrix.
//! * `Sliding { k }` shares `k` weights across positions, i.e. a causal
//!   convolution, so it works for any length.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::surrogate::heaviside;
use crate::numerics::{SurrogateKind, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PsnKind {
    Full,
    Masked { k: usize },
    Sliding { k: usize },
}

impl PsnKind {
    pub fn label(&self) -> &'static str {
        match self {
            PsnKind::Full => "psn",
            PsnKind::Masked { .. } => "masked-psn",
            PsnKind::Sliding { .. } => "sliding-psn",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsnParams {
    pub kind: PsnKind,
    /// `[T, T]` for full and masked, `[k]` (tap `j` = lag `j`) for sliding.
    pub weight: Tensor,
    /// Sequence length the matrix was built for; `None` for sliding.
    pub t_train: Option<usize>,
}

impl PsnParams {
    /// Uniform `+-1/sqrt(fan_in)` weights. For the matrix variants the fan-in
    /// is `T` (full) or `k` (masked).
    pub fn init<R: Rng + ?Sized>(kind: PsnKind, t_train: usize, rng: &mut R) -> Result<Self> {
        match kind {
            PsnKind::Full | PsnKind::Masked { .. } => {
                let fan_in = match kind {
                    PsnKind::Masked { k } => k.min(t_train),
                    _ => t_train,
                };
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let data = (0..t_train * t_train).map(|_| rng.gen_range(-bound..bound)).collect();
                let p = Self {
                    kind,
                    weight: Tensor::new(&[t_train, t_train], data)?,
                    t_train: Some(t_train),
                };
                p.validate()?;
                Ok(p)
            }
            PsnKind::Sliding { k } => {
                let bound = 1.0 / (k.max(1) as f64).sqrt();
                let data = (0..k).map(|_| rng.gen_range(-bound..bound)).collect();
                Self::sliding(Tensor::new(&[k], data)?)
            }
        }
    }

    pub fn sliding(weight: Tensor) -> Result<Self> {
        let k = weight.len();
        let p = Self {
            kind: PsnKind::Sliding { k },
            weight,
            t_train: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn dense(kind: PsnKind, weight: Tensor) -> Result<Self> {
        let (t, _) = weight.dims2()?;
        let p = Self {
            kind,
            weight,
            t_train: Some(t),
        };
        p.validate()?;
        Ok(p)
    }

    /// Full PSN reads future inputs.
    pub fn non_causal(&self) -> bool {
        matches!(self.kind, PsnKind::Full)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PsnKind::Sliding { k } => {
                if k == 0 || self.weight.shape() != [k] {
                    return Err(Error::InvalidParameter(format!(
                        "sliding PSN needs k >= 1 weights, got shape {:?}",
                        self.weight.shape()
                    )));
                }
            }
            PsnKind::Full | PsnKind::Masked { .. } => {
                let (r, c) = self.weight.dims2()?;
                if r != c || Some(r) != self.t_train {
                    return Err(Error::InvalidParameter(format!(
                        "PSN weight must be [T, T] with T = t_train, got {:?}",
                        self.weight.shape()
                    )));
                }
                if let PsnKind::Masked { k: 0 } = self.kind {
                    return Err(Error::InvalidParameter("masked PSN needs k >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Band mask of the masked variant, all ones for full, `None` for sliding.
    pub fn mask(&self) -> Option<Tensor> {
        let t = self.t_train?;
        let keep = |i: usize, j: usize| match self.kind {
            PsnKind::Masked { k } => j <= i && i - j < k,
            _ => true,
        };
        let data = (0..t * t).map(|n| if keep(n / t, n % t) { 1.0 } else { 0.0 }).collect();
        Some(Tensor::new(&[t, t], data).expect("square"))
    }

    /// The matrix actually applied, mask included.
    pub fn effective_weight(&self) -> Option<Tensor> {
        let mask = self.mask()?;
        Some(self.weight.zip_map(&mask, "psn mask", |w, m| w * m).expect("same shape"))
    }

    fn check_length(&self, t: usize) -> Result<()> {
        match self.t_train {
            Some(expected) if expected != t => Err(Error::LengthMismatch { expected, got: t }),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PsnOutput {
    pub s: Tensor,
    pub h: Tensor,
}

/// Vectorised forward over a `[B, C, T]` input.
pub fn psn_forward(params: &PsnParams, x: &Tensor, v_th: f64, _sg: SurrogateKind) -> Result<PsnOutput> {
    params.validate()?;
    let (b, c, t) = x.dims3()?;
    params.check_length(t)?;
    let mut h = vec![0.0; b * c * t];
    match params.kind {
        PsnKind::Sliding { k } => {
            let w = params.weight.data();
            for (lane, out) in h.chunks_mut(t.max(1)).enumerate().take(b * c) {
                let xs = &x.data()[lane * t..(lane + 1) * t];
                for (ti, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (lag, &wj) in w.iter().enumerate().take(k.min(ti + 1)) {
                        acc += wj * xs[ti - lag];
                    }
                    *o = acc;
                }
            }
        }
        _ => {
            let w = params.effective_weight().expect("matrix variant");
            let wd = w.data();
            for (lane, out) in h.chunks_mut(t.max(1)).enumerate().take(b * c) {
                let xs = &x.data()[lane * t..(lane + 1) * t];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = wd[i * t..(i + 1) * t].iter().zip(xs).map(|(a, b)| a * b).sum();
                }
            }
        }
    }
    let h = Tensor::new(&[b, c, t], h)?.check_finite("psn_forward")?;
    let s = h.map(|v| heaviside(v - v_th));
    Ok(PsnOutput { s, h })
}

/// Tape handle for the learnable PSN weight.
#[derive(Clone, Copy, Debug)]
pub struct PsnVars {
    pub weight: Var,
}

impl PsnVars {
    pub fn register(tape: &mut Tape, params: &PsnParams) -> Self {
        Self {
            weight: tape.param(params.weight.clone()),
        }
    }
}

/// Differentiable forward returning `(S, H)`.
pub fn psn_forward_taped(
    tape: &mut Tape,
    params: &PsnParams,
    vars: &PsnVars,
    x: Var,
    v_th: f64,
    sg: SurrogateKind,
) -> Result<(Var, Var)> {
    params.validate()?;
    let (_, _, t) = tape.value(x).dims3()?;
    params.check_length(t)?;
    let h = match params.kind {
        PsnKind::Sliding { .. } => tape.shared_causal_conv(x, vars.weight)?,
        PsnKind::Full => tape.time_matmul(x, vars.weight)?,
        PsnKind::Masked { .. } => {
            let mask = tape.constant(params.mask().expect("matrix variant"));
            let w = tape.mul(vars.weight, mask)?;
            tape.time_matmul(x, w)?
        }
    };
    let s = tape.spike(h, v_th, sg)?;
    Ok((s, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(b: usize, c: usize, t: usize) -> Tensor {
        Tensor::new(&[b, c, t], (0..b * c * t).map(|i| ((i * 7 % 13) as f64) * 0.25 - 1.0).collect()).unwrap()
    }

    #[test]
    fn delta_kernel_thresholds_input() {
        let p = PsnParams::sliding(Tensor::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        let x = Tensor::new(&[1, 1, 5], vec![0.2, 1.0, 3.0, 0.99, -1.0]).unwrap();
        let out = psn_forward(&p, &x, 1.0, SurrogateKind::default()).unwrap();
        assert_eq!(out.s.data(), &[0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(out.h.data(), x.data());
    }

    #[test]
    fn full_psn_rejects_other_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = PsnParams::init(PsnKind::Full, 8, &mut rng).unwrap();
        let err = psn_forward(&p, &ramp(1, 1, 9), 1.0, SurrogateKind::default()).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 8, got: 9 }));
    }

    #[test]
    fn masked_covering_triangle_equals_lower_triangular_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = 6;
        let mut full = PsnParams::init(PsnKind::Full, t, &mut rng).unwrap();
        let masked = PsnParams::dense(PsnKind::Masked { k: t }, full.weight.clone()).unwrap();
        full.weight = masked.effective_weight().unwrap();
        let x = ramp(2, 3, t);
        let a = psn_forward(&full, &x, 0.5, SurrogateKind::default()).unwrap();
        let b = psn_forward(&masked, &x, 0.5, SurrogateKind::default()).unwrap();
        assert!(a.h.max_abs_diff(&b.h).unwrap() <= 1e-15);
        assert_eq!(a.s, b.s);
    }

    #[test]
    fn taped_matches_untracked() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = ramp(2, 2, 7);
        for kind in [PsnKind::Full, PsnKind::Masked { k: 3 }, PsnKind::Sliding { k: 3 }] {
            let p = PsnParams::init(kind, 7, &mut rng).unwrap();
            let reference = psn_forward(&p, &x, 0.3, SurrogateKind::default()).unwrap();
            let mut tape = Tape::new();
            let vars = PsnVars::register(&mut tape, &p);
            let xv = tape.constant(x.clone());
            let (s, h) = psn_forward_taped(&mut tape, &p, &vars, xv, 0.3, SurrogateKind::default()).unwrap();
            assert!(tape.value(h).max_abs_diff(&reference.h).unwrap() < 1e-12, "{kind:?}");
            assert_eq!(tape.value(s), &reference.s);
        }
    }
}

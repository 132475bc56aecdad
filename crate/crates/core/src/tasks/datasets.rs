//! Synthetic input signals for the approximation study.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{heaviside, sigmoid, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SignalKind {
    Normal { mu: f64, sigma: f64 },
    /// `a sin(w x) + b` with `w = 2 pi (c - 1) / (T - 1)`.
    Sine { a: f64, b: f64, c: f64 },
    /// `a * sigmoid(20 x / (T - 1) - 10 + b)`.
    Sigmoid { a: f64, b: f64 },
    /// `a * Theta(x - b)`.
    Step { a: f64, b: f64 },
    /// `a * Theta(u - p0)` with `u` uniform on `[0, 1)`.
    Poisson { a: f64, p0: f64 },
}

impl SignalKind {
    pub fn family(&self) -> &'static str {
        match self {
            SignalKind::Normal { .. } => "normal",
            SignalKind::Sine { .. } => "sine",
            SignalKind::Sigmoid { .. } => "sigmoid",
            SignalKind::Step { .. } => "step",
            SignalKind::Poisson { .. } => "poisson",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub kind: SignalKind,
    pub t: usize,
}

impl SignalSpec {
    /// Samples one sequence; only the random kinds touch `rng`.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let t = self.t;
        let denom = (t.max(2) - 1) as f64;
        let xs = (0..t).map(|x| x as f64);
        Ok(match self.kind {
            SignalKind::Normal { mu, sigma } => {
                let dist = Normal::new(mu, sigma)
                    .map_err(|e| Error::InvalidParameter(format!("normal({mu}, {sigma}): {e}")))?;
                (0..t).map(|_| dist.sample(rng)).collect()
            }
            SignalKind::Sine { a, b, c } => {
                let w = 2.0 * std::f64::consts::PI * (c - 1.0) / denom;
                xs.map(|x| a * (w * x).sin() + b).collect()
            }
            SignalKind::Sigmoid { a, b } => xs.map(|x| a * sigmoid(20.0 / denom * x - 10.0 + b)).collect(),
            SignalKind::Step { a, b } => xs.map(|x| a * heaviside(x - b)).collect(),
            SignalKind::Poisson { a, p0 } => (0..t).map(|_| a * heaviside(rng.gen::<f64>() - p0)).collect(),
        })
    }
}

/// `c` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, c: usize) -> Vec<f64> {
    match c {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..c).map(|i| a + (b - a) * i as f64 / (c - 1) as f64).collect(),
    }
}

/// `n` i.i.d. normal sequences, `[n, 1, T]`.
pub fn gen_dataset_a(n: usize, t: usize, mu: f64, sigma: f64, seed: u64) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let spec = SignalSpec {
        kind: SignalKind::Normal { mu, sigma },
        t,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * t);
    for _ in 0..n {
        data.extend(spec.generate(&mut rng)?);
    }
    Tensor::new(&[n, 1, t], data)
}

/// Parameter grid of the regular-signal dataset, 200 specs per family.
pub fn dataset_b_specs(t: usize) -> Vec<SignalSpec> {
    let mut specs = Vec::with_capacity(800);
    let mut push = |kind| specs.push(SignalSpec { kind, t });
    for a in linspace(-2.0, 3.0, 5) {
        for b in linspace(-2.0, 3.0, 8) {
            for c in linspace(5.0, 15.0, 5) {
                push(SignalKind::Sine { a, b, c });
            }
        }
    }
    for a in linspace(-2.0, 5.0, 10) {
        for b in linspace(10.0, 10.0, 20) {
            push(SignalKind::Sigmoid { a, b });
        }
    }
    for a in linspace(-2.0, 5.0, 10) {
        for b in linspace(0.0, t as f64, 20) {
            push(SignalKind::Step { a, b });
        }
    }
    for a in linspace(-1.0, 5.0, 5) {
        for p0 in linspace(0.3, 1.0, 5) {
            for _ in 0..8 {
                push(SignalKind::Poisson { a, p0 });
            }
        }
    }
    specs
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    /// `[n, 1, T]`
    pub x: Tensor,
    pub families: Vec<&'static str>,
}

pub fn gen_dataset_b(t: usize, seed: u64) -> Result<LabeledSet> {
    let specs = dataset_b_specs(t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(specs.len() * t);
    for s in &specs {
        data.extend(s.generate(&mut rng)?);
    }
    Ok(LabeledSet {
        x: Tensor::new(&[specs.len(), 1, t], data)?,
        families: specs.iter().map(|s| s.kind.family()).collect(),
    })
}

/// Rows of a `[n, C, T]` tensor, in the given order.
pub fn gather(x: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let (_, c, t) = x.dims3()?;
    let stride = c * t;
    let mut data = Vec::with_capacity(rows.len() * stride);
    for &r in rows {
        data.extend_from_slice(&x.data()[r * stride..(r + 1) * stride]);
    }
    Tensor::new(&[rows.len(), c, t], data)
}

/// Random train/test split; `test_fraction` of the rows (rounded) go to test.
pub fn split(x: &Tensor, test_fraction: f64, seed: u64) -> Result<(Tensor, Tensor)> {
    let (n, _, _) = x.dims3()?;
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidParameter(format!("test fraction {test_fraction} not in [0, 1)")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * test_fraction).round() as usize;
    let (test, train) = idx.split_at(n_test);
    Ok((gather(x, train)?, gather(x, test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_matches_bracket_notation() {
        assert_eq!(linspace(5.0, 15.0, 5), vec![5.0, 7.5, 10.0, 12.5, 15.0]);
    }

    #[test]
    fn dataset_b_cardinalities() {
        let set = gen_dataset_b(128, 0).unwrap();
        assert_eq!(set.x.shape(), &[800, 1, 128]);
        for fam in ["sine", "sigmoid", "step", "poisson"] {
            assert_eq!(set.families.iter().filter(|f| **f == fam).count(), 200);
        }
    }

    #[test]
    fn formula_spot_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sine = SignalSpec {
            kind: SignalKind::Sine { a: -2.0, b: -2.0, c: 5.0 },
            t: 128,
        };
        assert_eq!(sine.generate(&mut rng).unwrap()[0], -2.0);
        let step = SignalSpec {
            kind: SignalKind::Step { a: 3.0, b: 0.0 },
            t: 16,
        };
        assert!(step.generate(&mut rng).unwrap().iter().all(|&v| v == 3.0));
        let poisson = SignalSpec {
            kind: SignalKind::Poisson { a: 5.0, p0: 1.0 },
            t: 500,
        };
        assert!(poisson.generate(&mut rng).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dataset_a_is_reproducible_and_degenerates_cleanly() {
        assert_eq!(gen_dataset_a(4, 16, 1.0, 2.0, 7).unwrap(), gen_dataset_a(4, 16, 1.0, 2.0, 7).unwrap());
        assert!(gen_dataset_a(2, 8, 1.0, 0.0, 1).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn split_sizes() {
        let x = gen_dataset_a(2200, 4, 1.0, 2.0, 0).unwrap();
        let (train, test) = split(&x, 1.0 / 11.0, 0).unwrap();
        assert_eq!(train.shape()[0], 2000);
        assert_eq!(test.shape()[0], 200);
    }
}

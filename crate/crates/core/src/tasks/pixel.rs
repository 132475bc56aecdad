//! A toy sequential-image classifier.
//!
//! Images are 16x16 with one of four stroke shapes on a noisy background.
//! Each column is one timestep and the 16 rows are its features. The network
//! is `linear -> neuron -> linear -> neuron -> mean over time -> linear`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

use super::datasets::gather;
use super::layers::{init_linear, NeuronChoice, NeuronLayer};
use super::optim::{train_loop, EpochLog, TrainConfig};

pub const SIDE: usize = 16;
pub const CLASSES: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct PixelSet {
    /// `[n, SIDE, SIDE]`, rows as channels and columns as time.
    pub x: Tensor,
    pub labels: Vec<usize>,
}

/// Balanced set of horizontal bars, vertical bars, diagonals and hollow squares.
pub fn gen_pixel_set(n: usize, noise: f64, seed: u64) -> Result<PixelSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, noise).map_err(|e| Error::InvalidParameter(format!("noise {noise}: {e}")))?;
    let mut data = Vec::with_capacity(n * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % CLASSES;
        let mut img = [[0.0f64; SIDE]; SIDE];
        match label {
            0 => {
                let r = rng.gen_range(1..SIDE - 1);
                let len = rng.gen_range(8..=14);
                let c0 = rng.gen_range(0..=SIDE - len);
                (c0..c0 + len).for_each(|c| img[r][c] = 1.0);
            }
            1 => {
                let c = rng.gen_range(1..SIDE - 1);
                let len = rng.gen_range(8..=14);
                let r0 = rng.gen_range(0..=SIDE - len);
                (r0..r0 + len).for_each(|r| img[r][c] = 1.0);
            }
            2 => {
                let len = rng.gen_range(8..=14);
                let r0 = rng.gen_range(0..=SIDE - len);
                let c0 = rng.gen_range(0..=SIDE - len);
                (0..len).for_each(|d| img[r0 + d][c0 + d] = 1.0);
            }
            _ => {
                let side = rng.gen_range(5..=9);
                let r0 = rng.gen_range(0..=SIDE - side);
                let c0 = rng.gen_range(0..=SIDE - side);
                for d in 0..side {
                    img[r0][c0 + d] = 1.0;
                    img[r0 + side - 1][c0 + d] = 1.0;
                    img[r0 + d][c0] = 1.0;
                    img[r0 + d][c0 + side - 1] = 1.0;
                }
            }
        }
        for row in &img {
            data.extend(row.iter().map(|&v| v + dist.sample(&mut rng)));
        }
        labels.push(label);
    }
    Ok(PixelSet {
        x: Tensor::new(&[n, SIDE, SIDE], data)?,
        labels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub hidden: usize,
    pub noise: f64,
    pub train: TrainConfig,
}

impl Default for PixelConfig {
    fn default() -> Self {
        Self {
            n_train: 800,
            n_test: 200,
            hidden: 16,
            noise: 0.3,
            train: TrainConfig {
                epochs: 20,
                batch_size: 32,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PixelModel {
    /// `[w1, b1, w2, b2, w3, b3]`
    pub linear: Vec<Tensor>,
    pub neurons: [NeuronLayer; 2],
}

impl PixelModel {
    pub fn init<R: Rng + ?Sized>(choice: NeuronChoice, hidden: usize, rng: &mut R) -> Result<Self> {
        let (w1, b1) = init_linear(hidden, SIDE, rng);
        let (w2, b2) = init_linear(hidden, hidden, rng);
        let (w3, b3) = init_linear(CLASSES, hidden, rng);
        let n1 = NeuronLayer::init(choice, hidden, SIDE, rng)?;
        let n2 = NeuronLayer::init(choice, hidden, SIDE, rng)?;
        Ok(Self {
            linear: vec![w1, b1, w2, b2, w3, b3],
            neurons: [n1, n2],
        })
    }

    pub fn params(&self) -> Vec<Tensor> {
        let mut p = self.linear.clone();
        p.extend(self.neurons[0].params());
        p.extend(self.neurons[1].params());
        p
    }

    pub fn set_params(&mut self, p: &[Tensor]) {
        self.linear = p[..6].to_vec();
        let n1 = self.neurons[0].params().len();
        self.neurons[0].set_params(&p[6..6 + n1]);
        self.neurons[1].set_params(&p[6 + n1..]);
    }

    /// `[B, CLASSES]` logits.
    pub fn logits(&self, tape: &mut Tape, vars: &[Var], x: &Tensor) -> Result<Var> {
        let n1 = self.neurons[0].params().len();
        let b = x.shape()[0];
        let x = tape.constant(x.clone());
        let z = tape.channel_linear(x, vars[0], Some(vars[1]))?;
        let (s, _) = self.neurons[0].forward_taped(tape, &vars[6..6 + n1], z)?;
        let z = tape.channel_linear(s, vars[2], Some(vars[3]))?;
        let (s, _) = self.neurons[1].forward_taped(tape, &vars[6 + n1..], z)?;
        let pooled = tape.mean_time(s)?;
        let out = tape.channel_linear(pooled, vars[4], Some(vars[5]))?;
        tape.reshape(out, &[b, CLASSES])
    }

    pub fn accuracy(&self, set: &PixelSet) -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params().into_iter().map(|p| tape.constant(p)).collect();
        let logits = self.logits(&mut tape, &vars, &set.x)?;
        let hits = tape
            .value(logits)
            .data()
            .chunks(CLASSES)
            .zip(&set.labels)
            .filter(|(row, &label)| argmax(row) == label)
            .count();
        Ok(hits as f64 / set.labels.len() as f64)
    }
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelResult {
    pub neuron: NeuronChoice,
    pub untrained_accuracy: f64,
    pub accuracy: f64,
    pub per_epoch: Vec<EpochLog>,
}

pub fn run_pixel_task(choice: NeuronChoice, cfg: &PixelConfig) -> Result<PixelResult> {
    let seed = cfg.train.seed;
    let train = gen_pixel_set(cfg.n_train, cfg.noise, seed)?;
    let test = gen_pixel_set(cfg.n_test, cfg.noise, seed.wrapping_add(1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5049_5845);
    let mut model = PixelModel::init(choice, cfg.hidden, &mut rng)?;
    let untrained_accuracy = model.accuracy(&test)?;
    let mut params = model.params();
    let shape = model.clone();
    let per_epoch = train_loop(
        &mut params,
        cfg.n_train,
        &cfg.train,
        |tape, vars, idx| {
            let xb = gather(&train.x, idx)?;
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let logits = shape.logits(tape, vars, &xb)?;
            tape.softmax_cross_entropy(logits, &labels)
        },
        |_, p| {
            let mut m = shape.clone();
            m.set_params(p);
            Ok(Some(m.accuracy(&test)?))
        },
    )?;
    model.set_params(&params);
    Ok(PixelResult {
        neuron: choice,
        untrained_accuracy,
        accuracy: model.accuracy(&test)?,
        per_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_are_balanced_and_shapes_drawn() {
        let set = gen_pixel_set(40, 0.0, 1).unwrap();
        for c in 0..CLASSES {
            assert_eq!(set.labels.iter().filter(|&&l| l == c).count(), 10);
        }
        // Noise-free horizontal bar: exactly one row lit.
        let img = &set.x.data()[..SIDE * SIDE];
        let lit_rows = img.chunks(SIDE).filter(|r| r.iter().any(|&v| v > 0.5)).count();
        assert_eq!(lit_rows, 1);
    }

    #[test]
    fn parameter_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = PixelModel::init(NeuronChoice::Dsn, 4, &mut rng).unwrap();
        let p: Vec<Tensor> = m.params().iter().map(|t| t.map(|v| v + 1.0)).collect();
        m.set_params(&p);
        assert_eq!(m.params(), p);
    }
}

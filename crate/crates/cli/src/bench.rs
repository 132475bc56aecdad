//! Forward/backward timing against sequence length.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spikescan::numerics::{Tape, Tensor, Var};
use spikescan::tasks::layers::{NeuronChoice, NeuronLayer};
use spikescan::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub neuron: String,
    pub length: usize,
    pub fwd_ms: f64,
    pub bwd_ms: f64,
    pub fwd_median_ms: f64,
    pub bwd_median_ms: f64,
    /// Sum of the membrane output; identical across reruns with one seed.
    pub checksum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slope {
    pub neuron: String,
    /// Least-squares slope of log(mean fwd+bwd time) against log(length).
    pub slope: f64,
}

pub struct BenchPlan {
    pub batch: usize,
    pub channels: usize,
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => 0.0,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// One forward and backward pass; returns `(fwd_ms, bwd_ms, checksum)`.
fn pass(layer: &NeuronLayer, params: &[Tensor], x: &Tensor) -> Result<(f64, f64, f64)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let xv = tape.param(x.clone());
    let start = Instant::now();
    let (s, h) = layer.forward_taped(&mut tape, &vars, xv)?;
    let loss = tape.mean(s)?;
    let fwd = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    let grads = tape.backward(loss)?;
    let bwd = start.elapsed().as_secs_f64() * 1e3;
    drop(grads);
    Ok((fwd, bwd, tape.value(h).sum()))
}

pub fn bench_one(choice: NeuronChoice, t: usize, plan: &BenchPlan) -> Result<BenchRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ t as u64);
    let layer = NeuronLayer::init(choice, plan.channels, t, &mut rng)?;
    let params = layer.params();
    let x = Tensor::new(
        &[plan.batch, plan.channels, t],
        (0..plan.batch * plan.channels * t).map(|_| rng.gen_range(-1.0..3.0)).collect(),
    )?;
    for _ in 0..plan.warmup {
        pass(&layer, &params, &x)?;
    }
    let mut fwd = Vec::with_capacity(plan.reps);
    let mut bwd = Vec::with_capacity(plan.reps);
    let mut checksum = 0.0;
    for _ in 0..plan.reps.max(1) {
        let (f, b, c) = pass(&layer, &params, &x)?;
        fwd.push(f);
        bwd.push(b);
        checksum = c;
    }
    Ok(BenchRow {
        neuron: choice.label().into(),
        length: t,
        fwd_ms: mean(&fwd),
        bwd_ms: mean(&bwd),
        fwd_median_ms: median(&fwd),
        bwd_median_ms: median(&bwd),
        checksum,
    })
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if var == 0.0 {
        f64::NAN
    } else {
        cov / var
    }
}

pub fn slopes(rows: &[BenchRow]) -> Vec<Slope> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.neuron.as_str()) {
            names.push(&r.neuron);
        }
    }
    names
        .into_iter()
        .map(|n| {
            let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.neuron == n).collect();
            let xs: Vec<f64> = mine.iter().map(|r| r.length as f64).collect();
            let ys: Vec<f64> = mine.iter().map(|r| r.fwd_ms + r.bwd_ms).collect();
            Slope {
                neuron: n.into(),
                slope: loglog_slope(&xs, &ys),
            }
        })
        .collect()
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("neuron,length,fwd_ms,bwd_ms,fwd_median_ms,bwd_median_ms\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{:.4}\n",
            r.neuron, r.length, r.fwd_ms, r.bwd_ms, r.fwd_median_ms, r.bwd_median_ms
        ));
    }
    s
}

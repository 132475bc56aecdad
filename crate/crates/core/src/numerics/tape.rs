//! Reverse-mode gradient tape over [`Tensor`] values.
//!
//! Nodes are appended in creation order, which is a topological order, and
//! [`Tape::backward`] walks them strictly in reverse, so every node has
//! received all of its consumers' contributions before it is read.

use crate::error::{Error, Result};
use crate::numerics::surrogate::{clip_round_grad, clip_round_value, heaviside, SurrogateKind};
use crate::numerics::tensor::{matmul_into, sigmoid, Tensor};
use crate::scan::{scan_backward, scan_parallel, ScanProblem};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    PowScalar(Var, f64),
    Sigmoid(Var),
    Relu(Var),
    MatMul(Var, Var),
    Spike { h: Var, v_th: f64, sg: SurrogateKind },
    ClipRound { h: Var, n_max: u32 },
    Sum(Var),
    Mean(Var),
    Mse { pred: Var, target: Tensor },
    SoftmaxXent { logits: Var, labels: Vec<usize> },
    CausalConv { x: Var, w: Var, bias: Option<Var>, groups: usize },
    SharedCausalConv { x: Var, w: Var },
    ChannelLinear { x: Var, w: Var, bias: Option<Var> },
    TimeMatMul { x: Var, w: Var },
    Scan { alpha: Var, x: Var },
    TimeSlice { x: Var, t: usize },
    StackTime(Vec<Var>),
    MeanTime(Var),
    Reshape(Var),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Single-owner recording of a computation.
#[derive(Default, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

fn binary_shape_check(a: &Tensor, b: &Tensor, op: &'static str) -> Result<()> {
    a.expect_same_shape(b, op)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Trainable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_raw(Op::Leaf, value, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(Op::Leaf, value, false)
    }

    fn push_raw(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var], name: &'static str) -> Result<Var> {
        let value = value.check_finite(name)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(op, value, requires_grad))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.push(Op::Add(a, b), out, &[a, b], "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.push(Op::Sub(a, b), out, &[a, b], "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        self.push(Op::Mul(a, b), out, &[a, b], "mul")
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        binary_shape_check(self.value(a), self.value(b), "div")?;
        if self.value(b).data().iter().any(|&v| v == 0.0) {
            return Err(Error::DivisionByZero);
        }
        let out = self.value(a).zip_map(self.value(b), "div", |x, y| x / y)?;
        self.push(Op::Div(a, b), out, &[a, b], "div")
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x + s);
        self.push(Op::AddScalar(a), out, &[a], "add_scalar")
    }

    pub fn mul_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        self.push(Op::MulScalar(a, s), out, &[a], "mul_scalar")
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let neg = self.mul_scalar(a, -1.0)?;
        self.add_scalar(neg, 1.0)
    }

    pub fn pow_scalar(&mut self, a: Var, p: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x.powf(p));
        self.push(Op::PowScalar(a, p), out, &[a], "pow")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), out, &[a], "sigmoid")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), out, &[a], "relu")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = crate::numerics::tensor::matmul(self.value(a), self.value(b))?;
        self.push(Op::MatMul(a, b), out, &[a, b], "matmul")
    }

    /// Heaviside firing `Theta(h - v_th)` with a surrogate backward.
    pub fn spike(&mut self, h: Var, v_th: f64, sg: SurrogateKind) -> Result<Var> {
        sg.validate()?;
        let out = self.value(h).map(|x| heaviside(x - v_th));
        self.push(Op::Spike { h, v_th, sg }, out, &[h], "spike")
    }

    /// Integer firing `Clip[Round(h), 0, n_max]` with a straight-through backward.
    pub fn clip_round(&mut self, h: Var, n_max: u32) -> Result<Var> {
        if n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be >= 1".into()));
        }
        let out = self.value(h).map(|x| clip_round_value(x, n_max));
        self.push(Op::ClipRound { h, n_max }, out, &[h], "clip_round")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), out, &[a], "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).mean());
        self.push(Op::Mean(a), out, &[a], "mean")
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        p.expect_same_shape(target, "mse")?;
        let n = p.len().max(1) as f64;
        let loss: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        self.push(
            Op::Mse {
                pred,
                target: target.clone(),
            },
            Tensor::scalar(loss),
            &[pred],
            "mse",
        )
    }

    /// Mean softmax cross-entropy of `[B, K]` or `[B, K, 1]` logits.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let v = self.value(logits);
        let b = v.shape()[0];
        if labels.len() != b {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: v.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let k = v.len() / b.max(1);
        let mut loss = 0.0;
        for (row, &label) in v.data().chunks(k).zip(labels) {
            if label >= k {
                return Err(Error::InvalidParameter(format!("label {label} >= {k} classes")));
            }
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            loss += lse - row[label];
        }
        loss /= b.max(1) as f64;
        self.push(
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
            },
            Tensor::scalar(loss),
            &[logits],
            "softmax_cross_entropy",
        )
    }

    /// Causal 1-D convolution over time with left zero padding.
    ///
    /// `x: [B, Cin, T]`, `w: [Cout, Cin / groups, k]`, `bias: [Cout]`. Tap `j`
    /// multiplies the input `j` steps in the past, so `w[.., .., 0]` sees the
    /// current step.
    pub fn causal_conv(&mut self, x: Var, w: Var, bias: Option<Var>, groups: usize) -> Result<Var> {
        let out = causal_conv_forward(self.value(x), self.value(w), bias.map(|b| self.value(b)), groups)?;
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        self.push(Op::CausalConv { x, w, bias, groups }, out, &inputs, "causal_conv")
    }

    /// Causal convolution with one `k`-tap kernel shared by every channel.
    pub fn shared_causal_conv(&mut self, x: Var, w: Var) -> Result<Var> {
        let (b, c, t) = self.value(x).dims3()?;
        let kernel = self.value(w).data();
        let xs = self.value(x).data();
        let mut out = vec![0.0; b * c * t];
        for lane in 0..b * c {
            let xl = &xs[lane * t..(lane + 1) * t];
            let ol = &mut out[lane * t..(lane + 1) * t];
            for (lag, &wj) in kernel.iter().enumerate().take(t) {
                for (o, &xv) in ol[lag..].iter_mut().zip(xl) {
                    *o += wj * xv;
                }
            }
        }
        let out = Tensor::new(&[b, c, t], out)?;
        self.push(Op::SharedCausalConv { x, w }, out, &[x, w], "shared_causal_conv")
    }

    /// Per-timestep channel mixing `out[b, :, t] = W x[b, :, t] + bias`.
    pub fn channel_linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let (b, cin, t) = self.value(x).dims3()?;
        let (cout, cin2) = self.value(w).dims2()?;
        if cin != cin2 {
            return Err(Error::ShapeMismatch {
                op: "channel_linear",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(w).shape().to_vec(),
            });
        }
        let mut out = vec![0.0; b * cout * t];
        if let Some(bv) = bias {
            let bias_vals = self.value(bv);
            if bias_vals.len() != cout {
                return Err(Error::ShapeMismatch {
                    op: "channel_linear bias",
                    lhs: vec![cout],
                    rhs: bias_vals.shape().to_vec(),
                });
            }
            for bi in 0..b {
                for o in 0..cout {
                    let base = (bi * cout + o) * t;
                    out[base..base + t].fill(bias_vals.data()[o]);
                }
            }
        }
        let xs = self.value(x).data();
        let ws = self.value(w).data();
        for bi in 0..b {
            matmul_into(
                ws,
                &xs[bi * cin * t..(bi + 1) * cin * t],
                &mut out[bi * cout * t..(bi + 1) * cout * t],
                cout,
                cin,
                t,
            );
        }
        let out = Tensor::new(&[b, cout, t], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        self.push(Op::ChannelLinear { x, w, bias }, out, &inputs, "channel_linear")
    }

    /// Dense mixing along time, `out[b, c, i] = sum_j W[i, j] x[b, c, j]`.
    pub fn time_matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (b, c, t) = self.value(x).dims3()?;
        let (ti, tj) = self.value(w).dims2()?;
        if ti != t || tj != t {
            return Err(Error::LengthMismatch { expected: ti, got: t });
        }
        let wt = crate::numerics::tensor::transpose(self.value(w))?;
        let mut out = vec![0.0; b * c * t];
        matmul_into(self.value(x).data(), wt.data(), &mut out, b * c, t, t);
        let out = Tensor::new(&[b, c, t], out)?;
        self.push(Op::TimeMatMul { x, w }, out, &[x, w], "time_matmul")
    }

    /// `H_t = alpha_t H_{t-1} + (1 - alpha_t) x_t` from `H_0 = 0`.
    pub fn scan(&mut self, alpha: Var, x: Var) -> Result<Var> {
        let p = ScanProblem::new(self.value(alpha).clone(), self.value(x).clone())?;
        let out = scan_parallel(&p)?;
        self.push(Op::Scan { alpha, x }, out, &[alpha, x], "scan")
    }

    pub fn time_slice(&mut self, x: Var, t: usize) -> Result<Var> {
        let out = self.value(x).time_slice(t)?;
        self.push(Op::TimeSlice { x, t }, out, &[x], "time_slice")
    }

    pub fn stack_time(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<Tensor> = parts.iter().map(|&p| self.value(p).clone()).collect();
        let out = Tensor::stack_time(&values)?;
        self.push(Op::StackTime(parts.to_vec()), out, parts, "stack_time")
    }

    /// `[B, C, T] -> [B, C, 1]` average over time.
    pub fn mean_time(&mut self, x: Var) -> Result<Var> {
        let (b, c, t) = self.value(x).dims3()?;
        let data = self
            .value(x)
            .data()
            .chunks(t.max(1))
            .map(|lane| lane.iter().sum::<f64>() / t.max(1) as f64)
            .collect();
        let out = Tensor::new(&[b, c, 1], data)?;
        self.push(Op::MeanTime(x), out, &[x], "mean_time")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        self.push(Op::Reshape(x), out, &[x], "reshape")
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.backward_node(idx, &upstream, &mut grads)?;
            grads[idx] = Some(upstream);
        }
        for g in grads.iter().flatten() {
            if !g.all_finite() {
                return Err(Error::NonFinite("backward"));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                    *e += x;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn backward_node(&self, idx: usize, up: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, up.clone());
                self.accumulate(grads, *b, up.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, up.clone());
                self.accumulate(grads, *b, up.map(|g| -g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    self.accumulate(grads, *a, up.zip_map(bv, "mul", |g, y| g * y)?);
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, up.zip_map(av, "mul", |g, x| g * x)?);
                }
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    self.accumulate(grads, *a, up.zip_map(bv, "div", |g, y| g / y)?);
                }
                if self.needs(*b) {
                    let ratio = av.zip_map(bv, "div", |x, y| -x / (y * y))?;
                    self.accumulate(grads, *b, up.zip_map(&ratio, "div", |g, r| g * r)?);
                }
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, up.clone()),
            Op::MulScalar(a, s) => self.accumulate(grads, *a, up.map(|g| g * s)),
            Op::PowScalar(a, p) => {
                let d = self.value(*a).map(|x| p * x.powf(p - 1.0));
                self.accumulate(grads, *a, up.zip_map(&d, "pow", |g, d| g * d)?);
            }
            Op::Sigmoid(a) => {
                let d = node.value.map(|s| s * (1.0 - s));
                self.accumulate(grads, *a, up.zip_map(&d, "sigmoid", |g, d| g * d)?);
            }
            Op::Relu(a) => {
                let g = up.zip_map(self.value(*a), "relu", |g, x| if x > 0.0 { g } else { 0.0 })?;
                self.accumulate(grads, *a, g);
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.dims2()?;
                let (_, n) = bv.dims2()?;
                if self.needs(*a) {
                    let bt = crate::numerics::tensor::transpose(bv)?;
                    let mut da = vec![0.0; m * k];
                    matmul_into(up.data(), bt.data(), &mut da, m, n, k);
                    self.accumulate(grads, *a, Tensor::new(&[m, k], da)?);
                }
                if self.needs(*b) {
                    let at = crate::numerics::tensor::transpose(av)?;
                    let mut db = vec![0.0; k * n];
                    matmul_into(at.data(), up.data(), &mut db, k, m, n);
                    self.accumulate(grads, *b, Tensor::new(&[k, n], db)?);
                }
            }
            Op::Spike { h, v_th, sg } => {
                let g = up.zip_map(self.value(*h), "spike", |g, x| g * sg.grad(x - v_th))?;
                self.accumulate(grads, *h, g);
            }
            Op::ClipRound { h, n_max } => {
                let g = up.zip_map(self.value(*h), "clip_round", |g, x| g * clip_round_grad(x, *n_max))?;
                self.accumulate(grads, *h, g);
            }
            Op::Sum(a) => {
                let g = up.data()[0];
                self.accumulate(grads, *a, Tensor::full(self.value(*a).shape(), g));
            }
            Op::Mean(a) => {
                let v = self.value(*a);
                let g = up.data()[0] / v.len().max(1) as f64;
                self.accumulate(grads, *a, Tensor::full(v.shape(), g));
            }
            Op::Mse { pred, target } => {
                let p = self.value(*pred);
                let scale = 2.0 * up.data()[0] / p.len().max(1) as f64;
                self.accumulate(grads, *pred, p.zip_map(target, "mse", |a, b| scale * (a - b))?);
            }
            Op::SoftmaxXent { logits, labels } => {
                let v = self.value(*logits);
                let b = labels.len();
                let k = v.len() / b.max(1);
                let scale = up.data()[0] / b.max(1) as f64;
                let mut g = vec![0.0; v.len()];
                for (i, (row, &label)) in v.data().chunks(k).zip(labels).enumerate() {
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
                    for j in 0..k {
                        let p = (row[j] - m).exp() / z;
                        g[i * k + j] = scale * (p - if j == label { 1.0 } else { 0.0 });
                    }
                }
                self.accumulate(grads, *logits, Tensor::new(v.shape(), g)?);
            }
            Op::CausalConv { x, w, bias, groups } => {
                let (dx, dw, db) = causal_conv_backward(
                    self.value(*x),
                    self.value(*w),
                    up,
                    *groups,
                    self.needs(*x),
                )?;
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate(grads, *w, dw);
                if let Some(b) = bias {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::SharedCausalConv { x, w } => {
                let xv = self.value(*x);
                let (b, c, t) = xv.dims3()?;
                let kernel = self.value(*w).data();
                let mut dw = vec![0.0; kernel.len()];
                let mut dx = vec![0.0; b * c * t];
                for lane in 0..b * c {
                    let xl = xv.lane_slice(lane, t);
                    let gl = up.lane_slice(lane, t);
                    let dxl = &mut dx[lane * t..(lane + 1) * t];
                    for (lag, &wj) in kernel.iter().enumerate().take(t) {
                        dw[lag] += gl[lag..].iter().zip(xl).map(|(g, x)| g * x).sum::<f64>();
                        for (d, &g) in dxl.iter_mut().zip(&gl[lag..]) {
                            *d += wj * g;
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(&[b, c, t], dx)?);
                self.accumulate(grads, *w, Tensor::new(self.value(*w).shape(), dw)?);
            }
            Op::ChannelLinear { x, w, bias } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (b, cin, t) = xv.dims3()?;
                let (cout, _) = wv.dims2()?;
                if self.needs(*x) {
                    let wt = crate::numerics::tensor::transpose(wv)?;
                    let mut dx = vec![0.0; b * cin * t];
                    for bi in 0..b {
                        matmul_into(
                            wt.data(),
                            &up.data()[bi * cout * t..(bi + 1) * cout * t],
                            &mut dx[bi * cin * t..(bi + 1) * cin * t],
                            cin,
                            cout,
                            t,
                        );
                    }
                    self.accumulate(grads, *x, Tensor::new(&[b, cin, t], dx)?);
                }
                if self.needs(*w) {
                    let mut dw = vec![0.0; cout * cin];
                    for bi in 0..b {
                        for o in 0..cout {
                            let g = &up.data()[(bi * cout + o) * t..(bi * cout + o + 1) * t];
                            for c in 0..cin {
                                let xl = &xv.data()[(bi * cin + c) * t..(bi * cin + c + 1) * t];
                                dw[o * cin + c] += g.iter().zip(xl).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                    self.accumulate(grads, *w, Tensor::new(&[cout, cin], dw)?);
                }
                if let Some(bv) = bias {
                    let mut db = vec![0.0; cout];
                    for bi in 0..b {
                        for (o, d) in db.iter_mut().enumerate() {
                            *d += up.data()[(bi * cout + o) * t..(bi * cout + o + 1) * t].iter().sum::<f64>();
                        }
                    }
                    self.accumulate(grads, *bv, Tensor::new(self.value(*bv).shape(), db)?);
                }
            }
            Op::TimeMatMul { x, w } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (b, c, t) = xv.dims3()?;
                let lanes = b * c;
                if self.needs(*x) {
                    // out = X W^T  =>  dX = dOut W
                    let mut dx = vec![0.0; lanes * t];
                    matmul_into(up.data(), wv.data(), &mut dx, lanes, t, t);
                    self.accumulate(grads, *x, Tensor::new(&[b, c, t], dx)?);
                }
                if self.needs(*w) {
                    // dW = dOut^T X
                    let gt = crate::numerics::tensor::transpose(&up.reshape(&[lanes, t])?)?;
                    let mut dw = vec![0.0; t * t];
                    matmul_into(gt.data(), xv.data(), &mut dw, t, lanes, t);
                    self.accumulate(grads, *w, Tensor::new(&[t, t], dw)?);
                }
            }
            Op::Scan { alpha, x } => {
                let p = ScanProblem::new(self.value(*alpha).clone(), self.value(*x).clone())?;
                let g = scan_backward(&p, &node.value, up)?;
                self.accumulate(grads, *alpha, g.d_alpha);
                self.accumulate(grads, *x, g.d_x);
            }
            Op::TimeSlice { x, t } => {
                let (b, c, ts) = self.value(*x).dims3()?;
                let mut g = vec![0.0; b * c * ts];
                for lane in 0..b * c {
                    g[lane * ts + t] = up.data()[lane];
                }
                self.accumulate(grads, *x, Tensor::new(&[b, c, ts], g)?);
            }
            Op::StackTime(parts) => {
                for (t, &p) in parts.iter().enumerate() {
                    if self.needs(p) {
                        self.accumulate(grads, p, up.time_slice(t)?);
                    }
                }
            }
            Op::MeanTime(x) => {
                let (b, c, t) = self.value(*x).dims3()?;
                let mut g = vec![0.0; b * c * t];
                for lane in 0..b * c {
                    let v = up.data()[lane] / t.max(1) as f64;
                    g[lane * t..(lane + 1) * t].fill(v);
                }
                self.accumulate(grads, *x, Tensor::new(&[b, c, t], g)?);
            }
            Op::Reshape(x) => {
                self.accumulate(grads, *x, up.reshape(self.value(*x).shape())?);
            }
        }
        Ok(())
    }
}

impl Tensor {
    fn lane_slice(&self, lane: usize, t: usize) -> &[f64] {
        &self.data()[lane * t..(lane + 1) * t]
    }
}

fn conv_dims(x: &Tensor, w: &Tensor, groups: usize) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (b, cin, t) = x.dims3()?;
    let (cout, cin_g, k) = w.dims3()?;
    if groups == 0 || cin % groups != 0 || cout % groups != 0 || cin / groups != cin_g {
        return Err(Error::ShapeMismatch {
            op: "causal_conv",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    Ok((b, cin, t, cout, cin_g, k))
}

/// Untracked forward of [`Tape::causal_conv`].
pub fn causal_conv_forward(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, groups: usize) -> Result<Tensor> {
    let (b, cin, t, cout, cin_g, k) = conv_dims(x, w, groups)?;
    let cout_g = cout / groups;
    let mut out = vec![0.0; b * cout * t];
    if let Some(bias) = bias {
        if bias.len() != cout {
            return Err(Error::ShapeMismatch {
                op: "causal_conv bias",
                lhs: vec![cout],
                rhs: bias.shape().to_vec(),
            });
        }
        for bi in 0..b {
            for o in 0..cout {
                out[(bi * cout + o) * t..(bi * cout + o + 1) * t].fill(bias.data()[o]);
            }
        }
    }
    let xs = x.data();
    let ws = w.data();
    for bi in 0..b {
        for o in 0..cout {
            let g = o / cout_g;
            let ol = &mut out[(bi * cout + o) * t..(bi * cout + o + 1) * t];
            for ci in 0..cin_g {
                let c = g * cin_g + ci;
                let xl = &xs[(bi * cin + c) * t..(bi * cin + c + 1) * t];
                for lag in 0..k.min(t) {
                    let wv = ws[(o * cin_g + ci) * k + lag];
                    if wv == 0.0 {
                        continue;
                    }
                    for (ov, &xv) in ol[lag..].iter_mut().zip(xl) {
                        *ov += wv * xv;
                    }
                }
            }
        }
    }
    Tensor::new(&[b, cout, t], out)
}

type ConvGrads = (Option<Tensor>, Tensor, Tensor);

fn causal_conv_backward(x: &Tensor, w: &Tensor, up: &Tensor, groups: usize, need_dx: bool) -> Result<ConvGrads> {
    let (b, cin, t, cout, cin_g, k) = conv_dims(x, w, groups)?;
    let cout_g = cout / groups;
    let xs = x.data();
    let ws = w.data();
    let mut dx = if need_dx { vec![0.0; b * cin * t] } else { Vec::new() };
    let mut dw = vec![0.0; ws.len()];
    let mut db = vec![0.0; cout];
    for bi in 0..b {
        for o in 0..cout {
            let g = o / cout_g;
            let gl = &up.data()[(bi * cout + o) * t..(bi * cout + o + 1) * t];
            db[o] += gl.iter().sum::<f64>();
            for ci in 0..cin_g {
                let c = g * cin_g + ci;
                let xl = &xs[(bi * cin + c) * t..(bi * cin + c + 1) * t];
                for lag in 0..k.min(t) {
                    let widx = (o * cin_g + ci) * k + lag;
                    dw[widx] += gl[lag..].iter().zip(xl).map(|(g, x)| g * x).sum::<f64>();
                    if need_dx {
                        let wv = ws[widx];
                        let dxl = &mut dx[(bi * cin + c) * t..(bi * cin + c + 1) * t];
                        for (d, &gv) in dxl.iter_mut().zip(&gl[lag..]) {
                            *d += wv * gv;
                        }
                    }
                }
            }
        }
    }
    let dx = if need_dx {
        Some(Tensor::new(&[b, cin, t], dx)?)
    } else {
        None
    };
    Ok((dx, Tensor::new(w.shape(), dw)?, Tensor::new(&[cout], db)?))
}

use crate::error::{Error, Result};

/// Dense row-major array of rank at most 3.
///
/// Sequences use the `[batch, channel, time]` layout with time innermost, so a
/// single (batch, channel) lane is a contiguous slice of length `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.len() > 3 {
            return Err(Error::InvalidParameter(format!(
                "rank {} exceeds 3",
                shape.len()
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(shape.len() <= 3, "rank {} exceeds 3", shape.len());
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [a, b] => Ok((a, b)),
            _ => Err(Error::InvalidParameter(format!(
                "expected rank 2, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(Error::InvalidParameter(format!(
                "expected rank 3, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn at3(&self, b: usize, c: usize, t: usize) -> f64 {
        let (_, cs, ts) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(b * cs + c) * ts + t]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_same_shape(other, op)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn expect_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_finite(self, op: &'static str) -> Result<Self> {
        if self.all_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op))
        }
    }

    /// Lane `(b, c)` of a rank-3 tensor as a time slice.
    pub fn lane(&self, b: usize, c: usize) -> &[f64] {
        let (cs, ts) = (self.shape[1], self.shape[2]);
        let start = (b * cs + c) * ts;
        &self.data[start..start + ts]
    }

    /// `[B, C]` snapshot at time `t` of a `[B, C, T]` tensor.
    pub fn time_slice(&self, t: usize) -> Result<Tensor> {
        let (b, c, ts) = self.dims3()?;
        if t >= ts {
            return Err(Error::InvalidParameter(format!("time index {t} out of range {ts}")));
        }
        let data = (0..b * c).map(|lane| self.data[lane * ts + t]).collect();
        Tensor::new(&[b, c], data)
    }

    /// Stacks `[B, C]` snapshots into a `[B, C, T]` sequence.
    pub fn stack_time(slices: &[Tensor]) -> Result<Tensor> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidParameter("stack_time of empty list".into()))?;
        let (b, c) = first.dims2()?;
        let t = slices.len();
        let mut data = vec![0.0; b * c * t];
        for (ti, s) in slices.iter().enumerate() {
            first.expect_same_shape(s, "stack_time")?;
            for lane in 0..b * c {
                data[lane * t + ti] = s.data[lane];
            }
        }
        Tensor::new(&[b, c, t], data)
    }

    /// First `len` time steps of a `[B, C, T]` tensor.
    pub fn time_prefix(&self, len: usize) -> Result<Tensor> {
        let (b, c, t) = self.dims3()?;
        if len > t {
            return Err(Error::InvalidParameter(format!("prefix {len} longer than {t}")));
        }
        let mut data = Vec::with_capacity(b * c * len);
        for lane in 0..b * c {
            data.extend_from_slice(&self.data[lane * t..lane * t + len]);
        }
        Tensor::new(&[b, c, len], data)
    }

    /// Concatenates two `[B, C, *]` tensors along time.
    pub fn concat_time(&self, other: &Tensor) -> Result<Tensor> {
        let (b, c, t1) = self.dims3()?;
        let (b2, c2, t2) = other.dims3()?;
        if (b, c) != (b2, c2) {
            return Err(Error::ShapeMismatch {
                op: "concat_time",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let mut data = Vec::with_capacity(b * c * (t1 + t2));
        for lane in 0..b * c {
            data.extend_from_slice(&self.data[lane * t1..(lane + 1) * t1]);
            data.extend_from_slice(&other.data[lane * t2..(lane + 1) * t2]);
        }
        Tensor::new(&[b, c, t1 + t2], data)
    }
}

/// Right-hand operand of [`elementwise`].
#[derive(Clone, Copy, Debug)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Div,
    /// Unary; the operand is ignored.
    Sigmoid,
    /// Unary; the operand is ignored.
    Relu,
    Pow,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Untracked elementwise arithmetic with scalar or equal-shape broadcasting.
pub fn elementwise(op: ElementwiseOp, a: &Tensor, b: Operand<'_>) -> Result<Tensor> {
    let binary = |f: fn(f64, f64) -> f64| -> Result<Tensor> {
        match b {
            Operand::Scalar(s) => Ok(a.map(|v| f(v, s))),
            Operand::Tensor(t) => a.zip_map(t, "elementwise", f),
        }
    };
    let out = match op {
        ElementwiseOp::Add => binary(|x, y| x + y)?,
        ElementwiseOp::Sub => binary(|x, y| x - y)?,
        ElementwiseOp::Mul => binary(|x, y| x * y)?,
        ElementwiseOp::Div => {
            let zero = match b {
                Operand::Scalar(s) => s == 0.0,
                Operand::Tensor(t) => t.data().iter().any(|&v| v == 0.0),
            };
            if zero {
                return Err(Error::DivisionByZero);
            }
            binary(|x, y| x / y)?
        }
        ElementwiseOp::Pow => binary(f64::powf)?,
        ElementwiseOp::Sigmoid => a.map(sigmoid),
        ElementwiseOp::Relu => a.map(|v| v.max(0.0)),
    };
    out.check_finite("elementwise")
}

/// Plain `[m, k] x [k, n]` product.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; m * n];
    matmul_into(a.data(), b.data(), &mut out, m, k, n);
    Tensor::new(&[m, n], out)
}

/// `out += a[m,k] * b[k,n]`, i-k-j order so the inner loop is contiguous.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data()[i * n + j];
        }
    }
    Tensor::new(&[n, m], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_length() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(&[1, 1, 1, 1], vec![0.0]).is_err());
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let out = elementwise(ElementwiseOp::Sigmoid, &Tensor::scalar(0.0), Operand::Scalar(0.0)).unwrap();
        assert_eq!(out.data(), &[0.5]);
    }

    #[test]
    fn pow_with_unit_exponent_is_identity() {
        let x = Tensor::from_vec(vec![0.2, 0.7, 3.0]);
        let out = elementwise(ElementwiseOp::Pow, &x, Operand::Scalar(1.0)).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn scalar_mul() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let out = elementwise(ElementwiseOp::Mul, &x, Operand::Scalar(2.0)).unwrap();
        assert_eq!(out.data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn div_by_zero_is_an_error() {
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let y = Tensor::from_vec(vec![1.0, 0.0]);
        assert!(matches!(
            elementwise(ElementwiseOp::Div, &x, Operand::Tensor(&y)),
            Err(Error::DivisionByZero)
        ));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let y = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            elementwise(ElementwiseOp::Add, &x, Operand::Tensor(&y)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn matmul_small_cases() {
        let a = Tensor::new(&[1, 1], vec![2.0]).unwrap();
        let b = Tensor::new(&[1, 1], vec![3.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[6.0]);

        let eye = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(matmul(&eye, &x).unwrap(), x);
        assert!(matmul(&x, &x).is_err());
    }

    #[test]
    fn stack_and_slice_roundtrip() {
        let x = Tensor::new(&[2, 2, 3], (0..12).map(f64::from).collect()).unwrap();
        let slices: Vec<_> = (0..3).map(|t| x.time_slice(t).unwrap()).collect();
        assert_eq!(Tensor::stack_time(&slices).unwrap(), x);
    }
}

//! Feed-forward building blocks: parameters, affine layers, LeakyReLU and
//! inverted dropout, each with an explicit backward pass.

use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::rng::Rng;

/// A trainable tensor: value, gradient accumulator, and momentum buffer,
/// all the same shape. The gradient is exactly zero right after
/// [`Param::zero_grad`].
#[derive(Clone, Debug)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
    pub momentum: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            grad: Matrix::zeros(r, c),
            momentum: Matrix::zeros(r, c),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `y = x·W + b`, rows are examples.
pub fn affine_forward(x: &Matrix, w: &Param, b: &Param) -> Result<Matrix> {
    if x.cols() != w.value.rows() {
        return Err(Error::dimension(
            "affine_forward",
            format!("x {}x{}", x.rows(), x.cols()),
            format!("W {}x{}", w.value.rows(), w.value.cols()),
        ));
    }
    let mut y = x.matmul(&w.value)?;
    y.add_row_broadcast(b.value.row(0))?;
    Ok(y)
}

/// Accumulates `dW += xᵀ·dy`, `db += column-sums(dy)` and returns
/// `dx = dy·Wᵀ`. `x` must be the forward input.
pub fn affine_backward(x: &Matrix, w: &mut Param, b: &mut Param, dy: &Matrix) -> Result<Matrix> {
    if dy.rows() != x.rows() || dy.cols() != w.value.cols() {
        return Err(Error::dimension(
            "affine_backward",
            format!("dy {}x{}", dy.rows(), dy.cols()),
            format!("x {}x{} W {}x{}", x.rows(), x.cols(), w.value.rows(), w.value.cols()),
        ));
    }
    x.t_matmul_acc(dy, &mut w.grad)?;
    let sums = dy.col_sums();
    for (g, s) in b.grad.data_mut().iter_mut().zip(&sums) {
        *g += s;
    }
    dy.matmul_t(&w.value)
}

/// Elementwise `max(x, slope·x)`.
pub fn leaky_relu(x: &Matrix, slope: f64) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

/// Gradient factor is 1 for positive pre-activations and `slope`
/// otherwise; exactly 0 takes the `slope` branch (fixed tie-break).
pub fn leaky_relu_backward(preact: &Matrix, dy: &Matrix, slope: f64) -> Matrix {
    debug_assert_eq!(preact.shape(), dy.shape());
    let mut out = dy.clone();
    for (d, &z) in out.data_mut().iter_mut().zip(preact.data()) {
        if z <= 0.0 {
            *d *= slope;
        }
    }
    out
}

/// Multiplicative dropout mask: entries are 0 or 1/(1−p).
#[derive(Clone, Debug)]
pub struct DropoutMask {
    factors: Matrix,
}

/// Inverted dropout. In train mode each element is zeroed with
/// probability `p` and survivors are scaled by 1/(1−p); the returned mask
/// must be reused verbatim in the backward pass. Eval mode is the
/// identity (no mask).
pub fn dropout(
    x: &Matrix,
    p: f64,
    train_mode: bool,
    rng: &mut Rng,
) -> Result<(Matrix, Option<DropoutMask>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout probability {p} outside [0,1)")));
    }
    if !train_mode || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let scale = 1.0 / (1.0 - p);
    let (r, c) = x.shape();
    let mut factors = Matrix::zeros(r, c);
    for f in factors.data_mut() {
        *f = if rng.bernoulli(p) { 0.0 } else { scale };
    }
    let mut y = x.clone();
    for (v, &f) in y.data_mut().iter_mut().zip(factors.data()) {
        *v *= f;
    }
    Ok((y, Some(DropoutMask { factors })))
}

pub fn dropout_backward(dy: &Matrix, mask: &DropoutMask) -> Matrix {
    debug_assert_eq!(dy.shape(), mask.factors.shape());
    let mut out = dy.clone();
    for (d, &f) in out.data_mut().iter_mut().zip(mask.factors.data()) {
        *d *= f;
    }
    out
}

/// He-style uniform fan-in initialization: entries uniform in
/// ±sqrt(6 / fan_in).
pub fn he_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let limit = (6.0 / rows as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.uniform(-limit, limit);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_case() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let w = Param::new(Matrix::identity(2));
        let b = Param::new(Matrix::zeros(1, 2));
        let y = affine_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn affine_hand_multiply() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let w = Param::new(Matrix::from_rows(&[vec![2.0, 3.0], vec![5.0, 7.0]]).unwrap());
        let b = Param::new(Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap());
        let y = affine_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
    }

    #[test]
    fn affine_backward_bias_is_column_sum() {
        let n = 5;
        let x = Matrix::zeros(n, 3);
        let mut w = Param::new(Matrix::zeros(3, 2));
        let mut b = Param::new(Matrix::zeros(1, 2));
        let dy = Matrix::from_vec(n, 2, vec![1.0; n * 2]).unwrap();
        affine_backward(&x, &mut w, &mut b, &dy).unwrap();
        assert_eq!(b.grad.data(), &[n as f64, n as f64]);
    }

    #[test]
    fn leaky_relu_values_and_tie_break() {
        let x = Matrix::from_rows(&[vec![3.0, -1.0, 0.0]]).unwrap();
        let y = leaky_relu(&x, 0.01);
        assert_eq!(y.data(), &[3.0, -0.01, 0.0]);
        let dy = Matrix::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let dx = leaky_relu_backward(&x, &dy, 0.01);
        assert_eq!(dx.data(), &[1.0, 0.01, 0.01]);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0]]).unwrap();
        let mut rng = Rng::new(0);
        let (y, mask) = dropout(&x, 0.5, false, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
    }

    #[test]
    fn dropout_p_zero_is_identity() {
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0]]).unwrap();
        let mut rng = Rng::new(0);
        let (y, mask) = dropout(&x, 0.0, true, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
    }

    #[test]
    fn dropout_rejects_bad_probability() {
        let x = Matrix::zeros(1, 1);
        let mut rng = Rng::new(0);
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
        assert!(dropout(&x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        // 1e5 ones through p=0.5: mean within 1.0 ± 0.02.
        let n = 100_000;
        let x = Matrix::from_vec(1, n, vec![1.0; n]).unwrap();
        let mut rng = Rng::new(123);
        let (y, _) = dropout(&x, 0.5, true, &mut rng).unwrap();
        let mean = y.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn dropout_mask_reused_in_backward() {
        let x = Matrix::from_vec(2, 4, vec![1.0; 8]).unwrap();
        let mut rng = Rng::new(9);
        let (y, mask) = dropout(&x, 0.5, true, &mut rng).unwrap();
        let dy = Matrix::from_vec(2, 4, vec![1.0; 8]).unwrap();
        let dx = dropout_backward(&dy, mask.as_ref().unwrap());
        // Gradient passes exactly where the forward survived.
        assert_eq!(dx.data(), y.data());
    }
}

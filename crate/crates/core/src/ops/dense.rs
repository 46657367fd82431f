use crate::error::{Error, Result};
use crate::tensor::{gemm, MatMut, MatRef, Real, Tensor};

/// `out (b x m) = x (b x n) * w (n x m) + bias`.
pub(crate) fn dense_forward(x: &[Real], b: usize, n: usize, w: &[Real], m: usize, bias: &[Real], out: &mut [Real]) {
    for row in out.chunks_exact_mut(m) {
        row.copy_from_slice(bias);
    }
    gemm(MatRef::new(x, b, n), MatRef::new(w, n, m), 1.0, MatMut::new(out, b, m));
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    x: &[Real],
    b: usize,
    n: usize,
    w: &[Real],
    m: usize,
    dout: &[Real],
    dx: Option<&mut [Real]>,
    dw: &mut [Real],
    db: &mut [Real],
) {
    for row in dout.chunks_exact(m) {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    let ds = MatRef::new(dout, b, m);
    gemm(MatRef::new(x, b, n).t(), ds, 1.0, MatMut::new(dw, n, m));
    if let Some(dx) = dx {
        gemm(ds, MatRef::new(w, n, m).t(), 1.0, MatMut::new(dx, b, n));
    }
}

/// Fully connected layer on a single `[N]` vector.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let n = input.numel();
    let (wn, m) = match *weights.shape() {
        [a, b] => (a, b),
        _ => return Err(Error::shape("dense", "weight rank", 2, weights.shape().len())),
    };
    if input.shape().len() != 1 {
        return Err(Error::shape("dense", "input rank", 1, input.shape().len()));
    }
    if wn != n {
        return Err(Error::shape("dense", "input features", wn, n));
    }
    if bias.shape() != [m] {
        return Err(Error::shape("dense", "bias length", m, bias.numel()));
    }
    let mut out = Tensor::zeros(&[m]);
    dense_forward(input.data(), 1, n, weights.data(), m, bias.data(), out.data_mut());
    Ok(out)
}

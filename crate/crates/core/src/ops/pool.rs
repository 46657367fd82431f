use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Size-2, stride-2 max pooling over time for one `t x c` sample.
///
/// Writes `floor(t/2) x c` values into `out` and the source time index of each
/// maximum into `argmax`; ties keep the earlier index.
pub(crate) fn maxpool_forward(x: &[Real], t: usize, c: usize, out: &mut [Real], argmax: &mut [u32]) {
    let tout = t / 2;
    for to in 0..tout {
        let a = &x[2 * to * c..(2 * to + 1) * c];
        let b = &x[(2 * to + 1) * c..(2 * to + 2) * c];
        for ch in 0..c {
            let (v, src) = if b[ch] > a[ch] {
                (b[ch], 2 * to + 1)
            } else {
                (a[ch], 2 * to)
            };
            out[to * c + ch] = v;
            argmax[to * c + ch] = src as u32;
        }
    }
}

/// Routes each output gradient to the recorded argmax position only.
pub(crate) fn maxpool_backward(dout: &[Real], c: usize, argmax: &[u32], dx: &mut [Real]) {
    for (i, (&g, &src)) in dout.iter().zip(argmax).enumerate() {
        dx[src as usize * c + i % c] += g;
    }
}

/// Max pooling with pool 2 / stride 2 along the first axis of a `[T, C]`
/// tensor. A trailing odd element is dropped.
pub fn maxpool1d(input: &Tensor) -> Result<Tensor> {
    let (t, c) = match *input.shape() {
        [t, c] => (t, c),
        _ => return Err(Error::shape("maxpool1d", "input rank", 2, input.shape().len())),
    };
    if t < 2 {
        return Err(Error::InvalidArgument(format!(
            "maxpool1d needs at least 2 time steps, got {t}"
        )));
    }
    let mut out = Tensor::zeros(&[t / 2, c]);
    let mut idx = vec![0u32; (t / 2) * c];
    maxpool_forward(input.data(), t, c, out.data_mut(), &mut idx);
    Ok(out)
}

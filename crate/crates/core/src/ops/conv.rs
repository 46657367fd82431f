use crate::error::{Error, Result};
use crate::tensor::{gemm, MatMut, MatRef, Real, Tensor};

/// Row range of the output that kernel tap `k` touches, and the input shift.
fn tap_range(t: usize, k: usize, ksize: usize) -> (usize, usize, isize) {
    let shift = k as isize - (ksize as isize - 1) / 2;
    let lo = (-shift).max(0) as usize;
    let hi = (t as isize - shift).min(t as isize).max(0) as usize;
    (lo, hi.max(lo), shift)
}

/// "Same"-padded 1D convolution of one `t x cin` sample into `out` (`t x cout`).
///
/// `w` is laid out `[ksize][cin][cout]`.
pub(crate) fn conv1d_forward(
    x: &[Real],
    t: usize,
    cin: usize,
    w: &[Real],
    ksize: usize,
    cout: usize,
    bias: &[Real],
    out: &mut [Real],
) {
    for row in out.chunks_exact_mut(cout) {
        row.copy_from_slice(bias);
    }
    for k in 0..ksize {
        let (lo, hi, shift) = tap_range(t, k, ksize);
        if hi == lo {
            continue;
        }
        let rows = hi - lo;
        let src = (lo as isize + shift) as usize;
        let wk = &w[k * cin * cout..(k + 1) * cin * cout];
        gemm(
            MatRef::new(&x[src * cin..(src + rows) * cin], rows, cin),
            MatRef::new(wk, cin, cout),
            1.0,
            MatMut::new(&mut out[lo * cout..hi * cout], rows, cout),
        );
    }
}

/// Accumulates weight/bias gradients and (optionally) the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_backward(
    x: &[Real],
    t: usize,
    cin: usize,
    w: &[Real],
    ksize: usize,
    cout: usize,
    dout: &[Real],
    mut dx: Option<&mut [Real]>,
    dw: &mut [Real],
    db: &mut [Real],
) {
    for row in dout.chunks_exact(cout) {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    for k in 0..ksize {
        let (lo, hi, shift) = tap_range(t, k, ksize);
        if hi == lo {
            continue;
        }
        let rows = hi - lo;
        let src = (lo as isize + shift) as usize;
        let xs = MatRef::new(&x[src * cin..(src + rows) * cin], rows, cin);
        let ds = MatRef::new(&dout[lo * cout..hi * cout], rows, cout);
        gemm(
            xs.t(),
            ds,
            1.0,
            MatMut::new(&mut dw[k * cin * cout..(k + 1) * cin * cout], cin, cout),
        );
        if let Some(dx) = dx.as_deref_mut() {
            let wk = MatRef::new(&w[k * cin * cout..(k + 1) * cin * cout], cin, cout);
            gemm(
                ds,
                wk.t(),
                1.0,
                MatMut::new(&mut dx[src * cin..(src + rows) * cin], rows, cin),
            );
        }
    }
}

/// Length-preserving 1D convolution with symmetric zero padding.
///
/// `input` is `[T, Cin]`, `weights` is `[K, Cin, Cout]` with `K` odd, `bias` is
/// `[Cout]`. Returns `[T, Cout]`.
pub fn conv1d(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (t, cin) = match *input.shape() {
        [t, c] => (t, c),
        _ => return Err(Error::shape("conv1d", "input rank", 2, input.shape().len())),
    };
    let (ksize, wcin, cout) = match *weights.shape() {
        [k, ci, co] => (k, ci, co),
        _ => return Err(Error::shape("conv1d", "weight rank", 3, weights.shape().len())),
    };
    if ksize % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "conv1d kernel size must be odd, got {ksize}"
        )));
    }
    if wcin != cin {
        return Err(Error::shape("conv1d", "input channels", wcin, cin));
    }
    if bias.shape() != [cout] {
        return Err(Error::shape("conv1d", "bias length", cout, bias.numel()));
    }
    let mut out = Tensor::zeros(&[t, cout]);
    conv1d_forward(
        input.data(),
        t,
        cin,
        weights.data(),
        ksize,
        cout,
        bias.data(),
        out.data_mut(),
    );
    Ok(out)
}

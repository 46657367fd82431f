//! LSTM cell and bidirectional scan.
//!
//! Weights use the concatenated-input layout: one `[(cin + h), 4h]` matrix
//! whose first `cin` rows multiply the input and last `h` rows the previous
//! hidden state, plus a `[4h]` bias. Gate blocks are ordered input, forget,
//! cell update, output.

use crate::error::{Error, Result};
use crate::ops::activation::sigmoid;
use crate::tensor::{gemm, MatMut, MatRef, Real, Tensor};

/// Weights of one LSTM direction.
#[derive(Debug, Clone)]
pub struct LstmWeights {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LstmWeights {
    /// Returns `(cin, hidden)` after validating the layout.
    pub fn dims(&self) -> Result<(usize, usize)> {
        let (rows, cols) = match *self.weight.shape() {
            [r, c] => (r, c),
            _ => return Err(Error::shape("lstm", "weight rank", 2, self.weight.shape().len())),
        };
        if cols % 4 != 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "lstm weight has {cols} columns, expected a positive multiple of 4"
            )));
        }
        let h = cols / 4;
        if rows <= h {
            return Err(Error::shape("lstm", "weight rows", h + 1, rows));
        }
        if self.bias.shape() != [cols] {
            return Err(Error::shape("lstm", "bias length", cols, self.bias.numel()));
        }
        Ok((rows - h, h))
    }

    pub fn param_count(cin: usize, hidden: usize) -> usize {
        (cin + hidden) * 4 * hidden + 4 * hidden
    }
}

/// One LSTM step: `i, f, o = sigmoid`, `g = tanh`, `c = f*c_prev + i*g`,
/// `h = o * tanh(c)`.
pub fn lstm_cell_step(x_t: &Tensor, h_prev: &Tensor, c_prev: &Tensor, params: &LstmWeights) -> Result<(Tensor, Tensor)> {
    let (cin, h) = params.dims()?;
    if x_t.shape() != [cin] {
        return Err(Error::shape("lstm_cell_step", "input length", cin, x_t.numel()));
    }
    if h_prev.shape() != [h] {
        return Err(Error::shape("lstm_cell_step", "hidden length", h, h_prev.numel()));
    }
    if c_prev.shape() != [h] {
        return Err(Error::shape("lstm_cell_step", "cell length", h, c_prev.numel()));
    }
    let w = params.weight.data();
    let mut z = params.bias.data().to_vec();
    let inputs = x_t.data().iter().chain(h_prev.data());
    for (row, &v) in inputs.enumerate() {
        let wr = &w[row * 4 * h..(row + 1) * 4 * h];
        for (zj, wj) in z.iter_mut().zip(wr) {
            *zj += v * wj;
        }
    }
    let mut c = vec![0.0; h];
    let mut hn = vec![0.0; h];
    for j in 0..h {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[h + j]);
        let g = z[2 * h + j].tanh();
        let o = sigmoid(z[3 * h + j]);
        c[j] = f * c_prev.data()[j] + i * g;
        hn[j] = o * c[j].tanh();
    }
    Ok((Tensor::from_vec(&[h], hn)?, Tensor::from_vec(&[h], c)?))
}

/// Activations kept for the backward pass of one direction over a batch.
#[derive(Debug, Clone)]
pub(crate) struct DirectionCache {
    /// Post-activation gates, `[b, t, 4h]`.
    gates: Vec<Real>,
    /// Cell state, `[b, t, h]`.
    cell: Vec<Real>,
    /// `tanh(cell)`, `[b, t, h]`.
    tanh_cell: Vec<Real>,
}

#[inline]
fn time_index(step: usize, t: usize, reverse: bool) -> usize {
    if reverse {
        t - 1 - step
    } else {
        step
    }
}

/// Layout of the hidden-state output: `[b, t, width]`, this direction
/// writing columns `offset..offset + h`.
#[derive(Clone, Copy)]
pub(crate) struct OutLayout {
    pub width: usize,
    pub offset: usize,
}

/// Scans one direction over a `[b, t, cin]` batch and writes hidden states
/// into `out`. Initial hidden and cell states are zero.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_direction_forward(
    x: &[Real],
    b: usize,
    t: usize,
    cin: usize,
    w: &[Real],
    bias: &[Real],
    h: usize,
    reverse: bool,
    out: &mut [Real],
    layout: OutLayout,
) -> DirectionCache {
    let g4 = 4 * h;
    let (wx, wh) = w.split_at(cin * g4);
    let mut gates = vec![0.0; b * t * g4];
    for row in gates.chunks_exact_mut(g4) {
        row.copy_from_slice(bias);
    }
    gemm(
        MatRef::new(x, b * t, cin),
        MatRef::new(wx, cin, g4),
        1.0,
        MatMut::new(&mut gates, b * t, g4),
    );
    let mut cell = vec![0.0; b * t * h];
    let mut tanh_cell = vec![0.0; b * t * h];
    let ow = layout.width;

    for step in 0..t {
        let tt = time_index(step, t, reverse);
        let prev = (step > 0).then(|| time_index(step - 1, t, reverse));
        if let Some(tp) = prev {
            gemm(
                MatRef::strided(&out[tp * ow + layout.offset..], b, h, t * ow, 1),
                MatRef::new(wh, h, g4),
                1.0,
                MatMut::strided(&mut gates[tt * g4..], b, g4, t * g4, 1),
            );
        }
        for bi in 0..b {
            let gi = (bi * t + tt) * g4;
            let ci = (bi * t + tt) * h;
            let z = &mut gates[gi..gi + g4];
            for j in 0..h {
                z[j] = sigmoid(z[j]);
                z[h + j] = sigmoid(z[h + j]);
                z[2 * h + j] = z[2 * h + j].tanh();
                z[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            for j in 0..h {
                let c_prev = match prev {
                    Some(tp) => cell[(bi * t + tp) * h + j],
                    None => 0.0,
                };
                let c = z[h + j] * c_prev + z[j] * z[2 * h + j];
                let tc = c.tanh();
                cell[ci + j] = c;
                tanh_cell[ci + j] = tc;
                out[(bi * t + tt) * ow + layout.offset + j] = z[3 * h + j] * tc;
            }
        }
    }
    DirectionCache {
        gates,
        cell,
        tanh_cell,
    }
}

/// Backpropagation through time for one direction.
///
/// `out` and `dout` share the `[b, t, width]` layout of the forward output.
/// Weight and bias gradients are accumulated; `dx`, when given, is
/// accumulated as well.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_direction_backward(
    x: &[Real],
    b: usize,
    t: usize,
    cin: usize,
    w: &[Real],
    h: usize,
    reverse: bool,
    out: &[Real],
    layout: OutLayout,
    cache: &DirectionCache,
    dout: &[Real],
    dx: Option<&mut [Real]>,
    dw: &mut [Real],
    dbias: &mut [Real],
) {
    let g4 = 4 * h;
    let ow = layout.width;
    let (wx, wh) = w.split_at(cin * g4);
    let (dwx, dwh) = dw.split_at_mut(cin * g4);
    let mut dgates = vec![0.0; b * t * g4];
    let mut dh_next = vec![0.0; b * h];
    let mut dc_next = vec![0.0; b * h];

    for step in (0..t).rev() {
        let tt = time_index(step, t, reverse);
        let prev = (step > 0).then(|| time_index(step - 1, t, reverse));
        for bi in 0..b {
            let gi = (bi * t + tt) * g4;
            let ci = (bi * t + tt) * h;
            let z = &cache.gates[gi..gi + g4];
            let dz = &mut dgates[gi..gi + g4];
            for j in 0..h {
                let (i, f, g, o) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                let tc = cache.tanh_cell[ci + j];
                let c_prev = match prev {
                    Some(tp) => cache.cell[(bi * t + tp) * h + j],
                    None => 0.0,
                };
                let dh = dout[(bi * t + tt) * ow + layout.offset + j] + dh_next[bi * h + j];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[bi * h + j];
                dc_next[bi * h + j] = dc * f;
                dz[j] = dc * g * i * (1.0 - i);
                dz[h + j] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - g * g);
                dz[3 * h + j] = d_o * o * (1.0 - o);
            }
        }
        if let Some(tp) = prev {
            let dz_t = MatRef::strided(&dgates[tt * g4..], b, g4, t * g4, 1);
            let h_prev = MatRef::strided(&out[tp * ow + layout.offset..], b, h, t * ow, 1);
            gemm(h_prev.t(), dz_t, 1.0, MatMut::new(dwh, h, g4));
            gemm(
                dz_t,
                MatRef::new(wh, h, g4).t(),
                0.0,
                MatMut::new(&mut dh_next, b, h),
            );
        }
    }

    for row in dgates.chunks_exact(g4) {
        for (acc, d) in dbias.iter_mut().zip(row) {
            *acc += d;
        }
    }
    let dz_all = MatRef::new(&dgates, b * t, g4);
    gemm(MatRef::new(x, b * t, cin).t(), dz_all, 1.0, MatMut::new(dwx, cin, g4));
    if let Some(dx) = dx {
        gemm(dz_all, MatRef::new(wx, cin, g4).t(), 1.0, MatMut::new(dx, b * t, cin));
    }
}

/// Bidirectional LSTM over a `[T, Cin]` sequence. Output row `t` is the
/// forward hidden state at `t` followed by the backward hidden state at `t`.
pub fn bilstm_forward(input: &Tensor, fwd: &LstmWeights, bwd: &LstmWeights) -> Result<Tensor> {
    let (t, cin) = match *input.shape() {
        [t, c] => (t, c),
        _ => return Err(Error::shape("bilstm", "input rank", 2, input.shape().len())),
    };
    if t == 0 {
        return Err(Error::InvalidArgument("bilstm needs at least one time step".into()));
    }
    let (fc, fh) = fwd.dims()?;
    let (bc, bh) = bwd.dims()?;
    if fc != cin {
        return Err(Error::shape("bilstm", "forward input channels", fc, cin));
    }
    if bc != cin {
        return Err(Error::shape("bilstm", "backward input channels", bc, cin));
    }
    if bh != fh {
        return Err(Error::shape("bilstm", "backward hidden size", fh, bh));
    }
    let width = 2 * fh;
    let mut out = vec![0.0; t * width];
    for (params, reverse, offset) in [(fwd, false, 0), (bwd, true, fh)] {
        lstm_direction_forward(
            input.data(),
            1,
            t,
            cin,
            params.weight.data(),
            params.bias.data(),
            fh,
            reverse,
            &mut out,
            OutLayout { width, offset },
        );
    }
    Tensor::from_vec(&[t, width], out)
}

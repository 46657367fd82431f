use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu(x: Real) -> Real {
    x.max(0.0)
}

pub fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(x: Real) -> Real {
    x.tanh()
}

/// Numerically stable softmax over a `[M]` tensor.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 1 {
        return Err(Error::shape("softmax", "input rank", 1, x.shape().len()));
    }
    x.ensure_finite("softmax input")?;
    let mut out = x.clone();
    let m = out.numel();
    softmax_rows_inplace(out.data_mut(), m);
    Ok(out)
}

pub(crate) fn softmax_rows_inplace(x: &mut [Real], m: usize) {
    for row in x.chunks_exact_mut(m) {
        let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Converts `dprobs` into gradients w.r.t. the softmax logits, in place.
pub(crate) fn softmax_backward_rows(probs: &[Real], dprobs: &mut [Real], m: usize) {
    for (p, d) in probs.chunks_exact(m).zip(dprobs.chunks_exact_mut(m)) {
        let dot: Real = p.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
        for (di, pi) in d.iter_mut().zip(p) {
            *di = pi * (*di - dot);
        }
    }
}

/// Zeroes gradient entries whose forward output was not positive.
pub(crate) fn relu_backward_inplace(out: &[Real], grad: &mut [Real]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_definition() {
        assert_eq!(relu(-2.0), 0.0);
        assert_eq!(relu(3.0), 3.0);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(1.0) + sigmoid(-1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_softmax() {
        let p = softmax(&Tensor::zeros(&[6])).unwrap();
        for &v in p.data() {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_of_large_logits() {
        // Reference from exact arithmetic: e^0 / (2 e^0 + e^-1) etc.
        let p = softmax(&Tensor::from_vec(&[3], vec![1000.0, 1000.0, 999.0]).unwrap()).unwrap();
        let e1 = (-1.0f64).exp();
        let expect = [1.0 / (2.0 + e1), 1.0 / (2.0 + e1), e1 / (2.0 + e1)];
        for (a, b) in p.data().iter().zip(expect) {
            assert!((*a as f64 - b).abs() < 1e-15);
        }
        assert!((p.data().iter().sum::<Real>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let x = Tensor::from_vec(&[2], vec![Real::NAN, 0.0]).unwrap();
        assert!(softmax(&x).is_err());
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let logits = [0.3, -1.2, 2.0, 0.1];
        let up = [0.5, -0.25, 1.0, 2.0];
        let f = |z: &[Real]| -> Real {
            let mut p = z.to_vec();
            softmax_rows_inplace(&mut p, 4);
            p.iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let mut p = logits.to_vec();
        softmax_rows_inplace(&mut p, 4);
        let mut g = up.to_vec();
        softmax_backward_rows(&p, &mut g, 4);
        for i in 0..4 {
            let (mut a, mut b) = (logits.to_vec(), logits.to_vec());
            a[i] += 1e-6;
            b[i] -= 1e-6;
            assert!(((f(&a) - f(&b)) / 2e-6 - g[i]).abs() < 1e-8);
        }
    }
}

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Probabilities are clamped to this floor before taking the log.
pub const PROB_FLOOR: Real = 1e-12;

fn check_inputs(probs: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let (b, m) = match *probs.shape() {
        [b, m] => (b, m),
        _ => return Err(Error::shape("cross_entropy", "probs rank", 2, probs.shape().len())),
    };
    if labels.len() != b {
        return Err(Error::shape("cross_entropy", "label count", b, labels.len()));
    }
    if b == 0 {
        return Err(Error::InvalidArgument("cross_entropy on an empty batch".into()));
    }
    for (i, &l) in labels.iter().enumerate() {
        if l >= m {
            return Err(Error::InvalidArgument(format!(
                "label {l} of sample {i} is outside [0, {m})"
            )));
        }
    }
    for (i, row) in probs.data().chunks_exact(m).enumerate() {
        let s: Real = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "probability row {i} sums to {s}"
            )));
        }
    }
    Ok((b, m))
}

/// Mean negative log-likelihood of the labelled class.
pub fn cross_entropy_loss(probs: &Tensor, labels: &[usize]) -> Result<Real> {
    weighted_cross_entropy_loss(probs, labels, None)
}

/// Cross-entropy with optional per-class weights; the mean is normalised by
/// the summed sample weights.
pub fn weighted_cross_entropy_loss(probs: &Tensor, labels: &[usize], class_weights: Option<&[Real]>) -> Result<Real> {
    let (_, m) = check_inputs(probs, labels)?;
    if let Some(w) = class_weights {
        if w.len() != m {
            return Err(Error::shape("cross_entropy", "class weights", m, w.len()));
        }
    }
    let mut total = 0.0;
    let mut norm = 0.0;
    for (row, &l) in probs.data().chunks_exact(m).zip(labels) {
        let w = class_weights.map_or(1.0, |w| w[l]);
        total -= w * row[l].max(PROB_FLOOR).ln();
        norm += w;
    }
    Ok(total / norm)
}

/// Gradient of the (weighted) mean loss w.r.t. the probabilities.
pub(crate) fn cross_entropy_backward(probs: &[Real], labels: &[usize], m: usize, class_weights: Option<&[Real]>) -> Vec<Real> {
    let norm: Real = match class_weights {
        Some(w) => labels.iter().map(|&l| w[l]).sum(),
        None => labels.len() as Real,
    };
    let mut grad = vec![0.0; probs.len()];
    for (i, &l) in labels.iter().enumerate() {
        let p = probs[i * m + l];
        let w = class_weights.map_or(1.0, |w| w[l]);
        // The clamp is flat below the floor.
        if p > PROB_FLOOR {
            grad[i * m + l] = -w / (p * norm);
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let mut p = vec![0.0; 12];
        p[2] = 1.0;
        p[6 + 5] = 1.0;
        let probs = Tensor::from_vec(&[2, 6], p).unwrap();
        assert_eq!(cross_entropy_loss(&probs, &[2, 5]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_is_ln_six() {
        let probs = Tensor::from_vec(&[3, 6], vec![1.0 / 6.0; 18]).unwrap();
        let l = cross_entropy_loss(&probs, &[0, 3, 5]).unwrap();
        assert!((l - (6.0 as Real).ln()).abs() < 1e-12);
        assert!((l - 1.7918).abs() < 1e-4);
    }

    #[test]
    fn matches_per_sample_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (b, m) = (7, 6);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..b {
            let raw: Vec<Real> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: Real = raw.iter().sum();
            data.extend(raw.iter().map(|v| v / s));
            labels.push(rng.random_range(0..m));
        }
        let mut oracle = 0.0;
        for i in 0..b {
            oracle += -data[i * m + labels[i]].ln();
        }
        oracle /= b as Real;
        let probs = Tensor::from_vec(&[b, m], data).unwrap();
        assert!((cross_entropy_loss(&probs, &labels).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn floor_keeps_loss_finite() {
        let mut p = vec![0.0; 6];
        p[0] = 1.0;
        let probs = Tensor::from_vec(&[1, 6], p).unwrap();
        let l = cross_entropy_loss(&probs, &[3]).unwrap();
        assert!((l + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn invalid_labels_and_rows() {
        let probs = Tensor::from_vec(&[1, 6], vec![1.0 / 6.0; 6]).unwrap();
        assert!(cross_entropy_loss(&probs, &[6]).is_err());
        assert!(cross_entropy_loss(&probs, &[0, 1]).is_err());
        let bad = Tensor::from_vec(&[1, 6], vec![0.5; 6]).unwrap();
        assert!(cross_entropy_loss(&bad, &[0]).is_err());
    }

    #[test]
    fn weights_reduce_to_plain_mean_when_uniform() {
        let probs = Tensor::from_vec(&[2, 6], {
            let mut v = vec![0.1; 12];
            v[0] = 0.5;
            v[6 + 1] = 0.5;
            v
        })
        .unwrap();
        let plain = cross_entropy_loss(&probs, &[0, 2]).unwrap();
        let w = weighted_cross_entropy_loss(&probs, &[0, 2], Some(&[2.0; 6])).unwrap();
        assert!((plain - w).abs() < 1e-15);
    }
}

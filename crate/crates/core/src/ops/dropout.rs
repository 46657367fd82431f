use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1/(1-rate)`.
pub(crate) fn dropout_mask<R: Rng + ?Sized>(n: usize, rate: Real, rng: &mut R) -> Vec<Real> {
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| {
            if (rng.random::<f64>() as Real) < rate {
                0.0
            } else {
                keep
            }
        })
        .collect()
}

fn check_rate(rate: Real) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Inverted dropout. Identity in eval mode or when `rate` is zero.
pub fn dropout<R: Rng + ?Sized>(input: &Tensor, rate: Real, mode: Mode, rng: &mut R) -> Result<Tensor> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(input.clone());
    }
    let mask = dropout_mask(input.numel(), rate, rng);
    let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Tensor::from_vec(input.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_and_eval_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, Mode::Eval, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.4, Mode::Eval, &mut rng).unwrap(), x);
    }

    #[test]
    fn rejects_rate_of_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(dropout(&Tensor::zeros(&[2]), 1.0, Mode::Train, &mut rng).is_err());
        assert!(dropout(&Tensor::zeros(&[2]), -0.1, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn zeroed_fraction_concentrates() {
        // Binomial(1e6, 0.4) has sd ~ 4.9e-4, so +-0.005 is about ten sigma.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let x = Tensor::from_vec(&[1_000_000], vec![1.0; 1_000_000]).unwrap();
        let y = dropout(&x, 0.4, Mode::Train, &mut rng).unwrap();
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((zeros - 0.4).abs() < 0.005, "{zeros}");
        let survivors: Vec<_> = y.data().iter().filter(|&&v| v != 0.0).collect();
        assert!(survivors.iter().all(|&&v| (v - 1.0 / 0.6).abs() < 1e-12));
    }
}

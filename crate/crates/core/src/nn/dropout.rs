use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Inverted dropout. Returns the output and the per-element multiplier
/// (`None` when the op is the identity).
pub fn dropout<R: Rng + ?Sized>(
    x: &Tensor,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::DropoutRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
    Ok((Tensor::new(x.shape().to_vec(), data)?, Some(mask)))
}

pub fn dropout_backward(mask: Option<&[f64]>, grad: &Tensor) -> Tensor {
    match mask {
        None => grad.clone(),
        Some(m) => {
            let data = grad.data().iter().zip(m).map(|(g, k)| g * k).collect();
            Tensor::new(grad.shape().to_vec(), data).expect("same shape")
        }
    }
}

//! Batch normalization over the last (channel) axis.

use super::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.99;
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Saved from a training-mode forward pass.
pub struct BatchNormCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn channels(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<usize> {
    let c = *x.shape().last().ok_or_else(|| Error::Shape("batchnorm on a scalar".into()))?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape(format!(
            "batchnorm over {c} channels with gamma {:?}, beta {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok(c)
}

pub fn batchnorm_train(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<(Tensor, BatchNormCache)> {
    let c = channels(x, gamma, beta)?;
    if x.batch() < 2 {
        return Err(Error::BatchTooSmall);
    }
    let m = (x.len() / c) as f64;
    let mut mean = vec![0.0; c];
    for row in x.data().chunks(c) {
        for (a, v) in mean.iter_mut().zip(row) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m);
    let mut var = vec![0.0; c];
    for row in x.data().chunks(c) {
        for ((a, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            *a += (v - mu) * (v - mu);
        }
    }
    var.iter_mut().for_each(|a| *a /= m);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();

    let mut xhat = Vec::with_capacity(x.len());
    let mut y = Vec::with_capacity(x.len());
    for row in x.data().chunks(c) {
        for k in 0..c {
            let h = (row[k] - mean[k]) * inv_std[k];
            xhat.push(h);
            y.push(gamma.data()[k] * h + beta.data()[k]);
        }
    }
    let shape = x.shape().to_vec();
    Ok((
        Tensor::new(shape.clone(), y)?,
        BatchNormCache {
            xhat: Tensor::new(shape, xhat)?,
            inv_std,
            mean,
            var,
        },
    ))
}

pub fn batchnorm_infer(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    let c = channels(x, gamma, beta)?;
    let scale: Vec<f64> = (0..c)
        .map(|k| gamma.data()[k] / (running_var.data()[k] + eps).sqrt())
        .collect();
    let shift: Vec<f64> = (0..c)
        .map(|k| beta.data()[k] - running_mean.data()[k] * scale[k])
        .collect();
    let data = x
        .data()
        .chunks(c)
        .flat_map(|row| (0..c).map(|k| row[k] * scale[k] + shift[k]).collect::<Vec<_>>())
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// `running = momentum * running + (1 - momentum) * batch`.
pub fn update_running(running_mean: &mut Tensor, running_var: &mut Tensor, cache: &BatchNormCache, momentum: f64) {
    for (r, b) in running_mean.data_mut().iter_mut().zip(&cache.mean) {
        *r = momentum * *r + (1.0 - momentum) * b;
    }
    for (r, b) in running_var.data_mut().iter_mut().zip(&cache.var) {
        *r = momentum * *r + (1.0 - momentum) * b;
    }
}

pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// Gradient of a training-mode forward pass, including the batch-statistics terms.
pub fn batchnorm_backward(cache: &BatchNormCache, gamma: &Tensor, grad: &Tensor) -> Result<BatchNormGrads> {
    let c = gamma.len();
    if grad.shape() != cache.xhat.shape() {
        return Err(Error::Shape(format!("batchnorm grad {:?}", grad.shape())));
    }
    let m = (grad.len() / c) as f64;
    let mut gbeta = vec![0.0; c];
    let mut ggamma = vec![0.0; c];
    for (g, h) in grad.data().chunks(c).zip(cache.xhat.data().chunks(c)) {
        for k in 0..c {
            gbeta[k] += g[k];
            ggamma[k] += g[k] * h[k];
        }
    }
    let mut gx = Vec::with_capacity(grad.len());
    for (g, h) in grad.data().chunks(c).zip(cache.xhat.data().chunks(c)) {
        for k in 0..c {
            let s = gamma.data()[k] * cache.inv_std[k] / m;
            gx.push(s * (m * g[k] - gbeta[k] - h[k] * ggamma[k]));
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::new(grad.shape().to_vec(), gx)?,
        gamma: Tensor::new(vec![c], ggamma)?,
        beta: Tensor::new(vec![c], gbeta)?,
    })
}

use rayon::prelude::*;

use super::loss::softmax;
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::None => "none",
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
        }
    }

    pub fn parse(s: &str) -> Result<Activation> {
        match s {
            "none" | "linear" => Ok(Activation::None),
            "relu" => Ok(Activation::Relu),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

fn dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    match (x.shape(), w.shape()) {
        (&[n, i], &[wi, o]) if i == wi && b.len() == o => Ok((n, i, o)),
        (xs, ws) => Err(Error::Shape(format!(
            "dense input {xs:?}, weights {ws:?}, bias {:?}",
            b.shape()
        ))),
    }
}

/// `act(x · w + b)` for `x: [N, in]`, `w: [in, out]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor, act: Activation) -> Result<Tensor> {
    let (n, i, o) = dims(x, w, b)?;
    let wd = w.data();
    let mut y = vec![0.0; n * o];
    y.par_chunks_mut(o).zip(x.data().par_chunks(i)).for_each(|(yr, xr)| {
        yr.copy_from_slice(b.data());
        for (k, &xv) in xr.iter().enumerate() {
            for (dst, wv) in yr.iter_mut().zip(&wd[k * o..(k + 1) * o]) {
                *dst += xv * wv;
            }
        }
        match act {
            Activation::None => {}
            Activation::Relu => yr.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Softmax => {
                let s = softmax(yr);
                yr.copy_from_slice(&s);
            }
        }
    });
    Tensor::new(vec![n, o], y)
}

pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Backward pass given the forward input `x` and activated output `y`.
pub fn dense_backward(x: &Tensor, w: &Tensor, y: &Tensor, act: Activation, grad: &Tensor) -> Result<DenseGrads> {
    let n = x.batch();
    let (i, o) = (x.row_len(), y.row_len());
    if grad.shape() != y.shape() || w.shape() != [i, o] {
        return Err(Error::Shape(format!("dense grad {:?} for output {:?}", grad.shape(), y.shape())));
    }
    // gradient w.r.t. the pre-activation
    let gz: Vec<f64> = match act {
        Activation::None => grad.data().to_vec(),
        Activation::Relu => grad
            .data()
            .iter()
            .zip(y.data())
            .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
            .collect(),
        Activation::Softmax => grad
            .data()
            .chunks(o)
            .zip(y.data().chunks(o))
            .flat_map(|(g, p)| {
                let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
                g.iter().zip(p).map(move |(a, b)| b * (a - dot)).collect::<Vec<_>>()
            })
            .collect(),
    };
    let wd = w.data();
    let gx: Vec<f64> = gz
        .par_chunks(o)
        .flat_map_iter(|g| (0..i).map(move |k| wd[k * o..(k + 1) * o].iter().zip(g).map(|(a, b)| a * b).sum::<f64>()))
        .collect();
    let mut gw = vec![0.0; i * o];
    gw.par_chunks_mut(o).enumerate().for_each(|(k, row)| {
        for s in 0..n {
            let xv = x.data()[s * i + k];
            if xv == 0.0 {
                continue;
            }
            for (dst, g) in row.iter_mut().zip(&gz[s * o..(s + 1) * o]) {
                *dst += xv * g;
            }
        }
    });
    let mut gb = vec![0.0; o];
    for g in gz.chunks(o) {
        for (dst, v) in gb.iter_mut().zip(g) {
            *dst += v;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(x.shape().to_vec(), gx)?,
        weights: Tensor::new(vec![i, o], gw)?,
        bias: Tensor::new(vec![o], gb)?,
    })
}

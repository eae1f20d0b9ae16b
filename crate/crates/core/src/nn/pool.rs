//! 2×2 / stride-2 pooling over channels-last `[N, H, W, C]`. Odd trailing
//! rows or columns are dropped.

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Average,
    Max,
}

impl PoolKind {
    pub fn name(self) -> &'static str {
        match self {
            PoolKind::Average => "average",
            PoolKind::Max => "max",
        }
    }
}

impl std::str::FromStr for PoolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<PoolKind> {
        match s {
            "average" | "avg" => Ok(PoolKind::Average),
            "max" => Ok(PoolKind::Max),
            other => Err(Error::Config(format!("unknown pooling kind {other:?}"))),
        }
    }
}

/// Output plus, for max pooling, the flat input index chosen for each output.
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

fn dims(x: &Tensor) -> Result<[usize; 4]> {
    match *x.shape() {
        [n, h, w, c] => Ok([n, h, w, c]),
        ref s => Err(Error::Shape(format!("pool2d expects [N, H, W, C], got {s:?}"))),
    }
}

pub fn pool2d_forward(x: &Tensor, kind: PoolKind) -> Result<Pooled> {
    let [n, h, w, c] = dims(x)?;
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut argmax = Vec::new();
    for b in 0..n {
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..c {
                    let idx = |di: usize, dj: usize| ((b * h + 2 * i + di) * w + 2 * j + dj) * c + ch;
                    let cells = [idx(0, 0), idx(0, 1), idx(1, 0), idx(1, 1)];
                    match kind {
                        PoolKind::Average => out.push(cells.iter().map(|&k| xd[k]).sum::<f64>() * 0.25),
                        PoolKind::Max => {
                            let best = cells.into_iter().fold(cells[0], |a, k| if xd[k] > xd[a] { k } else { a });
                            out.push(xd[best]);
                            argmax.push(best);
                        }
                    }
                }
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new(vec![n, oh, ow, c], out)?,
        argmax,
    })
}

pub fn pool2d_backward(input_shape: &[usize], kind: PoolKind, argmax: &[usize], grad: &Tensor) -> Result<Tensor> {
    let &[n, h, w, c] = input_shape else {
        return Err(Error::Shape(format!("pool2d input shape {input_shape:?}")));
    };
    let (oh, ow) = (h / 2, w / 2);
    if grad.shape() != [n, oh, ow, c] {
        return Err(Error::Shape(format!("pool2d grad {:?}", grad.shape())));
    }
    let mut gx = Tensor::zeros(input_shape);
    let gxd = gx.data_mut();
    match kind {
        PoolKind::Max => {
            for (&k, &g) in argmax.iter().zip(grad.data()) {
                gxd[k] += g;
            }
        }
        PoolKind::Average => {
            let gd = grad.data();
            for b in 0..n {
                for i in 0..oh {
                    for j in 0..ow {
                        for ch in 0..c {
                            let g = gd[((b * oh + i) * ow + j) * c + ch] * 0.25;
                            for di in 0..2 {
                                for dj in 0..2 {
                                    gxd[((b * h + 2 * i + di) * w + 2 * j + dj) * c + ch] += g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(gx)
}

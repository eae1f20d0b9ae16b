//! Stride-1 `same` cross-correlation over channels-last `[N, H, W, C]`.
//!
//! Even kernel extents pad like the usual frameworks: `(k - 1) / 2` before,
//! the remainder after.

use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};

struct Dims {
    n: usize,
    h: usize,
    w: usize,
    ci: usize,
    kh: usize,
    kw: usize,
    co: usize,
}

impl Dims {
    fn pad(&self) -> (isize, isize) {
        (((self.kh - 1) / 2) as isize, ((self.kw - 1) / 2) as isize)
    }
}

fn dims(x: &Tensor, kernel: &Tensor) -> Result<Dims> {
    match (x.shape(), kernel.shape()) {
        (&[n, h, w, ci], &[kh, kw, kci, co]) if ci == kci && kh > 0 && kw > 0 => Ok(Dims {
            n,
            h,
            w,
            ci,
            kh,
            kw,
            co,
        }),
        (xs, ks) => Err(Error::Shape(format!("conv2d input {xs:?} with kernel {ks:?}"))),
    }
}

pub fn conv2d_forward(x: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = dims(x, kernel)?;
    if bias.len() != d.co {
        return Err(Error::Shape(format!("conv2d bias {:?} for {} filters", bias.shape(), d.co)));
    }
    let (pt, pl) = d.pad();
    let xd = x.data();
    let kd = kernel.data();
    let bd = bias.data();
    let mut y = vec![0.0; d.n * d.h * d.w * d.co];
    y.par_chunks_mut(d.h * d.w * d.co).enumerate().for_each(|(n, yn)| {
        let xn = &xd[n * d.h * d.w * d.ci..(n + 1) * d.h * d.w * d.ci];
        for i in 0..d.h {
            for j in 0..d.w {
                let out = &mut yn[(i * d.w + j) * d.co..(i * d.w + j + 1) * d.co];
                out.copy_from_slice(bd);
                for di in 0..d.kh {
                    let ii = i as isize + di as isize - pt;
                    if ii < 0 || ii >= d.h as isize {
                        continue;
                    }
                    for dj in 0..d.kw {
                        let jj = j as isize + dj as isize - pl;
                        if jj < 0 || jj >= d.w as isize {
                            continue;
                        }
                        let xrow = &xn[(ii as usize * d.w + jj as usize) * d.ci..][..d.ci];
                        let krow = &kd[(di * d.kw + dj) * d.ci * d.co..][..d.ci * d.co];
                        for (c, &xv) in xrow.iter().enumerate() {
                            let kk = &krow[c * d.co..(c + 1) * d.co];
                            for (o, &kv) in out.iter_mut().zip(kk) {
                                *o += xv * kv;
                            }
                        }
                    }
                }
            }
        }
    });
    Tensor::new(vec![d.n, d.h, d.w, d.co], y)
}

pub struct Conv2dGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(x: &Tensor, kernel: &Tensor, grad: &Tensor) -> Result<Conv2dGrads> {
    let d = dims(x, kernel)?;
    if grad.shape() != [d.n, d.h, d.w, d.co] {
        return Err(Error::Shape(format!("conv2d grad {:?}", grad.shape())));
    }
    let (pt, pl) = d.pad();
    let xd = x.data();
    let kd = kernel.data();
    let gd = grad.data();
    let plane = d.h * d.w;
    let ksize = d.kh * d.kw * d.ci * d.co;

    // per-sample partial kernel/bias gradients, summed afterwards in sample order
    let per_sample: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..d.n)
        .into_par_iter()
        .map(|n| {
            let xn = &xd[n * plane * d.ci..(n + 1) * plane * d.ci];
            let gn = &gd[n * plane * d.co..(n + 1) * plane * d.co];
            let mut gx = vec![0.0; plane * d.ci];
            let mut gk = vec![0.0; ksize];
            let mut gb = vec![0.0; d.co];
            for i in 0..d.h {
                for j in 0..d.w {
                    let g = &gn[(i * d.w + j) * d.co..][..d.co];
                    for (b, v) in gb.iter_mut().zip(g) {
                        *b += v;
                    }
                    for di in 0..d.kh {
                        let ii = i as isize + di as isize - pt;
                        if ii < 0 || ii >= d.h as isize {
                            continue;
                        }
                        for dj in 0..d.kw {
                            let jj = j as isize + dj as isize - pl;
                            if jj < 0 || jj >= d.w as isize {
                                continue;
                            }
                            let xoff = (ii as usize * d.w + jj as usize) * d.ci;
                            let koff = (di * d.kw + dj) * d.ci * d.co;
                            for c in 0..d.ci {
                                let kk = &kd[koff + c * d.co..koff + (c + 1) * d.co];
                                let acc: f64 = kk.iter().zip(g).map(|(a, b)| a * b).sum();
                                gx[xoff + c] += acc;
                                let xv = xn[xoff + c];
                                let gkr = &mut gk[koff + c * d.co..koff + (c + 1) * d.co];
                                for (dst, gv) in gkr.iter_mut().zip(g) {
                                    *dst += xv * gv;
                                }
                            }
                        }
                    }
                }
            }
            (gx, gk, gb)
        })
        .collect();

    let mut gx = Vec::with_capacity(d.n * plane * d.ci);
    let mut gk = vec![0.0; ksize];
    let mut gb = vec![0.0; d.co];
    for (sx, sk, sb) in per_sample {
        gx.extend_from_slice(&sx);
        for (a, b) in gk.iter_mut().zip(&sk) {
            *a += b;
        }
        for (a, b) in gb.iter_mut().zip(&sb) {
            *a += b;
        }
    }
    Ok(Conv2dGrads {
        input: Tensor::new(x.shape().to_vec(), gx)?,
        kernel: Tensor::new(kernel.shape().to_vec(), gk)?,
        bias: Tensor::new(vec![d.co], gb)?,
    })
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient through a ReLU given its output.
pub fn relu_backward(output: &Tensor, grad: &Tensor) -> Tensor {
    let data = output
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(output.shape().to_vec(), data).expect("same shape")
}

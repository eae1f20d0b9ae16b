//! Single-direction LSTM over `[N, T, d]` with a padding mask.
//!
//! Gate order in the packed kernels is input, forget, candidate, output.
//! A masked step carries `h` and `c` through unchanged, so its output is the
//! previous hidden state. A reverse pass walks `T-1..0` and writes its outputs
//! back at the original positions.

use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};

pub struct LstmWeights<'a> {
    /// `[d, 4u]`
    pub kernel: &'a Tensor,
    /// `[u, 4u]`
    pub recurrent: &'a Tensor,
    /// `[4u]`
    pub bias: &'a Tensor,
}

impl LstmWeights<'_> {
    fn dims(&self, x: &Tensor) -> Result<(usize, usize, usize, usize)> {
        let (n, t, d) = match *x.shape() {
            [n, t, d] => (n, t, d),
            ref s => return Err(Error::Shape(format!("lstm expects [N, T, d], got {s:?}"))),
        };
        let u = self.recurrent.shape().first().copied().unwrap_or(0);
        if self.kernel.shape() != [d, 4 * u] || self.recurrent.shape() != [u, 4 * u] || self.bias.len() != 4 * u {
            return Err(Error::Shape(format!(
                "lstm kernel {:?}, recurrent {:?}, bias {:?} for input width {d}",
                self.kernel.shape(),
                self.recurrent.shape(),
                self.bias.shape()
            )));
        }
        Ok((n, t, d, u))
    }
}

/// Per-sample activations kept for the backward pass, indexed by time.
pub struct LstmCache {
    units: usize,
    steps: usize,
    /// `[N, T, 4u]` activated gates
    gates: Vec<f64>,
    /// `[N, T, u]` cell state after each step
    cells: Vec<f64>,
    /// `[N, T, u]` hidden state after each step
    hidden: Vec<f64>,
}

pub struct LstmOutput {
    /// `[N, T, u]`
    pub sequence: Tensor,
    /// `[N, u]`, the state after the last processed step
    pub last: Tensor,
    pub cache: LstmCache,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn order(t: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..t).rev())
    } else {
        Box::new(0..t)
    }
}

pub fn lstm_forward(x: &Tensor, mask: &[bool], w: &LstmWeights, reverse: bool) -> Result<LstmOutput> {
    let (n, t, d, u) = w.dims(x)?;
    if mask.len() != n * t {
        return Err(Error::Shape(format!("mask of {} for [{n}, {t}]", mask.len())));
    }
    if let Some(s) = (0..n).find(|&s| !mask[s * t..(s + 1) * t].iter().any(|&m| m)) {
        return Err(Error::FullyMasked(s));
    }
    let (kd, rd, bd) = (w.kernel.data(), w.recurrent.data(), w.bias.data());
    let g4 = 4 * u;

    let per_sample: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let xs = &x.data()[s * t * d..(s + 1) * t * d];
            let ms = &mask[s * t..(s + 1) * t];
            let mut gates = vec![0.0; t * g4];
            let mut cells = vec![0.0; t * u];
            let mut hidden = vec![0.0; t * u];
            let mut h = vec![0.0; u];
            let mut c = vec![0.0; u];
            let mut z = vec![0.0; g4];
            for step in order(t, reverse) {
                if ms[step] {
                    z.copy_from_slice(bd);
                    for (k, &xv) in xs[step * d..(step + 1) * d].iter().enumerate() {
                        for (dst, kv) in z.iter_mut().zip(&kd[k * g4..(k + 1) * g4]) {
                            *dst += xv * kv;
                        }
                    }
                    for (k, &hv) in h.iter().enumerate() {
                        for (dst, rv) in z.iter_mut().zip(&rd[k * g4..(k + 1) * g4]) {
                            *dst += hv * rv;
                        }
                    }
                    let gs = &mut gates[step * g4..(step + 1) * g4];
                    for j in 0..u {
                        let (i, f, g, o) = (
                            sigmoid(z[j]),
                            sigmoid(z[u + j]),
                            z[2 * u + j].tanh(),
                            sigmoid(z[3 * u + j]),
                        );
                        gs[j] = i;
                        gs[u + j] = f;
                        gs[2 * u + j] = g;
                        gs[3 * u + j] = o;
                        c[j] = f * c[j] + i * g;
                        h[j] = o * c[j].tanh();
                    }
                }
                cells[step * u..(step + 1) * u].copy_from_slice(&c);
                hidden[step * u..(step + 1) * u].copy_from_slice(&h);
            }
            (gates, cells, hidden)
        })
        .collect();

    let mut gates = Vec::with_capacity(n * t * g4);
    let mut cells = Vec::with_capacity(n * t * u);
    let mut hidden = Vec::with_capacity(n * t * u);
    let mut last = Vec::with_capacity(n * u);
    let final_step = if reverse { 0 } else { t - 1 };
    for (g, c, h) in per_sample {
        last.extend_from_slice(&h[final_step * u..(final_step + 1) * u]);
        gates.extend(g);
        cells.extend(c);
        hidden.extend(h);
    }
    Ok(LstmOutput {
        sequence: Tensor::new(vec![n, t, u], hidden.clone())?,
        last: Tensor::new(vec![n, u], last)?,
        cache: LstmCache {
            units: u,
            steps: t,
            gates,
            cells,
            hidden,
        },
    })
}

pub struct LstmGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub recurrent: Tensor,
    pub bias: Tensor,
}

/// Backpropagation through time. Either upstream gradient may be absent.
/// Input, kernel, recurrent and bias gradients of one sample.
type SampleGrads = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

pub fn lstm_backward(
    x: &Tensor,
    mask: &[bool],
    w: &LstmWeights,
    reverse: bool,
    cache: &LstmCache,
    grad_sequence: Option<&Tensor>,
    grad_last: Option<&Tensor>,
) -> Result<LstmGrads> {
    let (n, t, d, u) = w.dims(x)?;
    if cache.units != u || cache.steps != t {
        return Err(Error::Shape("lstm cache does not match input".into()));
    }
    if grad_sequence.is_some_and(|g| g.shape() != [n, t, u]) || grad_last.is_some_and(|g| g.shape() != [n, u]) {
        return Err(Error::Shape("lstm upstream gradient shape".into()));
    }
    let (kd, rd) = (w.kernel.data(), w.recurrent.data());
    let g4 = 4 * u;

    let per_sample: Vec<SampleGrads> = (0..n)
        .into_par_iter()
        .map(|s| {
            let xs = &x.data()[s * t * d..(s + 1) * t * d];
            let ms = &mask[s * t..(s + 1) * t];
            let gates = &cache.gates[s * t * g4..(s + 1) * t * g4];
            let cells = &cache.cells[s * t * u..(s + 1) * t * u];
            let hidden = &cache.hidden[s * t * u..(s + 1) * t * u];
            let mut gx = vec![0.0; t * d];
            let mut gk = vec![0.0; d * g4];
            let mut gr = vec![0.0; u * g4];
            let mut gb = vec![0.0; g4];
            let mut dh = match grad_last {
                Some(g) => g.data()[s * u..(s + 1) * u].to_vec(),
                None => vec![0.0; u],
            };
            let mut dc = vec![0.0; u];
            let mut dz = vec![0.0; g4];
            let zero = vec![0.0; u];
            let steps: Vec<usize> = order(t, reverse).collect();
            for (k, &step) in steps.iter().enumerate().rev() {
                if let Some(g) = grad_sequence {
                    for (a, b) in dh.iter_mut().zip(&g.data()[(s * t + step) * u..(s * t + step + 1) * u]) {
                        *a += b;
                    }
                }
                if !ms[step] {
                    continue;
                }
                let (h_prev, c_prev) = if k == 0 {
                    (&zero[..], &zero[..])
                } else {
                    let p = steps[k - 1];
                    (&hidden[p * u..(p + 1) * u], &cells[p * u..(p + 1) * u])
                };
                let gs = &gates[step * g4..(step + 1) * g4];
                let c = &cells[step * u..(step + 1) * u];
                for j in 0..u {
                    let (i, f, g, o) = (gs[j], gs[u + j], gs[2 * u + j], gs[3 * u + j]);
                    let tc = c[j].tanh();
                    let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
                    dz[j] = dct * g * i * (1.0 - i);
                    dz[u + j] = dct * c_prev[j] * f * (1.0 - f);
                    dz[2 * u + j] = dct * i * (1.0 - g * g);
                    dz[3 * u + j] = dh[j] * tc * o * (1.0 - o);
                    dc[j] = dct * f;
                }
                for (a, b) in gb.iter_mut().zip(&dz) {
                    *a += b;
                }
                let xt = &xs[step * d..(step + 1) * d];
                for (kk, &xv) in xt.iter().enumerate() {
                    let krow = &kd[kk * g4..(kk + 1) * g4];
                    gx[step * d + kk] = krow.iter().zip(&dz).map(|(a, b)| a * b).sum();
                    for (dst, z) in gk[kk * g4..(kk + 1) * g4].iter_mut().zip(&dz) {
                        *dst += xv * z;
                    }
                }
                for (kk, &hv) in h_prev.iter().enumerate() {
                    let rrow = &rd[kk * g4..(kk + 1) * g4];
                    dh[kk] = rrow.iter().zip(&dz).map(|(a, b)| a * b).sum();
                    for (dst, z) in gr[kk * g4..(kk + 1) * g4].iter_mut().zip(&dz) {
                        *dst += hv * z;
                    }
                }
            }
            (gx, gk, gr, gb)
        })
        .collect();

    let mut gx = Vec::with_capacity(n * t * d);
    let mut gk = vec![0.0; d * g4];
    let mut gr = vec![0.0; u * g4];
    let mut gb = vec![0.0; g4];
    for (sx, sk, sr, sb) in per_sample {
        gx.extend(sx);
        for (a, b) in gk.iter_mut().zip(&sk) {
            *a += b;
        }
        for (a, b) in gr.iter_mut().zip(&sr) {
            *a += b;
        }
        for (a, b) in gb.iter_mut().zip(&sb) {
            *a += b;
        }
    }
    Ok(LstmGrads {
        input: Tensor::new(vec![n, t, d], gx)?,
        kernel: Tensor::new(vec![d, g4], gk)?,
        recurrent: Tensor::new(vec![u, g4], gr)?,
        bias: Tensor::new(vec![g4], gb)?,
    })
}

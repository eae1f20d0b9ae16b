use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{LayerSpec, ModelKind, ModelSpec};
use crate::encoding::PAD_ID;
use crate::error::{Error, Result};
use crate::nn::{self, init, Activation, BatchNormCache, LstmCache, LstmWeights, Param, Tensor};

/// A batch of token ids, `n` samples of `len` ids each. Convolutional models
/// expect `len == rows * cols`; recurrent models take right-padded sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub ids: Vec<u32>,
    pub n: usize,
    pub len: usize,
}

impl Batch {
    /// Right-pad variable-length id sequences to the longest one.
    pub fn padded(seqs: &[&[u32]]) -> Batch {
        let len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(seqs.len() * len);
        for s in seqs {
            ids.extend_from_slice(s);
            ids.extend(std::iter::repeat_n(PAD_ID, len - s.len()));
        }
        Batch {
            ids,
            n: seqs.len(),
            len,
        }
    }
}

pub enum Input<'a> {
    Ids(&'a Batch),
    /// Skip the lookup and start from an embedded tensor.
    Embedded { x: &'a Tensor, mask: Option<&'a [bool]> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
    /// Batch statistics in batch normalization, no dropout.
    Calibrate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedParam {
    pub name: String,
    pub param: Param,
}

/// Parameters plus architecture; the unit that is trained and checkpointed.
#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    names: Vec<String>,
    params: Vec<NamedParam>,
    ranges: Vec<Range<usize>>,
    fingerprint: u64,
}

enum Cache {
    None,
    Dropout(Option<Vec<f64>>),
    Pool(Vec<usize>),
    BatchNorm(Option<BatchNormCache>),
    BiLstm(Box<(LstmCache, LstmCache)>),
    Lstm(Box<LstmCache>),
}

/// Everything a forward pass produced. `values[k]` is the output of layer
/// `k`; the last one holds the logits (the final softmax is left to the loss).
pub struct Trace {
    pub values: Vec<Tensor>,
    caches: Vec<Cache>,
    mask: Option<Vec<bool>>,
    ids: Option<Vec<u32>>,
}

impl Trace {
    pub fn logits(&self) -> &Tensor {
        self.values.last().expect("non-empty network")
    }

    pub fn embedded(&self) -> &Tensor {
        &self.values[0]
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn probabilities(&self) -> Tensor {
        let logits = self.logits();
        let c = logits.row_len();
        let data = logits.data().chunks(c).flat_map(nn::softmax).collect();
        Tensor::new(logits.shape().to_vec(), data).expect("same shape")
    }
}

pub struct Gradients {
    /// Aligned with [`Network::params`]; zero for frozen tensors.
    pub params: Vec<Tensor>,
    /// `layers[k]` is the gradient with respect to `values[k]`.
    pub layers: Vec<Tensor>,
}

impl Gradients {
    pub fn embedded(&self) -> &Tensor {
        &self.layers[0]
    }
}

fn concat_last(a: &Tensor, b: &Tensor) -> Tensor {
    let (ua, ub) = (*a.shape().last().unwrap(), *b.shape().last().unwrap());
    let mut data = Vec::with_capacity(a.len() + b.len());
    for (ra, rb) in a.data().chunks(ua).zip(b.data().chunks(ub)) {
        data.extend_from_slice(ra);
        data.extend_from_slice(rb);
    }
    let mut shape = a.shape().to_vec();
    *shape.last_mut().unwrap() = ua + ub;
    Tensor::new(shape, data).expect("consistent shapes")
}

fn split_last(t: &Tensor, ua: usize) -> (Tensor, Tensor) {
    let u = *t.shape().last().unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for row in t.data().chunks(u) {
        a.extend_from_slice(&row[..ua]);
        b.extend_from_slice(&row[ua..]);
    }
    let mut sa = t.shape().to_vec();
    let mut sb = sa.clone();
    *sa.last_mut().unwrap() = ua;
    *sb.last_mut().unwrap() = u - ua;
    (Tensor::new(sa, a).unwrap(), Tensor::new(sb, b).unwrap())
}

impl Network {
    /// Fresh network with deterministic initialization from `seed`.
    pub fn new(spec: ModelSpec, fingerprint: u64, seed: u64) -> Result<Network> {
        let layout = spec.param_layout()?;
        let names = spec.layer_names();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut ranges = Vec::new();
        for (k, layer_params) in layout.iter().enumerate() {
            let start = params.len();
            for (suffix, shape, trainable) in layer_params {
                let value = initial_value(&spec.layers[k], suffix, shape, &mut rng);
                params.push(NamedParam {
                    name: format!("{}/{}", names[k], suffix),
                    param: if *trainable { Param::new(value) } else { Param::frozen(value) },
                });
            }
            ranges.push(start..params.len());
        }
        Ok(Network {
            spec,
            names,
            params,
            ranges,
            fingerprint,
        })
    }

    /// Rebuild from stored tensors; names and shapes must match the layout.
    pub fn from_parts(spec: ModelSpec, fingerprint: u64, params: Vec<NamedParam>) -> Result<Network> {
        let mut net = Network::new(spec, fingerprint, 0)?;
        if params.len() != net.params.len() {
            return Err(Error::format("checkpoint", format!("{} tensors, expected {}", params.len(), net.params.len())));
        }
        for (dst, src) in net.params.iter_mut().zip(params) {
            if dst.name != src.name || dst.param.value.shape() != src.param.value.shape() {
                return Err(Error::format(
                    "checkpoint",
                    format!("tensor {} {:?} where {} {:?} expected", src.name, src.param.value.shape(), dst.name, dst.param.value.shape()),
                ));
            }
            *dst = src;
        }
        Ok(net)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn layer_names(&self) -> &[String] {
        &self.names
    }

    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::NoSuchLayer(name.to_string()))
    }

    pub fn params(&self) -> &[NamedParam] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [NamedParam] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.param)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.param)
    }

    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.param.trainable).map(|p| p.param.value.len()).sum()
    }

    pub fn check_lexicon(&self, fingerprint: u64) -> Result<()> {
        if fingerprint != self.fingerprint {
            return Err(Error::LexiconMismatch {
                expected: self.fingerprint,
                found: fingerprint,
            });
        }
        Ok(())
    }

    fn p(&self, layer: usize, k: usize) -> &Tensor {
        &self.params[self.ranges[layer].start + k].param.value
    }

    fn is_logit_layer(&self, k: usize) -> bool {
        k + 1 == self.spec.layers.len()
    }

    pub fn forward<R: Rng + ?Sized>(&self, input: Input, mode: Mode, rng: &mut R) -> Result<Trace> {
        let layers = &self.spec.layers;
        let dim = match layers.first() {
            Some(LayerSpec::Embedding { dim }) => *dim,
            _ => return Err(Error::NoEmbedding),
        };
        let (embedded, mask, ids) = match input {
            Input::Ids(batch) => {
                if batch.ids.len() != batch.n * batch.len {
                    return Err(Error::Shape(format!("{} ids for {}x{}", batch.ids.len(), batch.n, batch.len)));
                }
                let flat = nn::embedding_forward(self.p(0, 0), &batch.ids)?;
                match self.spec.kind {
                    ModelKind::Cnn => {
                        if batch.len != self.spec.rows * self.spec.cols {
                            return Err(Error::Shape(format!(
                                "grid of {} ids, model expects {}x{}",
                                batch.len, self.spec.rows, self.spec.cols
                            )));
                        }
                        (flat.reshape(&[batch.n, self.spec.rows, self.spec.cols, dim])?, None, Some(batch.ids.clone()))
                    }
                    ModelKind::Lstm => {
                        let mask = batch.ids.iter().map(|&id| id != PAD_ID).collect();
                        (flat.reshape(&[batch.n, batch.len, dim])?, Some(mask), Some(batch.ids.clone()))
                    }
                }
            }
            Input::Embedded { x, mask } => {
                let mask = match (self.spec.kind, mask) {
                    (ModelKind::Lstm, Some(m)) => Some(m.to_vec()),
                    (ModelKind::Lstm, None) => Some(vec![true; x.len() / dim]),
                    (ModelKind::Cnn, _) => None,
                };
                (x.clone(), mask, None)
            }
        };

        let mut values = vec![embedded];
        let mut caches = vec![Cache::None];
        let training = mode == Mode::Train;
        let batch_stats = mode != Mode::Infer;
        for (k, layer) in layers.iter().enumerate().skip(1) {
            let x = &values[k - 1];
            let (y, cache) = match *layer {
                LayerSpec::Embedding { .. } => return Err(Error::Config("embedding must be the first layer".into())),
                LayerSpec::Dropout { rate } => {
                    let (y, m) = nn::dropout(x, rate, training, rng)?;
                    (y, Cache::Dropout(m))
                }
                LayerSpec::Conv2d { .. } => {
                    let y = nn::relu(&nn::conv2d_forward(x, self.p(k, 0), self.p(k, 1))?);
                    (y, Cache::None)
                }
                LayerSpec::Pool { kind } => {
                    let p = nn::pool2d_forward(x, kind)?;
                    (p.output, Cache::Pool(p.argmax))
                }
                LayerSpec::BatchNorm => {
                    if batch_stats {
                        let (y, c) = nn::batchnorm_train(x, self.p(k, 0), self.p(k, 1), nn::BN_EPSILON)?;
                        (y, Cache::BatchNorm(Some(c)))
                    } else {
                        let y = nn::batchnorm_infer(x, self.p(k, 0), self.p(k, 1), self.p(k, 2), self.p(k, 3), nn::BN_EPSILON)?;
                        (y, Cache::BatchNorm(None))
                    }
                }
                LayerSpec::Flatten => {
                    let n = x.batch();
                    (x.clone().reshape(&[n, x.row_len()])?, Cache::None)
                }
                LayerSpec::Dense { activation, .. } => {
                    let act = if self.is_logit_layer(k) { Activation::None } else { activation };
                    (nn::dense_forward(x, self.p(k, 0), self.p(k, 1), act)?, Cache::None)
                }
                LayerSpec::BiLstm { .. } => {
                    let m = mask.as_deref().ok_or_else(|| Error::Config("recurrent layer without a mask".into()))?;
                    let fw = self.lstm_weights(k, 0);
                    let bw = self.lstm_weights(k, 3);
                    let f = nn::lstm_forward(x, m, &fw, false)?;
                    let b = nn::lstm_forward(x, m, &bw, true)?;
                    (concat_last(&f.sequence, &b.sequence), Cache::BiLstm(Box::new((f.cache, b.cache))))
                }
                LayerSpec::Lstm { .. } => {
                    let m = mask.as_deref().ok_or_else(|| Error::Config("recurrent layer without a mask".into()))?;
                    let out = nn::lstm_forward(x, m, &self.lstm_weights(k, 0), false)?;
                    (out.last, Cache::Lstm(Box::new(out.cache)))
                }
            };
            values.push(y);
            caches.push(cache);
        }
        Ok(Trace {
            values,
            caches,
            mask,
            ids,
        })
    }

    fn lstm_weights(&self, layer: usize, offset: usize) -> LstmWeights<'_> {
        LstmWeights {
            kernel: self.p(layer, offset),
            recurrent: self.p(layer, offset + 1),
            bias: self.p(layer, offset + 2),
        }
    }

    /// Reverse pass from a gradient on the logits.
    pub fn backward(&self, trace: &Trace, grad_logits: &Tensor) -> Result<Gradients> {
        let layers = &self.spec.layers;
        let n_layers = layers.len();
        let mut params: Vec<Tensor> = self.params.iter().map(|p| Tensor::zeros(p.param.value.shape())).collect();
        let mut layer_grads: Vec<Option<Tensor>> = (0..n_layers).map(|_| None).collect();
        let mut g = grad_logits.clone();
        for k in (1..n_layers).rev() {
            let x = &trace.values[k - 1];
            let y = &trace.values[k];
            let base = self.ranges[k].start;
            let gin = match (&layers[k], &trace.caches[k]) {
                (LayerSpec::Dropout { .. }, Cache::Dropout(m)) => nn::dropout_backward(m.as_deref(), &g),
                (LayerSpec::Conv2d { .. }, _) => {
                    let gz = nn::relu_backward(y, &g);
                    let cg = nn::conv2d_backward(x, self.p(k, 0), &gz)?;
                    params[base] = cg.kernel;
                    params[base + 1] = cg.bias;
                    cg.input
                }
                (LayerSpec::Pool { kind }, Cache::Pool(argmax)) => nn::pool2d_backward(x.shape(), *kind, argmax, &g)?,
                (LayerSpec::BatchNorm, Cache::BatchNorm(Some(c))) => {
                    let bg = nn::batchnorm_backward(c, self.p(k, 0), &g)?;
                    params[base] = bg.gamma;
                    params[base + 1] = bg.beta;
                    bg.input
                }
                (LayerSpec::BatchNorm, Cache::BatchNorm(None)) => self.batchnorm_infer_backward(k, x, &g, &mut params)?,
                (LayerSpec::Flatten, _) => g.clone().reshape(x.shape())?,
                (LayerSpec::Dense { activation, .. }, _) => {
                    let act = if self.is_logit_layer(k) { Activation::None } else { *activation };
                    let dg = nn::dense_backward(x, self.p(k, 0), y, act, &g)?;
                    params[base] = dg.weights;
                    params[base + 1] = dg.bias;
                    dg.input
                }
                (LayerSpec::BiLstm { units }, Cache::BiLstm(c)) => {
                    let m = trace.mask.as_deref().expect("mask recorded");
                    let (gf, gb) = split_last(&g, *units);
                    let f = nn::lstm_backward(x, m, &self.lstm_weights(k, 0), false, &c.0, Some(&gf), None)?;
                    let b = nn::lstm_backward(x, m, &self.lstm_weights(k, 3), true, &c.1, Some(&gb), None)?;
                    let mut gin = f.input;
                    gin.add_assign(&b.input)?;
                    for (off, t) in [f.kernel, f.recurrent, f.bias, b.kernel, b.recurrent, b.bias].into_iter().enumerate() {
                        params[base + off] = t;
                    }
                    gin
                }
                (LayerSpec::Lstm { .. }, Cache::Lstm(c)) => {
                    let m = trace.mask.as_deref().expect("mask recorded");
                    let lg = nn::lstm_backward(x, m, &self.lstm_weights(k, 0), false, c, None, Some(&g))?;
                    params[base] = lg.kernel;
                    params[base + 1] = lg.recurrent;
                    params[base + 2] = lg.bias;
                    lg.input
                }
                _ => return Err(Error::Config(format!("trace does not match layer {}", self.names[k]))),
            };
            layer_grads[k] = Some(std::mem::replace(&mut g, gin));
        }
        if let Some(ids) = &trace.ids {
            let table = self.p(0, 0);
            let flat = g.clone().reshape(&[ids.len(), table.shape()[1]])?;
            params[0] = nn::embedding_backward(table.shape(), ids, &flat);
        }
        layer_grads[0] = Some(g);
        for (p, grad) in self.params.iter().zip(params.iter_mut()) {
            if !p.param.trainable {
                *grad = Tensor::zeros(grad.shape());
            }
        }
        Ok(Gradients {
            params,
            layers: layer_grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
        })
    }

    fn batchnorm_infer_backward(&self, k: usize, x: &Tensor, g: &Tensor, params: &mut [Tensor]) -> Result<Tensor> {
        let (gamma, mean, var) = (self.p(k, 0), self.p(k, 2), self.p(k, 3));
        let c = gamma.len();
        let inv: Vec<f64> = var.data().iter().map(|v| 1.0 / (v + nn::BN_EPSILON).sqrt()).collect();
        let mut gg = vec![0.0; c];
        let mut gb = vec![0.0; c];
        let mut gx = Vec::with_capacity(g.len());
        for (gr, xr) in g.data().chunks(c).zip(x.data().chunks(c)) {
            for j in 0..c {
                gb[j] += gr[j];
                gg[j] += gr[j] * (xr[j] - mean.data()[j]) * inv[j];
                gx.push(gr[j] * gamma.data()[j] * inv[j]);
            }
        }
        let base = self.ranges[k].start;
        params[base] = Tensor::new(vec![c], gg)?;
        params[base + 1] = Tensor::new(vec![c], gb)?;
        Tensor::new(x.shape().to_vec(), gx)
    }

    /// Fold the batch statistics of a training pass into the running averages.
    pub fn update_running_stats(&mut self, trace: &Trace, momentum: f64) {
        for (k, cache) in trace.caches.iter().enumerate() {
            if let Cache::BatchNorm(Some(c)) = cache {
                let base = self.ranges[k].start;
                let (head, tail) = self.params.split_at_mut(base + 3);
                nn::update_running(&mut head[base + 2].param.value, &mut tail[0].param.value, c, momentum);
            }
        }
    }
}

fn initial_value<R: Rng + ?Sized>(layer: &LayerSpec, suffix: &str, shape: &[usize], rng: &mut R) -> Tensor {
    let leaf = suffix.rsplit('/').next().unwrap_or(suffix);
    match (layer, leaf) {
        (LayerSpec::Embedding { .. }, _) => init::glorot_uniform(shape, shape[0], shape[1], rng),
        (LayerSpec::Conv2d { .. }, "kernel") => {
            let area = shape[0] * shape[1];
            init::glorot_uniform(shape, area * shape[2], area * shape[3], rng)
        }
        (LayerSpec::Dense { .. }, "kernel") | (_, "recurrent_kernel") => init::glorot_uniform(shape, shape[0], shape[1], rng),
        (LayerSpec::BiLstm { .. } | LayerSpec::Lstm { .. }, "kernel") => init::glorot_uniform(shape, shape[0], shape[1], rng),
        (LayerSpec::BiLstm { units } | LayerSpec::Lstm { units }, "bias") => {
            Tensor::from_fn(shape, |i| if (*units..2 * units).contains(&i) { 1.0 } else { 0.0 })
        }
        (LayerSpec::BatchNorm, "gamma" | "moving_variance") => Tensor::filled(shape, 1.0),
        _ => Tensor::zeros(shape),
    }
}

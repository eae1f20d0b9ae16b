//! Architecture descriptions and their line-oriented text form.

use std::fmt;
use std::str::FromStr;

use crate::encoding::{GRID_COLS, WINDOW_LINES};
use crate::error::{Error, Result};
use crate::nn::{Activation, PoolKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Cnn,
    Lstm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ModelKind> {
        match s {
            "cnn" => Ok(ModelKind::Cnn),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Embedding { dim: usize },
    Dropout { rate: f64 },
    /// Stride-1 same-padded convolution followed by ReLU.
    Conv2d { filters: usize, kh: usize, kw: usize },
    Pool { kind: PoolKind },
    BatchNorm,
    Flatten,
    Dense { units: usize, activation: Activation },
    /// Forward and reverse LSTMs, outputs concatenated per step.
    BiLstm { units: usize },
    /// LSTM returning its final state only.
    Lstm { units: usize },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Embedding { .. } => "embedding",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Pool { .. } => "pool",
            LayerSpec::BatchNorm => "batchnorm",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::BiLstm { .. } => "bilstm",
            LayerSpec::Lstm { .. } => "lstm",
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind_name())?;
        match self {
            LayerSpec::Embedding { dim } => write!(f, " {dim}"),
            LayerSpec::Dropout { rate } => write!(f, " {rate}"),
            LayerSpec::Conv2d { filters, kh, kw } => write!(f, " {filters} {kh} {kw}"),
            LayerSpec::Pool { kind } => write!(f, " {}", kind.name()),
            LayerSpec::Dense { units, activation } => write!(f, " {units} {}", activation.name()),
            LayerSpec::BiLstm { units } | LayerSpec::Lstm { units } => write!(f, " {units}"),
            LayerSpec::BatchNorm | LayerSpec::Flatten => Ok(()),
        }
    }
}

fn parse_layer(words: &[&str]) -> Result<LayerSpec> {
    let bad = || Error::Config(format!("bad layer line: {}", words.join(" ")));
    let num = |k: usize| -> Result<usize> { words.get(k).and_then(|w| w.parse().ok()).ok_or_else(bad) };
    let spec = match *words.first().ok_or_else(bad)? {
        "embedding" => LayerSpec::Embedding { dim: num(1)? },
        "dropout" => LayerSpec::Dropout {
            rate: words.get(1).and_then(|w| w.parse().ok()).ok_or_else(bad)?,
        },
        "conv2d" => LayerSpec::Conv2d {
            filters: num(1)?,
            kh: num(2)?,
            kw: num(3)?,
        },
        "pool" => LayerSpec::Pool {
            kind: words.get(1).ok_or_else(bad)?.parse()?,
        },
        "batchnorm" => LayerSpec::BatchNorm,
        "flatten" => LayerSpec::Flatten,
        "dense" => LayerSpec::Dense {
            units: num(1)?,
            activation: Activation::parse(words.get(2).ok_or_else(bad)?)?,
        },
        "bilstm" => LayerSpec::BiLstm { units: num(1)? },
        "lstm" => LayerSpec::Lstm { units: num(1)? },
        _ => return Err(bad()),
    };
    Ok(spec)
}

/// Activation shape per sample, without the batch axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Ids,
    Grid(usize, usize, usize),
    /// Variable-length sequence with this many channels.
    Seq(usize),
    Flat(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub vocab: usize,
    pub n_classes: usize,
    /// Grid geometry for the convolutional model.
    pub rows: usize,
    pub cols: usize,
    pub learning_rate: f64,
    pub layers: Vec<LayerSpec>,
}

/// Parameter tensors a layer owns: `(suffix, shape, trainable)`.
pub type ParamLayout = Vec<(String, Vec<usize>, bool)>;

impl ModelSpec {
    /// Layer names: `embedding`, then `<kind>_<n>` counted per kind.
    pub fn layer_names(&self) -> Vec<String> {
        let mut counts = std::collections::HashMap::new();
        self.layers
            .iter()
            .map(|l| {
                if let LayerSpec::Embedding { .. } = l {
                    return "embedding".to_string();
                }
                let n = counts.entry(l.kind_name()).or_insert(0);
                *n += 1;
                format!("{}_{}", l.kind_name(), n)
            })
            .collect()
    }

    /// Output shape of every layer; checks that the chain is consistent.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shape = Shape::Ids;
        let mut out = Vec::with_capacity(self.layers.len());
        let err = |k: usize, s: Shape| Error::Config(format!("layer {k} ({}) cannot take {s:?}", self.layers[k]));
        for (k, layer) in self.layers.iter().enumerate() {
            shape = match (*layer, shape) {
                (LayerSpec::Embedding { dim }, Shape::Ids) if k == 0 => match self.kind {
                    ModelKind::Cnn => Shape::Grid(self.rows, self.cols, dim),
                    ModelKind::Lstm => Shape::Seq(dim),
                },
                (LayerSpec::Dropout { rate }, s) if (0.0..1.0).contains(&rate) && s != Shape::Ids => s,
                (LayerSpec::Conv2d { filters, kh, kw }, Shape::Grid(h, w, _)) if kh > 0 && kw > 0 => {
                    Shape::Grid(h, w, filters)
                }
                (LayerSpec::Pool { .. }, Shape::Grid(h, w, c)) if h >= 2 && w >= 2 => Shape::Grid(h / 2, w / 2, c),
                (LayerSpec::BatchNorm, s) if s != Shape::Ids => s,
                (LayerSpec::Flatten, Shape::Grid(h, w, c)) => Shape::Flat(h * w * c),
                (LayerSpec::Flatten, Shape::Flat(f)) => Shape::Flat(f),
                (LayerSpec::Dense { units, .. }, Shape::Flat(_)) => Shape::Flat(units),
                (LayerSpec::BiLstm { units }, Shape::Seq(_)) => Shape::Seq(2 * units),
                (LayerSpec::Lstm { units }, Shape::Seq(_)) => Shape::Flat(units),
                (_, s) => return Err(err(k, s)),
            };
            out.push(shape);
        }
        match (self.layers.last(), out.last()) {
            (Some(LayerSpec::Dense { activation: Activation::Softmax, .. }), Some(&Shape::Flat(c))) if c == self.n_classes => {}
            _ => {
                return Err(Error::Config(format!(
                    "model must end in a {}-way softmax dense layer",
                    self.n_classes
                )))
            }
        }
        if self.vocab < 2 {
            return Err(Error::Config("vocabulary needs at least 2 entries".into()));
        }
        Ok(out)
    }

    /// Parameter tensors per layer, in layer order.
    pub fn param_layout(&self) -> Result<Vec<ParamLayout>> {
        let shapes = self.shapes()?;
        let channels = |s: Shape| match s {
            Shape::Grid(_, _, c) | Shape::Seq(c) | Shape::Flat(c) => c,
            Shape::Ids => 0,
        };
        let lstm = |prefix: &str, d: usize, u: usize| -> ParamLayout {
            vec![
                (format!("{prefix}kernel"), vec![d, 4 * u], true),
                (format!("{prefix}recurrent_kernel"), vec![u, 4 * u], true),
                (format!("{prefix}bias"), vec![4 * u], true),
            ]
        };
        let mut out = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let input = if k == 0 { Shape::Ids } else { shapes[k - 1] };
            let c_in = channels(input);
            let layout = match *layer {
                LayerSpec::Embedding { dim } => vec![("embeddings".into(), vec![self.vocab, dim], true)],
                LayerSpec::Conv2d { filters, kh, kw } => vec![
                    ("kernel".into(), vec![kh, kw, c_in, filters], true),
                    ("bias".into(), vec![filters], true),
                ],
                LayerSpec::BatchNorm => vec![
                    ("gamma".into(), vec![c_in], true),
                    ("beta".into(), vec![c_in], true),
                    ("moving_mean".into(), vec![c_in], false),
                    ("moving_variance".into(), vec![c_in], false),
                ],
                LayerSpec::Dense { units, .. } => vec![
                    ("kernel".into(), vec![c_in, units], true),
                    ("bias".into(), vec![units], true),
                ],
                LayerSpec::BiLstm { units } => {
                    let mut v = lstm("forward/", c_in, units);
                    v.extend(lstm("backward/", c_in, units));
                    v
                }
                LayerSpec::Lstm { units } => lstm("", c_in, units),
                LayerSpec::Dropout { .. } | LayerSpec::Pool { .. } | LayerSpec::Flatten => Vec::new(),
            };
            out.push(layout);
        }
        Ok(out)
    }

    pub fn trainable_params(&self) -> Result<usize> {
        Ok(self
            .param_layout()?
            .iter()
            .flatten()
            .filter(|(_, _, t)| *t)
            .map(|(_, s, _)| s.iter().product::<usize>())
            .sum())
    }

    /// Index of the last convolutional layer.
    pub fn last_conv(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| matches!(l, LayerSpec::Conv2d { .. }))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("carmen-model 1\n");
        s += &format!("kind {}\n", self.kind.name());
        s += &format!("vocab {}\nclasses {}\n", self.vocab, self.n_classes);
        s += &format!("grid {} {}\n", self.rows, self.cols);
        s += &format!("learning_rate {}\n", self.learning_rate);
        for l in &self.layers {
            s += &format!("layer {l}\n");
        }
        s
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<ModelSpec> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("carmen-model 1") {
            return Err(Error::format("model spec", "missing header"));
        }
        let mut kind = None;
        let (mut vocab, mut classes, mut rows, mut cols, mut lr) = (None, None, WINDOW_LINES, GRID_COLS, None);
        let mut layers = Vec::new();
        for line in lines {
            let words: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::format("model spec", format!("bad line {line:?}"));
            let num = |k: usize| words.get(k).and_then(|w| w.parse::<usize>().ok()).ok_or_else(bad);
            match words[0] {
                "kind" => kind = Some(words.get(1).ok_or_else(bad)?.parse()?),
                "vocab" => vocab = Some(num(1)?),
                "classes" => classes = Some(num(1)?),
                "grid" => (rows, cols) = (num(1)?, num(2)?),
                "learning_rate" => lr = Some(words.get(1).and_then(|w| w.parse::<f64>().ok()).ok_or_else(bad)?),
                "layer" => layers.push(parse_layer(&words[1..])?),
                _ => return Err(bad()),
            }
        }
        let missing = |what: &str| Error::format("model spec", format!("missing {what}"));
        let spec = ModelSpec {
            kind: kind.ok_or_else(|| missing("kind"))?,
            vocab: vocab.ok_or_else(|| missing("vocab"))?,
            n_classes: classes.ok_or_else(|| missing("classes"))?,
            rows,
            cols,
            learning_rate: lr.ok_or_else(|| missing("learning_rate"))?,
            layers,
        };
        spec.shapes()?;
        Ok(spec)
    }
}

/// Switches for the convolutional architecture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnOptions {
    pub pooling: PoolKind,
    /// `(line axis, syllable axis)` kernel extent.
    pub kernel: (usize, usize),
}

impl Default for CnnOptions {
    fn default() -> Self {
        CnnOptions {
            pooling: PoolKind::Average,
            kernel: (4, 2),
        }
    }
}

pub fn build_cnn(vocab: usize, n_classes: usize) -> Result<ModelSpec> {
    build_cnn_with(vocab, n_classes, CnnOptions::default())
}

pub fn build_cnn_with(vocab: usize, n_classes: usize, opts: CnnOptions) -> Result<ModelSpec> {
    let (kh, kw) = opts.kernel;
    let pool = LayerSpec::Pool { kind: opts.pooling };
    let spec = ModelSpec {
        kind: ModelKind::Cnn,
        vocab,
        n_classes,
        rows: WINDOW_LINES,
        cols: GRID_COLS,
        learning_rate: 1e-4,
        layers: vec![
            LayerSpec::Embedding { dim: 32 },
            LayerSpec::Dropout { rate: 0.25 },
            LayerSpec::Conv2d { filters: 24, kh, kw },
            pool,
            LayerSpec::BatchNorm,
            LayerSpec::Dropout { rate: 0.25 },
            LayerSpec::Conv2d { filters: 48, kh, kw },
            pool,
            LayerSpec::BatchNorm,
            LayerSpec::Flatten,
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense {
                units: 64,
                activation: Activation::None,
            },
            LayerSpec::Dense {
                units: 64,
                activation: Activation::None,
            },
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense {
                units: n_classes,
                activation: Activation::Softmax,
            },
        ],
    };
    spec.shapes()?;
    Ok(spec)
}

pub fn build_lstm(vocab: usize, n_classes: usize) -> Result<ModelSpec> {
    let spec = ModelSpec {
        kind: ModelKind::Lstm,
        vocab,
        n_classes,
        rows: WINDOW_LINES,
        cols: GRID_COLS,
        learning_rate: 5e-4,
        layers: vec![
            LayerSpec::Embedding { dim: 32 },
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::BiLstm { units: 32 },
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::Lstm { units: 32 },
            LayerSpec::BatchNorm,
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::Dense {
                units: 64,
                activation: Activation::Relu,
            },
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::Dense {
                units: n_classes,
                activation: Activation::Softmax,
            },
        ],
    };
    spec.shapes()?;
    Ok(spec)
}

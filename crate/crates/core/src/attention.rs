//! Input- and layer-level attention maps and their SVG rendering.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{split_token, EncodedSample};
use crate::error::{Error, Result};
use crate::models::{make_batch, Input, LayerSpec, ModelKind, Mode, Network, Trace};
use crate::nn::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visualizer {
    Vanilla,
    GradCam,
    ScoreCam,
}

impl std::str::FromStr for Visualizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Visualizer> {
        match s {
            "vanilla" => Ok(Visualizer::Vanilla),
            "gradcam" => Ok(Visualizer::GradCam),
            "scorecam" => Ok(Visualizer::ScoreCam),
            other => Err(Error::Config(format!("unknown visualizer {other:?}"))),
        }
    }
}

/// How the embedding channels collapse into one value per token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    MaxAbs,
    MeanAbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Upsample {
    #[default]
    Bilinear,
    Nearest,
}

/// A verse-aligned map: `rows × cols`, row-major, non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    /// Recurrent models only: the value at each line's `EOL` token.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eol: Option<Vec<f64>>,
}

impl SaliencyMap {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn row_major(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }
}

fn check_class(net: &Network, class: usize) -> Result<()> {
    let classes = net.spec().n_classes;
    if class >= classes {
        return Err(Error::ClassOutOfRange { class, classes });
    }
    Ok(())
}

fn one_hot(classes: usize, class: usize) -> Tensor {
    Tensor::from_fn(&[1, classes], |i| if i == class { 1.0 } else { 0.0 })
}

fn infer(net: &Network, input: Input) -> Result<Trace> {
    // inference mode draws nothing from the generator
    net.forward(input, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0))
}

fn sample_trace(net: &Network, sample: &EncodedSample) -> Result<Trace> {
    let (batch, _) = make_batch(net.kind(), &[sample]);
    infer(net, Input::Ids(&batch))
}

/// The embedded input and the gradient of the target logit with respect to it.
pub fn embedded_gradient(net: &Network, sample: &EncodedSample, class: usize) -> Result<(Tensor, Tensor)> {
    check_class(net, class)?;
    let trace = sample_trace(net, sample)?;
    let grads = net.backward(&trace, &one_hot(net.spec().n_classes, class))?;
    Ok((trace.embedded().clone(), grads.embedded().clone()))
}

/// Target-class logit as a function of the embedded input.
pub fn class_score(net: &Network, embedded: &Tensor, mask: Option<&[bool]>, class: usize) -> Result<f64> {
    let trace = infer(net, Input::Embedded { x: embedded, mask })?;
    Ok(trace.logits().data()[class])
}

/// Gradient saliency reduced over embedding channels. Recurrent maps are
/// regrouped into one row per line at the `EOL` tokens.
pub fn vanilla_saliency(net: &Network, sample: &EncodedSample, class: usize, reduction: Reduction) -> Result<SaliencyMap> {
    let (_, grad) = embedded_gradient(net, sample, class)?;
    let dim = *grad.shape().last().expect("embedded rank");
    let per_token: Vec<f64> = grad
        .data()
        .chunks(dim)
        .map(|ch| match reduction {
            Reduction::MaxAbs => ch.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
            Reduction::MeanAbs => ch.iter().map(|v| v.abs()).sum::<f64>() / dim as f64,
        })
        .collect();
    match net.kind() {
        ModelKind::Cnn => Ok(SaliencyMap {
            rows: sample.rows,
            cols: sample.cols,
            values: per_token,
            eol: None,
        }),
        ModelKind::Lstm => Ok(regroup(sample, &per_token)),
    }
}

/// Lay per-token values of the recurrent sequence onto the sample grid.
fn regroup(sample: &EncodedSample, per_token: &[f64]) -> SaliencyMap {
    let mut values = vec![0.0; sample.rows * sample.cols];
    let mut eol = Vec::with_capacity(sample.rows);
    let mut pos = 0;
    for r in 0..sample.rows {
        let used = sample.row(r).iter().take_while(|&&id| id != crate::encoding::PAD_ID).count();
        values[r * sample.cols..r * sample.cols + used].copy_from_slice(&per_token[pos..pos + used]);
        eol.push(per_token[pos + used]);
        pos += used + 1;
    }
    SaliencyMap {
        rows: sample.rows,
        cols: sample.cols,
        values,
        eol: Some(eol),
    }
}

fn conv_layer(net: &Network, layer: Option<&str>) -> Result<usize> {
    match layer {
        Some(name) => {
            let k = net.layer_index(name)?;
            match net.spec().layers[k] {
                LayerSpec::Conv2d { .. } => Ok(k),
                _ => Err(Error::NotConvolutional(name.to_string())),
            }
        }
        None => net
            .spec()
            .last_conv()
            .ok_or_else(|| Error::NotConvolutional("(model has no convolutional layer)".into())),
    }
}

/// Resize an `h × w` map to `rows × cols`. Bilinear sampling uses pixel
/// centres (`align_corners = false`) with edge clamping.
pub fn upsample(src: &[f64], h: usize, w: usize, rows: usize, cols: usize, mode: Upsample) -> Vec<f64> {
    let coord = |dst: usize, n_in: usize, n_out: usize| -> f64 {
        ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64)
    };
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let v = match mode {
                Upsample::Nearest => {
                    let i = (r * h / rows).min(h - 1);
                    let j = (c * w / cols).min(w - 1);
                    src[i * w + j]
                }
                Upsample::Bilinear => {
                    let (y, x) = (coord(r, h, rows), coord(c, w, cols));
                    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                    let (dy, dx) = (y - y0 as f64, x - x0 as f64);
                    let top = src[y0 * w + x0] * (1.0 - dx) + src[y0 * w + x1] * dx;
                    let bottom = src[y1 * w + x0] * (1.0 - dx) + src[y1 * w + x1] * dx;
                    top * (1.0 - dy) + bottom * dy
                }
            };
            out.push(v);
        }
    }
    out
}

/// Rectified channel-weighted sum of `[h, w, c]` activations.
fn weighted_sum(acts: &[f64], channels: usize, weights: &[f64]) -> Vec<f64> {
    acts.chunks(channels)
        .map(|px| px.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>().max(0.0))
        .collect()
}

/// Result of a class-activation-map computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamResult {
    pub map: SaliencyMap,
    pub layer: String,
    pub channel_weights: Vec<f64>,
    /// The rectified map before upsampling, `h × w`.
    pub coarse: Vec<f64>,
    pub coarse_shape: (usize, usize),
}

pub fn grad_cam(net: &Network, sample: &EncodedSample, class: usize, layer: Option<&str>, mode: Upsample) -> Result<CamResult> {
    check_class(net, class)?;
    let k = conv_layer(net, layer)?;
    let trace = sample_trace(net, sample)?;
    let grads = net.backward(&trace, &one_hot(net.spec().n_classes, class))?;
    let (acts, g) = (&trace.values[k], &grads.layers[k]);
    let &[_, h, w, c] = acts.shape() else {
        return Err(Error::Shape(format!("conv activations {:?}", acts.shape())));
    };
    let mut weights = vec![0.0; c];
    for px in g.data().chunks(c) {
        for (a, v) in weights.iter_mut().zip(px) {
            *a += v;
        }
    }
    weights.iter_mut().for_each(|a| *a /= (h * w) as f64);
    let coarse = weighted_sum(acts.data(), c, &weights);
    Ok(cam_result(net, k, weights, coarse, h, w, mode))
}

fn cam_result(net: &Network, k: usize, weights: Vec<f64>, coarse: Vec<f64>, h: usize, w: usize, mode: Upsample) -> CamResult {
    let (rows, cols) = (net.spec().rows, net.spec().cols);
    CamResult {
        map: SaliencyMap {
            rows,
            cols,
            values: upsample(&coarse, h, w, rows, cols, mode),
            eol: None,
        },
        layer: net.layer_names()[k].clone(),
        channel_weights: weights,
        coarse,
        coarse_shape: (h, w),
    }
}

/// Target-class probabilities of the embedded input under each grid mask.
/// Every mask is `rows × cols` and multiplies all embedding channels.
pub fn masked_probabilities(net: &Network, embedded: &Tensor, masks: &[Vec<f64>], class: usize, chunk: usize) -> Result<Vec<f64>> {
    check_class(net, class)?;
    let dim = *embedded.shape().last().expect("embedded rank");
    let cells = embedded.len() / dim;
    let chunk = chunk.max(1);
    let parts: Vec<Vec<f64>> = masks
        .par_chunks(chunk)
        .map(|group| -> Result<Vec<f64>> {
            let mut data = Vec::with_capacity(group.len() * embedded.len());
            for m in group {
                if m.len() != cells {
                    return Err(Error::Shape(format!("mask of {} cells for {cells}", m.len())));
                }
                for (px, &mv) in embedded.data().chunks(dim).zip(m) {
                    data.extend(px.iter().map(|v| v * mv));
                }
            }
            let mut shape = embedded.shape().to_vec();
            shape[0] = group.len();
            let x = Tensor::new(shape, data)?;
            let probs = infer(net, Input::Embedded { x: &x, mask: None })?.probabilities();
            Ok(probs.data().chunks(probs.row_len()).map(|p| p[class]).collect())
        })
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

/// Score-CAM: each activation channel, min-max normalized and upsampled,
/// masks the embedded input; its weight is the softmax over channels of the
/// probability gain against the all-zero input.
pub fn score_cam(
    net: &Network,
    sample: &EncodedSample,
    class: usize,
    layer: Option<&str>,
    mode: Upsample,
    chunk: usize,
) -> Result<CamResult> {
    check_class(net, class)?;
    let k = conv_layer(net, layer)?;
    let trace = sample_trace(net, sample)?;
    let acts = &trace.values[k];
    let &[_, h, w, c] = acts.shape() else {
        return Err(Error::Shape(format!("conv activations {:?}", acts.shape())));
    };
    let (rows, cols) = (net.spec().rows, net.spec().cols);
    let masks: Vec<Vec<f64>> = (0..c)
        .map(|ch| {
            let plane: Vec<f64> = acts.data().iter().skip(ch).step_by(c).copied().collect();
            let (lo, hi) = plane.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
            let norm: Vec<f64> = if hi > lo {
                plane.iter().map(|v| (v - lo) / (hi - lo)).collect()
            } else {
                vec![0.0; plane.len()]
            };
            upsample(&norm, h, w, rows, cols, mode)
        })
        .collect();
    let mut all = vec![vec![0.0; rows * cols]];
    all.extend(masks);
    let probs = masked_probabilities(net, trace.embedded(), &all, class, chunk)?;
    let baseline = probs[0];
    let gains: Vec<f64> = probs[1..].iter().map(|p| p - baseline).collect();
    let weights = nn::softmax(&gains);
    let coarse = weighted_sum(acts.data(), c, &weights);
    Ok(cam_result(net, k, weights, coarse, h, w, mode))
}

/// Mean saliency over the first and last 5% of a token sequence divided by
/// the mean over its middle 50%.
pub fn edge_to_middle_ratio(per_token: &[f64]) -> f64 {
    let n = per_token.len();
    let edge = (n / 20).max(1);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let edges: Vec<f64> = per_token[..edge].iter().chain(&per_token[n - edge..]).copied().collect();
    let middle = mean(&per_token[n / 4..n - n / 4]);
    mean(&edges) / middle
}

/// Saliency of the recurrent model in sequence order, `EOL` included.
pub fn sequence_saliency(map: &SaliencyMap, sample: &EncodedSample) -> Vec<f64> {
    let mut out = Vec::with_capacity(sample.sequence.len());
    for r in 0..map.rows {
        let used = sample.row(r).iter().take_while(|&&id| id != crate::encoding::PAD_ID).count();
        out.extend_from_slice(&map.values[r * map.cols..r * map.cols + used]);
        if let Some(eol) = &map.eol {
            out.push(eol[r]);
        }
    }
    out
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na * nb)
}

/// Mean cosine distances between vanilla maps of one passage targeted at
/// different classes, and of different passages targeted at one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDominance {
    pub across_classes: f64,
    pub across_passages: f64,
}

pub fn class_dominance(net: &Network, samples: &[EncodedSample]) -> Result<ClassDominance> {
    let classes = net.spec().n_classes;
    let maps: Vec<Vec<SaliencyMap>> = samples
        .par_iter()
        .map(|s| (0..classes).map(|c| vanilla_saliency(net, s, c, Reduction::MaxAbs)).collect())
        .collect::<Result<_>>()?;
    let mean = |pairs: Vec<f64>| pairs.iter().sum::<f64>() / pairs.len().max(1) as f64;
    let mut across_classes = Vec::new();
    let mut across_passages = Vec::new();
    for (i, per_class) in maps.iter().enumerate() {
        for a in 0..classes {
            for b in a + 1..classes {
                across_classes.push(cosine_distance(&per_class[a].values, &per_class[b].values));
            }
            for other in &maps[i + 1..] {
                across_passages.push(cosine_distance(&per_class[a].values, &other[a].values));
            }
        }
    }
    Ok(ClassDominance {
        across_classes: mean(across_classes),
        across_passages: mean(across_passages),
    })
}

/// Labels for the rendered document.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapLegend {
    pub class_label: String,
    pub model_id: String,
    pub visualizer: String,
}

const CELL_W: usize = 64;
const CELL_H: usize = 20;
const MARGIN: usize = 40;
const LEGEND_H: usize = 28;

/// Linear ramp from pale yellow (0) to dark red (1).
fn color(t: f64) -> String {
    let lo = [255.0, 255.0, 204.0];
    let hi = [128.0, 0.0, 38.0];
    let t = t.clamp(0.0, 1.0);
    let ch = |k: usize| (lo[k] + (hi[k] - lo[k]) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// SVG with one row per verse line and one cell per syllable, shaded by the
/// map value normalized by the sample maximum.
pub fn render_heatmap(map: &SaliencyMap, tokens: &[Vec<String>], text: &[String], legend: &HeatmapLegend) -> Result<String> {
    if tokens.len() > map.rows || tokens.iter().any(|t| t.len() > map.cols) {
        return Err(Error::Shape(format!("tokens do not fit a {}x{} map", map.rows, map.cols)));
    }
    let peak = map.max();
    let width = MARGIN + map.cols * CELL_W;
    let height = LEGEND_H + tokens.len() * CELL_H;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="4" y="16" font-size="12">{} | class {} | model {} | max {:.6e}</text>"#,
        escape(&legend.visualizer),
        escape(&legend.class_label),
        escape(&legend.model_id),
        peak
    );
    for (r, line) in tokens.iter().enumerate() {
        let y = LEGEND_H + r * CELL_H;
        let title = text.get(r).map(String::as_str).unwrap_or("");
        let _ = writeln!(svg, r#"<g><title>{}</title>"#, escape(title));
        let _ = writeln!(svg, r#"<text x="4" y="{}" fill="grey">{}</text>"#, y + 14, r + 1);
        for (c, tok) in line.iter().enumerate() {
            let v = if peak > 0.0 { map.get(r, c) / peak } else { 0.0 };
            let x = MARGIN + c * CELL_W;
            let _ = writeln!(
                svg,
                r#"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{}" stroke="white"/>"#,
                color(v)
            );
            let (body, _) = split_token(tok);
            let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, x + 3, y + 14, escape(body));
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_heatmap(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::write(path, e))
}

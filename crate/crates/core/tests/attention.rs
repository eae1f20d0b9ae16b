use std::path::PathBuf;

use carmen::attention::*;
use carmen::encoding::{EncodedSample, PAD_ID};
use carmen::models::*;
use carmen::nn::{self, PoolKind};
use carmen::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EOL_ID: u32 = 2;

fn random_sample(rows: usize, cols: usize, vocab: u32, rng: &mut ChaCha8Rng) -> EncodedSample {
    let mut grid = vec![PAD_ID; rows * cols];
    for r in 0..rows {
        let len = rng.random_range(1..=cols);
        for c in 0..len {
            grid[r * cols + c] = rng.random_range(3..vocab);
        }
    }
    EncodedSample::from_grid(rows, cols, grid, 0, 1, EOL_ID)
}

fn dense(units: usize, activation: nn::Activation) -> LayerSpec {
    LayerSpec::Dense { units, activation }
}

fn small_cnn() -> ModelSpec {
    ModelSpec {
        kind: ModelKind::Cnn,
        vocab: 9,
        n_classes: 3,
        rows: 6,
        cols: 4,
        learning_rate: 1e-3,
        layers: vec![
            LayerSpec::Embedding { dim: 4 },
            LayerSpec::Conv2d { filters: 3, kh: 3, kw: 2 },
            LayerSpec::Pool { kind: PoolKind::Average },
            LayerSpec::BatchNorm,
            LayerSpec::Flatten,
            dense(5, nn::Activation::None),
            dense(3, nn::Activation::Softmax),
        ],
    }
}

fn small_lstm() -> ModelSpec {
    ModelSpec {
        kind: ModelKind::Lstm,
        vocab: 9,
        n_classes: 3,
        rows: 0,
        cols: 0,
        learning_rate: 1e-3,
        layers: vec![
            LayerSpec::Embedding { dim: 4 },
            LayerSpec::BiLstm { units: 3 },
            LayerSpec::Lstm { units: 3 },
            LayerSpec::BatchNorm,
            dense(4, nn::Activation::None),
            dense(3, nn::Activation::Softmax),
        ],
    }
}

/// Every embedded coordinate against a central difference of the logit.
fn assert_matches_finite_differences(net: &Network, sample: &EncodedSample, class: usize) {
    let (embedded, grad) = embedded_gradient(net, sample, class).unwrap();
    let eps = 1e-5;
    for i in 0..embedded.len() {
        let mut x = embedded.clone();
        x.data_mut()[i] += eps;
        let up = class_score(net, &x, None, class).unwrap();
        x.data_mut()[i] -= 2.0 * eps;
        let down = class_score(net, &x, None, class).unwrap();
        let numeric = (up - down) / (2.0 * eps);
        let a = grad.data()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        assert!(rel < 1e-3, "coordinate {i}: analytic {a:e} numeric {numeric:e}");
    }
}

#[test]
fn vanilla_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cnn = Network::new(small_cnn(), 0, 3).unwrap();
    let lstm = Network::new(small_lstm(), 0, 4).unwrap();
    for class in 0..3 {
        let s = random_sample(6, 4, 9, &mut rng);
        assert_matches_finite_differences(&cnn, &s, class);
        assert_matches_finite_differences(&lstm, &s, class);
    }
}

#[test]
#[allow(clippy::needless_range_loop)]
fn vanilla_maps_follow_the_verse_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = random_sample(6, 4, 9, &mut rng);
    let cnn = Network::new(small_cnn(), 0, 3).unwrap();
    let map = vanilla_saliency(&cnn, &s, 1, Reduction::MaxAbs).unwrap();
    assert_eq!((map.rows, map.cols, map.values.len()), (6, 4, 24));
    assert!(map.eol.is_none());

    let lstm = Network::new(small_lstm(), 0, 4).unwrap();
    let (_, grad) = embedded_gradient(&lstm, &s, 2).unwrap();
    let per_token: Vec<f64> = grad.data().chunks(4).map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / 4.0).collect();
    let map = vanilla_saliency(&lstm, &s, 2, Reduction::MeanAbs).unwrap();
    let eol = map.eol.as_ref().unwrap();
    assert_eq!(eol.len(), 6);
    let mut pos = 0;
    for r in 0..6 {
        for c in 0..4 {
            if s.row(r)[c] == PAD_ID {
                assert_eq!(map.get(r, c), 0.0);
            } else {
                assert_eq!(map.get(r, c), per_token[pos]);
                pos += 1;
            }
        }
        assert_eq!(eol[r], per_token[pos]);
        pos += 1;
    }
    assert_eq!(pos, s.sequence.len());
}

#[test]
fn grad_cam_matches_hand_computation() {
    let (rows, cols, dim, filters, classes) = (3, 4, 2, 2, 2);
    let spec = ModelSpec {
        kind: ModelKind::Cnn,
        vocab: 6,
        n_classes: classes,
        rows,
        cols,
        learning_rate: 1e-3,
        layers: vec![
            LayerSpec::Embedding { dim },
            LayerSpec::Conv2d { filters, kh: 2, kw: 2 },
            LayerSpec::Flatten,
            dense(classes, nn::Activation::Softmax),
        ],
    };
    let net = Network::new(spec, 0, 5).unwrap();
    let table = &net.param("embedding/embeddings").unwrap().value;
    let kernel = &net.param("conv2d_1/kernel").unwrap().value;
    let bias = &net.param("conv2d_1/bias").unwrap().value;
    let w = &net.param("dense_1/kernel").unwrap().value;
    let sample = EncodedSample::from_grid(rows, cols, vec![3, 4, 5, 0, 1, 3, 0, 0, 5, 5, 4, 3], 0, 1, EOL_ID);
    let mut nonzero = 0;
    for class in 0..classes {
        // relu(conv) with bottom/right zero padding for the 2×2 kernel
        let mut acts = vec![0.0; rows * cols * filters];
        for i in 0..rows {
            for j in 0..cols {
                for f in 0..filters {
                    let mut v = bias.data()[f];
                    for di in 0..2 {
                        for dj in 0..2 {
                            let (ii, jj) = (i + di, j + dj);
                            if ii >= rows || jj >= cols {
                                continue;
                            }
                            let id = sample.grid[ii * cols + jj] as usize;
                            for c in 0..dim {
                                v += table.data()[id * dim + c] * kernel.data()[((di * 2 + dj) * dim + c) * filters + f];
                            }
                        }
                    }
                    acts[(i * cols + j) * filters + f] = v.max(0.0);
                }
            }
        }
        // d logit / d act is the matching dense weight
        let alpha: Vec<f64> = (0..filters)
            .map(|f| (0..rows * cols).map(|p| w.data()[(p * filters + f) * classes + class]).sum::<f64>() / (rows * cols) as f64)
            .collect();
        let expected: Vec<f64> = (0..rows * cols)
            .map(|p| (0..filters).map(|f| alpha[f] * acts[p * filters + f]).sum::<f64>().max(0.0))
            .collect();
        nonzero += expected.iter().filter(|v| **v > 0.0).count();
        let cam = grad_cam(&net, &sample, class, Some("conv2d_1"), Upsample::Bilinear).unwrap();
        assert_eq!(cam.layer, "conv2d_1");
        for (a, b) in cam.channel_weights.iter().zip(&alpha) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in cam.map.values.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
    assert!(nonzero > 0, "fixture produced only empty maps");
}

#[test]
fn grad_cam_upsamples_to_the_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Network::new(build_cnn(30, 3).unwrap(), 0, 1).unwrap();
    let s = random_sample(64, 20, 30, &mut rng);
    let cam = grad_cam(&net, &s, 0, None, Upsample::Bilinear).unwrap();
    assert_eq!(cam.layer, "conv2d_2");
    assert_eq!(cam.coarse_shape, (32, 10));
    assert_eq!((cam.map.rows, cam.map.cols), (64, 20));
    assert!(cam.map.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    let first = grad_cam(&net, &s, 0, Some("conv2d_1"), Upsample::Nearest).unwrap();
    assert_eq!(first.coarse_shape, (64, 20));
    assert_eq!(first.map.values, first.coarse);
}

#[test]
fn cam_layer_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = random_sample(6, 4, 9, &mut rng);
    let cnn = Network::new(small_cnn(), 0, 3).unwrap();
    assert!(matches!(grad_cam(&cnn, &s, 0, Some("dense_1"), Upsample::Bilinear), Err(Error::NotConvolutional(_))));
    assert!(matches!(grad_cam(&cnn, &s, 0, Some("conv9"), Upsample::Bilinear), Err(Error::NoSuchLayer(_))));
    assert!(matches!(grad_cam(&cnn, &s, 3, None, Upsample::Bilinear), Err(Error::ClassOutOfRange { .. })));
    let lstm = Network::new(small_lstm(), 0, 4).unwrap();
    assert!(matches!(score_cam(&lstm, &s, 0, None, Upsample::Bilinear, 8), Err(Error::NotConvolutional(_))));
}

#[test]
fn score_cam_weights_form_a_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Network::new(small_cnn(), 0, 6).unwrap();
    for class in 0..3 {
        let s = random_sample(6, 4, 9, &mut rng);
        let cam = score_cam(&net, &s, class, None, Upsample::Bilinear, 2).unwrap();
        let total: f64 = cam.channel_weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(cam.channel_weights.iter().all(|w| *w > 0.0));
        // batching the masked passes does not change the result
        assert_eq!(score_cam(&net, &s, class, None, Upsample::Bilinear, 1).unwrap(), cam);
    }
}

#[test]
fn all_ones_mask_reproduces_unmasked_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = Network::new(small_cnn(), 0, 7).unwrap();
    let s = random_sample(6, 4, 9, &mut rng);
    let (batch, _) = make_batch(ModelKind::Cnn, &[&s]);
    let trace = net.forward(Input::Ids(&batch), Mode::Infer, &mut rng).unwrap();
    let probs = trace.probabilities();
    for class in 0..3 {
        let p = masked_probabilities(&net, trace.embedded(), &[vec![1.0; 24]], class, 4).unwrap();
        assert_eq!(p[0].to_bits(), probs.data()[class].to_bits());
    }
}

fn fixture_map() -> (SaliencyMap, Vec<Vec<String>>, Vec<String>, HeatmapLegend) {
    let map = SaliencyMap {
        rows: 2,
        cols: 2,
        values: vec![0.0, 1.0, 0.5, 0.5],
        eol: None,
    };
    let tokens = vec![
        vec!["ek+A+L+S".to_string(), "ke+WC".to_string()],
        vec!["li+S".to_string(), "kan+A+L+SC".to_string()],
    ];
    let text = vec!["ecce".to_string(), "<li & can>".to_string()];
    let legend = HeatmapLegend {
        class_label: "alpha".into(),
        model_id: "cnn-test".into(),
        visualizer: "gradcam".into(),
    };
    (map, tokens, text, legend)
}

#[test]
fn heatmap_matches_golden_document() {
    let (map, tokens, text, legend) = fixture_map();
    let svg = render_heatmap(&map, &tokens, &text, &legend).unwrap();
    let doc = roxmltree::Document::parse(&svg).expect("well-formed svg");
    let fills: Vec<&str> = doc.descendants().filter(|n| n.has_tag_name("rect")).filter_map(|n| n.attribute("fill")).collect();
    assert_eq!(fills, ["#ffffcc", "#800026", "#c08079", "#c08079"]);
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/heatmap.svg");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &svg).unwrap();
    }
    assert_eq!(svg, std::fs::read_to_string(&golden).unwrap());
}

#[test]
fn zero_map_renders_uniformly() {
    let (mut map, tokens, text, legend) = fixture_map();
    map.values = vec![0.0; 4];
    let svg = render_heatmap(&map, &tokens, &text, &legend).unwrap();
    assert_eq!(svg.matches(r##"fill="#ffffcc""##).count(), 4);
    assert!(!svg.contains("NaN"));
}

#[test]
fn heatmap_rejects_oversized_text() {
    let (map, mut tokens, text, legend) = fixture_map();
    tokens[0].push("x".into());
    assert!(render_heatmap(&map, &tokens, &text, &legend).is_err());
}

#[test]
fn saliency_is_finite_on_the_canonical_lstm() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = Network::new(build_lstm(30, 3).unwrap(), 0, 1).unwrap();
    let s = random_sample(64, 20, 30, &mut rng);
    let map = vanilla_saliency(&net, &s, 1, Reduction::MaxAbs).unwrap();
    assert_eq!((map.rows, map.cols), (64, 20));
    assert!(map.values.iter().all(|v| v.is_finite()));
}

/// 1×1 convolution over a one-channel embedding with hand-set weights.
fn pointwise_net(dense_weight: f64, second_bias: f64) -> Network {
    let spec = ModelSpec {
        kind: ModelKind::Cnn,
        vocab: 4,
        n_classes: 2,
        rows: 4,
        cols: 3,
        learning_rate: 1e-3,
        layers: vec![
            LayerSpec::Embedding { dim: 1 },
            LayerSpec::Conv2d { filters: 2, kh: 1, kw: 1 },
            LayerSpec::Flatten,
            dense(2, nn::Activation::Softmax),
        ],
    };
    let mut net = Network::new(spec, 0, 0).unwrap();
    let set = |net: &mut Network, name: &str, f: &dyn Fn(usize) -> f64| {
        let p = net.param_mut(name).unwrap();
        let shape = p.value.shape().to_vec();
        p.value = nn::Tensor::from_fn(&shape, f);
    };
    set(&mut net, "embedding/embeddings", &|_| 1.0);
    set(&mut net, "conv2d_1/kernel", &|i| if i == 0 { 1.0 } else { 0.0 });
    set(&mut net, "conv2d_1/bias", &|i| if i == 1 { second_bias } else { 0.0 });
    // class 0 reads every activation with the same weight
    set(&mut net, "dense_1/kernel", &|i| if i % 2 == 0 { dense_weight } else { 0.0 });
    net
}

fn full_sample(rows: usize, cols: usize) -> EncodedSample {
    EncodedSample::from_grid(rows, cols, vec![3; rows * cols], 0, 1, EOL_ID)
}

#[test]
fn uniform_inputs_give_uniform_grad_cam() {
    let s = full_sample(4, 3);
    let cam = grad_cam(&pointwise_net(0.5, -1.0), &s, 0, None, Upsample::Bilinear).unwrap();
    assert!(cam.map.values[0] > 0.0);
    assert!(cam.map.values.iter().all(|v| (v - cam.map.values[0]).abs() < 1e-15));
    let negative = grad_cam(&pointwise_net(-0.5, -1.0), &s, 0, None, Upsample::Bilinear).unwrap();
    assert!(negative.map.values.iter().all(|v| *v == 0.0));
}

#[test]
fn dead_channel_gets_the_baseline_weight() {
    let mut net = pointwise_net(0.5, -1.0);
    net.param_mut("embedding/embeddings").unwrap().value = nn::Tensor::from_fn(&[4, 1], |i| i as f64);
    let grid: Vec<u32> = (0..12).map(|i| 1 + (i % 3) as u32).collect();
    let s = EncodedSample::from_grid(4, 3, grid.clone(), 0, 1, EOL_ID);
    let cam = score_cam(&net, &s, 0, None, Upsample::Bilinear, 4).unwrap();
    // channel 0 equals the id, min-max normalized over ids 1..=3
    let live: Vec<f64> = grid.iter().map(|&id| (id as f64 - 1.0) / 2.0).collect();
    let (batch, _) = make_batch(ModelKind::Cnn, &[&s]);
    let trace = net.forward(Input::Ids(&batch), Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let p = masked_probabilities(&net, trace.embedded(), &[vec![0.0; 12], live], 0, 2).unwrap();
    // channel 1 is rectified to zero, so its gain over the baseline is zero
    let gain = p[1] - p[0];
    assert!(gain.abs() > 1e-6);
    let expected = 1.0 / (1.0 + gain.exp());
    assert!((cam.channel_weights[1] - expected).abs() < 1e-12);
}

#[test]
fn conv_activations_are_local() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = Network::new(build_cnn(30, 3).unwrap(), 0, 1).unwrap();
    let s = random_sample(64, 20, 30, &mut rng);
    let mut t = s.clone();
    // (10, 4) sees rows 9..=12 and columns 4..=5 through the 4×2 kernel
    t.grid[20 * 20 + 4] = if s.grid[20 * 20 + 4] == 5 { 6 } else { 5 };
    t.grid[10 * 20 + 9] = 7;
    let k = net.layer_index("conv2d_1").unwrap();
    let act = |x: &EncodedSample| {
        let (batch, _) = make_batch(ModelKind::Cnn, &[x]);
        let trace = net.forward(Input::Ids(&batch), Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        trace.values[k].data()[(10 * 20 + 4) * 24..(10 * 20 + 5) * 24].to_vec()
    };
    assert_eq!(act(&s), act(&t));
}

#[test]
fn padded_positions_get_no_gradient() {
    let net = Network::new(small_lstm(), 0, 4).unwrap();
    let batch = Batch::padded(&[&[3, 4, 5, EOL_ID, 6, EOL_ID], &[7, EOL_ID]]);
    let trace = net.forward(Input::Ids(&batch), Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut g = nn::Tensor::zeros(&[2, 3]);
    g.data_mut()[3 + 1] = 1.0;
    let grads = net.backward(&trace, &g).unwrap();
    let e = grads.embedded();
    // second sample: positions 2.. are padding
    let row = &e.data()[6 * 4..12 * 4];
    assert!(row[..8].iter().any(|v| *v != 0.0));
    assert!(row[8..].iter().all(|v| *v == 0.0));
}

#[test]
fn diagnostics_are_well_defined() {
    let ratio = edge_to_middle_ratio(&[4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 4.0]);
    assert_eq!(ratio, 4.0);
    assert_eq!(cosine_distance(&[1.0, 0.0], &[2.0, 0.0]), 0.0);
    assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let samples: Vec<EncodedSample> = (0..3).map(|_| random_sample(6, 4, 9, &mut rng)).collect();
    let d = class_dominance(&Network::new(small_cnn(), 0, 3).unwrap(), &samples).unwrap();
    assert!(d.across_classes.is_finite() && d.across_passages.is_finite());
    let lstm = Network::new(small_lstm(), 0, 4).unwrap();
    let map = vanilla_saliency(&lstm, &samples[0], 0, Reduction::MaxAbs).unwrap();
    assert_eq!(sequence_saliency(&map, &samples[0]).len(), samples[0].sequence.len());
}

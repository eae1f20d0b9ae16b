use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Batch, Input, Mode, Network};
use super::spec::ModelKind;
use crate::encoding::EncodedSample;
use crate::error::{Error, Result};
use crate::nn::{self, Adam, AdamConfig, Param, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Upper bound on epochs; early stopping may end sooner.
    pub epochs: usize,
    pub batch_size: usize,
    /// Overrides the architecture's default rate when set.
    pub learning_rate: Option<f64>,
    pub seed: u64,
    /// Epochs without improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    /// Decay of the batch-normalization running averages.
    pub bn_momentum: f64,
    /// Replace the running averages with population statistics of the
    /// training set after every epoch.
    #[serde(default)]
    pub bn_recalibrate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: None,
            seed: 0,
            patience: 5,
            bn_momentum: nn::BN_MOMENTUM,
            bn_recalibrate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    /// Wall-clock seconds; not serialized so that artifacts stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept (0 when no epoch ran).
    pub best_epoch: usize,
}

pub struct TrainOutcome {
    pub history: History,
    /// Shuffle/dropout stream after the last step.
    pub rng: ChaCha8Rng,
}

/// Assemble model input and labels for a set of samples.
pub fn make_batch(kind: ModelKind, samples: &[&EncodedSample]) -> (Batch, Vec<usize>) {
    let labels = samples.iter().map(|s| s.label as usize).collect();
    let batch = match kind {
        ModelKind::Cnn => {
            let len = samples.first().map_or(0, |s| s.grid.len());
            Batch {
                ids: samples.iter().flat_map(|s| s.grid.iter().copied()).collect(),
                n: samples.len(),
                len,
            }
        }
        ModelKind::Lstm => {
            let seqs: Vec<&[u32]> = samples.iter().map(|s| s.sequence.as_slice()).collect();
            Batch::padded(&seqs)
        }
    };
    (batch, labels)
}

fn check_samples(net: &Network, samples: &[EncodedSample]) -> Result<()> {
    let spec = net.spec();
    for s in samples {
        if s.label as usize >= spec.n_classes {
            return Err(Error::LabelOutOfRange {
                label: s.label as usize,
                classes: spec.n_classes,
            });
        }
        if net.kind() == ModelKind::Cnn && (s.rows != spec.rows || s.cols != spec.cols) {
            return Err(Error::Shape(format!(
                "sample grid {}x{}, model expects {}x{}",
                s.rows, s.cols, spec.rows, spec.cols
            )));
        }
        if let Some(&id) = s.grid.iter().chain(&s.sequence).find(|&&id| id as usize >= spec.vocab) {
            return Err(Error::IdOutOfRange { id, vocab: spec.vocab });
        }
    }
    Ok(())
}

/// Minibatch training with Adam. Single-sample remainder batches are
/// skipped because batch normalization needs two samples. When early
/// stopping is on, the best epoch's weights are restored at the end.
pub fn train(net: &mut Network, train: &[EncodedSample], val: &[EncodedSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.batch_size < 2 {
        return Err(Error::Config("batch size must be at least 2".into()));
    }
    check_samples(net, train)?;
    check_samples(net, val)?;
    let lr = cfg.learning_rate.unwrap_or(net.spec().learning_rate);
    let mut adam = Adam::new(AdamConfig::with_lr(lr));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = History::default();
    let mut best: Option<(f64, Vec<Param>)> = None;
    let mut wait = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let samples: Vec<&EncodedSample> = chunk.iter().map(|&i| &train[i]).collect();
            let (batch, labels) = make_batch(net.kind(), &samples);
            let trace = net.forward(Input::Ids(&batch), Mode::Train, &mut rng)?;
            let (loss, grad) = nn::softmax_xent_batch(trace.logits(), &labels)?;
            correct += count_correct(trace.logits(), &labels);
            loss_sum += loss * labels.len() as f64;
            seen += labels.len();
            let grads = net.backward(&trace, &grad)?;
            net.update_running_stats(&trace, cfg.bn_momentum);
            let mut params: Vec<&mut Param> = net.params_mut().iter_mut().map(|p| &mut p.param).collect();
            adam.step(&mut params, &grads.params)?;
        }
        if cfg.bn_recalibrate {
            recalibrate_batchnorm(net, train, cfg.batch_size)?;
        }
        let (val_loss, val_accuracy) = if val.is_empty() {
            (None, None)
        } else {
            let e = evaluate(net, val)?;
            (Some(e.loss), Some(e.accuracy))
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            train_accuracy: correct as f64 / seen.max(1) as f64,
            val_loss,
            val_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} acc {:.4} val_loss {} val_acc {} ({:.1}s)",
            record.train_loss,
            record.train_accuracy,
            val_loss.map_or("-".into(), |v| format!("{v:.4}")),
            val_accuracy.map_or("-".into(), |v| format!("{v:.4}")),
            record.seconds
        );
        let monitored = val_loss.unwrap_or(record.train_loss);
        history.epochs.push(record);
        if cfg.patience == 0 {
            history.best_epoch = epoch;
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| monitored < *b) {
            best = Some((monitored, net.params().iter().map(|p| p.param.clone()).collect()));
            history.best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                log::info!("early stop after epoch {epoch}; keeping epoch {}", history.best_epoch);
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        for (dst, src) in net.params_mut().iter_mut().zip(params) {
            dst.param = src;
        }
    }
    Ok(TrainOutcome { history, rng })
}

/// Set every batch-normalization running mean and variance to the average of
/// its batch statistics over `samples`, with dropout off and the weights fixed.
pub fn recalibrate_batchnorm(net: &mut Network, samples: &[EncodedSample], batch_size: usize) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut seen = 0.0;
    for chunk in samples.chunks(batch_size.max(2)) {
        if chunk.len() < 2 {
            continue;
        }
        let refs: Vec<&EncodedSample> = chunk.iter().collect();
        let (batch, _) = make_batch(net.kind(), &refs);
        let trace = net.forward(Input::Ids(&batch), Mode::Calibrate, &mut rng)?;
        seen += 1.0;
        // cumulative average: the first batch replaces the old statistics
        net.update_running_stats(&trace, (seen - 1.0) / seen);
    }
    Ok(())
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
}

fn count_correct(logits: &Tensor, labels: &[usize]) -> usize {
    logits
        .data()
        .chunks(logits.row_len())
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub labels: Vec<usize>,
    pub predictions: Vec<usize>,
    pub logits: Vec<Vec<f64>>,
}

const EVAL_BATCH: usize = 64;

/// Inference-mode metrics over a sample set.
pub fn evaluate(net: &Network, samples: &[EncodedSample]) -> Result<Evaluation> {
    check_samples(net, samples)?;
    let classes = net.spec().n_classes;
    let mut confusion = vec![vec![0usize; classes]; classes];
    let (mut labels, mut predictions, mut logits) = (Vec::new(), Vec::new(), Vec::new());
    let mut loss = 0.0;
    // inference never draws from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for chunk in samples.chunks(EVAL_BATCH) {
        let refs: Vec<&EncodedSample> = chunk.iter().collect();
        let (batch, ls) = make_batch(net.kind(), &refs);
        let trace = net.forward(Input::Ids(&batch), Mode::Infer, &mut rng)?;
        for (row, &l) in trace.logits().data().chunks(classes).zip(&ls) {
            let p = argmax(row);
            confusion[l][p] += 1;
            loss += nn::softmax_xent(row, l)?.0;
            labels.push(l);
            predictions.push(p);
            logits.push(row.to_vec());
        }
    }
    let n = labels.len().max(1) as f64;
    let correct = labels.iter().zip(&predictions).filter(|(a, b)| a == b).count();
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
        confusion,
        labels,
        predictions,
        logits,
    })
}

/// [`evaluate`] after checking that the samples were encoded with the
/// lexicon the network was trained on.
pub fn evaluate_with_lexicon(net: &Network, samples: &[EncodedSample], fingerprint: u64) -> Result<Evaluation> {
    net.check_lexicon(fingerprint)?;
    evaluate(net, samples)
}

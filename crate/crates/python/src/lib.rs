use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use carmen::analysis::{self, EmbeddingMatrix};
use carmen::attention::{self, Reduction, SaliencyMap, Upsample, Visualizer};
use carmen::config::RunConfig;
use carmen::corpus::{ingest, read_manifest, Split};
use carmen::encoding::{self, Ablation, EncodedSample};
use carmen::models::{self, Checkpoint, ModelKind, TrainConfig};
use carmen::phonology::{self, MutaCumLiquida};
use carmen::pipeline::prepare_dataset;
use carmen::scansion::{self, ScanOptions};
use carmen::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Read { .. } | Error::Write { .. } | Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn options(spondeiazon: bool, tautosyllabic: bool) -> ScanOptions {
    let mcl = if tautosyllabic {
        MutaCumLiquida::Tautosyllabic
    } else {
        MutaCumLiquida::Heterosyllabic
    };
    encoding::scan_options(spondeiazon, mcl)
}

fn parse_split(s: &str) -> PyResult<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" | "validation" => Ok(Split::Validation),
        "test" => Ok(Split::Test),
        other => Err(PyValueError::new_err(format!("unknown split {other:?}"))),
    }
}

/// Phonetic form of one line of Latin orthography.
#[pyfunction]
fn transcribe(text: &str) -> PyResult<String> {
    Ok(phonology::transcribe(text).map_err(err)?.to_string())
}

/// Syllables of each word of a line.
#[pyfunction]
#[pyo3(signature = (text, tautosyllabic=false))]
fn syllabify(text: &str, tautosyllabic: bool) -> PyResult<Vec<Vec<String>>> {
    let opts = options(false, tautosyllabic);
    let line = phonology::transcribe(text).map_err(err)?;
    let words = phonology::syllabify(&line, opts.muta_cum_liquida).map_err(err)?;
    Ok(words.iter().map(|w| w.iter().map(|s| s.text()).collect()).collect())
}

/// Foot pattern (`D`/`S` per foot) and syllable tokens of a hexameter.
/// Raises `ValueError` when the line does not scan.
#[pyfunction]
#[pyo3(signature = (text, spondeiazon=false, tautosyllabic=false))]
fn scan(text: &str, spondeiazon: bool, tautosyllabic: bool) -> PyResult<(String, Vec<String>)> {
    let opts = options(spondeiazon, tautosyllabic);
    let line = phonology::transcribe(text).map_err(err)?;
    let words = phonology::syllabify(&line, opts.muta_cum_liquida).map_err(err)?;
    let scanned = scansion::scan_line(&words, &opts).map_err(err)?;
    Ok((scanned.pattern(), encoding::line_tokens(&scanned)))
}

/// Token text of a line and whether it scanned; unscanned lines keep bare syllables.
#[pyfunction]
#[pyo3(signature = (text, ablation="full", spondeiazon=false, tautosyllabic=false))]
fn tokenize(text: &str, ablation: &str, spondeiazon: bool, tautosyllabic: bool) -> PyResult<(Vec<String>, bool)> {
    let mode: Ablation = ablation.parse().map_err(err)?;
    let t = encoding::tokenize_line(text, &options(spondeiazon, tautosyllabic)).map_err(err)?;
    Ok((encoding::ablate_all(&t.tokens, mode), t.scanned))
}

/// Strip the flags that an ablation removes from one token.
#[pyfunction]
fn ablate(token: &str, ablation: &str) -> PyResult<String> {
    let mode: Ablation = ablation.parse().map_err(err)?;
    Ok(encoding::ablate(token, mode))
}

/// Token vocabulary; id 0 is padding and id 1 the unknown token.
#[pyclass(module = "pycarmen", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Lexicon {
    inner: encoding::Lexicon,
}

#[pymethods]
impl Lexicon {
    /// Build from a token stream, most frequent first.
    #[new]
    fn new(tokens: Vec<String>) -> PyResult<Self> {
        let inner = encoding::Lexicon::build(tokens.iter().map(String::as_str)).map_err(err)?;
        Ok(Lexicon { inner })
    }

    #[staticmethod]
    fn from_tsv(text: &str) -> PyResult<Self> {
        Ok(Lexicon {
            inner: encoding::Lexicon::from_tsv(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Lexicon {
            inner: encoding::Lexicon::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    fn to_tsv(&self) -> String {
        self.inner.to_tsv()
    }

    /// Id of a token; unknown tokens map to 1.
    fn id(&self, token: &str) -> u32 {
        self.inner.id(token)
    }

    fn token(&self, id: u32) -> PyResult<String> {
        self.inner
            .token(id)
            .map(str::to_owned)
            .ok_or_else(|| PyIndexError::new_err(format!("no token with id {id}")))
    }

    fn tokens(&self) -> Vec<String> {
        self.inner.tokens().to_vec()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        format!("{:016x}", self.inner.fingerprint())
    }

    fn __len__(&self) -> usize {
        self.inner.size()
    }

    fn __contains__(&self, token: &str) -> bool {
        self.inner.contains(token)
    }

    fn __repr__(&self) -> String {
        format!("Lexicon(size={}, fingerprint={})", self.inner.size(), self.fingerprint())
    }
}

/// A corpus tokenized, split into windows and encoded against its lexicon.
#[pyclass(module = "pycarmen", frozen)]
struct Dataset {
    inner: carmen::pipeline::Dataset,
    labels: Vec<String>,
}

impl Dataset {
    fn split(&self, split: &str) -> PyResult<&[EncodedSample]> {
        Ok(self.inner.get(parse_split(split)?))
    }

    fn sample(&self, split: &str, index: usize) -> PyResult<&EncodedSample> {
        let samples = self.split(split)?;
        samples
            .get(index)
            .ok_or_else(|| PyIndexError::new_err(format!("{split} has {} samples", samples.len())))
    }

    fn build(py: Python<'_>, cfg: RunConfig) -> PyResult<Self> {
        cfg.validate().map_err(err)?;
        let manifest = cfg.manifest().map_err(err)?.to_path_buf();
        py.detach(|| {
            let corpus = ingest(&read_manifest(&manifest)?)?;
            let inner = prepare_dataset(&corpus, &cfg.windows(), &cfg.scan_options()?, cfg.ablation()?)?;
            Ok(Dataset {
                inner,
                labels: corpus.labels(),
            })
        })
        .map_err(err)
    }
}

#[pymethods]
impl Dataset {
    /// Read the works listed in a `label = path` manifest.
    #[new]
    #[pyo3(signature = (manifest, window=64, train_stride=32, eval_stride=64, ratios=(0.8, 0.1, 0.1), ablation="full", spondeiazon=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        py: Python<'_>,
        manifest: PathBuf,
        window: usize,
        train_stride: usize,
        eval_stride: usize,
        ratios: (f64, f64, f64),
        ablation: &str,
        spondeiazon: bool,
    ) -> PyResult<Self> {
        let mut cfg = RunConfig::default();
        cfg.data.manifest = Some(manifest);
        cfg.data.window = window;
        cfg.data.train_stride = train_stride;
        cfg.data.eval_stride = eval_stride;
        cfg.data.ratios = [ratios.0, ratios.1, ratios.2];
        cfg.data.ablation = ablation.to_owned();
        cfg.data.spondeiazon = spondeiazon;
        Dataset::build(py, cfg)
    }

    /// Use the `[data]` section of a TOML run configuration.
    #[staticmethod]
    fn from_config(py: Python<'_>, path: PathBuf) -> PyResult<Self> {
        Dataset::build(py, RunConfig::load(&path).map_err(err)?)
    }

    #[getter]
    fn lexicon(&self) -> Lexicon {
        Lexicon {
            inner: self.inner.lexicon.clone(),
        }
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    /// Number of samples in `train`, `validation` or `test`.
    fn size(&self, split: &str) -> PyResult<usize> {
        Ok(self.split(split)?.len())
    }

    /// One sample as `{label, start, rows, cols, grid, sequence}`.
    fn get<'py>(&self, py: Python<'py>, split: &str, index: usize) -> PyResult<Bound<'py, PyDict>> {
        let s = self.sample(split, index)?;
        let d = PyDict::new(py);
        d.set_item("label", s.label)?;
        d.set_item("start", s.start)?;
        d.set_item("rows", s.rows)?;
        d.set_item("cols", s.cols)?;
        d.set_item("grid", s.grid.chunks(s.cols).map(<[u32]>::to_vec).collect::<Vec<_>>())?;
        d.set_item("sequence", &s.sequence)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(classes={}, train={}, validation={}, test={}, lexicon={})",
            self.labels.len(),
            self.inner.train.len(),
            self.inner.validation.len(),
            self.inner.test.len(),
            self.inner.lexicon.size()
        )
    }
}

fn saliency_dict<'py>(py: Python<'py>, map: &SaliencyMap, layer: Option<&str>, weights: Option<&[f64]>) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rows", map.rows)?;
    d.set_item("cols", map.cols)?;
    d.set_item("values", map.row_major())?;
    d.set_item("eol", map.eol.clone())?;
    d.set_item("layer", layer)?;
    d.set_item("channel_weights", weights.map(<[f64]>::to_vec))?;
    Ok(d)
}

/// A CNN or LSTM classifier.
#[pyclass(module = "pycarmen")]
struct Model {
    net: models::Network,
}

#[pymethods]
impl Model {
    /// A freshly initialized model sized for a dataset.
    #[new]
    #[pyo3(signature = (dataset, kind="cnn", seed=0, pooling="average"))]
    fn new(dataset: &Dataset, kind: &str, seed: u64, pooling: &str) -> PyResult<Self> {
        let kind: ModelKind = kind.parse().map_err(err)?;
        let vocab = dataset.inner.lexicon.size();
        let classes = dataset.labels.len();
        let spec = match kind {
            ModelKind::Cnn => models::build_cnn_with(
                vocab,
                classes,
                models::CnnOptions {
                    pooling: pooling.parse().map_err(err)?,
                    ..models::CnnOptions::default()
                },
            ),
            ModelKind::Lstm => models::build_lstm(vocab, classes),
        }
        .map_err(err)?;
        let net = models::Network::new(spec, dataset.inner.lexicon.fingerprint(), seed).map_err(err)?;
        Ok(Model { net })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let net = Checkpoint::load(&path).and_then(|c| c.network()).map_err(err)?;
        Ok(Model { net })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint::from_network(&self.net, None).save(Path::new(&path)).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.net.kind().name()
    }

    #[getter]
    fn trainable_params(&self) -> usize {
        self.net.trainable_count()
    }

    #[getter]
    fn layer_names(&self) -> Vec<String> {
        self.net.layer_names().to_vec()
    }

    /// Train on `train`, validate on `validation`; returns one dict per epoch.
    #[pyo3(signature = (dataset, epochs=None, batch_size=None, learning_rate=None, seed=None, patience=None, bn_recalibrate=false))]
    #[allow(clippy::too_many_arguments)]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        dataset: &Dataset,
        epochs: Option<usize>,
        batch_size: Option<usize>,
        learning_rate: Option<f64>,
        seed: Option<u64>,
        patience: Option<usize>,
        bn_recalibrate: bool,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            epochs: epochs.unwrap_or(d.epochs),
            batch_size: batch_size.unwrap_or(d.batch_size),
            learning_rate,
            seed: seed.unwrap_or(d.seed),
            patience: patience.unwrap_or(d.patience),
            bn_recalibrate,
            ..d
        };
        let net = &mut self.net;
        let data = &dataset.inner;
        let outcome = py
            .detach(|| models::train(net, &data.train, &data.validation, &cfg))
            .map_err(err)?;
        outcome
            .history
            .epochs
            .iter()
            .map(|e| {
                let d = PyDict::new(py);
                d.set_item("epoch", e.epoch)?;
                d.set_item("train_loss", e.train_loss)?;
                d.set_item("train_accuracy", e.train_accuracy)?;
                d.set_item("val_loss", e.val_loss)?;
                d.set_item("val_accuracy", e.val_accuracy)?;
                d.set_item("seconds", e.seconds)?;
                Ok(d)
            })
            .collect()
    }

    /// Accuracy, loss, confusion matrix and predictions on one split.
    #[pyo3(signature = (dataset, split="test"))]
    fn evaluate<'py>(&self, py: Python<'py>, dataset: &Dataset, split: &str) -> PyResult<Bound<'py, PyDict>> {
        let samples = dataset.split(split)?;
        let fp = dataset.inner.lexicon.fingerprint();
        let net = &self.net;
        let e = py.detach(|| models::evaluate_with_lexicon(net, samples, fp)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("accuracy", e.accuracy)?;
        d.set_item("loss", e.loss)?;
        d.set_item("confusion", e.confusion)?;
        d.set_item("labels", e.labels)?;
        d.set_item("predictions", e.predictions)?;
        d.set_item("logits", e.logits)?;
        Ok(d)
    }

    /// Token-aligned saliency for one sample: `vanilla`, `gradcam` or `scorecam`.
    /// `target` defaults to the sample's own class.
    #[pyo3(signature = (dataset, split, index, method="vanilla", target=None, layer=None, chunk=32))]
    #[allow(clippy::too_many_arguments)]
    fn saliency<'py>(
        &self,
        py: Python<'py>,
        dataset: &Dataset,
        split: &str,
        index: usize,
        method: &str,
        target: Option<usize>,
        layer: Option<&str>,
        chunk: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let sample = dataset.sample(split, index)?;
        let class = target.unwrap_or(sample.label as usize);
        let net = &self.net;
        let visualizer: Visualizer = method.parse().map_err(err)?;
        match visualizer {
            Visualizer::Vanilla => {
                let m = py
                    .detach(|| attention::vanilla_saliency(net, sample, class, Reduction::MaxAbs))
                    .map_err(err)?;
                saliency_dict(py, &m, None, None)
            }
            Visualizer::GradCam | Visualizer::ScoreCam => {
                let c = py
                    .detach(|| match visualizer {
                        Visualizer::GradCam => attention::grad_cam(net, sample, class, layer, Upsample::Bilinear),
                        _ => attention::score_cam(net, sample, class, layer, Upsample::Bilinear, chunk.max(1)),
                    })
                    .map_err(err)?;
                saliency_dict(py, &c.map, Some(&c.layer), Some(&c.channel_weights))
            }
        }
    }

    /// Embedding table as `(tokens, rows)`.
    fn embeddings(&self, lexicon: &Lexicon) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
        let m = analysis::export_embeddings(&self.net, &lexicon.inner).map_err(err)?;
        let rows = (0..m.rows()).map(|i| m.row(i).to_vec()).collect();
        Ok((m.tokens, rows))
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={}, trainable_params={})", self.kind(), self.net.trainable_count())
    }
}

/// Two-component PCA of row vectors: `{coords, components, explained_variance, explained_ratio}`.
#[pyfunction]
fn project_2d<'py>(py: Python<'py>, rows: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("rows differ in length"));
    }
    let m = EmbeddingMatrix {
        tokens: (0..rows.len()).map(|i| i.to_string()).collect(),
        dim,
        values: rows.concat(),
    };
    let p = analysis::project_2d(&m).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("coords", p.coords.iter().map(|c| c.to_vec()).collect::<Vec<_>>())?;
    d.set_item("components", p.components.to_vec())?;
    d.set_item("explained_variance", p.explained_variance.to_vec())?;
    d.set_item("explained_ratio", p.explained_ratio.to_vec())?;
    Ok(d)
}

/// z-score of the mean pairwise distance among `members` against random
/// same-size subsets of `population`; negative means tighter than chance.
#[pyfunction]
#[pyo3(signature = (coords, members, population, subsets=1000, seed=0))]
fn clustering_z<'py>(
    py: Python<'py>,
    coords: Vec<[f64; 2]>,
    members: Vec<usize>,
    population: Vec<usize>,
    subsets: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let n = coords.len();
    if let Some(bad) = members.iter().chain(&population).find(|&&i| i >= n) {
        return Err(PyIndexError::new_err(format!("index {bad} outside {n} points")));
    }
    if members.len() < 2 || members.len() > population.len() || subsets < 2 {
        return Err(PyValueError::new_err(
            "need at least 2 members, no more members than population, and at least 2 subsets",
        ));
    }
    let s = analysis::clustering_z(&coords, &members, &population, subsets, seed);
    let d = PyDict::new(py);
    d.set_item("members", s.members)?;
    d.set_item("mean_distance", s.mean_distance)?;
    d.set_item("null_mean", s.null_mean)?;
    d.set_item("null_std", s.null_std)?;
    d.set_item("z", s.z)?;
    Ok(d)
}

#[pymodule]
fn pycarmen(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(transcribe, m)?)?;
    m.add_function(wrap_pyfunction!(syllabify, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(ablate, m)?)?;
    m.add_function(wrap_pyfunction!(project_2d, m)?)?;
    m.add_function(wrap_pyfunction!(clustering_z, m)?)?;
    m.add_class::<Lexicon>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    Ok(())
}

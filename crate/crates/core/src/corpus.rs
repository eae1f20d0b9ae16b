//! Labelled verse works, train/validation/test blocks, and 64-line windows.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerseLine {
    pub text: String,
    pub work_label: String,
    /// 1-based position within the work.
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Work {
    pub label: String,
    pub lines: Vec<VerseLine>,
}

impl Work {
    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    /// Build a work from raw text, one verse per non-blank line.
    pub fn from_text(label: &str, text: &str) -> Result<Work> {
        let lines: Vec<VerseLine> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| VerseLine {
                text: l.to_string(),
                work_label: label.to_string(),
                ordinal: i + 1,
            })
            .collect();
        if lines.is_empty() {
            return Err(Error::EmptyWork(label.to_string()));
        }
        Ok(Work {
            label: label.to_string(),
            lines,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub works: Vec<Work>,
}

impl Corpus {
    pub fn from_works(works: Vec<Work>) -> Result<Corpus> {
        let mut seen = HashSet::new();
        for w in &works {
            if !seen.insert(w.label.as_str()) {
                return Err(Error::DuplicateLabel(w.label.clone()));
            }
        }
        Ok(Corpus { works })
    }

    pub fn total_lines(&self) -> usize {
        self.works.iter().map(Work::line_count).sum()
    }

    pub fn n_classes(&self) -> usize {
        self.works.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.works.iter().map(|w| w.label.clone()).collect()
    }

    pub fn class_of(&self, label: &str) -> Option<usize> {
        self.works.iter().position(|w| w.label == label)
    }

    pub fn work(&self, label: &str) -> Option<&Work> {
        self.works.iter().find(|w| w.label == label)
    }

    /// Per-work line counts followed by the total, tab separated.
    pub fn summary(&self) -> String {
        let mut out = String::from("label\tlines\n");
        for w in &self.works {
            let _ = writeln!(out, "{}\t{}", w.label, w.line_count());
        }
        let _ = writeln!(out, "total\t{}", self.total_lines());
        out
    }
}

/// Read `label = path` lines. Relative paths resolve against the manifest's
/// directory; `#` starts a comment.
pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base)
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<(PathBuf, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (label, value) = line.split_once('=').ok_or_else(|| Error::Manifest {
            line: i + 1,
            msg: "expected `label = path`".into(),
        })?;
        let (label, value) = (label.trim(), value.trim());
        if label.is_empty() || value.is_empty() {
            return Err(Error::Manifest {
                line: i + 1,
                msg: "empty label or path".into(),
            });
        }
        let p = Path::new(value);
        let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        out.push((full, label.to_string()));
    }
    Ok(out)
}

/// Load every `(path, label)` source into a corpus, in the given order.
pub fn ingest(sources: &[(PathBuf, String)]) -> Result<Corpus> {
    let mut works = Vec::with_capacity(sources.len());
    for (path, label) in sources {
        let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        works.push(Work::from_text(label, &text)?);
    }
    Corpus::from_works(works)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowConfig {
    pub window: usize,
    pub train_stride: usize,
    /// Stride for validation and test windows.
    pub eval_stride: usize,
    /// Train, validation, test proportions of each work.
    pub ratios: [f64; 3],
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window: 64,
            train_stride: 32,
            eval_stride: 64,
            ratios: [0.8, 0.1, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleWindow {
    pub label: String,
    /// Index of the work in the corpus, i.e. the class id.
    pub class: usize,
    /// Ordinal of the first line.
    pub start: usize,
    pub split: Split,
    pub lines: Vec<VerseLine>,
}

impl SampleWindow {
    /// Ordinal of the last line (inclusive).
    pub fn end(&self) -> usize {
        self.start + self.lines.len() - 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataSplits {
    pub train: Vec<SampleWindow>,
    pub validation: Vec<SampleWindow>,
    pub test: Vec<SampleWindow>,
}

impl DataSplits {
    pub fn get(&self, split: Split) -> &[SampleWindow] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut Vec<SampleWindow> {
        match split {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }

    /// TSV rows of `label, start, end, split`, one per window.
    pub fn manifest(&self) -> String {
        let mut out = String::from("label\tstart\tend\tsplit\n");
        for split in Split::ALL {
            for w in self.get(split) {
                let _ = writeln!(out, "{}\t{}\t{}\t{}", w.label, w.start, w.end(), split.name());
            }
        }
        out
    }
}

/// Cut each work into contiguous train / validation / test blocks, then cut
/// windows inside each block, so no line is shared between splits.
pub fn split_and_window(corpus: &Corpus, cfg: &WindowConfig) -> Result<DataSplits> {
    let sum: f64 = cfg.ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || cfg.ratios.iter().any(|r| *r < 0.0) {
        return Err(Error::BadRatios(sum));
    }
    if cfg.window == 0 || cfg.train_stride == 0 || cfg.eval_stride == 0 {
        return Err(Error::Config("window and strides must be at least 1".into()));
    }

    let mut splits = DataSplits::default();
    for (class, work) in corpus.works.iter().enumerate() {
        let n = work.line_count();
        if n < cfg.window {
            return Err(Error::WorkShorterThanWindow {
                label: work.label.clone(),
                lines: n,
                window: cfg.window,
            });
        }
        let train_len = (n as f64 * cfg.ratios[0]).floor() as usize;
        let val_len = (n as f64 * cfg.ratios[1]).floor() as usize;
        let bounds = [
            (Split::Train, 0, train_len),
            (Split::Validation, train_len, train_len + val_len),
            (Split::Test, train_len + val_len, n),
        ];
        for (i, (split, lo, hi)) in bounds.into_iter().enumerate() {
            if cfg.ratios[i] == 0.0 || hi == lo {
                continue;
            }
            if hi - lo < cfg.window {
                return Err(Error::BlockShorterThanWindow {
                    label: work.label.clone(),
                    split: split.name(),
                    lines: hi - lo,
                    window: cfg.window,
                });
            }
            let stride = if split == Split::Train { cfg.train_stride } else { cfg.eval_stride };
            let out = splits.get_mut(split);
            let mut start = lo;
            while start + cfg.window <= hi {
                out.push(SampleWindow {
                    label: work.label.clone(),
                    class,
                    start: start + 1,
                    split,
                    lines: work.lines[start..start + cfg.window].to_vec(),
                });
                start += stride;
            }
        }
    }
    Ok(splits)
}

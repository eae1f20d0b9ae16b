//! Corpus → token lines → lexicon → encoded windows.

use rayon::prelude::*;

use crate::corpus::{split_and_window, Corpus, DataSplits, SampleWindow, Split, WindowConfig};
use crate::encoding::{ablate_all, encode_sample, tokenize_line, Ablation, EncodedSample, Lexicon, EOL};
use crate::error::Result;
use crate::scansion::ScanOptions;

/// Token lines per work, aligned with `corpus.works[k].lines`.
#[derive(Debug, Clone)]
pub struct TokenizedCorpus {
    pub works: Vec<Vec<Vec<String>>>,
    /// Lines that did not scan and carry bare syllables.
    pub unscanned: usize,
}

pub fn tokenize_corpus(corpus: &Corpus, opts: &ScanOptions, ablation: Ablation) -> Result<TokenizedCorpus> {
    let mut works = Vec::with_capacity(corpus.works.len());
    let mut unscanned = 0;
    for work in &corpus.works {
        let lines = work
            .lines
            .par_iter()
            .map(|l| tokenize_line(&l.text, opts))
            .collect::<Result<Vec<_>>>()?;
        for (line, t) in work.lines.iter().zip(&lines) {
            if !t.scanned {
                unscanned += 1;
                log::debug!("{} {}: no scansion, kept bare syllables", work.label, line.ordinal);
            }
        }
        works.push(lines.into_iter().map(|t| ablate_all(&t.tokens, ablation)).collect());
    }
    Ok(TokenizedCorpus { works, unscanned })
}

impl TokenizedCorpus {
    /// Every token followed by `EOL` at each line end.
    pub fn token_stream(&self) -> impl Iterator<Item = &str> {
        self.works
            .iter()
            .flatten()
            .flat_map(|line| line.iter().map(String::as_str).chain(std::iter::once(EOL)))
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        Lexicon::build(self.token_stream())
    }

    pub fn window_lines(&self, w: &SampleWindow) -> &[Vec<String>] {
        &self.works[w.class][w.start - 1..w.end()]
    }

    pub fn encode(&self, windows: &[SampleWindow], lex: &Lexicon) -> Result<Vec<EncodedSample>> {
        windows
            .par_iter()
            .map(|w| encode_sample(self.window_lines(w), w.class as u32, w.start as u32, lex))
            .collect()
    }
}

/// Everything a training run consumes.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub lexicon: Lexicon,
    pub splits: DataSplits,
    pub train: Vec<EncodedSample>,
    pub validation: Vec<EncodedSample>,
    pub test: Vec<EncodedSample>,
}

impl Dataset {
    pub fn get(&self, split: Split) -> &[EncodedSample] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

/// Tokenize, build the lexicon over the whole corpus, split and encode.
pub fn prepare_dataset(corpus: &Corpus, windows: &WindowConfig, opts: &ScanOptions, ablation: Ablation) -> Result<Dataset> {
    let tokens = tokenize_corpus(corpus, opts, ablation)?;
    let lexicon = tokens.lexicon()?;
    let splits = split_and_window(corpus, windows)?;
    Ok(Dataset {
        train: tokens.encode(&splits.train, &lexicon)?,
        validation: tokens.encode(&splits.validation, &lexicon)?,
        test: tokens.encode(&splits.test, &lexicon)?,
        lexicon,
        splits,
    })
}

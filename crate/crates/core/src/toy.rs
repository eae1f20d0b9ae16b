//! Synthetic hexameters for smoke tests and the desk-scale learning check.
//!
//! Every syllable is consonant-initial, so there is no elision. Long slots
//! get a closed syllable, which is heavy by position before the next onset;
//! short slots get an open one. Each class skews the onset, vowel and coda
//! distributions toward its own subset.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Work;
use crate::error::Result;

const ONSETS: [&str; 11] = ["b", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t"];
const VOWELS: [&str; 4] = ["a", "e", "i", "o"];
const CODAS: [&str; 6] = ["l", "m", "n", "r", "s", "t"];

pub const TOY_LABELS: [&str; 3] = ["alpha", "beta", "gamma"];
pub const TOY_LINES: usize = 512;
pub const TOY_SEED: u64 = 20_240_601;

/// Per-class sampling weights.
pub struct ToyProfile {
    onset: WeightedIndex<f64>,
    vowel: WeightedIndex<f64>,
    coda: WeightedIndex<f64>,
}

impl ToyProfile {
    /// Items whose index is congruent to `class` modulo `classes` get
    /// `1 + skew` weight, the rest weight 1.
    pub fn new(class: usize, classes: usize, skew: f64) -> ToyProfile {
        let weights = |n: usize| -> WeightedIndex<f64> {
            WeightedIndex::new((0..n).map(|i| if i % classes == class % classes { 1.0 + skew } else { 1.0 }))
                .expect("positive weights")
        };
        ToyProfile {
            onset: weights(ONSETS.len()),
            vowel: weights(VOWELS.len()),
            coda: weights(CODAS.len()),
        }
    }

    fn syllable<R: Rng + ?Sized>(&self, closed: bool, rng: &mut R) -> String {
        let mut s = String::new();
        s += ONSETS[self.onset.sample(rng)];
        s += VOWELS[self.vowel.sample(rng)];
        if closed {
            s += CODAS[self.coda.sample(rng)];
        }
        s
    }
}

/// One line: feet 1–4 random, a dactylic fifth foot, words of 1–3 syllables.
pub fn toy_line<R: Rng + ?Sized>(profile: &ToyProfile, rng: &mut R) -> String {
    let mut closed = Vec::with_capacity(17);
    for foot in 0..5 {
        closed.push(true);
        if foot == 4 || rng.random_bool(0.5) {
            closed.extend([false, false]);
        } else {
            closed.push(true);
        }
    }
    closed.extend([true, rng.random_bool(0.5)]);
    let syllables: Vec<String> = closed.iter().map(|&c| profile.syllable(c, rng)).collect();
    let mut words = Vec::new();
    let mut i = 0;
    while i < syllables.len() {
        let len = rng.random_range(1..=3).min(syllables.len() - i);
        words.push(syllables[i..i + len].concat());
        i += len;
    }
    words.join(" ")
}

/// `classes` works of `lines` lines each, labelled by [`TOY_LABELS`] where
/// possible and `class_<k>` otherwise.
pub fn toy_works(classes: usize, lines: usize, seed: u64, skew: f64) -> Result<Vec<Work>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..classes)
        .map(|k| {
            let profile = ToyProfile::new(k, classes, skew);
            let text: Vec<String> = (0..lines).map(|_| toy_line(&profile, &mut rng)).collect();
            let label = TOY_LABELS.get(k).map_or_else(|| format!("class_{k}"), |s| s.to_string());
            Work::from_text(&label, &text.join("\n"))
        })
        .collect()
}

/// The bundled three-class corpus.
pub fn bundled_toy() -> Result<Vec<Work>> {
    toy_works(TOY_LABELS.len(), TOY_LINES, TOY_SEED, 2.0)
}

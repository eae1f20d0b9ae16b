//! Orthography to phonetic transcription, and division of phonetic words
//! into onset / nucleus / coda syllables.
//!
//! The phonetic alphabet is `a e i o u y` (plus macron-marked long vowels)
//! for nuclei and `b d f g h k l m n p r s t w z` plus the labiovelars `kw`
//! and `gw` for consonants. Consonantal `i` keeps its orthographic form and
//! is recognised by position (word-initial or intervocalic, before a vowel).

use std::fmt;

use crate::error::{Error, Result};

const LONG_VOWELS: [char; 6] = ['ā', 'ē', 'ī', 'ō', 'ū', 'ȳ'];

pub fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y') || LONG_VOWELS.contains(&c)
}

/// One verse line in phonetic orthography.
///
/// Words keep an initial capital when the source word was capitalised and
/// was not the first word of the line (proper names), so that the text
/// form reproduces the conventional phonetic rendering of a verse. All
/// downstream consumers see lowercase syllables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneticLine {
    pub words: Vec<String>,
}

impl fmt::Display for PhoneticLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.words.join(" "))
    }
}

/// Transcribe one line of Latin orthography.
pub fn transcribe(text: &str) -> Result<PhoneticLine> {
    let mut words = Vec::new();
    for raw in text.split_whitespace() {
        if let Some(w) = transcribe_word(raw, words.is_empty())? {
            words.push(w);
        }
    }
    Ok(PhoneticLine { words })
}

fn normalize_char(c: char) -> Option<char> {
    let lc = c.to_lowercase().next().unwrap_or(c);
    let mapped = match lc {
        'ä' => 'a',
        'ë' => 'e',
        'ï' => 'i',
        'ö' => 'o',
        'ü' => 'u',
        'j' => 'i',
        other => other,
    };
    (mapped.is_ascii_lowercase() || LONG_VOWELS.contains(&mapped)).then_some(mapped)
}

fn transcribe_word(raw: &str, line_initial: bool) -> Result<Option<String>> {
    let mut chars = Vec::with_capacity(raw.len());
    let mut capital = None;
    for c in raw.chars() {
        if !c.is_alphanumeric() {
            continue;
        }
        match normalize_char(c) {
            Some(n) => {
                capital.get_or_insert(c.is_uppercase());
                chars.push(n);
            }
            None => {
                return Err(Error::NotLatin {
                    ch: c,
                    word: raw.to_string(),
                })
            }
        }
    }
    if chars.is_empty() {
        return Ok(None);
    }

    let at = |i: usize| chars.get(i).copied();
    let vowel_at = |i: usize| at(i).is_some_and(is_vowel);
    let mut out = String::with_capacity(chars.len() + 2);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = at(i + 1);
        match (c, next) {
            ('q', Some('u')) => {
                out.push_str("kw");
                i += 2;
                continue;
            }
            ('q', _) => out.push('k'),
            ('c', Some('h')) | ('p', Some('h')) | ('t', Some('h')) | ('r', Some('h')) => {
                out.push(match c {
                    'c' => 'k',
                    'p' => 'f',
                    other => other,
                });
                i += 2;
                continue;
            }
            ('c', _) => out.push('k'),
            ('x', _) => out.push_str("ks"),
            ('a', Some('e')) | ('o', Some('e')) => {
                out.push(c);
                out.push('i');
                i += 2;
                continue;
            }
            ('g', Some('u')) if i > 0 && chars[i - 1] == 'n' && vowel_at(i + 2) => {
                out.push_str("gw");
                i += 2;
                continue;
            }
            ('v', _) => out.push(if vowel_at(i + 1) { 'w' } else { 'u' }),
            ('u', _) if vowel_at(i + 1) && (i == 0 || vowel_at(i - 1)) => out.push('w'),
            _ => out.push(c),
        }
        i += 1;
    }

    if capital == Some(true) && !line_initial {
        let mut cs = out.chars();
        if let Some(first) = cs.next() {
            out = first.to_uppercase().chain(cs).collect();
        }
    }
    Ok(Some(out))
}

/// How stop + liquid clusters (muta cum liquida) divide between syllables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MutaCumLiquida {
    /// `at.ra`: the cluster closes the preceding syllable.
    #[default]
    Heterosyllabic,
    /// `a.tra`: the cluster forms an onset.
    Tautosyllabic,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Syllable {
    pub onset: String,
    pub nucleus: String,
    pub coda: String,
}

impl Syllable {
    pub fn text(&self) -> String {
        format!("{}{}{}", self.onset, self.nucleus, self.coda)
    }

    /// Diphthongs and macron vowels are long by nature.
    pub fn long_nucleus(&self) -> bool {
        self.nucleus.chars().count() > 1 || self.nucleus.chars().any(|c| LONG_VOWELS.contains(&c))
    }

    pub fn onset_units(&self) -> Vec<&str> {
        consonant_units(&self.onset)
    }

    pub fn coda_units(&self) -> Vec<&str> {
        consonant_units(&self.coda)
    }

    pub fn is_open(&self) -> bool {
        self.coda.is_empty()
    }
}

impl fmt::Display for Syllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.onset, self.nucleus, self.coda)
    }
}

/// Split a consonant string into phoneme units (`kw` and `gw` are single units).
pub fn consonant_units(s: &str) -> Vec<&str> {
    let mut units = Vec::new();
    let mut idx = 0;
    let bytes = s.as_bytes();
    while idx < s.len() {
        let width = s[idx..].chars().next().map_or(1, char::len_utf8);
        let pair = idx + 1 < bytes.len() && matches!(bytes[idx], b'k' | b'g') && bytes[idx + 1] == b'w';
        let end = if pair { idx + 2 } else { idx + width };
        units.push(&s[idx..end]);
        idx = end;
    }
    units
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SegKind {
    Nucleus,
    Consonant,
}

fn segment(word: &str) -> Vec<(String, SegKind)> {
    let chars: Vec<char> = word.chars().collect();
    let at = |i: usize| chars.get(i).copied();
    let vowel_at = |i: usize| at(i).is_some_and(is_vowel);
    let mut segs = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = at(i + 1);
        if is_vowel(c) {
            if c == 'i' && vowel_at(i + 1) && (i == 0 || vowel_at(i - 1)) {
                segs.push(("i".to_string(), SegKind::Consonant));
                i += 1;
                continue;
            }
            let diphthong = matches!((c, next), ('a', Some('i')) | ('o', Some('i')) | ('a', Some('u')))
                && !vowel_at(i + 2);
            if diphthong {
                segs.push((chars[i..i + 2].iter().collect(), SegKind::Nucleus));
                i += 2;
            } else {
                segs.push((c.to_string(), SegKind::Nucleus));
                i += 1;
            }
        } else if matches!(c, 'k' | 'g') && next == Some('w') {
            segs.push((chars[i..i + 2].iter().collect(), SegKind::Consonant));
            i += 2;
        } else {
            segs.push((c.to_string(), SegKind::Consonant));
            i += 1;
        }
    }
    segs
}

fn is_stop(u: &str) -> bool {
    matches!(u, "p" | "b" | "t" | "d" | "k" | "g" | "f")
}

fn is_liquid(u: &str) -> bool {
    matches!(u, "r" | "l")
}

fn legal_onset(units: &[&str], mcl: MutaCumLiquida) -> bool {
    let stop_liquid = |a: &str, b: &str| is_stop(a) && is_liquid(b) && !matches!((a, b), ("t", "l") | ("d", "l"));
    match units {
        [_] => true,
        ["s", b] if matches!(*b, "p" | "t" | "k") => true,
        [a, b] => mcl == MutaCumLiquida::Tautosyllabic && stop_liquid(a, b),
        ["s", a, b] => mcl == MutaCumLiquida::Tautosyllabic && matches!(*a, "p" | "t" | "k") && is_liquid(b),
        _ => false,
    }
}

/// Divide one phonetic word into syllables, maximising onsets subject to
/// the legal-onset table. Geminates always split.
pub fn syllabify_word(word: &str, mcl: MutaCumLiquida) -> Result<Vec<Syllable>> {
    let lower = word.to_lowercase();
    let segs = segment(&lower);
    let nuclei: Vec<usize> = segs
        .iter()
        .enumerate()
        .filter(|(_, (_, k))| *k == SegKind::Nucleus)
        .map(|(i, _)| i)
        .collect();
    if nuclei.is_empty() {
        return Err(Error::NoVowel(word.to_string()));
    }
    let join = |range: std::ops::Range<usize>| -> String { segs[range].iter().map(|(s, _)| s.as_str()).collect() };

    let mut syllables = Vec::with_capacity(nuclei.len());
    let mut onset_start = 0;
    for (n, &nuc) in nuclei.iter().enumerate() {
        let coda_end = match nuclei.get(n + 1) {
            None => segs.len(),
            Some(&next_nuc) => {
                let cluster: Vec<&str> = segs[nuc + 1..next_nuc].iter().map(|(s, _)| s.as_str()).collect();
                let mut onset_len = 0;
                for len in 1..=cluster.len() {
                    if legal_onset(&cluster[cluster.len() - len..], mcl) {
                        onset_len = len;
                    }
                }
                next_nuc - onset_len
            }
        };
        syllables.push(Syllable {
            onset: join(onset_start..nuc),
            nucleus: segs[nuc].0.clone(),
            coda: join(nuc + 1..coda_end),
        });
        onset_start = coda_end;
    }
    Ok(syllables)
}

/// Syllabify every word of a phonetic line.
pub fn syllabify(line: &PhoneticLine, mcl: MutaCumLiquida) -> Result<Vec<Vec<Syllable>>> {
    line.words.iter().map(|w| syllabify_word(w, mcl)).collect()
}

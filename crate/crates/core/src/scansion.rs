//! Dactylic hexameter scansion.
//!
//! A line is elided, weighted by position, then matched against the six-foot
//! template: feet 1-4 dactyl or spondee, foot 5 dactyl (spondee allowed in
//! `spondeiazon` mode), foot 6 two syllables with an anceps close. Open
//! syllables with short-looking nuclei are left unresolved and bound by the
//! search, so a line may admit several scansions; the one with the most
//! dactyls earliest is kept and the rest are counted as ambiguity.

use std::fmt;

use crate::error::{Error, Result};
use crate::phonology::{MutaCumLiquida, Syllable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Foot {
    Dactyl,
    Spondee,
    /// Sixth foot with a short anceps; never produced by [`scan`], which
    /// always binds the anceps long.
    Trochee,
}

impl Foot {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        match self {
            Foot::Dactyl => 3,
            Foot::Spondee | Foot::Trochee => 2,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Foot::Dactyl => 'D',
            Foot::Spondee => 'S',
            Foot::Trochee => 'T',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Pause {
    #[default]
    None,
    StrongCaesura,
    WeakCaesura,
    Diaeresis,
}

impl Pause {
    pub fn code(self) -> Option<&'static str> {
        match self {
            Pause::None => None,
            Pause::StrongCaesura => Some("SC"),
            Pause::WeakCaesura => Some("WC"),
            Pause::Diaeresis => Some("DI"),
        }
    }
}

/// Positional weight of a syllable before the search binds it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Heavy,
    /// Open syllable with a monophthong: length depends on hidden quantity.
    Unknown,
    /// The final syllable of the line.
    Anceps,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSyllable {
    pub syllable: Syllable,
    /// Flag `L`: bound long by the scansion.
    pub long: bool,
    /// Flag `S`: word accent.
    pub accent: bool,
    /// Flag `A`: foot-initial longum.
    pub ictus: bool,
    pub pause: Pause,
    pub elided: bool,
    pub word_final: bool,
    pub word_index: usize,
    /// 1-based; elided syllables carry the foot of the syllable that follows.
    pub foot_index: usize,
    pub position_in_foot: usize,
}

impl AnnotatedSyllable {
    pub fn conflict(&self) -> bool {
        self.ictus != self.accent
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScannedLine {
    pub feet: [Foot; 6],
    /// Every syllable of the line in order, elided ones included.
    pub syllables: Vec<AnnotatedSyllable>,
    /// Number of alternative scansions that were discarded by the tie-break.
    pub ambiguity: usize,
}

impl ScannedLine {
    /// Syllables that count metrically (not elided).
    pub fn metrical(&self) -> impl Iterator<Item = &AnnotatedSyllable> {
        self.syllables.iter().filter(|s| !s.elided)
    }

    pub fn metrical_count(&self) -> usize {
        self.metrical().count()
    }

    pub fn pattern(&self) -> String {
        self.feet.iter().map(|f| f.letter()).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScanOptions {
    /// Permit a spondee in the fifth foot.
    pub spondeiazon: bool,
    pub muta_cum_liquida: MutaCumLiquida,
}

/// Metrical syllables prepared for matching.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub syllables: Vec<AnnotatedSyllable>,
    /// Indices into `syllables` of the non-elided ones.
    pub metrical: Vec<usize>,
    pub weights: Vec<Weight>,
}

fn elides(word: &[Syllable], next: Option<&[Syllable]>) -> bool {
    let (Some(last), Some(next)) = (word.last(), next) else {
        return false;
    };
    let vowel_final = last.coda.is_empty() || last.coda == "m";
    let vowel_initial = next.first().is_some_and(|s| s.onset.is_empty() || s.onset == "h");
    vowel_final && vowel_initial
}

fn is_stop(u: &str) -> bool {
    matches!(u, "p" | "b" | "t" | "d" | "k" | "g" | "f")
}

/// Mark elisions and compute positional weights.
pub fn prepare(words: &[Vec<Syllable>], opts: &ScanOptions) -> Prepared {
    let mut syllables = Vec::new();
    for (w, word) in words.iter().enumerate() {
        let elided_last = elides(word, words.get(w + 1).map(Vec::as_slice));
        for (k, syl) in word.iter().enumerate() {
            let last = k + 1 == word.len();
            syllables.push(AnnotatedSyllable {
                syllable: syl.clone(),
                long: false,
                accent: false,
                ictus: false,
                pause: Pause::None,
                elided: last && elided_last,
                word_final: last,
                word_index: w,
                foot_index: 0,
                position_in_foot: 0,
            });
        }
    }
    let metrical: Vec<usize> = (0..syllables.len()).filter(|&i| !syllables[i].elided).collect();

    let mut weights = Vec::with_capacity(metrical.len());
    for (m, &idx) in metrical.iter().enumerate() {
        let Some(&next_idx) = metrical.get(m + 1) else {
            weights.push(Weight::Anceps);
            break;
        };
        let syl = &syllables[idx];
        if syl.syllable.long_nucleus() {
            weights.push(Weight::Heavy);
            continue;
        }
        // Consonants between this nucleus and the next metrical nucleus.
        let mut units: Vec<(&str, bool)> = syl.syllable.coda_units().into_iter().map(|u| (u, false)).collect();
        for between in &syllables[idx + 1..next_idx] {
            units.extend(between.syllable.onset_units().into_iter().map(|u| (u, false)));
        }
        let next = &syllables[next_idx];
        let internal = next.word_index == syl.word_index;
        units.extend(next.syllable.onset_units().into_iter().map(|u| (u, internal)));
        let mut count: usize = units
            .iter()
            .map(|&(u, internal)| match u {
                "h" => 0,
                "i" if internal => 2,
                _ => 1,
            })
            .sum();
        if opts.muta_cum_liquida == MutaCumLiquida::Tautosyllabic {
            let real: Vec<&str> = units.iter().map(|&(u, _)| u).filter(|&u| u != "h").collect();
            if let [.., a, b] = real.as_slice() {
                if is_stop(a) && matches!(*b, "r" | "l") {
                    count -= 1;
                }
            }
        }
        weights.push(if count >= 2 { Weight::Heavy } else { Weight::Unknown });
    }
    Prepared {
        syllables,
        metrical,
        weights,
    }
}

const FOOT_CHOICES: [Foot; 2] = [Foot::Dactyl, Foot::Spondee];

fn fifth_foot_choices(opts: &ScanOptions) -> &'static [Foot] {
    if opts.spondeiazon {
        &FOOT_CHOICES
    } else {
        &FOOT_CHOICES[..1]
    }
}

/// Whether the weight at `pos` can fill a breve slot.
fn fits_breve(w: Weight) -> bool {
    !matches!(w, Weight::Heavy)
}

fn fits_foot(weights: &[Weight], start: usize, foot: Foot) -> bool {
    if start + foot.len() > weights.len() {
        return false;
    }
    match foot {
        // the longum admits Heavy or Unknown; an anceps never sits here.
        Foot::Dactyl => {
            weights[start] != Weight::Anceps && fits_breve(weights[start + 1]) && fits_breve(weights[start + 2])
        }
        Foot::Spondee | Foot::Trochee => weights[start] != Weight::Anceps && weights[start + 1] != Weight::Anceps,
    }
}

/// Feet 1-5 for a candidate solution; foot 6 is always disyllabic.
pub type Pattern = [Foot; 5];

fn check_pattern(weights: &[Weight], pattern: &Pattern) -> bool {
    let total: usize = pattern.iter().map(|f| f.len()).sum::<usize>() + 2;
    if total != weights.len() {
        return false;
    }
    let mut pos = 0;
    for &foot in pattern {
        if !fits_foot(weights, pos, foot) {
            return false;
        }
        pos += foot.len();
    }
    // sixth foot: longum then anceps
    weights[pos] != Weight::Anceps && weights[pos + 1] == Weight::Anceps
}

/// Depth-first search, dactyl before spondee, pruning on slot mismatches and
/// on the remaining syllable budget. Solutions come out in tie-break order.
pub fn search(weights: &[Weight], opts: &ScanOptions) -> Vec<Pattern> {
    fn go(
        weights: &[Weight],
        opts: &ScanOptions,
        foot: usize,
        pos: usize,
        acc: &mut Vec<Foot>,
        out: &mut Vec<Pattern>,
    ) {
        let remaining_feet = 5 - foot;
        let left = weights.len().saturating_sub(pos);
        // each remaining foot takes 2 or 3 syllables, plus 2 for foot six
        if left < 2 * remaining_feet + 2 || left > 3 * remaining_feet + 2 {
            return;
        }
        if foot == 5 {
            if weights[pos] != Weight::Anceps && weights[pos + 1] == Weight::Anceps {
                let mut p = [Foot::Dactyl; 5];
                p.copy_from_slice(acc);
                out.push(p);
            }
            return;
        }
        let choices: &[Foot] = if foot == 4 { fifth_foot_choices(opts) } else { &FOOT_CHOICES };
        for &f in choices {
            if fits_foot(weights, pos, f) {
                acc.push(f);
                go(weights, opts, foot + 1, pos + f.len(), acc, out);
                acc.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(weights, opts, 0, 0, &mut Vec::with_capacity(5), &mut out);
    out
}

/// Exhaustive enumeration of every foot pattern; used to cross-check `search`.
pub fn enumerate(weights: &[Weight], opts: &ScanOptions) -> Vec<Pattern> {
    let mut out = Vec::new();
    for bits in 0..16u32 {
        for &fifth in fifth_foot_choices(opts) {
            let mut p = [Foot::Dactyl; 5];
            for (f, slot) in p.iter_mut().take(4).enumerate() {
                *slot = if bits >> (3 - f) & 1 == 0 { Foot::Dactyl } else { Foot::Spondee };
            }
            p[4] = fifth;
            if check_pattern(weights, &p) {
                out.push(p);
            }
        }
    }
    out
}

fn describe(words: &[Vec<Syllable>]) -> String {
    words
        .iter()
        .map(|w| w.iter().map(Syllable::text).collect::<Vec<_>>().join("."))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Assign feet and quantities. Flags other than length are filled by
/// [`annotate`]; use [`scan_line`] for both.
pub fn scan(words: &[Vec<Syllable>], opts: &ScanOptions) -> Result<ScannedLine> {
    let prepared = prepare(words, opts);
    // a wholly spondaic spondeiazon would have 12; no attested hexameter does
    let n = prepared.metrical.len();
    if !(13..=17).contains(&n) {
        return Err(Error::Unscannable(format!("{n} metrical syllables: {}", describe(words))));
    }
    let solutions = search(&prepared.weights, opts);
    let Some(best) = solutions.first() else {
        return Err(Error::Unscannable(describe(words)));
    };
    // the closing anceps is flagged long, so foot six always reads as a spondee
    let feet = [best[0], best[1], best[2], best[3], best[4], Foot::Spondee];

    let Prepared {
        mut syllables, metrical, ..
    } = prepared;
    let mut m = 0;
    for (f, foot) in feet.iter().enumerate() {
        for pos in 0..foot.len() {
            let s = &mut syllables[metrical[m]];
            s.foot_index = f + 1;
            s.position_in_foot = pos;
            s.long = pos == 0 || *foot != Foot::Dactyl;
            m += 1;
        }
    }
    // elided syllables take the slot of what follows them
    for i in (0..syllables.len()).rev() {
        if syllables[i].elided {
            let (fi, pi) = syllables
                .get(i + 1)
                .map_or((6, 1), |n| (n.foot_index, n.position_in_foot));
            syllables[i].foot_index = fi;
            syllables[i].position_in_foot = pi;
        }
    }
    Ok(ScannedLine {
        feet,
        syllables,
        ambiguity: solutions.len() - 1,
    })
}

/// Complete ictus, accent and pause flags.
pub fn annotate(mut line: ScannedLine) -> ScannedLine {
    let last_metrical = line.syllables.iter().rposition(|s| !s.elided);
    for (i, s) in line.syllables.iter_mut().enumerate() {
        s.ictus = !s.elided && s.position_in_foot == 0;
        s.pause = Pause::None;
        if s.elided || !s.word_final || Some(i) == last_metrical {
            continue;
        }
        let foot = line.feet[s.foot_index - 1];
        s.pause = if s.position_in_foot + 1 == foot.len() {
            Pause::Diaeresis
        } else if s.position_in_foot == 0 {
            Pause::StrongCaesura
        } else {
            Pause::WeakCaesura
        };
    }

    let mut start = 0;
    while start < line.syllables.len() {
        let w = line.syllables[start].word_index;
        let end = line.syllables[start..]
            .iter()
            .position(|s| s.word_index != w)
            .map_or(line.syllables.len(), |p| start + p);
        let word = &mut line.syllables[start..end];
        for s in word.iter_mut() {
            s.accent = false;
        }
        let n = word.len();
        let target = if n == 1 {
            0
        } else if n == 2 || word[n - 1].syllable.text() == "kwe" || word[n - 2].long {
            n - 2
        } else {
            n - 3
        };
        word[target].accent = true;
        start = end;
    }
    line
}

/// Scan and annotate in one step.
pub fn scan_line(words: &[Vec<Syllable>], opts: &ScanOptions) -> Result<ScannedLine> {
    scan(words, opts).map(annotate)
}

impl fmt::Display for ScannedLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.pattern())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonology::{syllabify, transcribe};

    fn words(text: &str) -> Vec<Vec<Syllable>> {
        syllabify(&transcribe(text).unwrap(), MutaCumLiquida::Heterosyllabic).unwrap()
    }

    fn flags(line: &ScannedLine) -> Vec<String> {
        line.syllables
            .iter()
            .map(|s| {
                let mut t = s.syllable.text();
                if s.ictus {
                    t.push_str("+A");
                }
                if s.long {
                    t.push_str("+L");
                }
                if s.accent {
                    t.push_str("+S");
                }
                if let Some(p) = s.pause.code() {
                    t.push('+');
                    t.push_str(p);
                }
                t
            })
            .collect()
    }

    #[test]
    fn golden_first_line() {
        let line = scan_line(&words("Ecce Lichan trepidum latitantem rupe cauata"), &ScanOptions::default()).unwrap();
        assert_eq!(line.pattern(), "DDDSDS");
        assert_eq!(line.metrical_count(), 16);
        assert_eq!(line.ambiguity, 0);
        let ictus: Vec<String> = line.syllables.iter().filter(|s| s.ictus).map(|s| s.syllable.text()).collect();
        assert_eq!(ictus, ["ek", "kan", "dum", "tan", "ru", "wa"]);
        assert_eq!(
            flags(&line).join(" "),
            "ek+A+L+S ke+WC li+S kan+A+L+SC tre+S pi dum+A+L+SC la ti tan+A+L+S tem+L+DI ru+A+L+S pe+WC ka wa+A+L+S ta+L"
        );
    }

    #[test]
    fn golden_second_line_prefix() {
        let line = scan_line(
            &words("Adspicit, utque dolor rabiem conlegerat omnem,"),
            &ScanOptions::default(),
        )
        .unwrap();
        let got = flags(&line).join(" ");
        assert!(
            got.starts_with("ad+A+L+S spi kit+DI ut+A+L+S kwe+WC do+S lor+A+L+SC ra+S bi em+A+L+SC kon+L le+A+L+S ge"),
            "{got}"
        );
    }

    #[test]
    fn all_spondee_line_has_thirteen_syllables() {
        // heavy syllables everywhere except the fifth-foot breves
        let line = "tantum nostrum partes sunt dant litora mare";
        let w = words(line);
        let scanned = scan_line(&w, &ScanOptions::default());
        // closed syllables force spondees in feet 1-4
        let scanned = scanned.unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(scanned.metrical_count(), 13);
        assert_eq!(scanned.pattern(), "SSSSDS");
    }

    #[test]
    fn too_few_syllables_is_unscannable() {
        let w = words("arma uirumque kano troiai");
        assert!(matches!(scan(&w, &ScanOptions::default()), Err(Error::Unscannable(_))));
    }

    #[test]
    fn elision_before_vowel() {
        let w = words("multum ille et terris iaktatus et alto");
        let p = prepare(&w, &ScanOptions::default());
        let elided: Vec<String> = p
            .syllables
            .iter()
            .filter(|s| s.elided)
            .map(|s| s.syllable.text())
            .collect();
        assert_eq!(elided, ["tum", "le"]);
        // mul is still heavy: l + t across the elided syllable
        assert_eq!(p.weights[0], Weight::Heavy);
    }

    #[test]
    fn elided_syllables_carry_no_pause_or_ictus() {
        let line = scan_line(&words("litora multum ille et terris iaktatus et alto"), &ScanOptions::default()).unwrap();
        for s in line.syllables.iter().filter(|s| s.elided) {
            assert_eq!(s.pause, Pause::None);
            assert!(!s.ictus && !s.long);
        }
    }

    #[test]
    fn spondeiazon_switch() {
        let weights: Vec<Weight> = std::iter::repeat_n(Weight::Heavy, 11)
            .chain(std::iter::once(Weight::Anceps))
            .collect();
        assert!(search(&weights, &ScanOptions::default()).is_empty());
        let opts = ScanOptions {
            spondeiazon: true,
            ..Default::default()
        };
        assert_eq!(search(&weights, &opts), vec![[Foot::Spondee; 5]]);
    }

    #[test]
    fn enclitic_pulls_accent() {
        let line = scan_line(
            &words("Adspicit, utque dolor rabiem conlegerat omnem,"),
            &ScanOptions::default(),
        )
        .unwrap();
        let ut = line.syllables.iter().find(|s| s.syllable.text() == "ut").unwrap();
        assert!(ut.accent);
    }
}

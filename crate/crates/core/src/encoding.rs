//! Token strings, the lexicon, padded id grids, ablations, and the older
//! nine-channel metron encoding.
//!
//! A token is the phonetic syllable followed by its flags in fixed order:
//! `+A` ictus, `+L` long, `+S` accent, one of `+SC`/`+WC`/`+DI`, `+E`
//! elided. Lines end with the literal token `EOL`.
//!
//! Encoded samples are stored in a little-endian binary container:
//!
//! ```text
//! magic    8 bytes  "CRMNSAMP"
//! version  u32      1
//! count    u32      number of samples
//! rows     u32      lines per sample (64)
//! cols     u32      grid columns (20)
//! eol      u32      lexicon id of EOL
//! then per sample:
//!   label  u32      class index
//!   start  u32      ordinal of the first line in its work
//!   ids    rows*cols u32, row-major, 0-padded at row tails
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::phonology::{self, MutaCumLiquida, Syllable};
use crate::scansion::{self, AnnotatedSyllable, Foot, ScanOptions, ScannedLine};

pub const EOL: &str = "EOL";
pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
/// Metre-only projection of a syllable with no flags.
pub const NULL_TOKEN: &str = "+∅";
pub const GRID_COLS: usize = 20;
pub const WINDOW_LINES: usize = 64;

pub fn token_string(s: &AnnotatedSyllable) -> String {
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
    if let Some(code) = s.pause.code() {
        t.push('+');
        t.push_str(code);
    }
    if s.elided {
        t.push_str("+E");
    }
    t
}

/// Syllable tokens of a scanned line, without the trailing `EOL`.
pub fn line_tokens(line: &ScannedLine) -> Vec<String> {
    line.syllables.iter().map(token_string).collect()
}

/// Text form of a line: tokens separated by spaces, closed by `EOL`.
pub fn line_text(tokens: &[String]) -> String {
    let mut s = tokens.join(" ");
    if !s.is_empty() {
        s.push(' ');
    }
    s.push_str(EOL);
    s
}

/// Outcome of tokenizing one verse line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedLine {
    pub tokens: Vec<String>,
    /// False when the line could not be scanned and carries bare syllables.
    pub scanned: bool,
}

/// Transcribe, syllabify and scan a raw line. Lines that do not scan keep
/// their bare syllables (capped at [`GRID_COLS`]) so windows stay contiguous.
pub fn tokenize_line(text: &str, opts: &ScanOptions) -> Result<TokenizedLine> {
    let phon = phonology::transcribe(text)?;
    let words = phonology::syllabify(&phon, opts.muta_cum_liquida)?;
    match scansion::scan_line(&words, opts) {
        Ok(line) => Ok(TokenizedLine {
            tokens: line_tokens(&line),
            scanned: true,
        }),
        Err(Error::Unscannable(_)) => Ok(TokenizedLine {
            tokens: words.iter().flatten().map(Syllable::text).take(GRID_COLS).collect(),
            scanned: false,
        }),
        Err(e) => Err(e),
    }
}

/// Parse one token-text line (as written by [`line_text`]) back to tokens.
pub fn parse_line(text: &str) -> Vec<String> {
    text.split_whitespace().filter(|t| *t != EOL).map(str::to_string).collect()
}

/// Split a token into its syllable body and flag suffix.
pub fn split_token(token: &str) -> (&str, &str) {
    match token.find('+') {
        Some(i) => (&token[..i], &token[i..]),
        None => (token, ""),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Ablation {
    #[default]
    Full,
    MetreOnly,
    SoundOnly,
}

impl std::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "metre_only" | "metre-only" | "metre" => Ok(Ablation::MetreOnly),
            "sound_only" | "sound-only" | "sound" => Ok(Ablation::SoundOnly),
            other => Err(Error::Config(format!("unknown ablation mode {other:?}"))),
        }
    }
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::MetreOnly => "metre_only",
            Ablation::SoundOnly => "sound_only",
        }
    }
}

pub fn ablate(token: &str, mode: Ablation) -> String {
    if token == EOL || token == NULL_TOKEN {
        return token.to_string();
    }
    let (body, flags) = split_token(token);
    match mode {
        Ablation::Full => token.to_string(),
        Ablation::MetreOnly if flags.is_empty() => NULL_TOKEN.to_string(),
        Ablation::MetreOnly => flags.to_string(),
        Ablation::SoundOnly => body.to_string(),
    }
}

pub fn ablate_all(tokens: &[String], mode: Ablation) -> Vec<String> {
    tokens.iter().map(|t| ablate(t, mode)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Lexicon {
    /// Ids by descending frequency, ties broken lexicographically, after
    /// the reserved pad (0) and unknown (1) entries.
    pub fn build<'a, I>(stream: I) -> Result<Lexicon>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for t in stream {
            *counts.entry(t).or_default() += 1;
        }
        counts.remove(PAD);
        counts.remove(UNK);
        if counts.is_empty() {
            return Err(Error::EmptyStream);
        }
        let mut entries: Vec<(&str, u64)> = counts.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens = vec![PAD.to_string(), UNK.to_string()];
        let mut freqs = vec![0, 0];
        for (t, f) in entries {
            tokens.push(t.to_string());
            freqs.push(f);
        }
        Ok(Self::from_parts(tokens, freqs))
    }

    fn from_parts(tokens: Vec<String>, freqs: Vec<u64>) -> Lexicon {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Lexicon { tokens, freqs, index }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn frequency(&self, id: u32) -> u64 {
        self.freqs.get(id as usize).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn eol_id(&self) -> u32 {
        self.id(EOL)
    }

    /// Stable 64-bit digest of the id order.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        let digest = h.finalize();
        u64::from_be_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
    }

    /// `id \t token \t frequency` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, (t, f)) in self.tokens.iter().zip(&self.freqs).enumerate() {
            let _ = writeln!(out, "{i}\t{t}\t{f}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Lexicon> {
        let mut tokens = Vec::new();
        let mut freqs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(id), Some(tok), Some(freq), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
                return Err(Error::format("lexicon", format!("line {}: expected 3 columns", n + 1)));
            };
            let id: usize = id.parse().map_err(|_| Error::format("lexicon", format!("bad id {id:?}")))?;
            if id != tokens.len() {
                return Err(Error::format("lexicon", format!("ids not contiguous at {id}")));
            }
            let freq = freq
                .parse()
                .map_err(|_| Error::format("lexicon", format!("bad frequency {freq:?}")))?;
            tokens.push(tok.to_string());
            freqs.push(freq);
        }
        if tokens.len() < 2 || tokens[0] != PAD || tokens[1] != UNK {
            return Err(Error::format("lexicon", "missing reserved pad/unknown rows"));
        }
        let lex = Self::from_parts(tokens, freqs);
        if lex.index.len() != lex.tokens.len() {
            return Err(Error::format("lexicon", "duplicate token"));
        }
        Ok(lex)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::write(path, e))
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        Self::from_tsv(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSample {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols` ids, CNN form.
    pub grid: Vec<u32>,
    /// Concatenated line ids each followed by `EOL`, LSTM form.
    pub sequence: Vec<u32>,
    pub label: u32,
    pub start: u32,
}

impl EncodedSample {
    pub fn row(&self, r: usize) -> &[u32] {
        &self.grid[r * self.cols..(r + 1) * self.cols]
    }

    /// Build a sample from a row-major grid; `PAD_ID` cells are skipped in the sequence.
    pub fn from_grid(rows: usize, cols: usize, grid: Vec<u32>, label: u32, start: u32, eol: u32) -> EncodedSample {
        let mut sequence = Vec::with_capacity(rows * 18);
        for r in 0..rows {
            sequence.extend(grid[r * cols..(r + 1) * cols].iter().copied().filter(|&id| id != PAD_ID));
            sequence.push(eol);
        }
        EncodedSample {
            rows,
            cols,
            grid,
            sequence,
            label,
            start,
        }
    }
}

/// Encode the token lines of one window. `EOL` is implicit in the grid and
/// explicit in the sequence.
pub fn encode_sample(lines: &[Vec<String>], label: u32, start: u32, lex: &Lexicon) -> Result<EncodedSample> {
    let cols = GRID_COLS;
    let mut grid = vec![PAD_ID; lines.len() * cols];
    for (r, line) in lines.iter().enumerate() {
        if line.is_empty() {
            return Err(Error::EmptyLine(r));
        }
        if line.len() > cols {
            return Err(Error::LineTooLong {
                row: r,
                len: line.len(),
                max: cols,
            });
        }
        for (c, tok) in line.iter().enumerate() {
            grid[r * cols + c] = lex.id(tok);
        }
    }
    Ok(EncodedSample::from_grid(lines.len(), cols, grid, label, start, lex.eol_id()))
}

const SAMPLE_MAGIC: &[u8; 8] = b"CRMNSAMP";
const SAMPLE_VERSION: u32 = 1;

pub fn write_samples<W: Write>(mut w: W, samples: &[EncodedSample], eol: u32) -> Result<()> {
    let (rows, cols) = samples.first().map_or((WINDOW_LINES, GRID_COLS), |s| (s.rows, s.cols));
    w.write_all(SAMPLE_MAGIC)?;
    for v in [SAMPLE_VERSION, samples.len() as u32, rows as u32, cols as u32, eol] {
        w.write_all(&v.to_le_bytes())?;
    }
    for s in samples {
        if s.rows != rows || s.cols != cols {
            return Err(Error::Shape("samples in one file must share dimensions".into()));
        }
        w.write_all(&s.label.to_le_bytes())?;
        w.write_all(&s.start.to_le_bytes())?;
        for id in &s.grid {
            w.write_all(&id.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::format("sample file", format!("truncated: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

/// Read a sample container; returns the samples and the `EOL` id.
pub fn read_samples<R: Read>(mut r: R) -> Result<(Vec<EncodedSample>, u32)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("sample file", "missing magic"))?;
    if &magic != SAMPLE_MAGIC {
        return Err(Error::format("sample file", "bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != SAMPLE_VERSION {
        return Err(Error::format("sample file", format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let eol = read_u32(&mut r)?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let label = read_u32(&mut r)?;
        let start = read_u32(&mut r)?;
        let mut grid = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            grid.push(read_u32(&mut r)?);
        }
        for row in grid.chunks(cols) {
            let used = row.iter().take_while(|&&id| id != PAD_ID).count();
            if row[used..].iter().any(|&id| id != PAD_ID) {
                return Err(Error::format("sample file", "padding inside a row"));
            }
        }
        samples.push(EncodedSample::from_grid(rows, cols, grid, label, start, eol));
    }
    Ok((samples, eol))
}

pub fn save_samples(path: &Path, samples: &[EncodedSample], eol: u32) -> Result<()> {
    let mut buf = Vec::new();
    write_samples(&mut buf, samples, eol)?;
    fs::write(path, buf).map_err(|e| Error::write(path, e))
}

pub fn load_samples(path: &Path) -> Result<(Vec<EncodedSample>, u32)> {
    let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
    read_samples(bytes.as_slice())
}

/// Nine channels: onset, nucleus, coda in [0, 1], then binary long, SC,
/// WC, DI, ictus/accent conflict, elision.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetronVector(pub [f64; 9]);

impl MetronVector {
    pub const ONSET: usize = 0;
    pub const NUCLEUS: usize = 1;
    pub const CODA: usize = 2;
    pub const LONG: usize = 3;
    pub const SC: usize = 4;
    pub const WC: usize = 5;
    pub const DI: usize = 6;
    pub const CONFLICT: usize = 7;
    pub const ELISION: usize = 8;
}

fn vowel_scale(c: char) -> f64 {
    match c {
        'i' | 'ī' | 'y' | 'ȳ' => 0.0,
        'e' | 'ē' => 0.25,
        'a' | 'ā' => 0.5,
        'o' | 'ō' => 0.75,
        _ => 1.0,
    }
}

/// Place of articulation, labial 0 to velar 1.
fn place_scale(unit: &str) -> f64 {
    match unit {
        "p" | "b" | "m" | "w" => 0.0,
        "f" => 0.25,
        "t" | "d" | "n" | "s" | "l" | "r" | "z" => 0.5,
        "i" => 0.75,
        _ => 1.0,
    }
}

fn consonant_value(s: &str) -> f64 {
    let units = phonology::consonant_units(s);
    if units.is_empty() {
        return 0.0;
    }
    units.iter().map(|u| place_scale(u)).sum::<f64>() / units.len() as f64
}

fn nucleus_value(s: &str) -> f64 {
    let n = s.chars().count().max(1);
    s.chars().map(vowel_scale).sum::<f64>() / n as f64
}

/// Twelve half-foot vectors: each foot gives its longum, then its biceps
/// (one long syllable or two shorts merged).
pub fn metron_encode(line: &ScannedLine) -> [MetronVector; 12] {
    let mut out = [MetronVector::default(); 12];
    let syllables = &line.syllables;
    let metrical: Vec<usize> = (0..syllables.len()).filter(|&i| !syllables[i].elided).collect();
    let mut m = 0;
    for (f, foot) in line.feet.iter().enumerate() {
        let parts: Vec<&[usize]> = match foot {
            Foot::Dactyl => vec![&metrical[m..m + 1], &metrical[m + 1..m + 3]],
            Foot::Spondee | Foot::Trochee => vec![&metrical[m..m + 1], &metrical[m + 1..m + 2]],
        };
        m += foot.len();
        for (half, idxs) in parts.into_iter().enumerate() {
            let first = &syllables[idxs[0]];
            let last = &syllables[idxs[idxs.len() - 1]];
            let mut v = [0.0; 9];
            v[MetronVector::ONSET] = consonant_value(&first.syllable.onset);
            v[MetronVector::NUCLEUS] = idxs
                .iter()
                .map(|&i| nucleus_value(&syllables[i].syllable.nucleus))
                .sum::<f64>()
                / idxs.len() as f64;
            v[MetronVector::CODA] = consonant_value(&last.syllable.coda);
            v[MetronVector::LONG] = if idxs.len() == 1 && syllables[idxs[0]].long { 1.0 } else { 0.0 };
            for &i in idxs {
                let s = &syllables[i];
                let slot = match s.pause.code() {
                    Some("SC") => Some(MetronVector::SC),
                    Some("WC") => Some(MetronVector::WC),
                    Some("DI") => Some(MetronVector::DI),
                    _ => None,
                };
                if let Some(k) = slot {
                    v[k] = 1.0;
                }
                if s.conflict() {
                    v[MetronVector::CONFLICT] = 1.0;
                }
                if i > 0 && syllables[i - 1].elided {
                    v[MetronVector::ELISION] = 1.0;
                }
            }
            out[2 * f + half] = MetronVector(v);
        }
    }
    out
}

/// Tokenize a raw line straight to its metron encoding.
pub fn metron_encode_text(text: &str, opts: &ScanOptions) -> Result<[MetronVector; 12]> {
    let phon = phonology::transcribe(text)?;
    let words = phonology::syllabify(&phon, opts.muta_cum_liquida)?;
    Ok(metron_encode(&scansion::scan_line(&words, opts)?))
}

/// Default scan options with the given muta-cum-liquida treatment.
pub fn scan_options(spondeiazon: bool, mcl: MutaCumLiquida) -> ScanOptions {
    ScanOptions {
        spondeiazon,
        muta_cum_liquida: mcl,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN_LINE: &str = "ek+A+L+S ke+WC li+S kan+A+L+SC tre+S pi dum+A+L+SC la ti tan+A+L+S tem+L+DI ru+A+L+S pe+WC ka wa+A+L+S ta+L EOL";

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn golden_token_stream() {
        let t = tokenize_line("Ecce Lichan trepidum latitantem rupe cauata", &ScanOptions::default()).unwrap();
        assert!(t.scanned);
        assert_eq!(line_text(&t.tokens), GOLDEN_LINE);
    }

    #[test]
    fn bare_token_has_no_flags() {
        let t = tokenize_line("Ecce Lichan trepidum latitantem rupe cauata", &ScanOptions::default()).unwrap();
        assert_eq!(t.tokens[5], "pi");
        assert_eq!(t.tokens[0], "ek+A+L+S");
    }

    #[test]
    fn unscannable_line_falls_back_to_bare_syllables() {
        let t = tokenize_line("arma uirumque", &ScanOptions::default()).unwrap();
        assert!(!t.scanned);
        assert_eq!(t.tokens, ["ar", "ma", "wi", "rum", "kwe"]);
    }

    #[test]
    fn lexicon_single_repeated_token() {
        let lex = Lexicon::build(["ek+A"; 5]).unwrap();
        assert_eq!(lex.size(), 3);
        assert_eq!(lex.id("ek+A"), 2);
        assert_eq!(lex.token(0), Some(PAD));
        assert_eq!(lex.token(1), Some(UNK));
    }

    #[test]
    fn lexicon_tie_break_is_lexicographic() {
        let lex = Lexicon::build(["zo", "ab", "zo", "ab", "mi", "mi", "mi"]).unwrap();
        assert_eq!(lex.tokens(), [PAD, UNK, "mi", "ab", "zo"]);
        assert_eq!(lex.frequency(2), 3);
    }

    #[test]
    fn lexicon_rejects_empty_stream() {
        assert!(matches!(Lexicon::build(std::iter::empty::<&str>()), Err(Error::EmptyStream)));
    }

    #[test]
    fn lexicon_tsv_round_trip() {
        let lex = Lexicon::build(toks(GOLDEN_LINE).iter().map(String::as_str)).unwrap();
        let back = Lexicon::from_tsv(&lex.to_tsv()).unwrap();
        assert_eq!(lex, back);
        assert_eq!(lex.fingerprint(), back.fingerprint());
        assert!(Lexicon::from_tsv("0\t<pad>\t0\n2\tx\t1\n").is_err());
    }

    #[test]
    fn encode_golden_row() {
        let tokens = parse_line(GOLDEN_LINE);
        let lex = Lexicon::build(toks(GOLDEN_LINE).iter().map(String::as_str)).unwrap();
        let s = encode_sample(std::slice::from_ref(&tokens), 0, 1, &lex).unwrap();
        assert_eq!(tokens.len(), 16);
        let row = s.row(0);
        assert!(row[..16].iter().all(|&id| id > UNK_ID));
        assert!(row[16..].iter().all(|&id| id == PAD_ID));
        assert_eq!(s.sequence.len(), 17);
        assert_eq!(*s.sequence.last().unwrap(), lex.eol_id());
    }

    #[test]
    fn unseen_token_maps_to_unknown() {
        let lex = Lexicon::build(["a", "b"]).unwrap();
        let s = encode_sample(&[vec!["zzz".to_string()]], 0, 1, &lex).unwrap();
        assert_eq!(s.grid[0], UNK_ID);
    }

    #[test]
    fn empty_and_overlong_rows_rejected() {
        let lex = Lexicon::build(["a"]).unwrap();
        assert!(matches!(encode_sample(&[vec![]], 0, 1, &lex), Err(Error::EmptyLine(0))));
        let long = vec!["a".to_string(); 21];
        assert!(matches!(
            encode_sample(&[long], 0, 1, &lex),
            Err(Error::LineTooLong { len: 21, .. })
        ));
    }

    #[test]
    fn sample_container_round_trip() {
        let lex = Lexicon::build(toks(GOLDEN_LINE).iter().map(String::as_str)).unwrap();
        let lines = vec![parse_line(GOLDEN_LINE); 3];
        let s = encode_sample(&lines, 2, 40, &lex).unwrap();
        let mut buf = Vec::new();
        write_samples(&mut buf, &[s.clone(), s.clone()], lex.eol_id()).unwrap();
        assert_eq!(&buf[..8], b"CRMNSAMP");
        let (back, eol) = read_samples(buf.as_slice()).unwrap();
        assert_eq!(eol, lex.eol_id());
        assert_eq!(back, vec![s.clone(), s]);
        assert!(read_samples(&b"NOTMAGIC"[..]).is_err());
        assert!(read_samples(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn ablation_projections() {
        assert_eq!(ablate("kan+A+L+SC", Ablation::MetreOnly), "+A+L+SC");
        assert_eq!(ablate("kan+A+L+SC", Ablation::SoundOnly), "kan");
        assert_eq!(ablate("kan+A+L+SC", Ablation::Full), "kan+A+L+SC");
        assert_eq!(ablate("pi", Ablation::MetreOnly), NULL_TOKEN);
        assert_eq!(ablate("ek+A+L+S", Ablation::MetreOnly), "+A+L+S");
        assert_eq!(ablate(EOL, Ablation::SoundOnly), EOL);
    }

    #[test]
    fn metrons_for_golden_line() {
        let v = metron_encode_text("Ecce Lichan trepidum latitantem rupe cauata", &ScanOptions::default()).unwrap();
        assert_eq!(v.len(), 12);
        // foot 4 is a spondee (tan tem): both metrons long
        assert_eq!(v[6].0[MetronVector::LONG], 1.0);
        assert_eq!(v[7].0[MetronVector::LONG], 1.0);
        // tem carries the diaeresis
        assert_eq!(v[7].0[MetronVector::DI], 1.0);
        // dactylic biceps of foot 1 (ke li) is not long and carries the WC of ke
        assert_eq!(v[1].0[MetronVector::LONG], 0.0);
        assert_eq!(v[1].0[MetronVector::WC], 1.0);
        // ek: onset empty, nucleus e, coda velar k
        assert_eq!(v[0].0[MetronVector::NUCLEUS], 0.25);
        assert_eq!(v[0].0[MetronVector::CODA], 1.0);
        // biceps nucleus is the mean of e and i
        assert_eq!(v[1].0[MetronVector::NUCLEUS], 0.125);
    }
}

//! Trained syllable embeddings: export, 2-D PCA projection, and per-flag-class
//! clustering statistics with kernel density grids.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{split_token, Lexicon, EOL, NULL_TOKEN, PAD, UNK};
use crate::error::{Error, Result};
use crate::models::{LayerSpec, Network};
use crate::phonology::is_vowel;

/// Embedding table with one row per lexicon token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub tokens: Vec<String>,
    pub dim: usize,
    /// Row-major `tokens.len() × dim`.
    pub values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn rows(&self) -> usize {
        self.tokens.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// One line per token: the token, then its coordinates, tab-separated.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            out.push_str(tok);
            for v in self.row(i) {
                let _ = write!(out, "\t{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<EmbeddingMatrix> {
        let mut tokens = Vec::new();
        let mut values = Vec::new();
        let mut dim = None;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let mut fields = line.split('\t');
            let tok = fields.next().unwrap_or_default();
            let row = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format("embedding tsv", format!("line {}: {e}", n + 1)))?;
            if *dim.get_or_insert(row.len()) != row.len() {
                return Err(Error::format("embedding tsv", format!("line {}: ragged row", n + 1)));
            }
            tokens.push(tok.to_string());
            values.extend(row);
        }
        Ok(EmbeddingMatrix {
            tokens,
            dim: dim.unwrap_or(0),
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::write(path, e))
    }

    pub fn load(path: &Path) -> Result<EmbeddingMatrix> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        EmbeddingMatrix::from_tsv(&text)
    }
}

/// The embedding table of `net`, labelled with the tokens of `lexicon`.
pub fn export_embeddings(net: &Network, lexicon: &Lexicon) -> Result<EmbeddingMatrix> {
    if !matches!(net.spec().layers.first(), Some(LayerSpec::Embedding { .. })) {
        return Err(Error::NoEmbedding);
    }
    net.check_lexicon(lexicon.fingerprint())?;
    let table = &net.params()[0].param.value;
    let &[rows, dim] = table.shape() else {
        return Err(Error::NoEmbedding);
    };
    if rows != lexicon.size() {
        return Err(Error::Shape(format!("{rows} embedding rows for {} tokens", lexicon.size())));
    }
    Ok(EmbeddingMatrix {
        tokens: lexicon.tokens().to_vec(),
        dim,
        values: table.data().to_vec(),
    })
}

/// Top-two principal components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub method: String,
    /// `V × 2`.
    pub coords: Vec<[f64; 2]>,
    pub mean: Vec<f64>,
    /// Unit-norm, mutually orthogonal.
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
    pub explained_ratio: [f64; 2],
}

/// Mean-centred PCA onto two axes. Each axis is signed so that its
/// largest-magnitude entry is positive.
pub fn project_2d(m: &EmbeddingMatrix) -> Result<Projection> {
    let (n, d) = (m.rows(), m.dim);
    if n < 3 || d < 2 {
        return Err(Error::Degenerate);
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (a, v) in mean.iter_mut().zip(m.row(i)) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| m.values[i * d + j] - mean[j]);
    let cov = centred.transpose() * &centred / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if l0 <= 0.0 || l1 <= l0 * 1e-12 {
        return Err(Error::Degenerate);
    }
    let axis = |k: usize| -> Vec<f64> {
        let col: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
        let peak = col.iter().copied().fold(0.0, |p: f64, v| if v.abs() > p.abs() { v } else { p });
        if peak < 0.0 {
            col.iter().map(|v| -v).collect()
        } else {
            col
        }
    };
    let components = [axis(0), axis(1)];
    let coords = (0..n)
        .map(|i| {
            let row = centred.row(i);
            let dot = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [dot(&components[0]), dot(&components[1])]
        })
        .collect();
    Ok(Projection {
        method: "pca".into(),
        coords,
        mean,
        components,
        explained_variance: [l0, l1],
        explained_ratio: [l0 / total, l1 / total],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlagClassName {
    Long,
    Accent,
    Open,
    SC,
    WC,
    DI,
}

impl FlagClassName {
    pub const ALL: [FlagClassName; 6] = [
        FlagClassName::Long,
        FlagClassName::Accent,
        FlagClassName::Open,
        FlagClassName::SC,
        FlagClassName::WC,
        FlagClassName::DI,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FlagClassName::Long => "Long",
            FlagClassName::Accent => "Accent",
            FlagClassName::Open => "Open",
            FlagClassName::SC => "SC",
            FlagClassName::WC => "WC",
            FlagClassName::DI => "DI",
        }
    }

    /// Whether a syllable token belongs to this class.
    pub fn contains(self, token: &str) -> bool {
        let (body, flags) = split_token(token);
        let has = |f: &str| flags.split('+').any(|x| x == f);
        match self {
            FlagClassName::Long => has("L"),
            FlagClassName::Accent => has("S"),
            FlagClassName::Open => body.chars().last().is_some_and(is_vowel),
            FlagClassName::SC => has("SC"),
            FlagClassName::WC => has("WC"),
            FlagClassName::DI => has("DI"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagClass {
    pub name: String,
    pub members: Vec<u32>,
}

fn is_syllable_token(tok: &str) -> bool {
    ![PAD, UNK, EOL, NULL_TOKEN].contains(&tok)
}

/// The six flag classes over the syllable tokens of `lexicon`.
pub fn flag_classes(lexicon: &Lexicon) -> Vec<FlagClass> {
    FlagClassName::ALL
        .iter()
        .map(|&c| FlagClass {
            name: c.name().to_string(),
            members: lexicon
                .tokens()
                .iter()
                .enumerate()
                .filter(|(_, t)| is_syllable_token(t) && c.contains(t))
                .map(|(i, _)| i as u32)
                .collect(),
        })
        .collect()
}

/// Ids of every syllable token, the population random subsets are drawn from.
pub fn syllable_ids(lexicon: &Lexicon) -> Vec<u32> {
    (0..lexicon.size() as u32)
        .filter(|&i| lexicon.token(i).is_some_and(is_syllable_token))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    /// Random subsets per class for the null distribution.
    pub subsets: usize,
    pub grid: usize,
    pub seed: u64,
    /// Classes smaller than this are flagged as unreliable.
    pub small_class: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            subsets: 1000,
            grid: 200,
            seed: 0,
            small_class: 50,
        }
    }
}

pub const MIN_CLASS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStat {
    pub class: String,
    pub members: usize,
    pub mean_distance: f64,
    pub null_mean: f64,
    pub null_std: f64,
    /// Negative when the class is tighter than random subsets of its size.
    pub z: f64,
    pub small_sample: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub class: String,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub bandwidth: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `ny` rows of `nx` cell-centre densities, y ascending.
    #[serde(skip)]
    pub values: Vec<f64>,
    /// Riemann sum of the density over the grid.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub method: String,
    pub stats: Vec<ClusterStat>,
    pub densities: Vec<DensityGrid>,
}

fn mean_pairwise(coords: &[[f64; 2]], ids: &[usize]) -> f64 {
    let mut sum = 0.0;
    for (k, &a) in ids.iter().enumerate() {
        let p = coords[a];
        for &b in &ids[k + 1..] {
            let q = coords[b];
            sum += (p[0] - q[0]).hypot(p[1] - q[1]);
        }
    }
    let m = ids.len() as f64;
    sum / (m * (m - 1.0) / 2.0)
}

/// z-score of the mean intra-class distance against `subsets` random
/// same-size subsets of `population`. `class` and `small_sample` are left
/// for the caller.
pub fn clustering_z(coords: &[[f64; 2]], members: &[usize], population: &[usize], subsets: usize, seed: u64) -> ClusterStat {
    let m = members.len();
    let observed = mean_pairwise(coords, members);
    let null: Vec<f64> = (0..subsets)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let pick: Vec<usize> = index::sample(&mut rng, population.len(), m).iter().map(|i| population[i]).collect();
            mean_pairwise(coords, &pick)
        })
        .collect();
    let mean = null.iter().sum::<f64>() / null.len() as f64;
    let var = null.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (null.len() as f64 - 1.0).max(1.0);
    let std = var.sqrt();
    // a class equal to the whole population has a point-mass null
    let z = if std > 1e-12 * mean.abs() { (observed - mean) / std } else { 0.0 };
    ClusterStat {
        class: String::new(),
        members: m,
        mean_distance: observed,
        null_mean: mean,
        null_std: std,
        z,
        small_sample: false,
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Gaussian product-kernel density with Scott's-rule bandwidths on an
/// `n × n` grid spanning the 1st–99th percentile box padded by three
/// bandwidths per side.
pub fn kde_grid(class: &str, points: &[[f64; 2]], n: usize) -> Result<DensityGrid> {
    let m = points.len();
    if m < 2 {
        return Err(Error::ClassTooSmall {
            name: class.to_string(),
            members: m,
        });
    }
    let scott = (m as f64).powf(-1.0 / 6.0);
    let mut bandwidth = [0.0; 2];
    let mut ranges = [[0.0; 2]; 2];
    for axis in 0..2 {
        let mut v: Vec<f64> = points.iter().map(|p| p[axis]).collect();
        let mean = v.iter().sum::<f64>() / m as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
        if std <= 0.0 {
            return Err(Error::Degenerate);
        }
        bandwidth[axis] = std * scott;
        v.sort_by(f64::total_cmp);
        ranges[axis] = [
            percentile(&v, 0.01) - 3.0 * bandwidth[axis],
            percentile(&v, 0.99) + 3.0 * bandwidth[axis],
        ];
    }
    let step = [(ranges[0][1] - ranges[0][0]) / n as f64, (ranges[1][1] - ranges[1][0]) / n as f64];
    let norm = 1.0 / (2.0 * std::f64::consts::PI * bandwidth[0] * bandwidth[1] * m as f64);
    let values: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|cell| {
            let x = ranges[0][0] + (cell % n) as f64 * step[0] + step[0] / 2.0;
            let y = ranges[1][0] + (cell / n) as f64 * step[1] + step[1] / 2.0;
            norm * points
                .iter()
                .map(|p| {
                    let (dx, dy) = ((x - p[0]) / bandwidth[0], (y - p[1]) / bandwidth[1]);
                    (-0.5 * (dx * dx + dy * dy)).exp()
                })
                .sum::<f64>()
        })
        .collect();
    let mass = values.iter().sum::<f64>() * step[0] * step[1];
    Ok(DensityGrid {
        class: class.to_string(),
        x_range: ranges[0],
        y_range: ranges[1],
        bandwidth,
        nx: n,
        ny: n,
        values,
        mass,
    })
}

/// Clustering statistics and density grids for each class. Random subsets
/// are drawn from `population`.
pub fn class_density_report(
    coords: &[[f64; 2]],
    classes: &[FlagClass],
    population: &[u32],
    cfg: &DensityConfig,
) -> Result<DensityReport> {
    let check = |ids: &[u32]| -> Result<Vec<usize>> {
        ids.iter()
            .map(|&id| {
                if (id as usize) < coords.len() {
                    Ok(id as usize)
                } else {
                    Err(Error::IdOutOfRange { id, vocab: coords.len() })
                }
            })
            .collect()
    };
    let population = check(population)?;
    let mut stats = Vec::new();
    let mut densities = Vec::new();
    for (k, class) in classes.iter().enumerate() {
        let members = check(&class.members)?;
        if members.len() < MIN_CLASS || members.len() > population.len() {
            return Err(Error::ClassTooSmall {
                name: class.name.clone(),
                members: members.len(),
            });
        }
        let stat = clustering_z(coords, &members, &population, cfg.subsets, cfg.seed.wrapping_add(k as u64));
        let small_sample = stat.members < cfg.small_class;
        if small_sample {
            log::warn!("class {} has {} members; its density estimate is unreliable", class.name, stat.members);
        }
        stats.push(ClusterStat {
            class: class.name.clone(),
            small_sample,
            ..stat
        });
        let points: Vec<[f64; 2]> = members.iter().map(|&i| coords[i]).collect();
        densities.push(kde_grid(&class.name, &points, cfg.grid)?);
    }
    Ok(DensityReport {
        method: "pca".into(),
        stats,
        densities,
    })
}

/// Binary greyscale image of a density grid, darkest at the peak, y up.
pub fn density_pgm(grid: &DensityGrid) -> Vec<u8> {
    let peak = grid.values.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P5\n{} {}\n255\n", grid.nx, grid.ny).into_bytes();
    for row in grid.values.chunks(grid.nx).rev() {
        out.extend(row.iter().map(|&v| {
            let t = if peak > 0.0 { v / peak } else { 0.0 };
            255 - (t * 255.0).round() as u8
        }));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_membership() {
        assert!(FlagClassName::Open.contains("ta+L"));
        assert!(!FlagClassName::Open.contains("kan+A+L+SC"));
        assert!(FlagClassName::SC.contains("kan+A+L+SC"));
        assert!(!FlagClassName::Accent.contains("kan+A+L+SC"));
        assert!(FlagClassName::Accent.contains("li+S"));
        assert!(!FlagClassName::Open.contains("+L"));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.0);
        assert!((percentile(&v, 0.01) - 0.04).abs() < 1e-12);
    }

    #[test]
    fn whole_population_scores_zero() {
        let coords: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, (i * i % 7) as f64]).collect();
        let all: Vec<usize> = (0..20).collect();
        let s = clustering_z(&coords, &all, &all, 50, 1);
        assert_eq!(s.z, 0.0);
        assert!(s.null_std < 1e-12);
    }
}

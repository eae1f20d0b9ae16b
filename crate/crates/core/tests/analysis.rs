use carmen::analysis::*;
use carmen::encoding::{EncodedSample, Lexicon, PAD_ID};
use carmen::models::*;
use carmen::Error;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn matrix(rows: usize, dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> EmbeddingMatrix {
    EmbeddingMatrix {
        tokens: (0..rows).map(|i| format!("t{i}")).collect(),
        dim,
        values: (0..rows * dim).map(|k| f(k / dim, k % dim)).collect(),
    }
}

/// Cyclic Jacobi rotations; returns eigenvalues and column eigenvectors.
// rotations touch rows p and q together, which iterators cannot borrow
#[allow(clippy::needless_range_loop)]
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

fn covariance(m: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    let (n, d) = (m.rows(), m.dim);
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| m.row(i)[j]).sum::<f64>() / n as f64).collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| (0..n).map(|i| (m.row(i)[a] - mean[a]) * (m.row(i)[b] - mean[b])).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect()
}

/// Projector onto the span of two orthonormal vectors.
fn projector(u: &[f64], w: &[f64]) -> Vec<f64> {
    let d = u.len();
    (0..d * d).map(|k| u[k / d] * u[k % d] + w[k / d] * w[k % d]).collect()
}

#[test]
fn pca_agrees_with_jacobi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..5 {
        // anisotropic scales keep the top two eigenvalues well separated
        let m = matrix(200, 32, |_, j| gaussian(&mut rng) * (1.0 + 3.0 / (1.0 + j as f64)) * (1.0 + trial as f64));
        let proj = project_2d(&m).unwrap();
        let (vals, vecs) = jacobi_eigen(covariance(&m));
        let mut order: Vec<usize> = (0..32).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        let col = |k: usize| -> Vec<f64> { vecs.iter().map(|r| r[order[k]]).collect() };
        let oracle = projector(&col(0), &col(1));
        let ours = projector(&proj.components[0], &proj.components[1]);
        let diff = oracle.iter().zip(&ours).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(diff < 1e-6, "subspace distance {diff:e}");
        assert!((proj.explained_variance[0] - vals[order[0]]).abs() < 1e-9 * vals[order[0]]);
        assert!((proj.explained_variance[1] - vals[order[1]]).abs() < 1e-9 * vals[order[0]]);
    }
}

#[test]
fn components_are_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = matrix(50, 32, |_, _| gaussian(&mut rng));
    let p = project_2d(&m).unwrap();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    assert!((dot(&p.components[0], &p.components[0]) - 1.0).abs() < 1e-9);
    assert!((dot(&p.components[1], &p.components[1]) - 1.0).abs() < 1e-9);
    assert!(dot(&p.components[0], &p.components[1]).abs() < 1e-9);
    assert_eq!(p.coords.len(), 50);
    assert_eq!(p.method, "pca");
}

#[test]
fn planar_points_reconstruct_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u: Vec<f64> = (0..32).map(|_| gaussian(&mut rng)).collect();
    let w: Vec<f64> = (0..32).map(|_| gaussian(&mut rng)).collect();
    let offset: Vec<f64> = (0..32).map(|_| gaussian(&mut rng)).collect();
    let coeffs: Vec<(f64, f64)> = (0..40).map(|_| (gaussian(&mut rng), gaussian(&mut rng))).collect();
    let m = matrix(40, 32, |i, j| offset[j] + coeffs[i].0 * u[j] + coeffs[i].1 * w[j]);
    let p = project_2d(&m).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..40 {
        for j in 0..32 {
            let rebuilt = p.mean[j] + p.coords[i][0] * p.components[0][j] + p.coords[i][1] * p.components[1][j];
            worst = worst.max((rebuilt - m.row(i)[j]).abs());
        }
    }
    assert!(worst < 1e-9, "reconstruction error {worst:e}");
    assert!((p.explained_ratio[0] + p.explained_ratio[1] - 1.0).abs() < 1e-9);
}

#[test]
fn rank_one_matrix_is_degenerate() {
    let m = matrix(10, 4, |i, j| (i as f64) * (j as f64 + 1.0));
    assert!(matches!(project_2d(&m), Err(Error::Degenerate)));
    assert!(matches!(project_2d(&matrix(2, 4, |i, j| (i + j) as f64)), Err(Error::Degenerate)));
}

#[test]
fn density_grids_integrate_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [20, 200, 2000] {
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [gaussian(&mut rng) * 3.0, gaussian(&mut rng) + 0.5]).collect();
        let g = kde_grid("c", &pts, 200).unwrap();
        assert!((g.mass - 1.0).abs() < 0.01, "n={n}: mass {}", g.mass);
        assert_eq!(g.values.len(), 200 * 200);
    }
}

fn uniform_coords(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
}

#[test]
fn planted_cluster_scores_strongly_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut coords = uniform_coords(400, &mut rng);
    for p in coords.iter_mut().take(30) {
        *p = [0.3 + 0.02 * gaussian(&mut rng), -0.2 + 0.02 * gaussian(&mut rng)];
    }
    let members: Vec<usize> = (0..30).collect();
    let all: Vec<usize> = (0..400).collect();
    let stat = clustering_z(&coords, &members, &all, 1000, 1);
    assert!(stat.z < -10.0, "z = {}", stat.z);
}

#[test]
fn random_classes_stay_within_three_sigma() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let coords = uniform_coords(300, &mut rng);
    let all: Vec<usize> = (0..300).collect();
    let trials = 100;
    let within = (0..trials)
        .filter(|&t| {
            let members = index::sample(&mut rng, 300, 25).into_vec();
            clustering_z(&coords, &members, &all, 1000, t).z.abs() < 3.0
        })
        .count();
    assert!(within >= 95, "{within}/{trials}");
}

#[test]
fn small_classes_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let coords = uniform_coords(50, &mut rng);
    let population: Vec<u32> = (0..50).collect();
    let tiny = FlagClass {
        name: "DI".into(),
        members: vec![1, 2, 3, 4],
    };
    let err = class_density_report(&coords, &[tiny], &population, &DensityConfig::default());
    assert!(matches!(err, Err(Error::ClassTooSmall { members: 4, .. })));
    let bad = FlagClass {
        name: "SC".into(),
        members: vec![1, 2, 3, 4, 99],
    };
    assert!(matches!(
        class_density_report(&coords, &[bad], &population, &DensityConfig::default()),
        Err(Error::IdOutOfRange { id: 99, .. })
    ));
}

#[test]
fn report_flags_small_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let coords = uniform_coords(200, &mut rng);
    let population: Vec<u32> = (0..200).collect();
    let classes = [
        FlagClass {
            name: "Long".into(),
            members: (0..120).collect(),
        },
        FlagClass {
            name: "WC".into(),
            members: (150..160).collect(),
        },
    ];
    let cfg = DensityConfig {
        grid: 50,
        ..DensityConfig::default()
    };
    let report = class_density_report(&coords, &classes, &population, &cfg).unwrap();
    assert_eq!(report.method, "pca");
    assert!(!report.stats[0].small_sample);
    assert!(report.stats[1].small_sample);
    assert_eq!(report.densities[1].values.len(), 2500);
    let json = serde_json::to_string(&report).unwrap();
    assert!(json.contains("\"z\""));
}

#[test]
fn flag_classes_follow_token_flags() {
    let stream = ["ek+A+L+S", "ke+WC", "li+S", "kan+A+L+SC", "pi", "dum+A+L+SC", "EOL", "tem+L+DI"];
    let lex = Lexicon::build(stream.iter().copied()).unwrap();
    let classes = flag_classes(&lex);
    let named = |name: &str| -> Vec<&str> {
        let c = classes.iter().find(|c| c.name == name).unwrap();
        let mut v: Vec<&str> = c.members.iter().map(|&i| lex.token(i).unwrap()).collect();
        v.sort_unstable();
        v
    };
    assert_eq!(named("Long"), ["dum+A+L+SC", "ek+A+L+S", "kan+A+L+SC", "tem+L+DI"]);
    assert_eq!(named("Accent"), ["ek+A+L+S", "li+S"]);
    assert_eq!(named("Open"), ["ke+WC", "li+S", "pi"]);
    assert_eq!(named("SC"), ["dum+A+L+SC", "kan+A+L+SC"]);
    assert_eq!(named("WC"), ["ke+WC"]);
    assert_eq!(named("DI"), ["tem+L+DI"]);
    assert_eq!(syllable_ids(&lex).len(), 7);
}

fn toy_lexicon() -> Lexicon {
    let tokens: Vec<String> = (0..30).map(|i| format!("s{i}+L")).collect();
    Lexicon::build(tokens.iter().map(String::as_str)).unwrap()
}

#[test]
fn export_round_trips_through_tsv() {
    let lex = toy_lexicon();
    let net = Network::new(build_cnn(lex.size(), 2).unwrap(), lex.fingerprint(), 3).unwrap();
    let m = export_embeddings(&net, &lex).unwrap();
    assert_eq!((m.rows(), m.dim), (lex.size(), 32));
    assert_eq!(EmbeddingMatrix::from_tsv(&m.to_tsv()).unwrap(), m);
    let other = Network::new(build_cnn(lex.size(), 2).unwrap(), 1, 3).unwrap();
    assert!(matches!(export_embeddings(&other, &lex), Err(Error::LexiconMismatch { .. })));
}

#[test]
fn frozen_embeddings_export_identically_after_training() {
    let lex = toy_lexicon();
    let mut net = Network::new(build_cnn(lex.size(), 2).unwrap(), lex.fingerprint(), 3).unwrap();
    net.param_mut("embedding/embeddings").unwrap().trainable = false;
    let before = export_embeddings(&net, &lex).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data: Vec<EncodedSample> = (0..6)
        .map(|i| {
            let grid: Vec<u32> = (0..64 * 20).map(|k| if k % 20 < 4 { rng.random_range(3..lex.size() as u32) } else { PAD_ID }).collect();
            EncodedSample::from_grid(64, 20, grid, i % 2, 1, lex.eol_id())
        })
        .collect();
    let cfg = TrainConfig {
        epochs: 2,
        patience: 0,
        ..TrainConfig::default()
    };
    train(&mut net, &data, &[], &cfg).unwrap();
    assert_eq!(export_embeddings(&net, &lex).unwrap(), before);
}

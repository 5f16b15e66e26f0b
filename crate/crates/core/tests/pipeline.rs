use motionsync::data::{BlockDims, VideoBlock, WhiteningTransform};
use motionsync::linalg::RowMatrix;
use motionsync::pipeline::*;
use motionsync::rng;
use motionsync::skmeans::SkMeansModel;
use motionsync::{FeatureEncoder, Result};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// Passes its input through unchanged.
struct Identity(usize);

impl FeatureEncoder for Identity {
    fn input_dim(&self) -> usize {
        self.0
    }
    fn units(&self) -> usize {
        self.0
    }
    fn encode_into(&self, input: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(input);
        Ok(())
    }
}

/// Whitening that keeps the first `d` pixels untouched.
fn selector(n: usize, d: usize) -> WhiteningTransform {
    let forward = RowMatrix::from_fn(d, n, |i, j| f64::from(u8::from(i == j)));
    let inverse = RowMatrix::from_fn(n, d, |i, j| f64::from(u8::from(i == j)));
    WhiteningTransform::from_parts(vec![0.0; n], forward, inverse, 1e-8, vec![1.0; n]).unwrap()
}

fn small_cfg() -> DescriptorConfig {
    DescriptorConfig {
        super_dims: BlockDims::new(4, 6, 6),
        sub_dims: BlockDims::new(2, 4, 4),
        sub_stride: 2,
        descriptor_pca_dims: 4,
        vocab_size: 3,
        unit_norm_inputs: false,
        ..Default::default()
    }
}

fn ramp(dims: BlockDims) -> VideoBlock {
    VideoBlock::from_fn(dims, |t, r, c| (t * 10_000 + r * 100 + c) as f32).unwrap()
}

#[test]
fn default_geometry_counts() {
    let cfg = DescriptorConfig::default();
    assert_eq!(cfg.sub_blocks_per_super(), 8);
    assert_eq!(cfg.super_strides(), BlockDims::new(7, 10, 10));
    let n = cfg.sub_dims.len();
    let w = selector(n, 300);
    let enc = Identity(300);
    let ex = DescriptorExtractor::new(&enc, &w, cfg).unwrap();
    assert_eq!(ex.raw_len(), 2400);
    let zero = VideoBlock::zeros(BlockDims::new(14, 20, 20)).unwrap();
    assert_eq!(ex.whitened_subblocks(&zero).unwrap().rows(), 8);
}

#[test]
fn super_blocks_along_time() {
    let cfg = DescriptorConfig::default();
    let video = ramp(BlockDims::new(28, 20, 20));
    let supers = dense_superblocks(&video, &cfg).unwrap();
    let starts: Vec<f32> = supers.iter().map(|s| s.get(0, 0, 0)).collect();
    assert_eq!(starts, vec![0.0, 70_000.0, 140_000.0]);
    assert_eq!(dense_superblocks(&ramp(BlockDims::new(14, 20, 20)), &cfg).unwrap().len(), 1);
    assert!(dense_superblocks(&ramp(BlockDims::new(13, 20, 20)), &cfg).is_err());
    let tiled = DescriptorConfig { overlap_fraction: 0.0, ..cfg };
    assert_eq!(tiled.super_strides(), BlockDims::new(14, 20, 20));
    assert_eq!(dense_superblocks(&ramp(BlockDims::new(28, 40, 20)), &tiled).unwrap().len(), 4);
}

#[test]
fn raw_descriptor_concatenates_sub_blocks_in_crop_order() {
    let cfg = small_cfg();
    let n = cfg.sub_dims.len();
    let w = selector(n, n);
    let enc = Identity(n);
    let ex = DescriptorExtractor::new(&enc, &w, cfg.clone()).unwrap();
    let block = ramp(cfg.super_dims);
    let mut expect = Vec::new();
    // Offsets: t ∈ {0, 2}, rows and cols ∈ {0, 2}, time slowest.
    for t0 in [0, 2] {
        for r0 in [0, 2] {
            for c0 in [0, 2] {
                for t in 0..2 {
                    for r in 0..4 {
                        for c in 0..4 {
                            expect.push(f64::from(block.get(t0 + t, r0 + r, c0 + c)));
                        }
                    }
                }
            }
        }
    }
    assert_eq!(ex.raw_descriptor(&block).unwrap(), expect);
    assert!(matches!(ex.descriptor(&block), Err(motionsync::Error::NotFitted(_))));
}

#[test]
fn zero_block_gives_constant_half_descriptor() {
    let mut cfg = small_cfg();
    cfg.unit_norm_inputs = true;
    let n = cfg.sub_dims.len();
    let w = selector(n, 6);
    let mut r = rng::seeded(1);
    let bank = RowMatrix::from_fn(5, 6, |_, _| r.random_range(-1.0..1.0));
    let model = SkMeansModel::from_sequence(bank, cfg.sub_dims).unwrap();
    let ex = DescriptorExtractor::new(&model, &w, cfg.clone()).unwrap();
    let zero = VideoBlock::zeros(cfg.super_dims).unwrap();
    assert_eq!(ex.raw_descriptor(&zero).unwrap(), vec![0.5; 40]);

    let raws = RowMatrix::from_fn(30, 40, |_, _| r.random_range(0.0..1.0));
    let pca = fit_descriptor_pca(&raws, 4).unwrap();
    let ex = ex.with_pca(pca.clone()).unwrap();
    assert_eq!(ex.descriptor(&zero).unwrap(), pca.project(&[0.5; 40]).unwrap());
}

#[test]
fn single_super_block_gives_one_hot_histogram() {
    let cfg = small_cfg();
    let n = cfg.sub_dims.len();
    let w = selector(n, 8);
    let enc = Identity(8);
    let mut r = rng::seeded(2);
    let raws = RowMatrix::from_fn(20, 64, |_, _| r.random_range(0.0..1.0));
    let ex = DescriptorExtractor::new(&enc, &w, cfg.clone())
        .unwrap()
        .with_pca(fit_descriptor_pca(&raws, 4).unwrap())
        .unwrap();
    let descs = RowMatrix::from_fn(10, 4, |_, _| r.random_range(-1.0..1.0));
    let book = build_vocabulary(&descs, 3, 1, 20).unwrap();
    let h = ex.histogram(&ramp(cfg.super_dims), &book).unwrap();
    let mut sorted = h.weights().to_vec();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(sorted, vec![0.0, 0.0, 1.0]);

    let video = VideoBlock::from_fn(BlockDims::new(8, 12, 12), |_, _, _| r.random_range(0.0..1.0)).unwrap();
    let h = ex.histogram(&video, &book).unwrap();
    assert!((h.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

fn sse(points: &[[f64; 2]], assign: &[usize], k: usize) -> (f64, Vec<[f64; 2]>) {
    let mut means = vec![[0.0; 2]; k];
    let mut counts = vec![0.0; k];
    for (p, &a) in points.iter().zip(assign) {
        means[a][0] += p[0];
        means[a][1] += p[1];
        counts[a] += 1.0;
    }
    for (m, c) in means.iter_mut().zip(&counts) {
        m[0] /= c;
        m[1] /= c;
    }
    let e = points
        .iter()
        .zip(assign)
        .map(|(p, &a)| (p[0] - means[a][0]).powi(2) + (p[1] - means[a][1]).powi(2))
        .sum();
    (e, means)
}

#[test]
fn two_clusters_match_brute_force_partition() {
    let mut r = rng::seeded(3);
    for _ in 0..20 {
        let pts: Vec<[f64; 2]> = (0..10)
            .map(|i| {
                let c = if i < 5 { -5.0 } else { 5.0 };
                [c + r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]
            })
            .collect();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << 10) - 1 {
            let assign: Vec<usize> = (0..10).map(|i| ((mask >> i) & 1) as usize).collect();
            let (e, m) = sse(&pts, &assign, 2);
            if e < best.0 {
                best = (e, m);
            }
        }
        let data = RowMatrix::from_fn(10, 2, |i, j| pts[i][j]);
        let book = build_vocabulary(&data, 2, r.random(), 50).unwrap();
        let mut got: Vec<Vec<f64>> = book.centroids().iter_rows().map(<[f64]>::to_vec).collect();
        let mut want: Vec<Vec<f64>> = best.1.iter().map(|m| m.to_vec()).collect();
        got.sort_by(|a, b| a[0].total_cmp(&b[0]));
        want.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (g, w) in got.iter().zip(&want) {
            assert!((g[0] - w[0]).abs() < 1e-12 && (g[1] - w[1]).abs() < 1e-12);
        }
        assert!((book.objective().last().unwrap() - best.0).abs() < 1e-9);
    }
}

#[test]
fn lloyd_objective_never_increases() {
    let mut r = rng::seeded(4);
    for _ in 0..20 {
        let data = RowMatrix::from_fn(200, 5, |_, _| r.random_range(-1.0..1.0));
        let book = build_vocabulary(&data, 12, r.random(), 100).unwrap();
        for w in book.objective().windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", book.objective());
        }
    }
    let few = RowMatrix::zeros(3, 2);
    assert!(build_vocabulary(&few, 4, 0, 10).is_err());
}

#[test]
fn one_hot_hiddens_pool_onto_axes() {
    let h = RowMatrix::from_fn(40, 8, |i, j| f64::from(u8::from(i % 4 == j)));
    let book = pool_features(&h, 4, 5, 20).unwrap();
    let mut rows: Vec<Vec<f64>> = book.centroids().iter_rows().map(<[f64]>::to_vec).collect();
    rows.sort_by(|a, b| b.iter().zip(a).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    for (q, row) in rows.iter().enumerate() {
        let axis: Vec<f64> = (0..8).map(|j| f64::from(u8::from(j == q))).collect();
        assert_eq!(row, &axis);
    }
    let report = pooling_report(&book, &h, 6).unwrap();
    assert_eq!(report.len(), 4);
    for g in &report {
        assert_eq!(g.top_filters.len(), 6);
        assert_eq!(g.members, 10);
        let c = book.centroids().row(g.centroid);
        for pair in g.top_filters.windows(2) {
            assert!(c[pair[0]] >= c[pair[1]]);
        }
    }
}

#[test]
fn histograms_follow_codebook_permutations() {
    let cfg = small_cfg();
    let n = cfg.sub_dims.len();
    let w = selector(n, 8);
    let enc = Identity(8);
    let ex = DescriptorExtractor::new(&enc, &w, cfg).unwrap();
    let mut r = rng::seeded(6);
    let descs = RowMatrix::from_fn(50, 3, |_, _| r.random_range(-1.0..1.0));
    let book = build_vocabulary(&descs, 6, 2, 20).unwrap();
    let h = ex.histogram_of(&descs, &book).unwrap();
    let mut perm: Vec<usize> = (0..6).collect();
    perm.shuffle(&mut r);
    let permuted = RowMatrix::from_fn(6, 3, |q, j| book.centroids().get(perm[q], j));
    let hp = ex.histogram_of(&descs, &Codebook::new(permuted, 2).unwrap()).unwrap();
    for q in 0..6 {
        assert_eq!(hp.weights()[q], h.weights()[perm[q]]);
    }
}

#[test]
fn chi2_examples() {
    let a = Histogram::from_counts(&[1.0, 1.0, 0.0, 0.0]).unwrap();
    let b = Histogram::from_counts(&[0.0, 0.0, 3.0, 1.0]).unwrap();
    assert_eq!(chi2_distance(&a, &a).unwrap(), 0.0);
    assert_eq!(chi2_kernel(&a, &a, 0.3).unwrap(), 1.0);
    assert!((chi2_distance(&a, &b).unwrap() - 1.0).abs() < 1e-9);
    assert!(chi2_distance(&a, &Histogram::from_counts(&[1.0]).unwrap()).is_err());
    let e = Histogram::from_counts(&[0.0, 0.0]).unwrap();
    assert!(e.is_empty() && e.weights() == [0.0, 0.0]);
}

/// k-NN by sorting every distance and counting votes by hand.
fn knn_oracle(train: &[Histogram], labels: &[u32], test: &Histogram, k: usize) -> u32 {
    let mut d: Vec<(f64, usize)> = Vec::new();
    for (i, h) in train.iter().enumerate() {
        let mut s = 0.0;
        for (x, y) in h.weights().iter().zip(test.weights()) {
            s += (x - y) * (x - y) / (x + y + 1e-10);
        }
        d.push((s / 2.0, i));
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best: Option<(usize, f64, u32)> = None;
    for label in 0..3u32 {
        let hits: Vec<f64> = d[..k].iter().filter(|(_, i)| labels[*i] == label).map(|(v, _)| *v).collect();
        if hits.is_empty() {
            continue;
        }
        let mean = hits.iter().sum::<f64>() / hits.len() as f64;
        let better = match best {
            None => true,
            Some((n, m, _)) => hits.len() > n || (hits.len() == n && mean < m),
        };
        if better {
            best = Some((hits.len(), mean, label));
        }
    }
    best.unwrap().2
}

fn random_hist(k: usize, r: &mut impl Rng, bias: Option<usize>) -> Histogram {
    let mut c: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0)).collect();
    if let Some(b) = bias {
        c[b] += 2.0;
    }
    Histogram::from_counts(&c).unwrap()
}

#[test]
fn knn_matches_exhaustive_oracle() {
    let mut r = rng::seeded(7);
    for _ in 0..200 {
        let m = r.random_range(3..20);
        let labels: Vec<u32> = (0..m).map(|_| r.random_range(0..3)).collect();
        let train: Vec<Histogram> = labels.iter().map(|&l| random_hist(6, &mut r, Some(l as usize))).collect();
        let test = random_hist(6, &mut r, None);
        let k = r.random_range(1..=m.min(7));
        assert_eq!(knn_classify(&train, &labels, &test, k).unwrap(), knn_oracle(&train, &labels, &test, k));
    }
    assert!(knn_classify(&[], &[], &random_hist(3, &mut r, None), 1).is_err());
}

#[test]
fn evaluation_protocols() {
    let mut r = rng::seeded(8);
    let labels: Vec<u32> = (0..12).map(|i| i % 3).collect();
    let hists: Vec<Histogram> = labels.iter().map(|&l| random_hist(5, &mut r, Some(l as usize))).collect();
    let same = evaluate_split(&hists, &labels, &hists, &labels, 1).unwrap();
    assert_eq!(same.accuracy, 1.0);
    assert_eq!(same.confusion, vec![vec![4, 0, 0], vec![0, 4, 0], vec![0, 0, 4]]);
    let err = evaluate_split(&hists[..8], &[0, 1, 0, 1, 0, 1, 0, 1], &hists, &labels, 1).unwrap_err();
    assert!(err.to_string().contains("class 2"), "{err}");
    assert!(evaluate_loo(&hists, &labels, 3).unwrap().accuracy > 0.9);
}

#[test]
fn shuffled_labels_sit_at_chance() {
    let mut r = rng::seeded(9);
    let labels: Vec<u32> = (0..90).map(|i| i % 3).collect();
    let hists: Vec<Histogram> = labels.iter().map(|&l| random_hist(8, &mut r, Some(l as usize))).collect();
    let runs = 40;
    let mut total = 0.0;
    for _ in 0..runs {
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut r);
        total += evaluate_loo(&hists, &shuffled, 5).unwrap().accuracy;
    }
    let mean = total / runs as f64;
    // Binomial standard error of the pooled mean is about 0.008.
    assert!((mean - 1.0 / 3.0).abs() < 0.05, "{mean}");
}

#[test]
fn pca_checks() {
    let mut r = rng::seeded(10);
    let scales = [5.0, 3.0, 1.0, 0.5];
    let data = RowMatrix::from_fn(500, 4, |_, j| scales[j] * r.random_range(-1.0..1.0));
    let p = fit_descriptor_pca(&data, 3).unwrap();
    let v = p.variances();
    assert!(v[0] >= v[1] && v[1] >= v[2]);
    assert!(fit_descriptor_pca(&data.clone(), 5).is_err());
    let flat = RowMatrix::from_fn(50, 4, |i, j| if j < 2 { i as f64 * (j + 1) as f64 } else { 0.0 });
    assert!(matches!(fit_descriptor_pca(&flat, 2), Err(motionsync::Error::RankDeficient { .. })));
    let few = RowMatrix::from_fn(3, 4, |i, j| (i + j) as f64);
    assert!(fit_descriptor_pca(&few, 3).is_err());
}

proptest! {
    #[test]
    fn kernel_matrix_is_symmetric_with_unit_diagonal(seed in any::<u64>(), n in 1usize..8, k in 1usize..6) {
        let mut r = rng::seeded(seed);
        let hs: Vec<Histogram> = (0..n).map(|_| random_hist(k, &mut r, None)).collect();
        let m = kernel_matrix(&hs, &hs, 0.7).unwrap();
        for i in 0..n {
            prop_assert_eq!(m.get(i, i), 1.0);
            for j in 0..n {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
                prop_assert_eq!(chi2_distance(&hs[i], &hs[j]).unwrap(), chi2_distance(&hs[j], &hs[i]).unwrap());
            }
        }
    }
}

use motionsync::data::*;
use motionsync::linalg::RowMatrix;
use motionsync::rng;
use motionsync::Error;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn ramp(rows: usize, cols: usize) -> RowMatrix {
    RowMatrix::from_fn(rows, cols, |r, c| (r * 1000 + c) as f64)
}

#[test]
fn ramp_shift_matches_index_offset_oracle() {
    let img = ramp(40, 40);
    let dims = BlockDims::new(2, 8, 8);
    let data = generate_translating_patches(std::slice::from_ref(&img), 400, dims, 1, 3).unwrap();
    let mut seen_right = false;
    for (p, &l) in data.patches().iter().zip(data.labels().unwrap()) {
        let ShiftLabel { dx, dy } = ShiftLabel::decode(l, 1);
        // Recover frame 0's origin from its top-left value, then check every
        // cell of both frames against direct indexing.
        let v0 = p.get(0, 0, 0) as usize;
        let (r0, c0) = (v0 / 1000, v0 % 1000);
        for t in 0..2 {
            for r in 0..8 {
                for c in 0..8 {
                    let rr = (r0 as i64 + t as i64 * dy) as usize + r;
                    let cc = (c0 as i64 + t as i64 * dx) as usize + c;
                    assert_eq!(p.get(t, r, c), img.get(rr, cc) as f32);
                }
            }
        }
        if (dx, dy) == (1, 0) {
            seen_right = true;
            // Frame 1 is frame 0 moved one column: cell (r, c) of frame 1
            // holds what cell (r, c + 1) of frame 0 holds.
            for r in 0..8 {
                for c in 0..7 {
                    assert_eq!(p.get(1, r, c), p.get(0, r, c + 1));
                }
            }
        }
    }
    assert!(seen_right);
}

#[test]
fn zero_shift_repeats_frames() {
    let src = synthetic_images(3, 20, 20, 1);
    let data = generate_translating_patches(&src, 50, BlockDims::new(4, 6, 6), 0, 2).unwrap();
    for (p, &l) in data.patches().iter().zip(data.labels().unwrap()) {
        assert_eq!(ShiftLabel::decode(l, 0), ShiftLabel { dx: 0, dy: 0 });
        for t in 1..4 {
            assert_eq!(p.frame(t), p.frame(0));
        }
    }
}

#[test]
fn frames_are_shifted_copies_on_their_overlap() {
    let src = synthetic_images(5, 48, 48, 7);
    let data = generate_translating_patches(&src, 200, BlockDims::new(5, 10, 10), 2, 8).unwrap();
    for (p, &l) in data.patches().iter().zip(data.labels().unwrap()) {
        let ShiftLabel { dx, dy } = ShiftLabel::decode(l, 2);
        for t in 0..4 {
            for r in 0..10i64 {
                for c in 0..10i64 {
                    let (r1, c1) = (r - dy, c - dx);
                    if (0..10).contains(&r1) && (0..10).contains(&c1) {
                        assert_eq!(p.get(t + 1, r1 as usize, c1 as usize), p.get(t, r as usize, c as usize));
                    }
                }
            }
        }
    }
}

#[test]
fn translation_sizing_errors() {
    let small = vec![RowMatrix::zeros(10, 10)];
    let e = generate_translating_patches(&small, 1, BlockDims::new(3, 8, 8), 1, 0).unwrap_err();
    assert!(matches!(e, Error::SourceTooSmall { need_rows: 14, .. }), "{e}");
    assert!(generate_translating_patches(&[], 1, BlockDims::new(1, 2, 2), 0, 0).is_err());
    assert!(generate_translating_patches(&small, 0, BlockDims::new(1, 2, 2), 0, 0).is_err());
}

#[test]
fn generation_is_seed_deterministic() {
    let src = synthetic_images(4, 30, 30, 9);
    let dims = BlockDims::new(3, 6, 6);
    let a = generate_translating_patches(&src, 100, dims, 2, 5).unwrap();
    let b = generate_translating_patches(&src, 100, dims, 2, 5).unwrap();
    let c = generate_translating_patches(&src, 100, dims, 2, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(synthetic_images(2, 16, 16, 1), synthetic_images(2, 16, 16, 1));
}

#[test]
fn direction_clips_move_their_content() {
    let src = synthetic_images(4, 40, 40, 3);
    let data = generate_direction_clips(&src, 40, BlockDims::new(4, 8, 8), 1, 4).unwrap();
    let labels = data.labels().unwrap();
    for d in 0..4 {
        assert_eq!(labels.iter().filter(|&&l| l == d).count(), 10);
    }
    for (p, &l) in data.patches().iter().zip(labels) {
        // Content displacement per frame, (rows, cols).
        let (dr, dc): (i64, i64) = match l {
            0 => (-1, 0),
            1 => (1, 0),
            2 => (0, -1),
            _ => (0, 1),
        };
        for r in 1..7i64 {
            for c in 1..7i64 {
                assert_eq!(p.get(1, (r + dr) as usize, (c + dc) as usize), p.get(0, r as usize, c as usize));
            }
        }
    }
}

#[test]
fn crop_counts_and_order() {
    let video = VideoBlock::from_fn(BlockDims::new(14, 20, 20), |t, r, c| (t * 10000 + r * 100 + c) as f32).unwrap();
    let blocks = crop_blocks(&video, BlockDims::new(10, 16, 16), BlockDims::new(4, 4, 4)).unwrap();
    assert_eq!(blocks.len(), 8);
    let origins: Vec<f32> = blocks.iter().map(|b| b.get(0, 0, 0)).collect();
    assert_eq!(origins, vec![0.0, 4.0, 400.0, 404.0, 40000.0, 40004.0, 40400.0, 40404.0]);
    assert_eq!(
        crop_blocks(&video, BlockDims::new(10, 16, 16), BlockDims::new(2, 2, 2)).unwrap().len(),
        27
    );
    let whole = crop_blocks(&video, video.dims(), BlockDims::new(1, 1, 1)).unwrap();
    assert_eq!(whole, vec![video.clone()]);
    assert!(crop_blocks(&video, BlockDims::new(15, 1, 1), BlockDims::new(1, 1, 1)).is_err());
}

/// `(video extent, block extent)` with the block fitting.
fn extent() -> impl Strategy<Value = (usize, usize)> {
    (1usize..9).prop_flat_map(|d| (Just(d), 1..=d))
}

proptest! {
    #[test]
    fn crop_count_formula((t, bt) in extent(), (h, bh) in extent(), (w, bw) in extent(), s in 1usize..4) {
        let video = VideoBlock::zeros(BlockDims::new(t, h, w)).unwrap();
        let blocks = crop_blocks(&video, BlockDims::new(bt, bh, bw), BlockDims::new(s, s, s)).unwrap();
        let per = |d: usize, b: usize| (d - b) / s + 1;
        prop_assert_eq!(blocks.len(), per(t, bt) * per(h, bh) * per(w, bw));
        prop_assert_eq!(grid_count(t, bt, s), per(t, bt));
    }

    #[test]
    fn stride_equal_to_block_tiles_exactly(nt in 1usize..4, nh in 1usize..4, nw in 1usize..4, seed in any::<u64>()) {
        let b = BlockDims::new(2, 3, 3);
        let dims = BlockDims::new(nt * 2, nh * 3, nw * 3);
        let mut r = rng::seeded(seed);
        let video = VideoBlock::from_fn(dims, |_, _, _| StandardNormal.sample(&mut r)).unwrap();
        let blocks = crop_blocks(&video, b, b).unwrap();
        let mut rebuilt = vec![f32::NAN; dims.len()];
        let mut k = 0;
        for it in 0..nt {
            for ih in 0..nh {
                for iw in 0..nw {
                    for t in 0..2 {
                        for rr in 0..3 {
                            for cc in 0..3 {
                                let idx = ((it * 2 + t) * dims.h + ih * 3 + rr) * dims.w + iw * 3 + cc;
                                rebuilt[idx] = blocks[k].get(t, rr, cc);
                            }
                        }
                    }
                    k += 1;
                }
            }
        }
        prop_assert_eq!(rebuilt.as_slice(), video.values());
    }

    #[test]
    fn contrast_normalize_is_unit_or_zero(v in proptest::collection::vec(-100.0f64..100.0, 1..20)) {
        let out = contrast_normalize(&v, 1e-8);
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        prop_assert!(mean.abs() < 1e-9);
        let n: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() < 1e-9 || n == 0.0);
    }
}

#[test]
fn contrast_normalize_examples() {
    let h = 1.0 / 2f64.sqrt();
    let out = contrast_normalize(&[1.0, 3.0], 1e-8);
    assert!((out[0] + h).abs() < 1e-15 && (out[1] - h).abs() < 1e-15);
    assert_eq!(contrast_normalize(&[2.0; 5], 1e-8), vec![0.0; 5]);
    let v = [-h, h];
    let again = contrast_normalize(&v, 1e-8);
    assert!((again[0] - v[0]).abs() < 1e-15 && (again[1] - v[1]).abs() < 1e-15);
}

fn gaussian(n: usize, scales: &[f64], seed: u64) -> RowMatrix {
    let mut r = rng::seeded(seed);
    RowMatrix::from_fn(n, scales.len(), |_, j| {
        let z: f64 = StandardNormal.sample(&mut r);
        z * scales[j] + j as f64
    })
}

fn covariance(m: &RowMatrix) -> Vec<Vec<f64>> {
    let (n, d) = (m.rows() as f64, m.cols());
    let mean: Vec<f64> = (0..d).map(|j| m.iter_rows().map(|r| r[j]).sum::<f64>() / n).collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| m.iter_rows().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n)
                .collect()
        })
        .collect()
}

#[test]
fn whitened_covariance_is_identity() {
    // Mixed scales and a correlated pair.
    let mut m = gaussian(4000, &[3.0, 1.0, 0.5, 2.0, 0.1], 11);
    for i in 0..m.rows() {
        let v = m.get(i, 0) * 0.7 + m.get(i, 1);
        m.set(i, 1, v);
    }
    let wt = WhiteningTransform::fit(&m, &WhiteningConfig { retained: Retained::Dims(5), eigenvalue_floor: 1e-8 }).unwrap();
    let c = covariance(&wt.apply_rows(&m).unwrap());
    for (a, row) in c.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-3, "cov[{a}][{b}] = {v}");
        }
    }
}

#[test]
fn diagonal_toy_set_against_hand_oracle() {
    // The corners (±2, ±1) have zero mean and covariance exactly diag(4, 1).
    let pts = [[2.0, 1.0], [2.0, -1.0], [-2.0, 1.0], [-2.0, -1.0]];
    let m = RowMatrix::from_rows(&pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap();
    let wt = WhiteningTransform::fit(&m, &WhiteningConfig { retained: Retained::Dims(2), eigenvalue_floor: 1e-8 }).unwrap();
    // Hand diagonalisation: eigenpairs (4, e1) and (1, e2), so forward is
    // diag(1/2, 1) up to the sign convention (largest entry positive).
    let f = wt.forward();
    let want = [[0.5, 0.0], [0.0, 1.0]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((f.get(i, j) - want[i][j]).abs() < 1e-12, "{:?}", f);
        }
    }
    assert!((wt.spectrum()[0] - 4.0).abs() < 1e-12 && (wt.spectrum()[1] - 1.0).abs() < 1e-12);
    let inv = wt.inverse();
    assert!((inv.get(0, 0) - 2.0).abs() < 1e-12 && (inv.get(1, 1) - 1.0).abs() < 1e-12);
}

#[test]
fn white_data_gives_orthonormal_forward() {
    let m = gaussian(20000, &[1.0; 4], 12);
    let wt = WhiteningTransform::fit(&m, &WhiteningConfig { retained: Retained::Dims(4), eigenvalue_floor: 1e-8 }).unwrap();
    let f = wt.forward();
    for a in 0..4 {
        for b in 0..4 {
            let g: f64 = (0..4).map(|k| f.get(a, k) * f.get(b, k)).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((g - want).abs() < 0.05, "{g}");
        }
    }
}

#[test]
fn reconstruction_error_equals_discarded_variance() {
    let scales = [4.0, 3.0, 2.0, 1.0, 0.5, 0.3, 0.2, 0.1];
    let m = gaussian(3000, &scales, 13);
    let spec = covariance_spectrum(&m).unwrap();
    for keep in [2, 4, 6] {
        let wt = WhiteningTransform::fit(&m, &WhiteningConfig { retained: Retained::Dims(keep), eigenvalue_floor: 1e-8 }).unwrap();
        let mut err = 0.0;
        for row in m.iter_rows() {
            let back = wt.apply_inverse(&wt.apply(row).unwrap()).unwrap();
            err += row.iter().zip(&back).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        err /= m.rows() as f64;
        let discarded: f64 = spec.eigenvalues[keep..].iter().sum();
        assert!((err - discarded).abs() <= 0.01 * discarded, "{err} vs {discarded}");
    }
}

#[test]
fn variance_rule_and_rank_errors() {
    let m = gaussian(2000, &[10.0, 3.0, 0.01], 14);
    let wt = WhiteningTransform::fit(&m, &WhiteningConfig::default()).unwrap();
    assert_eq!(wt.retained_dims(), 2);
    // Rank 1 data cannot give 2 whitened dims.
    let flat = RowMatrix::from_fn(50, 3, |i, j| (i as f64) * (j as f64 + 1.0));
    let e = WhiteningTransform::fit(&flat, &WhiteningConfig { retained: Retained::Dims(2), eigenvalue_floor: 1e-8 }).unwrap_err();
    assert!(matches!(e, Error::RankDeficient { rank: 1, requested: 2 }), "{e}");
}

#[test]
fn dataset_rejects_mixed_dims_and_bad_labels() {
    let a = VideoBlock::zeros(BlockDims::new(1, 2, 2)).unwrap();
    let b = VideoBlock::zeros(BlockDims::new(1, 2, 3)).unwrap();
    assert!(PatchDataset::new(vec![a.clone(), b], None, 0).is_err());
    assert!(PatchDataset::new(vec![a.clone()], Some(vec![0, 1]), 0).is_err());
    assert!(VideoBlock::new(BlockDims::new(1, 2, 2), vec![0.0; 3]).is_err());
    assert!(VideoBlock::new(BlockDims::new(1, 1, 1), vec![f32::NAN]).is_err());
}

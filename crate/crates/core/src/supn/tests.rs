use super::*;
use crate::imaging::Plane;
use crate::testutil::{
    flatten, flatten_grads, random_params, random_params_scaled, random_plane as random_plane_rng,
    rel_err, unflatten,
};
use rand::rngs::StdRng;
use rand::SeedableRng;

fn random_plane(w: usize, h: usize, c: usize, rng: &mut StdRng, lo: f64, hi: f64) -> Plane {
    random_plane_rng(w, h, c, rng, lo, hi)
}

#[test]
fn offset_counts_match_window_sizes() {
    assert_eq!(offset_set(5).unwrap().len(), 12);
    assert_eq!(offset_set(8).unwrap().len(), 40);
    assert!(offset_set(1).unwrap().is_empty());
    assert!(offset_set(0).is_err());
}

#[test]
fn offsets_precede_anchor_in_raster_order() {
    for window in [1u32, 2, 3, 5, 8] {
        for (dy, dx) in offset_set(window).unwrap() {
            assert!(dy > 0 || (dy == 0 && dx > 0), "offset ({dy},{dx})");
        }
    }
}

#[test]
fn log_prob_single_standard_variable() {
    let layout = NeighborhoodLayout::new(1, 1).unwrap();
    let mu = Plane::constant(1, 1, 1, 0.5);
    let log_diag = Plane::zeros(1, 1, 1);
    let params = SupnParams::with_zero_couplings(layout, mu, log_diag).unwrap();
    let y = Plane::constant(1, 1, 1, 0.5);
    let lp = params.log_prob(&y).unwrap();
    assert!((lp - (-0.91893853)).abs() < 1e-7, "got {lp}");
}

#[test]
fn log_prob_identity_precision_at_mean() {
    let layout = NeighborhoodLayout::new(5, 1).unwrap();
    let mu = Plane::constant(4, 3, 1, 0.2);
    let params =
        SupnParams::with_zero_couplings(layout, mu.clone(), Plane::zeros(4, 3, 1)).unwrap();
    let lp = params.log_prob(&mu).unwrap();
    let n = 12.0;
    assert!((lp - (-0.5 * n * LN_2PI)).abs() < 1e-12);
}

#[test]
fn log_prob_matches_dense_oracle() {
    for seed in 0..10 {
        let params = random_params(4, 4, 5, 1, seed);
        let mut rng = StdRng::seed_from_u64(seed + 500);
        let y = random_plane(4, 4, 1, &mut rng, -1.0, 1.0);
        let lp = params.log_prob(&y).unwrap();

        let dense = params.dense_materialize().unwrap();
        let r: Vec<f64> = y
            .data()
            .iter()
            .zip(params.mu().data())
            .map(|(a, b)| a - b)
            .collect();
        let s = dense.matvec_t(&r);
        let n = r.len() as f64;
        let logdet: f64 = (0..dense.n()).map(|i| dense.at(i, i).ln()).sum();
        let quad: f64 = s.iter().map(|v| v * v).sum();
        let expected = logdet - 0.5 * n * LN_2PI - 0.5 * quad;
        assert!(rel_err(lp, expected) < 1e-9, "seed {seed}: {lp} vs {expected}");
    }
}

#[test]
fn whiten_is_zero_at_mean() {
    let params = random_params(5, 4, 5, 2, 3);
    let s = params.whiten(params.mu()).unwrap();
    assert!(s.data().iter().all(|&v| v == 0.0));
}

#[test]
fn whiten_diagonal_case_scales_residual() {
    let layout = NeighborhoodLayout::new(5, 1).unwrap();
    let mut rng = StdRng::seed_from_u64(4);
    let mu = random_plane(3, 3, 1, &mut rng, -1.0, 1.0);
    let log_diag = random_plane(3, 3, 1, &mut rng, -1.0, 1.0);
    let params = SupnParams::with_zero_couplings(layout, mu, log_diag).unwrap();
    let y = random_plane(3, 3, 1, &mut rng, -1.0, 1.0);
    let s = params.whiten(&y).unwrap();
    for i in 0..9 {
        let d = params.log_diag().data()[i].exp();
        let r = y.data()[i] - params.mu().data()[i];
        assert!((s.data()[i] - d * r).abs() < 1e-14);
    }
}

#[test]
fn whiten_single_coupling_matches_dense_multiply() {
    let layout = NeighborhoodLayout::new(3, 1).unwrap();
    let mu = Plane::zeros(3, 3, 1);
    let log_diag = Plane::zeros(3, 3, 1);
    let mut params = SupnParams::with_zero_couplings(layout, mu, log_diag).unwrap();
    // One coupling from anchor (1,1) to its left neighbor (offset (0,1)).
    let k = params
        .layout()
        .offsets()
        .iter()
        .position(|&o| o == (0, 1))
        .unwrap();
    params.off_diag[k].set(1, 1, 0, 0.75);

    let mut rng = StdRng::seed_from_u64(5);
    let y = random_plane(3, 3, 1, &mut rng, -1.0, 1.0);
    let s = params.whiten(&y).unwrap();
    let dense = params.dense_materialize().unwrap();
    let expected = dense.matvec_t(y.data());
    for (a, b) in s.data().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn whitened_norm_equals_mahalanobis_quadratic() {
    for seed in 0..5 {
        for channels in [1, 2] {
            let params = random_params(4, 3, 5, channels, seed);
            let mut rng = StdRng::seed_from_u64(seed + 100);
            let y = random_plane(4, 3, channels, &mut rng, -1.0, 1.0);
            let s = params.whiten(&y).unwrap();
            let norm2: f64 = s.data().iter().map(|v| v * v).sum();

            let dense = params.dense_materialize().unwrap();
            let prec = dense.precision();
            let r: Vec<f64> = y
                .data()
                .iter()
                .zip(params.mu().data())
                .map(|(a, b)| a - b)
                .collect();
            let mut quad = 0.0;
            for (i, ri) in r.iter().enumerate() {
                for (j, rj) in r.iter().enumerate() {
                    quad += ri * prec[i][j] * rj;
                }
            }
            assert!(rel_err(norm2, quad) < 1e-9, "seed {seed} ch {channels}");
        }
    }
}

#[test]
fn grads_at_mean_hit_known_values() {
    let params = random_params(4, 4, 5, 2, 9);
    let g = params.grad_log_prob_params(params.mu()).unwrap();
    assert!(g.mu.data().iter().all(|&v| v == 0.0));
    assert!(g.log_diag.data().iter().all(|&v| v == 1.0));
    for plane in &g.off_diag {
        assert!(plane.data().iter().all(|&v| v == 0.0));
    }
    assert!(g.intra.unwrap().data().iter().all(|&v| v == 0.0));
    let gobs = params.grad_log_prob_obs(params.mu()).unwrap();
    assert!(gobs.data().iter().all(|&v| v == 0.0));
}

#[test]
fn single_variable_log_diag_gradient_formula() {
    let layout = NeighborhoodLayout::new(1, 1).unwrap();
    let mu = Plane::constant(1, 1, 1, 0.0);
    let mut log_diag = Plane::zeros(1, 1, 1);
    log_diag.set(0, 0, 0, 0.4);
    let params = SupnParams::with_zero_couplings(layout, mu, log_diag).unwrap();
    let y = Plane::constant(1, 1, 1, 0.7);
    let g = params.grad_log_prob_params(&y).unwrap();
    let d = 0.4f64.exp();
    let r = 0.7;
    assert!((g.log_diag.data()[0] - (1.0 - d * d * r * r)).abs() < 1e-12);
    // Observation gradient in the diagonal case: -d^2 r.
    let gobs = params.grad_log_prob_obs(&y).unwrap();
    assert!((gobs.data()[0] - (-d * d * r)).abs() < 1e-12);
}

#[test]
fn param_gradients_match_finite_differences() {
    for (seed, channels) in [(0u64, 1usize), (1, 2), (2, 1), (3, 2)] {
        let params = random_params(4, 4, 5, channels, seed + 40);
        let mut rng = StdRng::seed_from_u64(seed + 900);
        let y = random_plane(4, 4, channels, &mut rng, -1.0, 1.0);

        let analytic = flatten_grads(&params.grad_log_prob_params(&y).unwrap());
        let flat = flatten(&params);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let fp = unflatten(&params, &plus).log_prob(&y).unwrap();
            let fm = unflatten(&params, &minus).log_prob(&y).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i], fd));
        }
        assert!(worst < 1e-5, "seed {seed} ch {channels}: worst rel err {worst}");
    }
}

#[test]
fn obs_gradient_matches_finite_differences() {
    let params = random_params(4, 4, 5, 2, 77);
    let mut rng = StdRng::seed_from_u64(78);
    let y = random_plane(4, 4, 2, &mut rng, -1.0, 1.0);
    let analytic = params.grad_log_prob_obs(&y).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..y.len() {
        let mut plus = y.clone();
        plus.data_mut()[i] += h;
        let mut minus = y.clone();
        minus.data_mut()[i] -= h;
        let fd =
            (params.log_prob(&plus).unwrap() - params.log_prob(&minus).unwrap()) / (2.0 * h);
        worst = worst.max(rel_err(analytic.data()[i], fd));
    }
    assert!(worst < 1e-5, "worst rel err {worst}");
}

#[test]
fn sample_is_deterministic_per_seed() {
    let params = random_params(4, 4, 5, 2, 21);
    let a = params.sample(99);
    let b = params.sample(99);
    let c = params.sample(100);
    assert_eq!(a.data(), b.data());
    assert_ne!(a.data(), c.data());
}

#[test]
fn diagonal_sampling_variance_matches_precision() {
    let layout = NeighborhoodLayout::new(1, 1).unwrap();
    let ell = 0.3;
    let mu = Plane::constant(2, 2, 1, 0.1);
    let log_diag = Plane::constant(2, 2, 1, ell);
    let params = SupnParams::with_zero_couplings(layout, mu, log_diag).unwrap();
    let count = 100_000;
    let mut rng = StdRng::seed_from_u64(7);
    let mut sums = [0.0f64; 4];
    let mut sq = [0.0f64; 4];
    for _ in 0..count {
        let s = params.sample_with_rng(&mut rng);
        for (i, &v) in s.data().iter().enumerate() {
            sums[i] += v;
            sq[i] += v * v;
        }
    }
    let expected = (-2.0 * ell).exp();
    for i in 0..4 {
        let mean = sums[i] / count as f64;
        let var = sq[i] / count as f64 - mean * mean;
        assert!(
            (var - expected).abs() / expected < 0.03,
            "var {var} vs {expected}"
        );
    }
}

#[test]
fn sampling_covariance_matches_dense_inverse() {
    // Order-one precision scale; marginal variances stay below ~0.3 so the
    // Monte-Carlo error of 100k draws sits well inside the 5e-3 band.
    let params = random_params_scaled(4, 4, 5, 1, 1234, 0.7, 1.2);
    let dense = params.dense_materialize().unwrap();
    let cov = dense.covariance();
    let n = 16;
    let count = 100_000usize;
    let mut rng = StdRng::seed_from_u64(4321);
    let mut mean = vec![0.0f64; n];
    let mut cross = vec![0.0f64; n * n];
    for _ in 0..count {
        let s = params.sample_with_rng(&mut rng);
        let x: Vec<f64> = s
            .data()
            .iter()
            .zip(params.mu().data())
            .map(|(a, b)| a - b)
            .collect();
        for i in 0..n {
            mean[i] += x[i];
            for j in 0..n {
                cross[i * n + j] += x[i] * x[j];
            }
        }
    }
    let mut max_err = 0.0f64;
    for i in 0..n {
        mean[i] /= count as f64;
    }
    for i in 0..n {
        for j in 0..n {
            let emp = cross[i * n + j] / count as f64 - mean[i] * mean[j];
            max_err = max_err.max((emp - cov[i][j]).abs());
        }
    }
    assert!(max_err <= 5e-3, "max covariance error {max_err}");
    let mean_err = mean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(mean_err < 0.01, "max mean error {mean_err}");
}

#[test]
fn ranked_samples_are_ordered() {
    let params = random_params(4, 4, 5, 1, 8);
    let ranked = params.sample_ranked(50, 3).unwrap();
    assert!(ranked.lowest.log_prob <= ranked.median.log_prob);
    assert!(ranked.median.log_prob <= ranked.highest.log_prob);
    assert!(params.sample_ranked(2, 3).is_err());
}

#[test]
fn ranked_count_three_returns_the_three_draws_sorted() {
    let params = random_params(3, 3, 5, 1, 15);
    let ranked = params.sample_ranked(3, 44).unwrap();
    let mut rng = StdRng::seed_from_u64(44);
    let mut draws: Vec<(Plane, f64)> = (0..3)
        .map(|_| {
            let s = params.sample_with_rng(&mut rng);
            let lp = params.log_prob(&s).unwrap();
            (s, lp)
        })
        .collect();
    draws.sort_by(|a, b| a.1.total_cmp(&b.1));
    assert_eq!(ranked.lowest.sample.data(), draws[0].0.data());
    assert_eq!(ranked.median.sample.data(), draws[1].0.data());
    assert_eq!(ranked.highest.sample.data(), draws[2].0.data());
}

#[test]
fn isotropic_ranking_orders_by_radius() {
    let layout = NeighborhoodLayout::new(1, 1).unwrap();
    let mu = Plane::zeros(3, 3, 1);
    let params = SupnParams::with_zero_couplings(layout, mu, Plane::zeros(3, 3, 1)).unwrap();
    let mut hits = 0;
    let trials = 100;
    for seed in 0..trials {
        let ranked = params.sample_ranked(1000, seed).unwrap();
        let norm = |p: &Plane| -> f64 { p.data().iter().map(|v| v * v).sum() };
        if norm(&ranked.highest.sample) < norm(&ranked.lowest.sample) {
            hits += 1;
        }
    }
    assert!(hits >= 99, "only {hits}/{trials} trials ordered by radius");
}

#[test]
fn dense_single_variable() {
    let layout = NeighborhoodLayout::new(1, 1).unwrap();
    let mu = Plane::zeros(1, 1, 1);
    let mut log_diag = Plane::zeros(1, 1, 1);
    log_diag.set(0, 0, 0, 0.7);
    let params = SupnParams::with_zero_couplings(layout, mu, log_diag).unwrap();
    let dense = params.dense_materialize().unwrap();
    assert_eq!(dense.n(), 1);
    assert!((dense.at(0, 0) - 0.7f64.exp()).abs() < 1e-15);
}

#[test]
fn dense_zero_couplings_is_diagonal() {
    let layout = NeighborhoodLayout::new(5, 1).unwrap();
    let mu = Plane::zeros(3, 3, 1);
    let params = SupnParams::with_zero_couplings(layout, mu, Plane::zeros(3, 3, 1)).unwrap();
    let dense = params.dense_materialize().unwrap();
    for i in 0..9 {
        for j in 0..9 {
            if i == j {
                assert_eq!(dense.at(i, j), 1.0);
            } else {
                assert_eq!(dense.at(i, j), 0.0);
            }
        }
    }
}

#[test]
fn dense_is_exactly_lower_triangular() {
    for channels in [1, 2] {
        let params = random_params(5, 4, 5, channels, 31);
        let dense = params.dense_materialize().unwrap();
        let n = dense.n();
        for i in 0..n {
            assert!(dense.at(i, i) > 0.0, "diagonal must be positive");
            for j in i + 1..n {
                assert_eq!(dense.at(i, j), 0.0, "upper entry ({i},{j}) nonzero");
            }
        }
    }
}

#[test]
fn dense_nonzero_count_matches_enumeration() {
    for channels in [1usize, 2] {
        let params = random_params(4, 4, 5, channels, 77);
        let dense = params.dense_materialize().unwrap();
        // Count expected entries by direct enumeration over anchors.
        let (w, h) = (4i32, 4i32);
        let mut expected = params.num_variables();
        for &(dy, dx) in params.layout().offsets() {
            for py in 0..h {
                for px in 0..w {
                    let (ny, nx) = (py - dy, px - dx);
                    if ny >= 0 && nx >= 0 && nx < w {
                        expected += channels * channels;
                    }
                }
            }
        }
        if channels == 2 {
            expected += (w * h) as usize;
        }
        assert_eq!(params.structural_nonzeros(), expected);
        // Random values are generically nonzero, so placed == nonzero.
        assert_eq!(dense.count_nonzeros(), expected);
    }
}

#[test]
fn dense_cap_is_enforced() {
    let layout = NeighborhoodLayout::new(1, 1).unwrap();
    let mu = Plane::zeros(65, 64, 1);
    let params =
        SupnParams::with_zero_couplings(layout, mu, Plane::zeros(65, 64, 1)).unwrap();
    assert!(params.dense_materialize().is_err());
}

#[test]
fn oracle_equivalence_across_windows_and_channels() {
    let mut cases = 0;
    for window in [1u32, 5, 8] {
        for channels in [1usize, 2] {
            for (w, h) in [(1, 1), (3, 2), (5, 5), (8, 8)] {
                let params = random_params(w, h, window, channels, cases);
                let mut rng = StdRng::seed_from_u64(cases + 5000);
                let y = random_plane(w, h, channels, &mut rng, -1.0, 1.0);
                let dense = params.dense_materialize().unwrap();
                let r: Vec<f64> = y
                    .data()
                    .iter()
                    .zip(params.mu().data())
                    .map(|(a, b)| a - b)
                    .collect();

                let s_sparse = params.whiten(&y).unwrap();
                let s_dense = dense.matvec_t(&r);
                for (a, b) in s_sparse.data().iter().zip(&s_dense) {
                    assert!(rel_err(*a, *b) < 1e-9);
                }

                let prec = dense.precision();
                let lambda_r: Vec<f64> = (0..r.len())
                    .map(|i| (0..r.len()).map(|j| prec[i][j] * r[j]).sum())
                    .collect();
                let g = params.grad_log_prob_params(&y).unwrap();
                for (a, b) in g.mu.data().iter().zip(&lambda_r) {
                    assert!(rel_err(*a, *b) < 1e-9);
                }
                let gobs = params.grad_log_prob_obs(&y).unwrap();
                for (a, b) in gobs.data().iter().zip(&lambda_r) {
                    assert!(rel_err(*a, -*b) < 1e-9);
                }
                cases += 1;
            }
        }
    }
    assert_eq!(cases, 24);
}

#[test]
fn log_prob_is_maximized_at_mean() {
    let params = random_params(4, 4, 5, 1, 55);
    let at_mean = params.log_prob(params.mu()).unwrap();
    let mut rng = StdRng::seed_from_u64(56);
    for _ in 0..20 {
        let mut y = params.mu().clone();
        for v in y.data_mut() {
            *v += rng.gen_range(-0.5..0.5);
        }
        assert!(params.log_prob(&y).unwrap() < at_mean);
    }
}

#[test]
fn shape_mismatch_is_rejected() {
    let params = random_params(4, 4, 5, 1, 2);
    let y = Plane::zeros(4, 5, 1);
    assert!(matches!(params.log_prob(&y), Err(crate::Error::Shape(_))));
    assert!(params.whiten(&y).is_err());
    assert!(params.grad_log_prob_params(&y).is_err());
    assert!(params.grad_log_prob_obs(&y).is_err());
}

mod container_io {
    use super::*;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("suss-supn-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    /// Random params quantized to f32 so a save/load round trip is exact.
    fn f32_params(seed: u64, channels: usize) -> SupnParams {
        let mut p = random_params(4, 3, 5, channels, seed);
        for v in p.mu.data_mut() {
            *v = *v as f32 as f64;
        }
        for v in p.log_diag.data_mut() {
            *v = *v as f32 as f64;
        }
        for plane in &mut p.off_diag {
            for v in plane.data_mut() {
                *v = *v as f32 as f64;
            }
        }
        if let Some(i) = &mut p.intra {
            for v in i.data_mut() {
                *v = *v as f32 as f64;
            }
        }
        p
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for channels in [1usize, 2] {
            let params = f32_params(7, channels);
            let path = temp_path(&format!("roundtrip_{channels}.supn"));
            save_supn(&params, "y_full", &path).unwrap();
            let (loaded, id) = load_supn(&path).unwrap();
            assert_eq!(id, "y_full");
            assert_eq!(loaded.mu().data(), params.mu().data());
            assert_eq!(loaded.log_diag().data(), params.log_diag().data());
            for (a, b) in loaded.off_diag().iter().zip(params.off_diag()) {
                assert_eq!(a.data(), b.data());
            }
            assert_eq!(
                loaded.intra().map(|p| p.data().to_vec()),
                params.intra().map(|p| p.data().to_vec())
            );
            // Saving the loaded params reproduces the file byte for byte.
            let path2 = temp_path(&format!("roundtrip2_{channels}.supn"));
            save_supn(&loaded, "y_full", &path2).unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        }
    }

    #[test]
    fn corrupted_magic_names_the_check() {
        let params = f32_params(8, 1);
        let path = temp_path("badmagic.supn");
        save_supn(&params, "y_half", &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let err = load_supn(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "got: {err}");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let params = f32_params(9, 1);
        let path = temp_path("badversion.supn");
        save_supn(&params, "y_half", &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99;
        std::fs::write(&path, &bytes).unwrap();
        let err = load_supn(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "got: {err}");
    }

    #[test]
    fn payload_size_disagreement_is_rejected() {
        let params = f32_params(10, 1);
        let path = temp_path("badsize.supn");
        save_supn(&params, "y_quarter", &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // Drop one row worth of samples: header still declares 4x3.
        bytes.truncate(bytes.len() - 4 * 4);
        std::fs::write(&path, &bytes).unwrap();
        let err = load_supn(&path).unwrap_err();
        assert!(err.to_string().contains("size mismatch"), "got: {err}");
    }

    #[test]
    fn truncated_header_is_rejected() {
        let path = temp_path("tiny.supn");
        std::fs::write(&path, b"SUPN\x01\x00").unwrap();
        let err = load_supn(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "got: {err}");
    }
}

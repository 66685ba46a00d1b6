use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectrack::eval::{
    center_location_error, default_precision_thresholds, default_success_thresholds, overlap_ratio,
    precision_curve, success_curve,
};
use spectrack::features::{fit_pca, project};
use spectrack::graph::{estimate_lambda_max, LambdaMaxMode};
use spectrack::regression::fit_ridge;
use spectrack::tracker::scale_factors;
use spectrack::{
    apply_filter, build_grid_graph, chebyshev_responses, locate_peak, normalized_laplacian,
    scaled_laplacian, spectral_oracle, update_model, BoundingBox, DesignMatrix, GridGraph,
    NeighborhoodSpec, Pattern, RegressionModel, SpectralFilterSpec,
};

fn graph_strategy() -> impl Strategy<Value = GridGraph> {
    (0usize..4, 1usize..9, 1usize..9, prop::option::of(0.5f64..3.0)).prop_filter_map(
        "grid too small for the skip step",
        |(p, rows, cols, sigma)| {
            let pattern = [Pattern::Adjacent4, Pattern::Adjacent8, Pattern::Skip4, Pattern::Skip4Wide][p];
            let mut spec = NeighborhoodSpec::new(pattern);
            if let Some(s) = sigma {
                spec = spec.with_gaussian(s);
            }
            build_grid_graph(rows, cols, spec).ok()
        },
    )
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn dense_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
}

fn box_strategy() -> impl Strategy<Value = BoundingBox> {
    (-50.0f64..50.0, -50.0f64..50.0, 0.5f64..40.0, 0.5f64..40.0)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjacency_is_exactly_symmetric(g in graph_strategy()) {
        let w = g.adjacency().to_dense();
        prop_assert_eq!(&w, &w.transpose());
    }

    #[test]
    fn degrees_are_row_sums(g in graph_strategy()) {
        let w = g.adjacency().to_dense();
        for (i, d) in g.degrees().iter().enumerate() {
            prop_assert_eq!(*d, w.row(i).iter().sum::<f64>());
        }
    }

    #[test]
    fn normalized_laplacian_matches_dense_definition(g in graph_strategy()) {
        let w = g.adjacency().to_dense();
        let n = w.nrows();
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| { let d: f64 = w.row(i).sum(); if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 } })
            .collect();
        let expected = DMatrix::from_fn(n, n, |i, j| {
            let id = if i == j && inv_sqrt[i] > 0.0 { 1.0 } else { 0.0 };
            id - inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]
        });
        let got = normalized_laplacian(&g).matrix().to_dense();
        prop_assert!((got - expected).amax() < 1e-14);
    }

    #[test]
    fn normalized_laplacian_is_psd(g in graph_strategy(), seed in any::<u64>()) {
        let lap = normalized_laplacian(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let x: Vec<f64> = (0..g.n_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lx = lap.matrix().mul_vec(&x);
            let q: f64 = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
            prop_assert!(q >= -1e-10);
        }
    }

    #[test]
    fn normalized_spectrum_lies_in_zero_two(g in graph_strategy()) {
        for l in dense_eigenvalues(normalized_laplacian(&g).matrix().to_dense()) {
            prop_assert!((-1e-10..=2.0 + 1e-10).contains(&l), "eigenvalue {}", l);
        }
    }

    #[test]
    fn scaled_spectrum_lies_in_unit_interval(g in graph_strategy()) {
        let lap = normalized_laplacian(&g);
        let lmax = estimate_lambda_max(&lap, LambdaMaxMode::PowerIteration).unwrap();
        let true_max = dense_eigenvalues(lap.matrix().to_dense()).into_iter().fold(0.0, f64::max);
        prop_assert!(lmax >= true_max - 1e-10);
        let tilde = scaled_laplacian(&lap, lmax).unwrap();
        for l in dense_eigenvalues(tilde.matrix().to_dense()) {
            prop_assert!((-1.0 - 1e-8..=1.0 + 1e-8).contains(&l), "eigenvalue {}", l);
        }
    }

    #[test]
    fn recurrence_matches_spectral_oracle(g in graph_strategy(), seed in any::<u64>(), k in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lap = normalized_laplacian(&g);
        let tilde = scaled_laplacian(&lap, 2.0).unwrap();
        let theta: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..g.n_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = apply_filter(&tilde, &x, &SpectralFilterSpec::new(theta.clone()).unwrap()).unwrap();
        let ghat = |l: f64| {
            let t = (l - 1.0).clamp(-1.0, 1.0);
            theta.iter().enumerate().map(|(i, c)| c * (i as f64 * t.acos()).cos()).sum::<f64>()
        };
        let slow = spectral_oracle(&lap, &x, ghat).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn filtering_is_linear(g in graph_strategy(), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tilde = scaled_laplacian(&normalized_laplacian(&g), 2.0).unwrap();
        let spec = SpectralFilterSpec::new((0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let n = g.n_vertices();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let fx = apply_filter(&tilde, &x, &spec).unwrap();
        let fy = apply_filter(&tilde, &y, &spec).unwrap();
        let fm = apply_filter(&tilde, &mix, &spec).unwrap();
        for i in 0..n {
            prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-10);
        }
    }

    #[test]
    fn recurrence_base_cases_are_exact(g in graph_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tilde = scaled_laplacian(&normalized_laplacian(&g), 2.0).unwrap();
        let x = random_matrix(&mut rng, g.n_vertices(), 3);
        let stack = chebyshev_responses(&tilde, &x, 2).unwrap();
        prop_assert_eq!(stack.block(0), &x);
        for j in 0..3 {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let lx = tilde.matrix().mul_vec(&col);
            let got: Vec<f64> = stack.block(1).column(j).iter().copied().collect();
            prop_assert_eq!(got, lx);
        }
    }

    #[test]
    fn chebyshev_operators_are_contractions(g in graph_strategy()) {
        let lap = normalized_laplacian(&g);
        let true_max = dense_eigenvalues(lap.matrix().to_dense()).into_iter().fold(0.0, f64::max);
        let n = g.n_vertices();
        for lmax in [2.0, true_max.max(1e-3)] {
            let tilde = scaled_laplacian(&lap, lmax).unwrap();
            let stack = chebyshev_responses(&tilde, &DMatrix::identity(n, n), 9).unwrap();
            for k in 0..9 {
                let norm = stack.block(k).clone().singular_values().max();
                prop_assert!(norm <= 1.0 + 1e-6, "order {} norm {}", k, norm);
            }
        }
    }

    #[test]
    fn ridge_matches_normal_equations_and_is_stationary(seed in any::<u64>(), gamma in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_matrix(&mut rng, 20, 8);
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = fit_ridge(&DesignMatrix::from_features(f.clone()).unwrap(), &y, gamma).unwrap();
        let yv = DVector::from_column_slice(&y);
        let a = f.transpose() * &f + DMatrix::identity(8, 8) * gamma;
        let oracle = a.try_inverse().unwrap() * f.transpose() * &yv;
        let w = DVector::from_column_slice(model.weights());
        prop_assert!((&w - &oracle).amax() <= 1e-8);
        let grad = 2.0 * f.transpose() * (&f * &w - &yv) + 2.0 * gamma * &w;
        prop_assert!(grad.amax() <= 1e-6);
    }

    #[test]
    fn stronger_regularization_shrinks_weights(seed in any::<u64>(), g1 in 0.0f64..5.0, dg in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = DesignMatrix::from_features(random_matrix(&mut rng, 30, 6)).unwrap();
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w1 = fit_ridge(&f, &y, g1).unwrap();
        let w2 = fit_ridge(&f, &y, g1 + dg).unwrap();
        let norm = |m: &RegressionModel| m.weights().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm(&w1) >= norm(&w2) - 1e-12);
    }

    #[test]
    fn peak_survives_monotone_transforms(values in prop::collection::vec(-5.0f64..5.0, 12), shift in -3.0f64..3.0, scale in 0.1f64..4.0) {
        let base = locate_peak(&values, 3, 4).unwrap();
        let affine: Vec<f64> = values.iter().map(|v| scale * v + shift).collect();
        let exp: Vec<f64> = values.iter().map(|v| v.exp()).collect();
        let cube: Vec<f64> = values.iter().map(|v| v.powi(3)).collect();
        prop_assert_eq!(locate_peak(&affine, 3, 4).unwrap(), base);
        prop_assert_eq!(locate_peak(&exp, 3, 4).unwrap(), base);
        prop_assert_eq!(locate_peak(&cube, 3, 4).unwrap(), base);
    }

    #[test]
    fn metrics_are_symmetric_and_bounded(a in box_strategy(), b in box_strategy()) {
        prop_assert_eq!(overlap_ratio(&a, &b), overlap_ratio(&b, &a));
        prop_assert_eq!(center_location_error(&a, &b), center_location_error(&b, &a));
        let o = overlap_ratio(&a, &b);
        prop_assert!((0.0..=1.0).contains(&o));
        prop_assert!(center_location_error(&a, &b) >= 0.0);
        prop_assert!((overlap_ratio(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_is_scale_invariant(a in box_strategy(), b in box_strategy(), s in 0.01f64..100.0) {
        let sc = |q: &BoundingBox| BoundingBox::new(q.x * s, q.y * s, q.w * s, q.h * s).unwrap();
        prop_assert!((overlap_ratio(&sc(&a), &sc(&b)) - overlap_ratio(&a, &b)).abs() <= 1e-12);
    }

    #[test]
    fn curves_are_monotone(cles in prop::collection::vec(0.0f64..80.0, 1..40), overlaps in prop::collection::vec(0.0f64..=1.0, 1..40)) {
        let p = precision_curve(&cles, &default_precision_thresholds()).unwrap();
        let s = success_curve(&overlaps, &default_success_thresholds()).unwrap();
        prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(p.iter().chain(&s).all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn scale_factors_are_bracketed(count in 1usize..60, step in 1.001f64..1.2) {
        let f = scale_factors(count, step);
        prop_assert_eq!(f.len(), count);
        let lo = step.powi((1 - count as i32).div_euclid(2));
        let hi = step.powi((count as i32 - 1).div_euclid(2));
        prop_assert_eq!(f[0], lo);
        prop_assert_eq!(f[count - 1], hi);
        prop_assert!(f.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn model_update_contracts_geometrically(seed in any::<u64>(), alpha in 0.01f64..0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wt = RegressionModel::new(target.clone(), 2, 4, 1.0).unwrap();
        let dist = |v: &[f64]| v.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        for _ in 0..10 {
            let before = dist(&w);
            let next = update_model(&RegressionModel::new(w.clone(), 2, 4, 1.0).unwrap(), &wt, alpha).unwrap();
            w = next.weights().to_vec();
            prop_assert!((dist(&w) - (1.0 - alpha) * before).abs() <= 1e-12);
        }
    }
}

/// Centered data and its right singular vectors, computed independently of the PCA code.
fn svd_oracle(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let svd = centered.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let variances = order.iter().map(|&i| svd.singular_values[i].powi(2) / n).collect();
    let v = DMatrix::from_fn(vt.ncols(), order.len(), |r, c| vt[(order[c], r)]);
    (centered, variances, v)
}

fn correlated_data(seed: u64, n: usize, d: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix = random_matrix(&mut rng, d, d);
    let scales = DMatrix::from_fn(n, d, |_, j| rng.random_range(-1.0..1.0) * (d - j) as f64);
    scales * mix + DMatrix::from_element(n, d, 3.0)
}

#[test]
fn pca_basis_is_orthonormal_with_sorted_variance() {
    for seed in 0..10 {
        let x = correlated_data(seed, 80, 12);
        let pca = fit_pca(&x, 7).unwrap();
        let gram = pca.basis.transpose() * &pca.basis;
        assert!((gram - DMatrix::identity(7, 7)).amax() <= 1e-8);
        assert!(pca.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn pca_reconstruction_error_is_discarded_variance() {
    for seed in 0..10 {
        let x = correlated_data(seed, 60, 9);
        let (centered, variances, _) = svd_oracle(&x);
        for keep in [1, 4, 8] {
            let pca = fit_pca(&x, keep).unwrap();
            let scores = project(&x, &pca).unwrap();
            let recon = &scores * pca.basis.transpose();
            let err = (&centered - recon).norm_squared() / x.nrows() as f64;
            let discarded: f64 = variances[keep..].iter().sum();
            assert!((err - discarded).abs() <= 1e-8 * (1.0 + discarded), "{err} vs {discarded}");
            for (a, b) in pca.explained_variance.iter().zip(&variances) {
                assert!((a - b).abs() <= 1e-8 * (1.0 + b));
            }
        }
    }
}

#[test]
fn pca_scores_match_singular_vectors_up_to_sign() {
    let x = correlated_data(42, 50, 6);
    let (centered, _, v) = svd_oracle(&x);
    let pca = fit_pca(&x, 6).unwrap();
    let scores = project(&x, &pca).unwrap();
    let oracle = &centered * &v;
    for k in 0..6 {
        let same = (scores.column(k) - oracle.column(k)).amax();
        let flipped = (scores.column(k) + oracle.column(k)).amax();
        assert!(same.min(flipped) <= 1e-8, "component {k}");
    }
}

#[test]
fn full_rank_pca_is_an_isometry() {
    let x = correlated_data(7, 40, 5);
    let (centered, _, _) = svd_oracle(&x);
    let scores = project(&x, &fit_pca(&x, 5).unwrap()).unwrap();
    for i in 0..x.nrows() {
        assert!((scores.row(i).norm() - centered.row(i).norm()).abs() <= 1e-10);
    }
}

#[test]
fn model_text_roundtrip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let weights: Vec<f64> = (0..24).map(|_| rng.random_range(-1e3..1e3)).collect();
    let model = RegressionModel::new(weights, 4, 6, 0.5).unwrap();
    let mut buf = Vec::new();
    model.write_text(&mut buf).unwrap();
    let back = RegressionModel::read_text(&buf[..]).unwrap();
    assert_eq!(back, model);
}

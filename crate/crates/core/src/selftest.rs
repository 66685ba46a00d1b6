//! Seeded property checks of the spectral filter and ridge solver against
//! independent dense oracles.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::filter::{apply_filter, chebyshev_responses, spectral_oracle, DesignMatrix, SpectralFilterSpec};
use crate::graph::{
    build_grid_graph, hop_distances_from, normalized_laplacian, scaled_laplacian,
    GridGraph, LambdaMaxMode, NeighborhoodSpec, Pattern,
};
use crate::regression::fit_ridge;

pub const SPECTRAL_TOLERANCE: f64 = 1e-8;
pub const LOCALITY_TOLERANCE: f64 = 1e-12;
pub const RIDGE_TOLERANCE: f64 = 1e-8;
pub const STATIONARITY_TOLERANCE: f64 = 1e-6;

/// Deliberate defects used to confirm the checks can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Leaks a small global term into every recurrence step.
    PerturbRecurrence,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl fmt::Display for PropertyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<22} cases={:<4} max_err={:.3e} tol={:.0e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_error,
            self.tolerance
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelfTestReport {
    pub seed: u64,
    pub outcomes: Vec<PropertyOutcome>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

impl fmt::Display for SelfTestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "selftest seed={}", self.seed)?;
        for o in &self.outcomes {
            writeln!(f, "{o}")?;
        }
        Ok(())
    }
}

/// A random lattice with at most 64 vertices: any pattern, either weighting.
pub fn random_grid_graph(rng: &mut impl Rng) -> GridGraph {
    let pattern = match rng.random_range(0..4) {
        0 => Pattern::Adjacent4,
        1 => Pattern::Adjacent8,
        2 => Pattern::Skip4,
        _ => Pattern::Skip4Wide,
    };
    let mut spec = NeighborhoodSpec::new(pattern);
    if pattern == Pattern::Skip4Wide && rng.random_bool(0.3) {
        spec = spec.with_skip_step(4);
    }
    if rng.random_bool(0.5) {
        spec = spec.with_gaussian(rng.random_range(0.5..3.0));
    }
    let min_side = if pattern.is_skipping() { spec.skip_step + 1 } else { 1 };
    let rows = rng.random_range(min_side..=64 / min_side);
    let cols = rng.random_range(min_side..=(64 / rows).max(min_side));
    build_grid_graph(rows, cols, spec).expect("sizes chosen to be valid")
}

/// `T_k(t)` through the trigonometric identity, independent of the recurrence.
pub fn chebyshev_closed_form(k: usize, t: f64) -> f64 {
    (k as f64 * t.clamp(-1.0, 1.0).acos()).cos()
}

/// Dense responses `T_k(L̃) X`, optionally corrupted by `fault`.
fn responses(
    lap_tilde: &crate::graph::LaplacianOperator,
    x: &DMatrix<f64>,
    k: usize,
    fault: Option<Fault>,
) -> Result<Vec<DMatrix<f64>>> {
    let mut blocks = chebyshev_responses(lap_tilde, x, k)?.blocks().to_vec();
    if fault == Some(Fault::PerturbRecurrence) {
        for order in 1..blocks.len() {
            let leak = 1e-6 * blocks[order - 1].sum();
            blocks[order].add_scalar_mut(leak);
        }
    }
    Ok(blocks)
}

/// Chebyshev filter vs. dense eigendecomposition on random graphs.
pub fn check_spectral_equivalence(rng: &mut impl Rng, cases: usize, fault: Option<Fault>) -> Result<PropertyOutcome> {
    let mut max_error: f64 = 0.0;
    for _ in 0..cases {
        let graph = random_grid_graph(rng);
        let n = graph.n_vertices();
        let lap = normalized_laplacian(&graph);
        let lambda_max = if rng.random_bool(0.5) {
            crate::graph::estimate_lambda_max(&lap, LambdaMaxMode::PowerIteration).unwrap_or(2.0)
        } else {
            2.0
        };
        let tilde = scaled_laplacian(&lap, lambda_max)?;
        let k = rng.random_range(1..=8);
        let theta: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = SpectralFilterSpec::new(theta.clone())?;
        let d = rng.random_range(1..=8);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let blocks = responses(&tilde, &x, k, fault)?;
        for j in 0..d {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let ghat = |lambda: f64| {
                let t = 2.0 * lambda / lambda_max - 1.0;
                theta
                    .iter()
                    .enumerate()
                    .map(|(order, th)| th * chebyshev_closed_form(order, t))
                    .sum::<f64>()
            };
            let want = spectral_oracle(&lap, &col, ghat)?;
            let got = if fault.is_some() {
                (0..n)
                    .map(|i| (0..k).map(|o| theta[o] * blocks[o][(i, j)]).sum())
                    .collect()
            } else {
                apply_filter(&tilde, &col, &spec)?
            };
            for (a, b) in got.iter().zip(&want) {
                max_error = max_error.max((a - b).abs());
            }
        }
    }
    Ok(PropertyOutcome {
        name: "spectral_equivalence",
        passed: max_error <= SPECTRAL_TOLERANCE,
        cases,
        max_error,
        tolerance: SPECTRAL_TOLERANCE,
    })
}

/// Largest `|T_k(L̃) e_i|` at any vertex more than `k` hops from `i`.
pub fn locality_violation(graph: &GridGraph, max_order: usize, fault: Option<Fault>) -> Result<f64> {
    let n = graph.n_vertices();
    let tilde = scaled_laplacian(&normalized_laplacian(graph), 2.0)?;
    let identity = DMatrix::identity(n, n);
    let blocks = responses(&tilde, &identity, max_order, fault)?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let hops = hop_distances_from(graph, i);
        for (k, block) in blocks.iter().enumerate() {
            for (v, h) in hops.iter().enumerate() {
                if h.is_none_or(|h| h > k) {
                    worst = worst.max(block[(v, i)].abs());
                }
            }
        }
    }
    Ok(worst)
}

pub fn check_locality(rng: &mut impl Rng, cases: usize, fault: Option<Fault>) -> Result<PropertyOutcome> {
    let mut max_error: f64 = 0.0;
    for _ in 0..cases {
        let graph = random_grid_graph(rng);
        max_error = max_error.max(locality_violation(&graph, 8, fault)?);
    }
    Ok(PropertyOutcome {
        name: "k_hop_locality",
        passed: max_error <= LOCALITY_TOLERANCE,
        cases,
        max_error,
        tolerance: LOCALITY_TOLERANCE,
    })
}

/// Error of `fit_ridge` against `(FᵀF + γI)^{-1} Fᵀy` with an explicit inverse,
/// and the `∞`-norm of the objective gradient at the returned weights.
pub fn ridge_errors(f: &DMatrix<f64>, y: &[f64], gamma: f64) -> Result<(f64, f64)> {
    let p = f.ncols();
    let model = fit_ridge(&DesignMatrix::from_features(f.clone())?, y, gamma)?;
    let w = DVector::from_column_slice(model.weights());
    let yv = DVector::from_column_slice(y);
    let a = f.transpose() * f + DMatrix::identity(p, p) * gamma;
    let inv = a
        .try_inverse()
        .ok_or_else(|| crate::error::Error::Singular("oracle inverse failed".into()))?;
    let oracle = inv * f.transpose() * &yv;
    let err = (&w - oracle).amax();
    let grad = 2.0 * (f.transpose() * (f * &w - &yv)) + 2.0 * gamma * &w;
    Ok((err, grad.amax()))
}

pub fn check_ridge(rng: &mut impl Rng, cases: usize) -> Result<(PropertyOutcome, PropertyOutcome)> {
    let mut max_err: f64 = 0.0;
    let mut max_grad: f64 = 0.0;
    for _ in 0..cases {
        let n = rng.random_range(10..=40);
        let p = rng.random_range(1..=10);
        let gamma = rng.random_range(0.1..2.0);
        let f = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (err, grad) = ridge_errors(&f, &y, gamma)?;
        max_err = max_err.max(err);
        max_grad = max_grad.max(grad);
    }
    Ok((
        PropertyOutcome {
            name: "ridge_oracle",
            passed: max_err <= RIDGE_TOLERANCE,
            cases,
            max_error: max_err,
            tolerance: RIDGE_TOLERANCE,
        },
        PropertyOutcome {
            name: "ridge_stationarity",
            passed: max_grad <= STATIONARITY_TOLERANCE,
            cases,
            max_error: max_grad,
            tolerance: STATIONARITY_TOLERANCE,
        },
    ))
}

/// Runs every property on small random instances drawn from `seed`.
pub fn run(seed: u64, fault: Option<Fault>) -> Result<SelfTestReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectral = check_spectral_equivalence(&mut rng, 50, fault)?;
    let locality = check_locality(&mut rng, 10, fault)?;
    let (ridge, stationarity) = check_ridge(&mut rng, 100)?;
    Ok(SelfTestReport {
        seed,
        outcomes: vec![spectral, locality, ridge, stationarity],
    })
}

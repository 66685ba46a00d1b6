//! Chebyshev polynomial filters on a scaled-shifted Laplacian.
//!
//! `T_k(L̃) X` is evaluated with the three-term recurrence
//! `Z_k = 2 L̃ Z_{k−1} − Z_{k−2}` using sparse products only, so order `k`
//! mixes values from vertices at most `k` hops apart.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::{LaplacianKind, LaplacianOperator};
use crate::parallel::Parallelism;
use crate::sparse::CsrMatrix;

/// Vertex count above which [`spectral_oracle`] refuses to run.
pub const DENSE_ORACLE_CAP: usize = 4096;

/// The `K` response blocks `T_0(L̃)X, …, T_{K−1}(L̃)X`, each `n × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterResponseStack {
    blocks: Vec<DMatrix<f64>>,
}

impl FilterResponseStack {
    pub fn order(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }
}

/// Chebyshev coefficients `θ_0..θ_{K−1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFilterSpec {
    theta: Vec<f64>,
}

impl SpectralFilterSpec {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::invalid("filter needs at least one coefficient"));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn order(&self) -> usize {
        self.theta.len()
    }
}

fn check_operator(lap_tilde: &LaplacianOperator, n: usize, k: usize) -> Result<()> {
    if lap_tilde.kind() != LaplacianKind::ScaledShifted {
        return Err(Error::invalid(format!(
            "Chebyshev filters need a scaled-shifted Laplacian, got {:?}",
            lap_tilde.kind()
        )));
    }
    if lap_tilde.dim() != n {
        return Err(Error::dims(
            format!("{} signal rows", lap_tilde.dim()),
            format!("{n} rows"),
        ));
    }
    if k == 0 {
        return Err(Error::invalid("filter order K must be at least 1"));
    }
    Ok(())
}

/// Runs the recurrence on one signal column and hands each `Z_k` to `visit`.
fn recurrence(m: &CsrMatrix, x: &[f64], k: usize, mut visit: impl FnMut(usize, &[f64])) {
    let n = x.len();
    visit(0, x);
    if k == 1 {
        return;
    }
    let mut prev = x.to_vec();
    let mut cur = m.mul_vec(x);
    visit(1, &cur);
    let mut next = vec![0.0; n];
    for order in 2..k {
        m.mul_vec_into(&cur, &mut next);
        for (z, p) in next.iter_mut().zip(&prev) {
            *z = 2.0 * *z - p;
        }
        visit(order, &next);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
}

pub fn chebyshev_responses(
    lap_tilde: &LaplacianOperator,
    x: &DMatrix<f64>,
    k: usize,
) -> Result<FilterResponseStack> {
    chebyshev_responses_with(lap_tilde, x, k, Parallelism::default())
}

/// Columns of `x` run independently, in parallel when `par` allows.
pub fn chebyshev_responses_with(
    lap_tilde: &LaplacianOperator,
    x: &DMatrix<f64>,
    k: usize,
    par: Parallelism,
) -> Result<FilterResponseStack> {
    let (n, d) = x.shape();
    check_operator(lap_tilde, n, k)?;
    let m = lap_tilde.matrix();
    let per_column: Vec<Vec<Vec<f64>>> = par.map_range(d, |j| {
        let mut out = Vec::with_capacity(k);
        recurrence(m, x.column(j).as_slice(), k, |_, z| out.push(z.to_vec()));
        out
    });
    let blocks = (0..k)
        .map(|order| {
            DMatrix::from_fn(n, d, |i, j| per_column[j][order][i])
        })
        .collect();
    Ok(FilterResponseStack { blocks })
}

/// `Σ_k θ_k T_k(L̃) x`.
pub fn apply_filter(
    lap_tilde: &LaplacianOperator,
    x: &[f64],
    spec: &SpectralFilterSpec,
) -> Result<Vec<f64>> {
    check_operator(lap_tilde, x.len(), spec.order())?;
    let mut out = vec![0.0; x.len()];
    recurrence(lap_tilde.matrix(), x, spec.order(), |order, z| {
        let t = spec.theta[order];
        for (o, zi) in out.iter_mut().zip(z) {
            *o += t * zi;
        }
    });
    Ok(out)
}

/// `U diag(ĝ(λ)) Uᵀ x` by dense eigendecomposition of a normalized Laplacian.
/// Verification path only; refuses more than [`DENSE_ORACLE_CAP`] vertices.
pub fn spectral_oracle(
    lap: &LaplacianOperator,
    x: &[f64],
    ghat: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    if lap.kind() != LaplacianKind::Normalized {
        return Err(Error::invalid(format!(
            "spectral oracle expects a normalized Laplacian, got {:?}",
            lap.kind()
        )));
    }
    let n = lap.dim();
    if n > DENSE_ORACLE_CAP {
        return Err(Error::TooLarge {
            n,
            cap: DENSE_ORACLE_CAP,
        });
    }
    if x.len() != n {
        return Err(Error::dims(n, x.len()));
    }
    let eig = SymmetricEigen::new(lap.matrix().to_dense());
    let u = &eig.eigenvectors;
    let mut coeffs = u.tr_mul(&DVector::from_column_slice(x));
    for (c, &lambda) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c *= ghat(lambda);
    }
    Ok((u * coeffs).as_slice().to_vec())
}

/// Regression inputs laid out block-major: column `k·d + j` holds filter
/// order `k` of feature `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    order: usize,
    feature_dim: usize,
}

impl DesignMatrix {
    /// Wraps a matrix whose columns already follow the block-major layout.
    pub fn new(matrix: DMatrix<f64>, order: usize, feature_dim: usize) -> Result<Self> {
        if order == 0 || feature_dim == 0 || matrix.ncols() != order * feature_dim {
            return Err(Error::dims(
                format!("{order}x{feature_dim} columns"),
                format!("{} columns", matrix.ncols()),
            ));
        }
        Ok(Self {
            matrix,
            order,
            feature_dim,
        })
    }

    /// Raw features as an order-1 design.
    pub fn from_features(x: DMatrix<f64>) -> Result<Self> {
        let d = x.ncols();
        Self::new(x, 1, d)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// `F(X) = [T_0(L̃)X, …, T_{K−1}(L̃)X]`.
pub fn design_matrix(stack: &FilterResponseStack) -> DesignMatrix {
    let (n, d, k) = (stack.n_vertices(), stack.feature_dim(), stack.order());
    let mut f = DMatrix::zeros(n, k * d);
    for (order, block) in stack.blocks.iter().enumerate() {
        f.columns_mut(order * d, d).copy_from(block);
    }
    DesignMatrix {
        matrix: f,
        order: k,
        feature_dim: d,
    }
}

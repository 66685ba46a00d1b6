//! Closed-form ridge regression over the filter-response design matrix,
//! Gaussian label maps and peak search.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::DesignMatrix;
use crate::parallel::Parallelism;

/// Ridge weights `w` of length `K·d`, block-major like the design matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionModel {
    weights: Vec<f64>,
    order: usize,
    feature_dim: usize,
    gamma: f64,
}

impl RegressionModel {
    pub fn new(weights: Vec<f64>, order: usize, feature_dim: usize, gamma: f64) -> Result<Self> {
        if weights.len() != order * feature_dim || order == 0 || feature_dim == 0 {
            return Err(Error::dims(
                format!("{order}x{feature_dim} weights"),
                weights.len(),
            ));
        }
        if gamma.is_nan() || gamma < 0.0 {
            return Err(Error::invalid(format!("gamma must be >= 0, got {gamma}")));
        }
        Ok(Self {
            weights,
            order,
            feature_dim,
            gamma,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Text record: a `K d gamma` header line followed by one weight per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", self.order, self.feature_dim, self.gamma)?;
        for w in &self.weights {
            writeln!(out, "{w}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: "<model>".into(),
            line,
            message,
        };
        let mut lines = input.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "missing header".into()))?;
        let header = header.map_err(|e| Error::io("<model>", e))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(bad(1, format!("expected `K d gamma`, got {header:?}")));
        }
        let order = fields[0]
            .parse()
            .map_err(|_| bad(1, format!("bad K {:?}", fields[0])))?;
        let feature_dim = fields[1]
            .parse()
            .map_err(|_| bad(1, format!("bad d {:?}", fields[1])))?;
        let gamma = fields[2]
            .parse()
            .map_err(|_| bad(1, format!("bad gamma {:?}", fields[2])))?;
        let mut weights = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io("<model>", e))?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            weights.push(
                t.parse()
                    .map_err(|_| bad(i + 1, format!("bad weight {t:?}")))?,
            );
        }
        Self::new(weights, order, feature_dim, gamma)
    }
}

/// Gaussian-shaped regression target over a `rows × cols` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    peak_index: usize,
    sigma: f64,
}

impl LabelMap {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn peak_index(&self) -> usize {
        self.peak_index
    }

    pub fn peak(&self) -> (usize, usize) {
        (self.peak_index / self.cols, self.peak_index % self.cols)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

pub fn gaussian_label_map(
    rows: usize,
    cols: usize,
    center: (usize, usize),
    sigma: f64,
) -> Result<LabelMap> {
    let (r0, c0) = center;
    if r0 >= rows || c0 >= cols {
        return Err(Error::invalid(format!(
            "label center ({r0}, {c0}) outside a {rows}x{cols} grid"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("label sigma must be positive, got {sigma}")));
    }
    let denom = 2.0 * sigma * sigma;
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let dr = r as f64 - r0 as f64;
            let dc = c as f64 - c0 as f64;
            values.push((-(dr * dr + dc * dc) / denom).exp());
        }
    }
    Ok(LabelMap {
        values,
        rows,
        cols,
        peak_index: r0 * cols + c0,
        sigma,
    })
}

/// `FᵀF`, assembled from column panels that can be computed in parallel.
pub fn gram(f: &DMatrix<f64>, par: Parallelism) -> DMatrix<f64> {
    const PANEL: usize = 32;
    let p = f.ncols();
    let panels = p.div_ceil(PANEL);
    let parts = par.map_range(panels, |b| {
        let start = b * PANEL;
        let width = PANEL.min(p - start);
        f.tr_mul(&f.columns(start, width))
    });
    let mut g = DMatrix::zeros(p, p);
    for (b, part) in parts.into_iter().enumerate() {
        g.columns_mut(b * PANEL, part.ncols()).copy_from(&part);
    }
    g
}

/// `w = (FᵀF + γI)^{-1} Fᵀy` through a Cholesky solve.
///
/// If the factorization fails with `γ > 0` (numerically indefinite system)
/// the solve falls back to an SVD least-squares solution. With `γ = 0` a
/// rank-deficient `FᵀF` is reported as [`Error::Singular`].
pub fn fit_ridge(f: &DesignMatrix, y: &[f64], gamma: f64) -> Result<RegressionModel> {
    fit_ridge_with(f, y, gamma, Parallelism::default())
}

pub fn fit_ridge_with(
    f: &DesignMatrix,
    y: &[f64],
    gamma: f64,
    par: Parallelism,
) -> Result<RegressionModel> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be >= 0, got {gamma}")));
    }
    let m = f.matrix();
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::invalid("design matrix is empty"));
    }
    if y.len() != m.nrows() {
        return Err(Error::dims(format!("{} labels", m.nrows()), y.len()));
    }
    let p = m.ncols();
    let mut a = gram(m, par);
    for i in 0..p {
        a[(i, i)] += gamma;
    }
    let rhs = m.tr_mul(&DVector::from_column_slice(y));

    let w = match a.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => {
            let svd = a.svd(true, true);
            let smax = svd.singular_values.max();
            let eps = f64::EPSILON * p as f64 * smax;
            if gamma == 0.0 && svd.singular_values.iter().any(|&s| s <= eps) {
                return Err(Error::Singular(
                    "FᵀF is rank-deficient and gamma = 0".into(),
                ));
            }
            svd.solve(&rhs, eps).map_err(|e| Error::Singular(e.into()))?
        }
    };
    RegressionModel::new(w.as_slice().to_vec(), f.order(), f.feature_dim(), gamma)
}

/// `ỹ = F w`.
pub fn predict_response(f: &DesignMatrix, model: &RegressionModel) -> Result<Vec<f64>> {
    let m = f.matrix();
    if m.ncols() != model.weights.len() {
        return Err(Error::dims(
            format!("{} design columns", model.weights.len()),
            m.ncols(),
        ));
    }
    Ok((m * DVector::from_column_slice(&model.weights))
        .as_slice()
        .to_vec())
}

/// Coordinates of the maximum; ties go to the smallest row-major index.
pub fn locate_peak(response: &[f64], rows: usize, cols: usize) -> Result<(usize, usize)> {
    if rows == 0 || cols == 0 || response.len() != rows * cols {
        return Err(Error::dims(format!("{rows}x{cols} responses"), response.len()));
    }
    let mut best = 0;
    for (i, &v) in response.iter().enumerate().skip(1) {
        if v > response[best] || response[best].is_nan() && !v.is_nan() {
            best = i;
        }
    }
    Ok((best / cols, best % cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(m: DMatrix<f64>) -> DesignMatrix {
        DesignMatrix::from_features(m).unwrap()
    }

    #[test]
    fn label_map_values() {
        let l = gaussian_label_map(3, 3, (1, 1), 1.0).unwrap();
        assert_eq!(l.values()[4], 1.0);
        assert!((l.values()[0] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((l.values()[1] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(l.peak(), (1, 1));
        let one = gaussian_label_map(1, 1, (0, 0), 2.0).unwrap();
        assert_eq!(one.values(), &[1.0]);
        assert!(gaussian_label_map(3, 3, (3, 0), 1.0).is_err());
        assert!(gaussian_label_map(3, 3, (0, 0), 0.0).is_err());
    }

    #[test]
    fn label_map_peak_is_located() {
        let l = gaussian_label_map(7, 9, (2, 5), 1.5).unwrap();
        assert_eq!(locate_peak(l.values(), 7, 9).unwrap(), (2, 5));
    }

    #[test]
    fn identity_design_halves_labels() {
        let y = [1.0, -2.0, 4.0];
        let m = fit_ridge(&design(DMatrix::identity(3, 3)), &y, 1.0).unwrap();
        for (w, want) in m.weights().iter().zip([0.5, -1.0, 2.0]) {
            assert!((w - want).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_interpolation_without_regularizer() {
        let f = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let y = [1.0, 2.0, 3.0];
        let d = design(f.clone());
        let m = fit_ridge(&d, &y, 0.0).unwrap();
        let want = f.clone().lu().solve(&DVector::from_column_slice(&y)).unwrap();
        for (a, b) in m.weights().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        let pred = predict_response(&d, &m).unwrap();
        assert!(pred.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn rank_deficient_without_regularizer_is_singular() {
        let f = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(
            fit_ridge(&design(f.clone()), &[1.0, 2.0, 3.0], 0.0),
            Err(Error::Singular(_))
        ));
        assert!(fit_ridge(&design(f), &[1.0, 2.0, 3.0], 0.5).is_ok());
    }

    #[test]
    fn zero_model_scores_zero() {
        let m = RegressionModel::new(vec![0.0; 4], 2, 2, 1.0).unwrap();
        let f = DesignMatrix::new(DMatrix::from_element(5, 4, 3.0), 2, 2).unwrap();
        assert_eq!(predict_response(&f, &m).unwrap(), vec![0.0; 5]);
        let short = design(DMatrix::zeros(5, 3));
        assert!(predict_response(&short, &m).is_err());
    }

    #[test]
    fn peak_tie_break() {
        assert_eq!(locate_peak(&[0.0, 0.0, 1.0, 0.0], 2, 2).unwrap(), (1, 0));
        assert_eq!(locate_peak(&[3.0; 6], 2, 3).unwrap(), (0, 0));
        assert_eq!(locate_peak(&[f64::NAN, 1.0, 2.0, 2.0], 2, 2).unwrap(), (1, 0));
        assert!(locate_peak(&[1.0; 5], 2, 3).is_err());
    }

    #[test]
    fn model_text_roundtrip() {
        let m = RegressionModel::new(vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0], 2, 2, 1.0).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("2 2 1\n"));
        let back = RegressionModel::read_text(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert!(RegressionModel::read_text(&b"2 2 1\n0.5\n"[..]).is_err());
        assert!(RegressionModel::read_text(&b"2 x 1\n"[..]).is_err());
    }

    #[test]
    fn gram_matches_direct_product() {
        let f = DMatrix::from_fn(40, 70, |i, j| ((i * 13 + j * 7) % 11) as f64 - 5.0);
        let direct = f.tr_mul(&f);
        assert_eq!(gram(&f, Parallelism::Sequential), direct);
        assert_eq!(gram(&f, Parallelism::Parallel), direct);
    }
}

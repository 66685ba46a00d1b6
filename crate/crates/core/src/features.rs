//! Per-vertex feature channels on a square feature grid, and PCA projection.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resample_plane, Frame};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    /// Luminance, one channel.
    RawGray,
    /// R, G, B planes; gray input is replicated.
    RawColor,
    /// Orientation histogram of image gradients, `hog_bins` channels.
    GradientHistogram,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::RawGray => "gray",
            Channel::RawColor => "color",
            Channel::GradientHistogram => "hog",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gray" => Some(Channel::RawGray),
            "color" => Some(Channel::RawColor),
            "hog" => Some(Channel::GradientHistogram),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub channels: Vec<Channel>,
    /// Side of the square feature grid; odd so the center vertex is unique.
    pub grid_size: usize,
    pub hog_bins: usize,
    /// Cell side in patch pixels for histogram aggregation.
    pub hog_cell: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            channels: vec![Channel::RawGray, Channel::GradientHistogram],
            grid_size: 57,
            hog_bins: 9,
            hog_cell: 4,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::invalid("at least one feature channel is required"));
        }
        if self.grid_size == 0 || self.grid_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "grid_size must be odd and positive, got {}",
                self.grid_size
            )));
        }
        if self.hog_bins == 0 || self.hog_cell == 0 {
            return Err(Error::invalid("hog_bins and hog_cell must be positive"));
        }
        Ok(())
    }

    /// Number of feature columns produced by [`extract_features`].
    pub fn dim(&self) -> usize {
        self.channels
            .iter()
            .map(|c| match c {
                Channel::RawGray => 1,
                Channel::RawColor => 3,
                Channel::GradientHistogram => self.hog_bins,
            })
            .sum()
    }
}

/// `(rows·cols) × d` features, vertex order row-major like the grid graph.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub rows: usize,
    pub cols: usize,
    pub data: DMatrix<f64>,
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

pub fn extract_features(patch: &Frame, spec: &FeatureSpec) -> Result<FeatureMap> {
    if patch.is_empty() {
        return Err(Error::invalid("cannot extract features from an empty patch"));
    }
    spec.validate()?;
    let (w, h) = (patch.width(), patch.height());
    let g = spec.grid_size;

    let mut planes: Vec<Vec<f64>> = Vec::with_capacity(spec.dim());
    for channel in &spec.channels {
        match channel {
            Channel::RawGray => planes.push(resample_plane(&patch.luma(), w, h, g, g)),
            Channel::RawColor => {
                let src = if patch.channels() == 3 {
                    patch.planes()
                } else {
                    vec![patch.luma(); 3]
                };
                planes.extend(src.iter().map(|p| resample_plane(p, w, h, g, g)));
            }
            Channel::GradientHistogram => {
                let cells = gradient_histogram(&patch.luma(), w, h, spec.hog_bins, spec.hog_cell);
                planes.extend(
                    cells
                        .bins
                        .iter()
                        .map(|p| resample_plane(p, cells.cols, cells.rows, g, g)),
                );
            }
        }
    }

    let n = g * g;
    let mut data = DMatrix::zeros(n, planes.len());
    for (j, plane) in planes.iter_mut().enumerate() {
        standardize(plane);
        data.column_mut(j).copy_from_slice(plane);
    }
    Ok(FeatureMap {
        rows: g,
        cols: g,
        data,
    })
}

/// Zero mean and unit variance; (near-)constant planes become all zeros.
fn standardize(plane: &mut [f64]) {
    let n = plane.len() as f64;
    let mean = plane.iter().sum::<f64>() / n;
    let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-9 * mean.abs().max(1.0) {
        plane.iter_mut().for_each(|v| *v = 0.0);
    } else {
        plane.iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
}

/// Cell-aggregated orientation histograms, one plane per bin.
#[derive(Clone, Debug, PartialEq)]
pub struct CellHistograms {
    pub rows: usize,
    pub cols: usize,
    pub bins: Vec<Vec<f64>>,
}

/// Central-difference gradients, unsigned orientation in `[0, π)`, magnitude
/// split linearly between the two nearest bins. Bin `b` is centered on
/// orientation `b·π/bins`, so a purely horizontal gradient lands in bin 0.
pub fn gradient_histogram(
    gray: &[f64],
    width: usize,
    height: usize,
    bins: usize,
    cell: usize,
) -> CellHistograms {
    let rows = height.div_ceil(cell);
    let cols = width.div_ceil(cell);
    let mut out = vec![vec![0.0; rows * cols]; bins];
    let px = |x: usize, y: usize| gray[y * width + x];
    let bin_width = PI / bins as f64;
    for y in 0..height {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(height - 1));
        for x in 0..width {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(width - 1));
            let gx = px(xp, y) - px(xm, y);
            let gy = px(x, yp) - px(x, ym);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += PI;
            }
            if theta >= PI {
                theta -= PI;
            }
            let pos = theta / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = lo as usize % bins;
            let b1 = (b0 + 1) % bins;
            let c = (y / cell) * cols + x / cell;
            out[b0][c] += mag * (1.0 - frac);
            out[b1][c] += mag * frac;
        }
    }
    CellHistograms {
        rows,
        cols,
        bins: out,
    }
}

/// Mean vector and orthonormal principal directions (columns of `basis`).
#[derive(Clone, Debug, PartialEq)]
pub struct PcaProjection {
    pub mean: DVector<f64>,
    pub basis: DMatrix<f64>,
    /// Variance captured by each retained direction, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaProjection {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Eigendecomposition of the `1/n` covariance of `x`. Each direction's sign
/// is fixed so that its largest-magnitude entry is positive.
pub fn fit_pca(x: &DMatrix<f64>, d_target: usize) -> Result<PcaProjection> {
    let (n, d) = x.shape();
    if d_target == 0 || d_target > n.min(d) {
        return Err(Error::invalid(format!(
            "PCA target dimension {d_target} must be in 1..={}",
            n.min(d)
        )));
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut basis = DMatrix::zeros(d, d_target);
    let mut explained_variance = Vec::with_capacity(d_target);
    for (k, &idx) in order.iter().take(d_target).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v = -v;
        }
        basis.set_column(k, &v);
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(PcaProjection {
        mean,
        basis,
        explained_variance,
    })
}

/// `(X − mean) · basis`.
pub fn project(x: &DMatrix<f64>, proj: &PcaProjection) -> Result<DMatrix<f64>> {
    if x.ncols() != proj.input_dim() {
        return Err(Error::dims(
            format!("{} feature columns", proj.input_dim()),
            x.ncols(),
        ));
    }
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= proj.mean.transpose();
    }
    Ok(centered * &proj.basis)
}

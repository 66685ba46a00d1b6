//! Frame-by-frame localization: crop the candidate region, filter its features
//! on the grid graph, score with the ridge model, pick the peak, search
//! scales, refit at the new location and blend the model.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::features::{extract_features, fit_pca, project, PcaProjection};
use crate::filter::{chebyshev_responses_with, design_matrix, DesignMatrix};
use crate::graph::{
    build_grid_graph, estimate_lambda_max_with, normalized_laplacian, scaled_laplacian, GridGraph,
    LaplacianOperator, PowerIterationOptions,
};
use crate::image::Frame;
use crate::regression::{
    fit_ridge_with, gaussian_label_map, locate_peak, predict_response, LabelMap, RegressionModel,
};

/// Axis-aligned box, top-left corner and size in 0-based image pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn from_center(center: (f64, f64), size: (f64, f64)) -> Self {
        Self {
            x: center.0 - size.0 / 2.0,
            y: center.1 - size.1 / 2.0,
            w: size.0,
            h: size.1,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(format!("degenerate bounding box {self:?}")));
        }
        Ok(())
    }
}

/// `min(k_cap, ⌈max(h, w) / skip_step⌉)`, with `h`, `w` in grid cells.
pub fn filter_order_for_target(h: usize, w: usize, skip_step: usize, k_cap: usize) -> usize {
    h.max(w).max(1).div_ceil(skip_step.max(1)).min(k_cap).max(1)
}

/// Scale multipliers `a^r` for `r` from `⌊(1−S)/2⌋` to `⌊(S−1)/2⌋`.
pub fn scale_factors(count: usize, step: f64) -> Vec<f64> {
    let (lo, hi) = scale_exponent_range(count);
    (lo..=hi).map(|r| step.powi(r)).collect()
}

fn scale_exponent_range(count: usize) -> (i32, i32) {
    let s = count as i32;
    ((1 - s).div_euclid(2), (s - 1).div_euclid(2))
}

/// Elementwise `(1 − α) w_old + α w_t`.
pub fn update_model(
    w_old: &RegressionModel,
    w_t: &RegressionModel,
    alpha: f64,
) -> Result<RegressionModel> {
    if w_old.order() != w_t.order() || w_old.feature_dim() != w_t.feature_dim() {
        return Err(Error::dims(
            format!("{}x{} model", w_old.order(), w_old.feature_dim()),
            format!("{}x{} model", w_t.order(), w_t.feature_dim()),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must be in [0, 1], got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(w_old.clone());
    }
    if alpha == 1.0 {
        return Ok(w_t.clone());
    }
    let weights = w_old
        .weights()
        .iter()
        .zip(w_t.weights())
        .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
        .collect();
    RegressionModel::new(weights, w_old.order(), w_old.feature_dim(), w_old.gamma())
}

/// Result of the scale search around the current center.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleEstimate {
    /// Every evaluated multiplier, ascending.
    pub factors: Vec<f64>,
    /// Peak detection score per factor.
    pub scores: Vec<f64>,
    pub best: usize,
}

impl ScaleEstimate {
    pub fn factor(&self) -> f64 {
        self.factors[self.best]
    }

    /// Exponent `r` of the chosen factor `a^r`.
    pub fn exponent(&self) -> i32 {
        self.best as i32 - (self.factors.len() as i32 - 1) / 2
    }
}

/// The graph and operator shared by every frame of a sequence.
#[derive(Debug)]
pub struct GridOperator {
    pub graph: GridGraph,
    pub lap_tilde: LaplacianOperator,
}

#[derive(Clone, Debug)]
pub struct TrackerState {
    pub center: (f64, f64),
    /// `(w, h)` in image pixels, including the accumulated scale.
    pub target_size: (f64, f64),
    /// Accumulated scale multiplier relative to the first frame.
    pub scale: f64,
    pub model: RegressionModel,
    pub pca: PcaProjection,
    pub operator: Arc<GridOperator>,
    pub label: LabelMap,
    pub order: usize,
    pub frame_index: usize,
    pub frame_size: (usize, usize),
    pub config: TrackerConfig,
}

impl TrackerState {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::from_center(self.center, self.target_size)
    }

    fn grid(&self) -> usize {
        self.config.features.grid_size
    }

    fn region(&self, target: (f64, f64)) -> (f64, f64) {
        (
            target.0 * self.config.search_factor,
            target.1 * self.config.search_factor,
        )
    }

    /// Design matrix of the region of size `region` centered at `center`.
    pub fn design_at(
        &self,
        frame: &Frame,
        center: (f64, f64),
        region: (f64, f64),
    ) -> Result<DesignMatrix> {
        let raw = region_features(frame, center, region, &self.config)?;
        let x = project(&raw, &self.pca)?;
        let stack = chebyshev_responses_with(
            &self.operator.lap_tilde,
            &x,
            self.order,
            self.config.parallelism,
        )?;
        Ok(design_matrix(&stack))
    }

    /// Detection scores `F(X) w` over the feature grid.
    pub fn response_at(
        &self,
        frame: &Frame,
        center: (f64, f64),
        region: (f64, f64),
    ) -> Result<Vec<f64>> {
        predict_response(&self.design_at(frame, center, region)?, &self.model)
    }

    fn check_frame(&self, frame: &Frame) -> Result<()> {
        if (frame.width(), frame.height()) != self.frame_size {
            return Err(Error::dims(
                format!("{}x{} frame", self.frame_size.0, self.frame_size.1),
                format!("{}x{} frame", frame.width(), frame.height()),
            ));
        }
        Ok(())
    }

    /// Scores `S` rescaled crops at the current center with the current model.
    pub fn estimate_scale(&self, frame: &Frame) -> Result<ScaleEstimate> {
        self.check_frame(frame)?;
        let factors = scale_factors(self.config.scale_count, self.config.scale_step);
        let base = self.region(self.target_size);
        // The per-scale pipeline runs sequentially inside the parallel map.
        let mut inner = self.clone();
        inner.config.parallelism = crate::parallel::Parallelism::Sequential;
        let scores = self
            .config
            .parallelism
            .map_slice(&factors, |&f| {
                inner
                    .response_at(frame, self.center, (base.0 * f, base.1 * f))
                    .map(|r| r.into_iter().fold(f64::NEG_INFINITY, f64::max))
            })
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;

        // Highest score wins; ties go to the factor closest to 1.
        let mid = (factors.len() - 1) / 2;
        let mut best = mid;
        for step in 1..=mid {
            for idx in [mid - step, mid + step] {
                if scores[idx] > scores[best] {
                    best = idx;
                }
            }
        }
        Ok(ScaleEstimate {
            factors,
            scores,
            best,
        })
    }

    /// Locates the target in `frame`, updates scale and model, and returns the
    /// new box.
    pub fn track(&mut self, frame: &Frame) -> Result<BoundingBox> {
        self.check_frame(frame)?;
        let g = self.grid();
        let region = self.region(self.target_size);
        let response = self.response_at(frame, self.center, region)?;
        let (r, c) = locate_peak(&response, g, g)?;
        let (r0, c0) = self.label.peak();
        let dx = (c as f64 - c0 as f64) * region.0 / g as f64;
        let dy = (r as f64 - r0 as f64) * region.1 / g as f64;
        self.center = clamp_center(
            (self.center.0 + dx, self.center.1 + dy),
            self.frame_size,
        );

        let scale = self.estimate_scale(frame)?.factor();
        self.scale *= scale;
        self.target_size = (self.target_size.0 * scale, self.target_size.1 * scale);

        let f = self.design_at(frame, self.center, self.region(self.target_size))?;
        let w_t = fit_ridge_with(&f, self.label.values(), self.config.gamma, self.config.parallelism)?;
        self.model = update_model(&self.model, &w_t, self.config.alpha)?;
        self.frame_index += 1;
        Ok(self.bbox())
    }
}

fn clamp_center(c: (f64, f64), frame_size: (usize, usize)) -> (f64, f64) {
    (
        c.0.clamp(0.0, frame_size.0 as f64 - 1.0),
        c.1.clamp(0.0, frame_size.1 as f64 - 1.0),
    )
}

/// Native-resolution patch side, bounded to keep feature extraction cheap.
fn patch_side(extent: f64, grid: usize) -> usize {
    (extent.round() as usize).clamp(16, 4 * grid)
}

/// Raw (unprojected) features of a candidate region, cropped near its native
/// resolution.
pub fn region_features(
    frame: &Frame,
    center: (f64, f64),
    region: (f64, f64),
    config: &TrackerConfig,
) -> Result<DMatrix<f64>> {
    let g = config.features.grid_size;
    let patch = frame.crop(
        center,
        region,
        patch_side(region.0, g),
        patch_side(region.1, g),
    );
    Ok(extract_features(&patch, &config.features)?.data)
}

/// Builds the grid graph and its scaled-shifted Laplacian for `config`.
pub fn build_operator(config: &TrackerConfig) -> Result<GridOperator> {
    let g = config.features.grid_size;
    let graph = build_grid_graph(g, g, config.neighborhood)?;
    let lap = normalized_laplacian(&graph);
    let opts = PowerIterationOptions {
        seed: config.seed,
        ..Default::default()
    };
    let lambda_max = estimate_lambda_max_with(&lap, config.lambda_max_mode, &opts)?;
    let lap_tilde = scaled_laplacian(&lap, lambda_max)?;
    Ok(GridOperator { graph, lap_tilde })
}

pub fn init_tracker(frame: &Frame, bbox: BoundingBox, config: TrackerConfig) -> Result<TrackerState> {
    let operator = Arc::new(build_operator(&config)?);
    init_tracker_with_operator(frame, bbox, config, operator)
}

/// As [`init_tracker`], reusing a prebuilt operator (it must match `config`).
pub fn init_tracker_with_operator(
    frame: &Frame,
    bbox: BoundingBox,
    config: TrackerConfig,
    operator: Arc<GridOperator>,
) -> Result<TrackerState> {
    config.validate()?;
    bbox.validate()?;
    if frame.is_empty() {
        return Err(Error::invalid("empty frame"));
    }
    let (cx, cy) = bbox.center();
    if cx < 0.0 || cy < 0.0 || cx > frame.width() as f64 - 1.0 || cy > frame.height() as f64 - 1.0
    {
        return Err(Error::invalid(format!(
            "bounding box center ({cx}, {cy}) outside the {}x{} frame",
            frame.width(),
            frame.height()
        )));
    }
    let g = config.features.grid_size;
    if operator.graph.rows() != g || operator.graph.spec() != &config.neighborhood {
        return Err(Error::invalid("grid operator does not match the configuration"));
    }

    let target = (bbox.w, bbox.h);
    let region = (target.0 * config.search_factor, target.1 * config.search_factor);
    let raw = region_features(frame, (cx, cy), region, &config)?;
    let d_target = config.pca_dim.min(raw.ncols()).min(raw.nrows());
    let pca = fit_pca(&raw, d_target)?;
    let x = project(&raw, &pca)?;

    // target extent on the feature lattice
    let cells_w = g as f64 / config.search_factor;
    let cells_h = g as f64 / config.search_factor;
    let order = filter_order_for_target(
        cells_h.round().max(1.0) as usize,
        cells_w.round().max(1.0) as usize,
        config.neighborhood.skip_step,
        config.k_cap,
    );
    let sigma = config.label_sigma_ratio * cells_w.max(cells_h);
    let label = gaussian_label_map(g, g, (g / 2, g / 2), sigma)?;

    let stack = chebyshev_responses_with(&operator.lap_tilde, &x, order, config.parallelism)?;
    let f = design_matrix(&stack);
    let model = fit_ridge_with(&f, label.values(), config.gamma, config.parallelism)?;

    Ok(TrackerState {
        center: (cx, cy),
        target_size: target,
        scale: 1.0,
        model,
        pca,
        operator,
        label,
        order,
        frame_index: 1,
        frame_size: (frame.width(), frame.height()),
        config,
    })
}

/// Functional form of [`TrackerState::track`].
pub fn track_frame(mut state: TrackerState, frame: &Frame) -> Result<(TrackerState, BoundingBox)> {
    let bbox = state.track(frame)?;
    Ok((state, bbox))
}

pub fn estimate_scale(state: &TrackerState, frame: &Frame) -> Result<f64> {
    Ok(state.estimate_scale(frame)?.factor())
}

/// Runs one-pass tracking over `frames`, initialized with `init` on the first.
/// The first returned box is `init` itself.
pub fn track_sequence<I>(frames: I, init: BoundingBox, config: TrackerConfig) -> Result<Vec<BoundingBox>>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    let mut iter = frames.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::invalid("sequence has no frames"))??;
    let mut state = init_tracker(&first, init, config)?;
    let mut boxes = vec![init];
    for frame in iter {
        boxes.push(state.track(&frame?)?);
    }
    Ok(boxes)
}

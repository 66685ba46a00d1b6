//! Visual object tracking with localized spectral filters on pixel-grid graphs.
//!
//! The candidate region around the target is treated as a lattice graph whose
//! vertices carry multi-channel features. Chebyshev polynomials of the scaled
//! normalized Laplacian produce `K` filter responses per vertex, each confined
//! to a `k`-hop neighborhood, and a ridge regression over those responses maps
//! the region onto a Gaussian peak at the target center.
//!
//! ```no_run
//! use spectrack::{init_tracker, BoundingBox, Frame, TrackerConfig};
//! # fn main() -> spectrack::Result<()> {
//! let first = Frame::load("seq/img/0001.jpg".as_ref())?;
//! let mut state = init_tracker(&first, BoundingBox::new(100.0, 80.0, 40.0, 60.0)?, TrackerConfig::default())?;
//! let next = Frame::load("seq/img/0002.jpg".as_ref())?;
//! let bbox = state.track(&next)?;
//! # Ok(()) }
//! ```

pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod filter;
pub mod graph;
pub mod image;
pub mod parallel;
pub mod regression;
pub mod selftest;
pub mod sparse;
pub mod synthetic;
pub mod tracker;

pub use config::TrackerConfig;
pub use error::{Error, Result};
pub use filter::{
    apply_filter, chebyshev_responses, design_matrix, spectral_oracle, DesignMatrix,
    FilterResponseStack, SpectralFilterSpec,
};
pub use graph::{
    build_grid_graph, estimate_lambda_max, hop_distance, normalized_laplacian, scaled_laplacian,
    GridGraph, LambdaMaxMode, LaplacianKind, LaplacianOperator, NeighborhoodSpec, Pattern,
    Weighting,
};
pub use image::Frame;
pub use parallel::Parallelism;
pub use regression::{fit_ridge, gaussian_label_map, locate_peak, predict_response, LabelMap, RegressionModel};
pub use tracker::{
    estimate_scale, filter_order_for_target, init_tracker, track_frame, update_model, BoundingBox,
    TrackerState,
};

//! Tracker configuration and its flat `key = value` text form.
//!
//! Every key is optional; missing keys take the defaults below. Lines starting
//! with `#` and blank lines are ignored.
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `neighborhood` | `adjacent4`, `adjacent8`, `skip4`, `skip4_wide` (or `case1`..`case4`) | `skip4` |
//! | `skip_step` | integer | pattern default (1, 1, 2, 3) |
//! | `weighting` | `binary`, `gaussian` | `binary` |
//! | `gaussian_sigma` | real | `skip_step` |
//! | `channels` | comma list of `gray`, `color`, `hog` | `gray,hog` |
//! | `grid_size` | odd integer | 57 |
//! | `hog_bins` / `hog_cell` | integers | 9 / 4 |
//! | `pca_dim` | integer | 100 |
//! | `gamma` | real ≥ 0 | 1 |
//! | `alpha` | real in [0, 1] | 0.01 |
//! | `search_factor` | real > 0 | 2.4 |
//! | `label_sigma_ratio` | real > 0 | 0.1 |
//! | `scale_count` | odd integer | 33 |
//! | `scale_step` | real > 1 | 1.02 |
//! | `lambda_max` | `bound2`, `power` | `bound2` |
//! | `k_cap` | integer ≥ 1 | 60 |
//! | `seed` | integer | 0 |
//! | `parallel` | `true`, `false` | `true` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Channel, FeatureSpec};
use crate::graph::{LambdaMaxMode, NeighborhoodSpec, Pattern, Weighting};
use crate::parallel::Parallelism;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub neighborhood: NeighborhoodSpec,
    pub features: FeatureSpec,
    /// Upper bound on the PCA output dimension.
    pub pca_dim: usize,
    pub gamma: f64,
    /// Model learning rate.
    pub alpha: f64,
    /// Candidate region side relative to the target.
    pub search_factor: f64,
    /// Label sigma as a fraction of the larger target side (grid cells).
    pub label_sigma_ratio: f64,
    pub scale_count: usize,
    pub scale_step: f64,
    pub lambda_max_mode: LambdaMaxMode,
    pub k_cap: usize,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            neighborhood: NeighborhoodSpec::new(Pattern::Skip4),
            features: FeatureSpec::default(),
            pca_dim: 100,
            gamma: 1.0,
            alpha: 0.01,
            search_factor: 2.4,
            label_sigma_ratio: 0.1,
            scale_count: 33,
            scale_step: 1.02,
            lambda_max_mode: LambdaMaxMode::Bound2,
            k_cap: 60,
            seed: 0,
            parallelism: Parallelism::Parallel,
        }
    }
}

fn cfg_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let nb = |e: Error| cfg_err("neighborhood", e.to_string());
        self.neighborhood.validate().map_err(nb)?;
        self.features
            .validate()
            .map_err(|e| cfg_err("features", e.to_string()))?;
        if self.features.grid_size <= self.neighborhood.skip_step {
            return Err(cfg_err("grid_size", "must exceed skip_step"));
        }
        if self.pca_dim == 0 {
            return Err(cfg_err("pca_dim", "must be positive"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(cfg_err("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(cfg_err("alpha", format!("must be in [0, 1], got {}", self.alpha)));
        }
        if !(self.search_factor > 0.0 && self.search_factor.is_finite()) {
            return Err(cfg_err("search_factor", "must be positive"));
        }
        if !(self.label_sigma_ratio > 0.0 && self.label_sigma_ratio.is_finite()) {
            return Err(cfg_err("label_sigma_ratio", "must be positive"));
        }
        if self.scale_count.is_multiple_of(2) {
            return Err(cfg_err(
                "scale_count",
                format!("must be odd, got {}", self.scale_count),
            ));
        }
        if !(self.scale_step > 1.0 && self.scale_step.is_finite()) {
            return Err(cfg_err("scale_step", format!("must exceed 1, got {}", self.scale_step)));
        }
        if self.k_cap == 0 {
            return Err(cfg_err("k_cap", "must be at least 1"));
        }
        Ok(())
    }

    /// Parses the key/value text form. Errors name the offending key.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: "<config>".into(),
                line: i + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                return Err(cfg_err(&key, "given more than once"));
            }
        }

        let mut take = |key: &str| entries.remove(key).map(|(_, v)| v);
        let mut cfg = TrackerConfig::default();

        if let Some(v) = take("neighborhood") {
            let pattern = match v.as_str() {
                "adjacent4" | "case1" => Pattern::Adjacent4,
                "adjacent8" | "case2" => Pattern::Adjacent8,
                "skip4" | "case3" => Pattern::Skip4,
                "skip4_wide" | "case4" => Pattern::Skip4Wide,
                other => return Err(cfg_err("neighborhood", format!("unknown pattern {other:?}"))),
            };
            cfg.neighborhood = NeighborhoodSpec::new(pattern);
        }
        if let Some(v) = take("skip_step") {
            cfg.neighborhood = cfg.neighborhood.with_skip_step(parse_num("skip_step", &v)?);
        }
        if let Some(v) = take("weighting") {
            cfg.neighborhood.weighting = match v.as_str() {
                "binary" => Weighting::Binary,
                "gaussian" => Weighting::GaussianDistance,
                other => return Err(cfg_err("weighting", format!("unknown weighting {other:?}"))),
            };
        }
        if let Some(v) = take("gaussian_sigma") {
            cfg.neighborhood.gaussian_sigma = parse_num("gaussian_sigma", &v)?;
        }
        if let Some(v) = take("channels") {
            cfg.features.channels = v
                .split(',')
                .map(|s| {
                    Channel::parse(s.trim())
                        .ok_or_else(|| cfg_err("channels", format!("unknown channel {s:?}")))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(v) = take("grid_size") {
            cfg.features.grid_size = parse_num("grid_size", &v)?;
        }
        if let Some(v) = take("hog_bins") {
            cfg.features.hog_bins = parse_num("hog_bins", &v)?;
        }
        if let Some(v) = take("hog_cell") {
            cfg.features.hog_cell = parse_num("hog_cell", &v)?;
        }
        if let Some(v) = take("pca_dim") {
            cfg.pca_dim = parse_num("pca_dim", &v)?;
        }
        if let Some(v) = take("gamma") {
            cfg.gamma = parse_num("gamma", &v)?;
        }
        if let Some(v) = take("alpha") {
            cfg.alpha = parse_num("alpha", &v)?;
        }
        if let Some(v) = take("search_factor") {
            cfg.search_factor = parse_num("search_factor", &v)?;
        }
        if let Some(v) = take("label_sigma_ratio") {
            cfg.label_sigma_ratio = parse_num("label_sigma_ratio", &v)?;
        }
        if let Some(v) = take("scale_count") {
            cfg.scale_count = parse_num("scale_count", &v)?;
        }
        if let Some(v) = take("scale_step") {
            cfg.scale_step = parse_num("scale_step", &v)?;
        }
        if let Some(v) = take("lambda_max") {
            cfg.lambda_max_mode = match v.as_str() {
                "bound2" => LambdaMaxMode::Bound2,
                "power" => LambdaMaxMode::PowerIteration,
                other => return Err(cfg_err("lambda_max", format!("unknown mode {other:?}"))),
            };
        }
        if let Some(v) = take("k_cap") {
            cfg.k_cap = parse_num("k_cap", &v)?;
        }
        if let Some(v) = take("seed") {
            cfg.seed = parse_num("seed", &v)?;
        }
        if let Some(v) = take("parallel") {
            cfg.parallelism = if parse_num::<bool>("parallel", &v)? {
                Parallelism::Parallel
            } else {
                Parallelism::Sequential
            };
        }
        if let Some((key, _)) = entries.into_iter().next() {
            return Err(cfg_err(&key, "unknown key"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Writes every key, so the output pins the full configuration.
    pub fn to_kv_string(&self) -> String {
        let nb = &self.neighborhood;
        let pattern = match nb.pattern {
            Pattern::Adjacent4 => "adjacent4",
            Pattern::Adjacent8 => "adjacent8",
            Pattern::Skip4 => "skip4",
            Pattern::Skip4Wide => "skip4_wide",
        };
        let weighting = match nb.weighting {
            Weighting::Binary => "binary",
            Weighting::GaussianDistance => "gaussian",
        };
        let channels: Vec<&str> = self.features.channels.iter().map(|c| c.name()).collect();
        let lambda = match self.lambda_max_mode {
            LambdaMaxMode::Bound2 => "bound2",
            LambdaMaxMode::PowerIteration => "power",
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("neighborhood", &pattern);
        kv("skip_step", &nb.skip_step);
        kv("weighting", &weighting);
        kv("gaussian_sigma", &nb.gaussian_sigma);
        kv("channels", &channels.join(","));
        kv("grid_size", &self.features.grid_size);
        kv("hog_bins", &self.features.hog_bins);
        kv("hog_cell", &self.features.hog_cell);
        kv("pca_dim", &self.pca_dim);
        kv("gamma", &self.gamma);
        kv("alpha", &self.alpha);
        kv("search_factor", &self.search_factor);
        kv("label_sigma_ratio", &self.label_sigma_ratio);
        kv("scale_count", &self.scale_count);
        kv("scale_step", &self.scale_step);
        kv("lambda_max", &lambda);
        kv("k_cap", &self.k_cap);
        kv("seed", &self.seed);
        kv("parallel", &(self.parallelism == Parallelism::Parallel));
        s
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| cfg_err(key, format!("cannot parse value {v:?}")))
}

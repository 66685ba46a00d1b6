//! OTB-style sequences on disk and one-pass evaluation metrics.
//!
//! Layout: `<seq>/img/*.{jpg,png,bmp,pgm}` and `<seq>/groundtruth_rect.txt`,
//! one `x,y,w,h` rectangle per line (comma, tab or space separated, 1-based).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Frame;
use crate::tracker::BoundingBox;

pub const GROUND_TRUTH_FILE: &str = "groundtruth_rect.txt";
pub const IMAGE_DIR: &str = "img";
pub const PRECISION_THRESHOLD: f64 = 20.0;

const IMAGE_EXTENSIONS: [&str; 6] = ["jpg", "jpeg", "png", "bmp", "pgm", "ppm"];

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frame_paths: Vec<PathBuf>,
    /// `None` for frames whose annotation is missing (NaN or empty box).
    pub ground_truth: Vec<Option<BoundingBox>>,
    pub attributes: Vec<String>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frame_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_paths.is_empty()
    }

    pub fn load_frame(&self, i: usize) -> Result<Frame> {
        Frame::load(&self.frame_paths[i])
    }

    /// First annotated box, used to initialize tracking.
    pub fn initial_box(&self) -> Option<BoundingBox> {
        self.ground_truth.first().copied().flatten()
    }
}

/// Image files in `<dir>/img`, sorted by file name.
pub fn load_frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let img_dir = dir.join(IMAGE_DIR);
    let entries = fs::read_dir(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&img_dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if paths.is_empty() {
        return Err(Error::invalid(format!("no image frames in {}", img_dir.display())));
    }
    Ok(paths)
}

pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let frame_paths = load_frame_paths(dir)?;
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    let ground_truth = read_boxes(&gt_path)?;
    if ground_truth.len() != frame_paths.len() {
        return Err(Error::CountMismatch {
            frames: frame_paths.len(),
            boxes: ground_truth.len(),
        });
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Sequence {
        name,
        frame_paths,
        ground_truth,
        attributes: Vec::new(),
    })
}

pub fn read_boxes(path: &Path) -> Result<Vec<Option<BoundingBox>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_boxes(&text, path)
}

/// Parses 1-based `x,y,w,h` lines into 0-based boxes. Blank lines are skipped;
/// rows with NaN or non-positive size become `None`.
pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<Option<BoundingBox>>> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 values, got {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .map_err(|_| parse_err(format!("cannot parse {f:?}")))?;
        }
        let valid = v.iter().all(|x| x.is_finite()) && v[2] > 0.0 && v[3] > 0.0;
        boxes.push(valid.then(|| BoundingBox {
            x: v[0] - 1.0,
            y: v[1] - 1.0,
            w: v[2],
            h: v[3],
        }));
    }
    Ok(boxes)
}

/// Writes boxes as 1-based `x,y,w,h` lines, matching the ground-truth format.
pub fn write_boxes<W: Write>(mut out: W, boxes: &[BoundingBox]) -> std::io::Result<()> {
    for b in boxes {
        writeln!(out, "{:.4},{:.4},{:.4},{:.4}", b.x + 1.0, b.y + 1.0, b.w, b.h)?;
    }
    Ok(())
}

/// Euclidean distance between box centers.
pub fn center_location_error(pred: &BoundingBox, gt: &BoundingBox) -> f64 {
    let (px, py) = pred.center();
    let (gx, gy) = gt.center();
    (px - gx).hypot(py - gy)
}

/// Intersection over union of two boxes.
pub fn overlap_ratio(pred: &BoundingBox, gt: &BoundingBox) -> f64 {
    let iw = ((pred.x + pred.w).min(gt.x + gt.w) - pred.x.max(gt.x)).max(0.0);
    let ih = ((pred.y + pred.h).min(gt.y + gt.h) - pred.y.max(gt.y)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    let union = pred.w * pred.h + gt.w * gt.h - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// CLE thresholds `0, 1, …, 50` pixels.
pub fn default_precision_thresholds() -> Vec<f64> {
    (0..=50).map(f64::from).collect()
}

/// Overlap thresholds `0, 0.05, …, 1`.
pub fn default_success_thresholds() -> Vec<f64> {
    (0..=20).map(|i| f64::from(i) / 20.0).collect()
}

/// Fraction of frames with CLE `≤ t` for each threshold.
pub fn precision_curve(cles: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    if cles.is_empty() {
        return Err(Error::invalid("precision needs at least one frame"));
    }
    let n = cles.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| cles.iter().filter(|&&c| c <= t).count() as f64 / n)
        .collect())
}

pub fn precision_at(cles: &[f64], threshold: f64) -> Result<f64> {
    Ok(precision_curve(cles, &[threshold])?[0])
}

/// Fraction of frames with overlap strictly greater than each threshold.
pub fn success_curve(overlaps: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    if overlaps.is_empty() {
        return Err(Error::invalid("success needs at least one frame"));
    }
    let n = overlaps.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| overlaps.iter().filter(|&&o| o > t).count() as f64 / n)
        .collect())
}

/// Mean of the success curve on the default 21-point grid.
pub fn success_auc(overlaps: &[f64]) -> Result<f64> {
    let curve = success_curve(overlaps, &default_success_thresholds())?;
    Ok(curve.iter().sum::<f64>() / curve.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub sequence: String,
    /// Indices of the frames that carried a usable ground-truth box.
    pub evaluated_frames: Vec<usize>,
    pub excluded_frames: usize,
    pub per_frame_cle: Vec<f64>,
    pub per_frame_overlap: Vec<f64>,
    pub precision_at_20: f64,
    pub success_auc: f64,
    pub precision_thresholds: Vec<f64>,
    pub precision_curve: Vec<f64>,
    pub success_thresholds: Vec<f64>,
    pub success_curve: Vec<f64>,
}

impl EvaluationResult {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// `frame,cle,overlap`, one row per evaluated frame (0-based frame index).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "frame,cle,overlap")?;
        for ((f, c), o) in self
            .evaluated_frames
            .iter()
            .zip(&self.per_frame_cle)
            .zip(&self.per_frame_overlap)
        {
            writeln!(out, "{f},{c},{o}")?;
        }
        Ok(())
    }
}

/// One-pass evaluation of `boxes` against `ground_truth`.
pub fn evaluate(
    name: &str,
    boxes: &[BoundingBox],
    ground_truth: &[Option<BoundingBox>],
) -> Result<EvaluationResult> {
    if boxes.len() != ground_truth.len() {
        return Err(Error::CountMismatch {
            frames: ground_truth.len(),
            boxes: boxes.len(),
        });
    }
    let mut evaluated_frames = Vec::new();
    let mut per_frame_cle = Vec::new();
    let mut per_frame_overlap = Vec::new();
    for (i, (pred, gt)) in boxes.iter().zip(ground_truth).enumerate() {
        if let Some(gt) = gt {
            evaluated_frames.push(i);
            per_frame_cle.push(center_location_error(pred, gt));
            per_frame_overlap.push(overlap_ratio(pred, gt));
        }
    }
    if evaluated_frames.is_empty() {
        return Err(Error::invalid("no frame has a usable ground-truth box"));
    }
    let precision_thresholds = default_precision_thresholds();
    let success_thresholds = default_success_thresholds();
    let precision_curve = precision_curve(&per_frame_cle, &precision_thresholds)?;
    let success_curve = success_curve(&per_frame_overlap, &success_thresholds)?;
    Ok(EvaluationResult {
        sequence: name.to_string(),
        excluded_frames: ground_truth.len() - evaluated_frames.len(),
        evaluated_frames,
        precision_at_20: precision_at(&per_frame_cle, PRECISION_THRESHOLD)?,
        success_auc: success_curve.iter().sum::<f64>() / success_curve.len() as f64,
        per_frame_cle,
        per_frame_overlap,
        precision_thresholds,
        precision_curve,
        success_thresholds,
        success_curve,
    })
}

pub fn evaluate_sequence(boxes: &[BoundingBox], seq: &Sequence) -> Result<EvaluationResult> {
    evaluate(&seq.name, boxes, &seq.ground_truth)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub sequence: String,
    pub precision_at_20: f64,
    pub success_auc: f64,
    pub frames: usize,
}

/// Run-level aggregate: per-sequence scores and their unweighted means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub sequences: Vec<SequenceScore>,
    pub mean_precision_at_20: f64,
    pub mean_success_auc: f64,
}

impl RunSummary {
    pub fn from_results(results: &[EvaluationResult]) -> Self {
        let sequences: Vec<SequenceScore> = results
            .iter()
            .map(|r| SequenceScore {
                sequence: r.sequence.clone(),
                precision_at_20: r.precision_at_20,
                success_auc: r.success_auc,
                frames: r.evaluated_frames.len(),
            })
            .collect();
        let n = sequences.len().max(1) as f64;
        Self {
            mean_precision_at_20: sequences.iter().map(|s| s.precision_at_20).sum::<f64>() / n,
            mean_success_auc: sequences.iter().map(|s| s.success_auc).sum::<f64>() / n,
            sequences,
        }
    }
}

//! Command implementations behind the `spectrack` binary. Each command is a
//! plain function so tests can drive it without spawning a process.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use spectrack::eval::{
    evaluate, load_frame_paths, load_sequence, read_boxes, write_boxes, EvaluationResult,
    RunSummary, GROUND_TRUTH_FILE,
};
use spectrack::selftest::{self, Fault, SelfTestReport};
use spectrack::tracker::track_sequence;
use spectrack::{BoundingBox, Frame, Parallelism, TrackerConfig};
use thiserror::Error;

pub const TOOL_VERSION: &str = concat!("spectrack ", env!("CARGO_PKG_VERSION"));

pub const BOXES_FILE: &str = "boxes.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const TIMING_FILE: &str = "timing.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// Failures grouped the way they are reported to the user; each category has
/// its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("selftest failed")]
    SelfTestFailed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::SelfTestFailed => 1,
            CliError::Io(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Invalid(_) => 5,
        }
    }

    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<spectrack::Error> for CliError {
    fn from(err: spectrack::Error) -> Self {
        use spectrack::Error as E;
        let msg = err.to_string();
        match err {
            E::Io { .. } | E::Image { .. } => CliError::Io(msg),
            E::Parse { .. } | E::Config { .. } | E::Json(_) => CliError::Parse(msg),
            E::NonConvergence { .. } | E::Singular(_) | E::TooLarge { .. } => CliError::Numeric(msg),
            _ => CliError::Invalid(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Everything needed to repeat a tracking run exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub sequence: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Initial box in the 1-based `x,y,w,h` convention of the box files.
    pub init: [f64; 4],
    pub config: TrackerConfig,
}

impl RunManifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn init_box(&self) -> CliResult<BoundingBox> {
        let [x, y, w, h] = self.init;
        Ok(BoundingBox::new(x - 1.0, y - 1.0, w, h)?)
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrackOptions {
    pub sequence_dir: Option<PathBuf>,
    pub config_file: Option<PathBuf>,
    /// 1-based `x,y,w,h`, overriding the first ground-truth box.
    pub init: Option<[f64; 4]>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub frames: usize,
    pub seconds: f64,
    pub frames_per_second: f64,
}

#[derive(Clone, Debug)]
pub struct TrackOutcome {
    pub output_dir: PathBuf,
    pub boxes: Vec<BoundingBox>,
    pub timing: Timing,
}

/// Parses `x,y,w,h` (commas or whitespace).
pub fn parse_box_arg(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .collect();
    if parts.len() != 4 {
        return Err(format!("expected x,y,w,h, got {s:?}"));
    }
    let mut out = [0.0f64; 4];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("cannot parse {p:?} as a number"))?;
    }
    if !(out.iter().all(|v| v.is_finite()) && out[2] > 0.0 && out[3] > 0.0) {
        return Err(format!("box {s:?} must be finite with positive width and height"));
    }
    Ok(out)
}

fn resolve_manifest(opts: &TrackOptions) -> CliResult<RunManifest> {
    if let Some(path) = &opts.manifest {
        let mut manifest = RunManifest::read(path)?;
        if let Some(dir) = &opts.sequence_dir {
            manifest.sequence = dir.clone();
        }
        if let Some(out) = &opts.output_dir {
            manifest.output_dir = out.clone();
        }
        if opts.config_file.is_some() || opts.init.is_some() || opts.seed.is_some() {
            return Err(CliError::Invalid(
                "--config, --init and --seed cannot be combined with --manifest".into(),
            ));
        }
        manifest.config.validate()?;
        return Ok(manifest);
    }

    let sequence = opts
        .sequence_dir
        .clone()
        .ok_or_else(|| CliError::Invalid("a sequence directory or --manifest is required".into()))?;
    let mut config = match &opts.config_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            TrackerConfig::from_kv_str(&text)?
        }
        None => TrackerConfig::default(),
    };
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    config.validate()?;
    let init = match opts.init {
        Some(b) => b,
        None => {
            let gt = sequence.join(GROUND_TRUTH_FILE);
            if !gt.exists() {
                return Err(CliError::Invalid(format!(
                    "{} not found; pass --init x,y,w,h",
                    gt.display()
                )));
            }
            let first = read_boxes(&gt)?
                .into_iter()
                .next()
                .flatten()
                .ok_or_else(|| CliError::Invalid(format!("first box in {} is unusable", gt.display())))?;
            [first.x + 1.0, first.y + 1.0, first.w, first.h]
        }
    };
    Ok(RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        output_dir: opts.output_dir.clone().unwrap_or_else(|| PathBuf::from("spectrack_out")),
        sequence,
        seed: config.seed,
        init,
        config,
    })
}

/// Tracks a sequence and writes boxes, manifest, resolved config and timing
/// into the output directory.
pub fn cmd_track(opts: &TrackOptions) -> CliResult<TrackOutcome> {
    let manifest = resolve_manifest(opts)?;
    let frame_paths = load_frame_paths(&manifest.sequence)?;
    let init = manifest.init_box()?;
    let out = &manifest.output_dir;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let start = Instant::now();
    let frames = frame_paths.iter().map(|p| Frame::load(p));
    let boxes = track_sequence(frames, init, manifest.config.clone())?;
    let seconds = start.elapsed().as_secs_f64();
    let timing = Timing {
        frames: boxes.len(),
        seconds,
        frames_per_second: if seconds > 0.0 { boxes.len() as f64 / seconds } else { 0.0 },
    };

    let boxes_path = out.join(BOXES_FILE);
    let file = fs::File::create(&boxes_path).map_err(|e| CliError::io(&boxes_path, e))?;
    write_boxes(BufWriter::new(file), &boxes).map_err(|e| CliError::io(&boxes_path, e))?;
    manifest.write(&out.join(MANIFEST_FILE))?;
    let config_path = out.join(CONFIG_FILE);
    fs::write(&config_path, manifest.config.to_kv_string()).map_err(|e| CliError::io(&config_path, e))?;
    write_json(&out.join(TIMING_FILE), &timing)?;

    Ok(TrackOutcome {
        output_dir: out.clone(),
        boxes,
        timing,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value).expect("plain data serializes");
    fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
}

/// Pairs of (sequence name, predicted box file, sequence directory).
fn eval_jobs(boxes: &Path, seq_dir: &Path) -> CliResult<Vec<(String, PathBuf, PathBuf)>> {
    if !boxes.is_dir() {
        return Ok(vec![(dir_name(seq_dir), boxes.to_path_buf(), seq_dir.to_path_buf())]);
    }
    // A tracking output directory.
    let single = boxes.join(BOXES_FILE);
    if single.is_file() {
        return Ok(vec![(dir_name(seq_dir), single, seq_dir.to_path_buf())]);
    }
    // Otherwise `<boxes>/<name>.txt` against `<seq_dir>/<name>`.
    let mut jobs = Vec::new();
    for entry in fs::read_dir(boxes).map_err(|e| CliError::io(boxes, e))? {
        let path = entry.map_err(|e| CliError::io(boxes, e))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            let name = path.file_stem().unwrap().to_string_lossy().into_owned();
            let dir = seq_dir.join(&name);
            jobs.push((name, path, dir));
        }
    }
    if jobs.is_empty() {
        return Err(CliError::Invalid(format!("no box files in {}", boxes.display())));
    }
    jobs.sort();
    Ok(jobs)
}

fn dir_name(dir: &Path) -> String {
    dir.canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "sequence".to_string())
}

fn eval_one(name: &str, boxes_path: &Path, seq_dir: &Path) -> CliResult<EvaluationResult> {
    let seq = load_sequence(seq_dir)?;
    let predicted = read_boxes(boxes_path)?;
    if predicted.is_empty() {
        return Err(CliError::Invalid(format!("{} contains no boxes", boxes_path.display())));
    }
    let predicted: Vec<BoundingBox> = predicted
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            b.ok_or_else(|| {
                CliError::Invalid(format!("{}: box {} is not a valid box", boxes_path.display(), i + 1))
            })
        })
        .collect::<CliResult<_>>()?;
    Ok(evaluate(name, &predicted, &seq.ground_truth)?)
}

/// Scores predicted boxes against ground truth, writing `<name>.json`,
/// `<name>.csv` and a run-level `summary.json` into `out`.
pub fn cmd_eval(boxes: &Path, seq_dir: &Path, out: &Path) -> CliResult<RunSummary> {
    let jobs = eval_jobs(boxes, seq_dir)?;
    let results = Parallelism::default().map_slice(&jobs, |(name, b, s)| eval_one(name, b, s));
    let results: Vec<EvaluationResult> = results.into_iter().collect::<CliResult<_>>()?;

    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for r in &results {
        let json_path = out.join(format!("{}.json", r.sequence));
        let file = fs::File::create(&json_path).map_err(|e| CliError::io(&json_path, e))?;
        r.write_json(BufWriter::new(file))?;
        let csv_path = out.join(format!("{}.csv", r.sequence));
        let file = fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
        r.write_csv(BufWriter::new(file)).map_err(|e| CliError::io(&csv_path, e))?;
    }
    let summary = RunSummary::from_results(&results);
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Runs the built-in property checks. The report is returned even when a
/// property fails; callers decide the exit status from `passed()`.
pub fn cmd_selftest(seed: u64, fault: Option<Fault>) -> CliResult<SelfTestReport> {
    Ok(selftest::run(seed, fault)?)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spectrack::selftest::Fault;
use spectrack_cli::{cmd_eval, cmd_selftest, cmd_track, parse_box_arg, CliError, TrackOptions};

#[derive(Parser)]
#[command(name = "spectrack", version, about = "Graph-spectral filter tracking on image sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track the target through a sequence directory (`img/` + optional ground truth).
    Track {
        /// Sequence directory; optional when --manifest is given.
        #[arg(required_unless_present = "manifest")]
        seq_dir: Option<PathBuf>,
        /// Key/value tracker configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Initial box as 1-based x,y,w,h; defaults to the first ground-truth box.
        #[arg(long, value_parser = parse_box_arg)]
        init: Option<[f64; 4]>,
        /// Output directory (default: ./spectrack_out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for randomized components; overrides the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Repeat a previous run from its manifest.json.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Score predicted boxes against a sequence's ground truth.
    Eval {
        /// Box file, tracking output directory, or directory of `<name>.txt` files.
        boxes: PathBuf,
        /// Sequence directory, or dataset root when BOXES holds several files.
        seq_dir: PathBuf,
        #[arg(long, default_value = "spectrack_eval")]
        out: PathBuf,
    },
    /// Run the built-in numerical property checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt the Chebyshev recurrence to confirm the checks can fail.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Track { seq_dir, config, init, out, seed, manifest } => {
            let outcome = cmd_track(&TrackOptions {
                sequence_dir: seq_dir,
                config_file: config,
                init,
                output_dir: out,
                seed,
                manifest,
            })?;
            println!(
                "tracked {} frames in {:.2}s ({:.1} fps) -> {}",
                outcome.timing.frames,
                outcome.timing.seconds,
                outcome.timing.frames_per_second,
                outcome.output_dir.display()
            );
        }
        Command::Eval { boxes, seq_dir, out } => {
            let summary = cmd_eval(&boxes, &seq_dir, &out)?;
            for s in &summary.sequences {
                println!(
                    "{}: precision@20={:.4} auc={:.4} frames={}",
                    s.sequence, s.precision_at_20, s.success_auc, s.frames
                );
            }
            println!(
                "mean precision@20={:.4} mean auc={:.4} -> {}",
                summary.mean_precision_at_20,
                summary.mean_success_auc,
                out.display()
            );
        }
        Command::Selftest { seed, inject_fault } => {
            let fault = inject_fault.then_some(Fault::PerturbRecurrence);
            let report = cmd_selftest(seed, fault)?;
            print!("{report}");
            if !report.passed() {
                return Err(CliError::SelfTestFailed);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("spectrack: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

use std::io::Write as _;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ctw_cli::commands::{self, EvalOptions, Outcome};
use ctw_cli::serve::{self, ServeConfig};
use ctw_core::evaluation::{Subset, DEFAULT_IOU_THRESHOLD};
use ctw_core::suppression::{SuppressionConfig, SuppressionMode};

#[derive(Parser)]
#[command(name = "ctw", version, about = "Curve text annotation, suppression and evaluation tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Pnms,
    #[value(name = "rect_nms")]
    RectNms,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubsetArg {
    Whole,
    Curve,
    Noncurve,
}

#[derive(Subcommand)]
enum Command {
    /// Report annotation lines that fail to parse or are not simple polygons.
    Validate { dir: PathBuf },
    /// Convert rect and quad annotations to 14-point curve lines.
    Interp { input: PathBuf, output: PathBuf },
    /// Evaluate detections against ground truth.
    Eval {
        gt: PathBuf,
        det: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD, value_parser = open_unit)]
        iou: f64,
        #[arg(long, default_value_t = 0.1, value_parser = open_unit)]
        pnms: f64,
        #[arg(long, value_enum, default_value_t = Mode::Pnms)]
        mode: Mode,
        /// Skip polygon suppression (non-polygon suppression still runs).
        #[arg(long)]
        no_pnms: bool,
        #[arg(long, value_enum, default_value_t = SubsetArg::Whole)]
        subset: SubsetArg,
    },
    /// Suppress overlapping detections file by file.
    Pnms {
        det_dir: PathBuf,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0.1, value_parser = open_unit)]
        pnms: f64,
        #[arg(long, value_enum, default_value_t = Mode::Pnms)]
        mode: Mode,
    },
    /// Count images, boxes and curve boxes.
    Stats { dir: PathBuf },
    /// Serve images and annotations to the labeling UI.
    Serve {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

fn open_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie strictly between 0 and 1"))
    }
}

fn suppression(t: f64, mode: Mode) -> anyhow::Result<SuppressionConfig> {
    let mode = match mode {
        Mode::Pnms => SuppressionMode::Pnms,
        Mode::RectNms => SuppressionMode::RectNms,
    };
    Ok(SuppressionConfig::new(t, mode)?)
}

fn run(cmd: Command) -> anyhow::Result<Outcome> {
    match cmd {
        Command::Validate { dir } => commands::validate(&dir),
        Command::Interp { input, output } => commands::interp(&input, &output),
        Command::Eval {
            gt,
            det,
            iou,
            pnms,
            mode,
            no_pnms,
            subset,
        } => {
            let opts = EvalOptions {
                iou_threshold: iou,
                pnms: if no_pnms { None } else { Some(suppression(pnms, mode)?) },
                subset: match subset {
                    SubsetArg::Whole => Subset::Whole,
                    SubsetArg::Curve => Subset::CurveOnly,
                    SubsetArg::Noncurve => Subset::NoncurveOnly,
                },
            };
            commands::eval(&gt, &det, opts)
        }
        Command::Pnms {
            det_dir,
            out_dir,
            pnms,
            mode,
        } => commands::pnms_dir(&det_dir, &out_dir, &suppression(pnms, mode)?),
        Command::Stats { dir } => commands::stats(&dir),
        Command::Serve { .. } => unreachable!("handled in main"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Serve {
        images,
        annotations,
        port,
        host,
        ui_dir,
    } = cli.command
    {
        let cfg = ServeConfig {
            images,
            annotations,
            ui_dir,
        };
        let rt = match tokio::runtime::Runtime::new() {
            Ok(rt) => rt,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        };
        return match rt.block_on(serve::serve(cfg, SocketAddr::new(host, port))) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        };
    }
    match run(cli.command) {
        Ok(out) => {
            let text = serde_json::to_string_pretty(&out.json).expect("json values serialize");
            // a closed pipe downstream is not our failure
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            if let Some(s) = out.summary {
                eprintln!("{s}");
            }
            if out.clean {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

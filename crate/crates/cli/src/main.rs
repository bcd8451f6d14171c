use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tamperlens::eval::{evaluate_detailed, load_references, profile_to_json};
use tamperlens::image::{read_gray, write_pgm};
use tamperlens::synth::{brightness_jitter, gaussian_blur, obstruct, rotate_image};
use tamperlens::{
    calibrate, load_dataset, load_profile, CalibrationConfig, Classification, Classifier, GrayImage,
};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "tamperlens",
    version,
    about = "Rule-based camera tampering detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive a calibration profile from a directory of normal frames.
    Calibrate {
        #[arg(long)]
        refs: PathBuf,
        /// Fraction of the weakest reference-pair match count used as the gate.
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        /// Fraction of the least-sharp reference used as the blur gate.
        #[arg(long, default_value_t = 0.25)]
        gamma: f64,
        /// Profile output path; the JSON goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify one or more images against a profile.
    Classify {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        json: bool,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Run a labelled dataset through the classifier and report metrics.
    Evaluate {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Produce a synthetic tampered copy of an image.
    Synth {
        #[command(subcommand)]
        mode: SynthMode,
    },
}

#[derive(Args)]
struct InOut {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
}

#[derive(Subcommand)]
enum SynthMode {
    Blur {
        #[arg(long)]
        sigma: f64,
        #[command(flatten)]
        io: InOut,
    },
    Rotate {
        #[arg(long, allow_negative_numbers = true)]
        angle: f64,
        #[command(flatten)]
        io: InOut,
    },
    Obstruct {
        #[arg(long)]
        level: u8,
        #[arg(long)]
        coverage: f64,
        #[command(flatten)]
        io: InOut,
    },
    Jitter {
        #[arg(long, allow_negative_numbers = true)]
        delta: i32,
        #[command(flatten)]
        io: InOut,
    },
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn io_failure(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_IO,
        message: e.to_string(),
    }
}

fn usage_failure(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: e.to_string(),
    }
}

fn classification_json(path: &Path, c: &Classification) -> serde_json::Value {
    json!({
        "path": path.display().to_string(),
        "label": c.label.as_str(),
        "best_ref": c.best_ref,
        "good_matches": c.good_matches,
        "sharpness": c.sharpness,
        "std_dev": c.std_dev,
        "rotation_deg": c.rotation_deg,
        "decision_path": c.decision_path.iter().map(|r| r.as_str()).collect::<Vec<_>>(),
    })
}

fn run_calibrate(refs: &Path, beta: f64, gamma: f64, out: Option<&Path>) -> Result<(), Failure> {
    let images = load_references(refs).map_err(io_failure)?;
    let config = CalibrationConfig {
        beta,
        gamma,
        ..CalibrationConfig::default()
    };
    let profile = calibrate(&images, &config).map_err(io_failure)?;
    let summary = format!(
        "references: {}\nmatch_count_min: {}\nblur_sharpness_min: {:.3}",
        profile.references.len(),
        profile.match_count_min,
        profile.quality.blur_sharpness_min
    );
    match out {
        Some(path) => {
            std::fs::write(path, profile_to_json(&profile)).map_err(io_failure)?;
            println!("{summary}\nprofile written to {}", path.display());
        }
        None => {
            eprintln!("{summary}");
            print!("{}", profile_to_json(&profile));
        }
    }
    Ok(())
}

fn run_classify(profile: &Path, images: &[PathBuf], as_json: bool) -> Result<(), Failure> {
    let classifier =
        Classifier::new(load_profile(profile).map_err(io_failure)?).map_err(io_failure)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for path in images {
        let img = read_gray(path).map_err(io_failure)?;
        let c = classifier.classify(&img);
        let line = if as_json {
            classification_json(path, &c).to_string()
        } else {
            let rotation = c
                .rotation_deg
                .map(|r| format!(" rotation={r:.2}"))
                .unwrap_or_default();
            format!(
                "{}: {} (best_ref={} good_matches={} sharpness={:.2} std_dev={:.2}{})",
                path.display(),
                c.label,
                c.best_ref,
                c.good_matches,
                c.sharpness,
                c.std_dev,
                rotation
            )
        };
        writeln!(out, "{line}").map_err(io_failure)?;
    }
    Ok(())
}

fn run_evaluate(profile: &Path, dataset: &Path, as_json: bool) -> Result<(), Failure> {
    let classifier =
        Classifier::new(load_profile(profile).map_err(io_failure)?).map_err(io_failure)?;
    let dataset = load_dataset(dataset).map_err(io_failure)?;
    let (report, _) = evaluate_detailed(&classifier, &dataset).map_err(io_failure)?;
    if as_json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(io_failure)?
        );
    } else {
        print!("{report}");
    }
    Ok(())
}

fn run_synth(mode: SynthMode) -> Result<(), Failure> {
    let io = match &mode {
        SynthMode::Blur { io, .. }
        | SynthMode::Rotate { io, .. }
        | SynthMode::Obstruct { io, .. }
        | SynthMode::Jitter { io, .. } => io,
    };
    if let SynthMode::Rotate { angle, .. } = mode {
        if !angle.is_finite() {
            return Err(usage_failure("angle must be finite"));
        }
    }
    // reject bad parameters before touching the filesystem
    let probe = GrayImage::filled(1, 1, 0);
    let apply = |img: &GrayImage| match mode {
        SynthMode::Blur { sigma, .. } => gaussian_blur(img, sigma).map_err(usage_failure),
        SynthMode::Rotate { angle, .. } => Ok(rotate_image(img, angle)),
        SynthMode::Obstruct {
            level, coverage, ..
        } => obstruct(img, level, coverage).map_err(usage_failure),
        SynthMode::Jitter { delta, .. } => Ok(brightness_jitter(img, delta)),
    };
    apply(&probe)?;
    let img = read_gray(&io.input).map_err(io_failure)?;
    write_pgm(&io.output, &apply(&img)?).map_err(io_failure)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Calibrate {
            refs,
            beta,
            gamma,
            out,
        } => run_calibrate(&refs, beta, gamma, out.as_deref()),
        Command::Classify {
            profile,
            json,
            images,
        } => run_classify(&profile, &images, json),
        Command::Evaluate {
            profile,
            dataset,
            json,
        } => run_evaluate(&profile, &dataset, json),
        Command::Synth { mode } => run_synth(mode),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

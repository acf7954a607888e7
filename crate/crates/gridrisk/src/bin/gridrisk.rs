use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gridrisk::config::RunConfig;
use gridrisk::error::Error;
use gridrisk::eval::write_metrics_csv;
use gridrisk::ingest::{load_matrix_csv, write_matrix_csv};
use gridrisk::pipeline::{
    assess_matrix, assess_matrix_dae, assess_matrix_pca, assess_matrix_tha, evaluate_report,
    write_assessment_csv, write_tha_csv, write_timing,
};
use gridrisk::synth::{generate, read_truth_csv, write_truth_csv};

/// Operational risk assessment for feeder voltage matrices.
#[derive(Parser)]
#[command(name = "gridrisk", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Seed override (takes precedence over config and GRIDRISK_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory receiving data.csv, truth.csv, and manifest.txt.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the adversarial assessment pipeline over a data CSV.
    Assess {
        #[command(flatten)]
        common: CommonArgs,
        /// Input wide CSV (`tick,<channel ids>`).
        #[arg(long)]
        data: PathBuf,
        /// Output assessment CSV.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for per-segment training.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run one of the baseline detectors over a data CSV.
    Baseline {
        #[command(flatten)]
        common: CommonArgs,
        /// Baseline method: tha, pca, or dae.
        #[arg(long)]
        method: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score report CSVs against ground truth.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Ground-truth anomaly CSV.
        #[arg(long)]
        truth: PathBuf,
        /// Output metrics CSV.
        #[arg(long)]
        out: PathBuf,
        /// Reports to score, as `method=path`.
        #[arg(required = true, value_name = "METHOD=PATH")]
        reports: Vec<String>,
    },
}

const EXIT_INPUT: u8 = 2;
const EXIT_UNCONVERGED: u8 = 3;

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(EXIT_INPUT)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Synth { common, out_dir } => cmd_synth(common, out_dir),
        Command::Assess {
            common,
            data,
            out,
            workers,
        } => cmd_assess(common, data, out, workers),
        Command::Baseline {
            common,
            method,
            data,
            out,
        } => cmd_baseline(common, method, data, out),
        Command::Eval {
            common,
            truth,
            out,
            reports,
        } => cmd_eval(common, truth, out, reports),
    }
}

fn cmd_synth(common: CommonArgs, out_dir: PathBuf) -> ExitCode {
    let cfg = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let seed = common.seed.unwrap_or(cfg.synth_seed);
    let dataset = match generate(&cfg.synth, &cfg.anomalies, seed) {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        return fail(Error::io(out_dir.display().to_string(), e));
    }
    let manifest = format!(
        "synth_seed = {seed}\nsynth_p = {}\nsynth_t = {}\nsynth_baseline = {}\n\
         synth_noise_sigma = {}\nsynth_coupling = {}\nsynth_tick_seconds = {}\n\
         anomalies = {}\n",
        cfg.synth.channels,
        cfg.synth.ticks,
        cfg.synth.baseline,
        cfg.synth.noise_sigma,
        cfg.synth.coupling,
        cfg.synth.tick_seconds,
        cfg.anomalies.len()
    );
    let result = write_matrix_csv(&dataset.matrix, out_dir.join("data.csv"))
        .and_then(|()| write_truth_csv(&dataset.anomalies, out_dir.join("truth.csv")))
        .and_then(|()| {
            let path = out_dir.join("manifest.txt");
            std::fs::write(&path, manifest).map_err(|e| Error::io(path.display().to_string(), e))
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn cmd_assess(common: CommonArgs, data: PathBuf, out: PathBuf, workers: usize) -> ExitCode {
    let cfg = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let matrix = match load_matrix_csv(&data) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let seed = cfg.resolve_seed(common.seed);
    let assessment = match assess_matrix(&matrix, &cfg, seed, workers.max(1)) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    if let Err(e) = write_assessment_csv(&assessment, &out).and_then(|()| {
        write_timing(
            out.with_extension("timing"),
            assessment.rows.len(),
            assessment.elapsed_seconds,
        )
    }) {
        return fail(e);
    }
    if assessment.all_converged {
        ExitCode::SUCCESS
    } else {
        eprintln!("warning: some segments did not converge (flagged in output)");
        ExitCode::from(EXIT_UNCONVERGED)
    }
}

fn cmd_baseline(common: CommonArgs, method: String, data: PathBuf, out: PathBuf) -> ExitCode {
    let cfg = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let matrix = match load_matrix_csv(&data) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    match method.as_str() {
        "tha" => {
            let report = match assess_matrix_tha(&matrix, &cfg) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            match write_tha_csv(&report, &out).and_then(|()| {
                write_timing(
                    out.with_extension("timing"),
                    report.rows.len(),
                    report.elapsed_seconds,
                )
            }) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        "pca" | "dae" => {
            let assessment = if method == "pca" {
                assess_matrix_pca(&matrix, &cfg)
            } else {
                assess_matrix_dae(&matrix, &cfg, cfg.resolve_seed(common.seed))
            };
            let assessment = match assessment {
                Ok(a) => a,
                Err(e) => return fail(e),
            };
            if let Err(e) = write_assessment_csv(&assessment, &out).and_then(|()| {
                write_timing(
                    out.with_extension("timing"),
                    assessment.rows.len(),
                    assessment.elapsed_seconds,
                )
            }) {
                return fail(e);
            }
            if assessment.all_converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("warning: some segments did not converge (flagged in output)");
                ExitCode::from(EXIT_UNCONVERGED)
            }
        }
        other => fail(Error::InvalidArgument(format!(
            "unknown baseline method {other:?} (expected tha, pca, or dae)"
        ))),
    }
}

fn cmd_eval(common: CommonArgs, truth: PathBuf, out: PathBuf, reports: Vec<String>) -> ExitCode {
    let cfg = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let anomalies = match read_truth_csv(&truth) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let mut parsed = Vec::with_capacity(reports.len());
    for spec in &reports {
        let Some((method, path)) = spec.split_once('=') else {
            return fail(Error::InvalidArgument(format!(
                "expected METHOD=PATH, got {spec:?}"
            )));
        };
        parsed.push((method.to_string(), PathBuf::from(path)));
    }
    parsed.sort_by(|a, b| a.0.cmp(&b.0));
    let mut metrics = Vec::with_capacity(parsed.len());
    for (method, path) in &parsed {
        match evaluate_report(method, path, &anomalies, &cfg) {
            Ok(m) => metrics.push(m),
            Err(e) => return fail(e),
        }
    }
    match write_metrics_csv(&metrics, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

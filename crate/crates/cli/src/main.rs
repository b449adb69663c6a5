use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracfem::harness::{
    emit_tables, paper_preset, run_study, ConvergenceReport, ReportView, StudyConfig,
};
use fracfem::FracError;

#[derive(Parser)]
#[command(
    name = "fracfem",
    version,
    about = "Finite element convergence studies for fractional boundary value problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study from a key = value file; flags override the file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated orders, fractions allowed (e.g. 7/4,3/2).
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
        /// rl or caputo.
        #[arg(long)]
        derivative: Option<String>,
        /// a, b, c or custom.
        #[arg(long)]
        example: Option<String>,
        /// Source expression for example = custom.
        #[arg(long, allow_hyphen_values = true)]
        source: Option<String>,
        /// Potential expression.
        #[arg(long, allow_hyphen_values = true)]
        q: Option<String>,
        /// `lo..hi` or a comma-separated list.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tol: Option<String>,
    },
    /// Reproduce a published table (1 to 7).
    Tables {
        #[arg(long)]
        paper: u32,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn build_config(command: &Command) -> Result<(Vec<StudyConfig>, ReportView, PathBuf), FracError> {
    match command {
        Command::Run {
            config,
            alpha,
            derivative,
            example,
            source,
            q,
            levels,
            out,
            tol,
        } => {
            let mut study = match config {
                Some(path) => StudyConfig::load(path)?,
                None => StudyConfig::default(),
            };
            let flags = [
                ("derivative", derivative),
                ("alpha", alpha),
                ("source", source),
                ("example", example),
                ("q", q),
                ("levels", levels),
                ("tol", tol),
            ];
            for (key, value) in flags {
                if let Some(v) = value {
                    study.set(key, v)?;
                }
            }
            if let Some(dir) = out {
                study.output_dir = dir.clone();
            }
            study.validate()?;
            let dir = study.output_dir.clone();
            Ok((vec![study], ReportView::Errors, dir))
        }
        Command::Tables { paper, out } => {
            let (configs, view) = paper_preset(*paper, out)?;
            Ok((configs, view, out.clone()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (configs, view, dir) = match build_config(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let mut reports: Vec<ConvergenceReport> = Vec::new();
    for config in &configs {
        match run_study(config) {
            Ok(r) => {
                eprintln!(
                    "{} example {}: {} orders x {} levels in {:.2?}",
                    config.kind.short_name(),
                    config.source.label(),
                    config.alphas.len(),
                    config.levels.len(),
                    r.elapsed
                );
                reports.push(r);
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
    }
    match emit_tables(&reports, view, &dir) {
        Ok(files) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let mut partial = false;
    for report in &reports {
        for (_, _, msg) in report.failures() {
            eprintln!("failed: {msg}");
            partial = true;
        }
    }
    if partial {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spde_weak::study::{check_report, plot_script, run_study, to_csv, to_json, OutputFormat, StudyConfig};
use spde_weak::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_INADMISSIBLE: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "spdeweak", version, about = "Weak and strong convergence studies for the stochastic heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study described by a config file.
    Study(StudyArgs),
}

#[derive(Parser)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    theta: Option<f64>,
    /// Comma-separated step counts.
    #[arg(long = "N-list")]
    n_list: Option<String>,
    /// Comma-separated space resolutions.
    #[arg(long = "M-list")]
    m_list: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    #[arg(long)]
    allow_unstable_theta: bool,
    /// Exit with status 4 when the acceptance check fails.
    #[arg(long)]
    check: bool,
    /// Write a gnuplot script next to the CSV output.
    #[arg(long)]
    emit_plot_script: bool,
}

fn build_config(args: &StudyArgs) -> Result<StudyConfig, Error> {
    let mut cfg = StudyConfig::from_file(&args.config)?;
    let overrides = [
        ("theta", args.theta.map(|v| v.to_string())),
        ("N_list", args.n_list.clone()),
        ("M_list", args.m_list.clone()),
        ("noise", args.noise.clone()),
        ("beta0", args.beta0.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("format", args.format.clone()),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v, None)
                .map_err(|e| Error::Config(format!("--{key}: {e}")))?;
        }
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if args.allow_unstable_theta {
        cfg.allow_unstable_theta = true;
    }
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Inadmissible { .. } => EXIT_INADMISSIBLE,
        Error::Config(_) | Error::InvalidParameter(_) | Error::Dimension { .. } => EXIT_CONFIG,
        _ => 1,
    }
}

fn run(args: StudyArgs) -> Result<ExitCode, Error> {
    let cfg = build_config(&args)?;
    let report = run_study(&cfg)?;
    let body = match cfg.format {
        OutputFormat::Csv => to_csv(&report),
        OutputFormat::Json => to_json(&cfg, &report)?,
    };
    match &cfg.out {
        Some(path) => std::fs::write(path, &body)?,
        None => print!("{body}"),
    }
    if args.emit_plot_script {
        let out = cfg
            .out
            .as_ref()
            .ok_or_else(|| Error::Config("--emit-plot-script needs --out".into()))?;
        let csv_path = if cfg.format == OutputFormat::Csv {
            out.clone()
        } else {
            let p = out.with_extension("csv");
            std::fs::write(&p, to_csv(&report))?;
            p
        };
        std::fs::write(out.with_extension("gp"), plot_script(&report, &csv_path))?;
    }

    match report.slope {
        Some(p) => {
            eprint!(
                "{}: slope {p:.4} (R^2 {:.4})",
                report.study.name(),
                report.r_squared.unwrap_or(f64::NAN)
            );
            match report.theory_sup {
                Some(t) => eprintln!(", theory sup {t:.4}"),
                None => eprintln!(),
            }
        }
        None => eprintln!("{}: no slope", report.study.name()),
    }
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    if args.check {
        if let Err(msg) = check_report(&cfg, &report) {
            eprintln!("check failed: {msg}");
            return Ok(ExitCode::from(EXIT_CHECK));
        }
        eprintln!("check passed");
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Study(args) = cli.command;
    match run(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! Command-line front end: analyze -> witness -> reduce -> solve, with JSON
//! reports and CSV traces.

use clap::{Args, Parser, Subcommand};
use idae_core::error::IdaeError;
use idae_core::expr::JetVar;
use idae_core::ire::Point;
use idae_core::model::IdaeSystem;
use idae_core::pipeline::{self, PipelineOptions};
use idae_core::report::build_report;
use idae_core::{parse_system, selfcheck};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "idae", version, about = "Structural analysis and global numerical solution of integro-differential-algebraic systems", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Seed for slices, deformation constants and embedding constants.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative singular-value cutoff for numeric rank.
    #[arg(long = "tol-rank", default_value_t = 1e-10)]
    tol_rank: f64,
    /// Residual target for Newton refinement.
    #[arg(long = "tol-refine", default_value_t = 1e-10)]
    tol_refine: f64,
    /// Cap on embedding iterations (default: 1 + initial degrees of freedom).
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Consistent point "x=1,der(x,1)=0,...". Repeatable.
    #[arg(long = "point")]
    points: Vec<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Signature matrices, offsets, degrees of freedom and component table.
    Analyze {
        file: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Witness points on the constraint variety at the initial time.
    Witness {
        file: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Emit the regularized (augmented) system per component in the DSL.
    Reduce {
        file: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Integrate every component and write CSV traces.
    Solve {
        file: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
        /// Integration span (two values: start end).
        #[arg(long, num_args = 2, default_values_t = [0.0, 5.0])]
        span: Vec<f64>,
        /// Segment length between embedding-constant reassignments.
        #[arg(long, default_value_t = 0.5)]
        segment: f64,
        /// Local error tolerance per unit step.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Directory for the per-component CSV traces.
        #[arg(long, default_value = "traces")]
        traces: PathBuf,
    },
    /// Run the built-in oracle suite (assignment brute force, finite
    /// differences, reconstruction quadrature, zero patterns).
    Check {
        /// Optional system files for the zero-pattern check.
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "error": err.to_string(),
                "phase": err.phase().label(),
                "exit": err.exit_code(),
            });
            eprintln!("{payload}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn load_system(path: &Path) -> Result<IdaeSystem, IdaeError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| IdaeError::Numeric(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_system(&text)?)
}

/// Split on commas that are not nested in parentheses, so `der(x,1)=0` stays
/// one entry.
fn split_top_level(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for c in text.chars() {
        match c {
            '(' => {
                depth += 1;
                current.push(c);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                current.push(c);
            }
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    out.push(current);
    out
}

fn parse_point(sys: &IdaeSystem, text: &str) -> Result<Point, IdaeError> {
    let mut point = Point::new();
    for part in split_top_level(text) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (name, value) = match split_point_entry(part) {
            Some(pair) => pair,
            None => {
                return Err(IdaeError::Numeric(format!(
                    "point entry `{part}` is not name=value"
                )));
            }
        };
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| IdaeError::Numeric(format!("invalid number in point entry `{part}`")))?;
        let name = name.trim();
        let (base, order) = if let Some(rest) = name.strip_prefix("der(") {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| IdaeError::Numeric(format!("malformed derivative name `{name}`")))?;
            let (var, ord) = inner
                .split_once(',')
                .ok_or_else(|| IdaeError::Numeric(format!("malformed derivative name `{name}`")))?;
            let ord: u32 = ord
                .trim()
                .parse()
                .map_err(|_| IdaeError::Numeric(format!("invalid derivative order in `{name}`")))?;
            (var.trim().to_string(), ord)
        } else {
            (name.to_string(), 0)
        };
        let index = sys
            .variables
            .iter()
            .position(|v| v.name == base)
            .ok_or_else(|| IdaeError::Numeric(format!("unknown variable `{base}` in point")))?;
        point.insert(JetVar { kind: sys.variables[index].kind, index, order }, value);
    }
    Ok(point)
}

/// Split on the last '=' so `der(x,2)=1` parses cleanly.
fn split_point_entry(part: &str) -> Option<(&str, &str)> {
    let idx = part.rfind('=')?;
    Some((&part[..idx], &part[idx + 1..]))
}

fn pipeline_options(sys: &IdaeSystem, common: &CommonOpts) -> Result<PipelineOptions, IdaeError> {
    let mut user_points = Vec::new();
    for text in &common.points {
        user_points.push(parse_point(sys, text)?);
    }
    Ok(PipelineOptions {
        seed: common.seed,
        rank_tol: common.tol_rank,
        refine_tol: common.tol_refine,
        max_iterations: common.max_iter,
        user_points,
        ..Default::default()
    })
}

fn emit_report(common: &CommonOpts, json: &str) -> Result<(), IdaeError> {
    match &common.report {
        Some(path) => std::fs::write(path, json)
            .map_err(|e| IdaeError::Numeric(format!("cannot write {}: {e}", path.display()))),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn write_report_if_requested(
    common: &CommonOpts,
    result: &idae_core::pipeline::PipelineResult,
) -> Result<(), IdaeError> {
    if let Some(path) = &common.report {
        let report = build_report(result);
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| IdaeError::Numeric(e.to_string()))?;
        std::fs::write(path, json)
            .map_err(|e| IdaeError::Numeric(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), IdaeError> {
    match cli.command {
        Command::Analyze { file, common } => {
            let sys = load_system(&file)?;
            let opts = pipeline_options(&sys, &common)?;
            let result = pipeline::analyze(&sys, &opts)?;
            let report = build_report(&result);
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| IdaeError::Numeric(e.to_string()))?;
            emit_report(&common, &json)
        }
        Command::Witness { file, common } => {
            let sys = load_system(&file)?;
            let opts = pipeline_options(&sys, &common)?;
            let result = pipeline::analyze(&sys, &opts)?;
            let report = build_report(&result);
            let json = serde_json::to_string_pretty(&serde_json::json!({
                "schema": 1,
                "system": report.system.name,
                "witness": report.witness,
            }))
            .map_err(|e| IdaeError::Numeric(e.to_string()))?;
            emit_report(&common, &json)
        }
        Command::Reduce { file, common } => {
            let sys = load_system(&file)?;
            let opts = pipeline_options(&sys, &common)?;
            let result = pipeline::analyze(&sys, &opts)?;
            for component in &result.components {
                println!(
                    "# component {} (rank {}, {}, {} embedding pass{})",
                    component.id,
                    component.initial_rank,
                    component.method,
                    component.augmentations,
                    if component.augmentations == 1 { "" } else { "es" },
                );
                print!("{}", component.regularized.system.to_dsl());
            }
            write_report_if_requested(&common, &result)
        }
        Command::Solve { file, common, span, segment, tol, traces } => {
            let sys = load_system(&file)?;
            let mut opts = pipeline_options(&sys, &common)?;
            opts.segment_len = segment;
            opts.tol = tol;
            let result = pipeline::analyze(&sys, &opts)?;
            std::fs::create_dir_all(&traces).map_err(|e| {
                IdaeError::Numeric(format!("cannot create {}: {e}", traces.display()))
            })?;
            let span = (span[0], span[1]);
            println!("component  rank  method  iterations  replaced            trace");
            for component in &result.components {
                let (_, trace) = pipeline::solve_component(&sys, component, span, &opts)?;
                let path = traces.join(format!("component{}.csv", component.id));
                std::fs::write(&path, trace.to_csv()).map_err(|e| {
                    IdaeError::Numeric(format!("cannot write {}: {e}", path.display()))
                })?;
                println!(
                    "{:<10} {:<5} {:<7} {:<11} {:<19} {}{}",
                    component.id,
                    component.initial_rank,
                    component.method,
                    component.augmentations,
                    if component.replaced.is_empty() {
                        "-".to_string()
                    } else {
                        component.replaced.join(" ")
                    },
                    path.display(),
                    match &trace.stopped {
                        Some(msg) => format!("  [stopped: {msg}]"),
                        None => String::new(),
                    },
                );
                for warning in &trace.warnings {
                    eprintln!("warning: component {}: {warning}", component.id);
                }
            }
            write_report_if_requested(&common, &result)
        }
        Command::Check { files, seed } => {
            let mut models = Vec::new();
            for file in &files {
                let text = std::fs::read_to_string(file).map_err(|e| {
                    IdaeError::Numeric(format!("cannot read {}: {e}", file.display()))
                })?;
                models.push((
                    file.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    text,
                ));
            }
            let reports = selfcheck::run_all(&models, seed);
            let mut failed = false;
            for report in &reports {
                println!(
                    "[{}] {}: {}",
                    if report.passed { "PASS" } else { "FAIL" },
                    report.name,
                    report.detail
                );
                failed |= !report.passed;
            }
            if failed {
                Err(IdaeError::Numeric("oracle suite failed".into()))
            } else {
                Ok(())
            }
        }
    }
}

//! Command-line driver: `validate`, `optimize`, `report` and `export`.
//!
//! Exit codes are 0 on success, 1 when the input fails validation or a
//! metric cannot be computed for it, and 2 on I/O, configuration or
//! environment errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use layoutforge::optimizer::{optimize_scene, AblationMode, OptimConfig, OptimError};
use layoutforge::plausibility::{evaluate, MetricParams, PlausibilityError};
use layoutforge::scene::{read_bundle, relative_path, save_bundle, validate_bundle, BundleError};
use layoutforge::mesh::write_obj_groups;
use layoutforge::SceneBundle;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "LAYOUTFORGE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    /// The input is readable but not acceptable (bad bundle, degenerate scene).
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) | CliError::Config(_) => 2,
        }
    }
}

impl From<BundleError> for CliError {
    fn from(e: BundleError) -> Self {
        match e {
            BundleError::Invalid(_) | BundleError::Mesh { .. } => CliError::Invalid(e.to_string()),
            BundleError::Io { .. } | BundleError::Parse { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<PlausibilityError> for CliError {
    fn from(e: PlausibilityError) -> Self {
        match e {
            PlausibilityError::Params(_) => CliError::Config(e.to_string()),
            PlausibilityError::DegenerateExtent => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::Config(_) => CliError::Config(e.to_string()),
            OptimError::Bundle(_) => CliError::Invalid(e.to_string()),
            OptimError::Sdf(_) => CliError::Io(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "layoutforge", version, about = "Physics-aware refinement and scoring of 3D scene layouts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check bundle invariants; prints one violation per line.
    Validate {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Refine all poses and write scene.out.json, trace.ndjson and report.json.
    Optimize(OptimizeArgs),
    /// Score a bundle as-is and write report.json.
    Report(ReportArgs),
    /// Write every posed mesh into one OBJ, one group per node.
    Export {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct MetricFlags {
    #[arg(long)]
    pub agent_radius: Option<f64>,
    #[arg(long)]
    pub cell: Option<f64>,
    #[arg(long)]
    pub contact_tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with `optimizer` and `metrics` sections; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<AblationMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iters_alignment: Option<usize>,
    #[arg(long)]
    pub max_iters_physics: Option<usize>,
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Directory for cached signed distance grids.
    #[arg(long)]
    pub sdf_cache: Option<PathBuf>,
    #[command(flatten)]
    pub metrics: MetricFlags,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Output directory for report.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub metrics: MetricFlags,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub optimizer: OptimConfig,
    pub metrics: MetricParams,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    fn apply_metric_flags(&mut self, flags: &MetricFlags, seed: Option<u64>) {
        let m = &mut self.metrics;
        if let Some(r) = flags.agent_radius {
            m.agent_radius = r;
        }
        if let Some(c) = flags.cell {
            m.cell = c;
        }
        if let Some(t) = flags.contact_tol {
            m.contact_tol = Some(t);
        }
        if let Some(s) = seed {
            m.seed = s;
        }
    }

    /// Config file merged under the command-line flags.
    pub fn for_optimize(args: &OptimizeArgs) -> Result<Self, CliError> {
        let mut cfg = Self::load(args.config.as_deref())?;
        let o = &mut cfg.optimizer;
        if let Some(m) = args.mode {
            o.mode = m;
        }
        if let Some(s) = args.seed {
            o.seed = s;
        }
        if let Some(n) = args.max_iters_alignment {
            o.max_iters_alignment = n;
        }
        if let Some(n) = args.max_iters_physics {
            o.max_iters_physics = n;
        }
        if let Some(r) = args.resolution {
            o.resolution = r;
        }
        if let Some(d) = &args.sdf_cache {
            o.sdf_cache = Some(d.clone());
        }
        cfg.apply_metric_flags(&args.metrics, args.seed);
        cfg.optimizer.validate()?;
        cfg.metrics.validate()?;
        Ok(cfg)
    }

    pub fn for_report(args: &ReportArgs) -> Result<Self, CliError> {
        let mut cfg = Self::load(args.config.as_deref())?;
        cfg.apply_metric_flags(&args.metrics, args.seed);
        cfg.metrics.validate()?;
        Ok(cfg)
    }
}

/// Caps rayon's global pool at `LAYOUTFORGE_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    log::debug!("{THREADS_ENV}={n} ignored: built without parallel support");
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads a bundle and rejects it if any invariant fails.
fn load_valid(path: &Path) -> Result<SceneBundle, CliError> {
    let bundle = read_bundle(path)?;
    let violations = validate_bundle(&bundle);
    if violations.is_empty() {
        Ok(bundle)
    } else {
        let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        Err(CliError::Invalid(lines.join("\n")))
    }
}

fn bundle_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_owned(),
        _ => PathBuf::from("."),
    }
}

/// Rewrites mesh references written relative to `from` so they resolve
/// from `to`.
pub fn rebase_mesh_refs(bundle: &SceneBundle, from: &Path, to: &Path) -> SceneBundle {
    let rebase = |r: &str| relative_path(&from.join(r), to).to_string_lossy().into_owned();
    let mut out = bundle.clone();
    out.meshes = bundle.meshes.iter().map(|(k, m)| (rebase(k), m.clone())).collect();
    for n in &mut out.graph.nodes {
        n.mesh_ref = rebase(&n.mesh_ref);
    }
    out
}

pub fn cmd_validate(bundle: &Path, stdout: &mut impl Write) -> Result<(), CliError> {
    let b = read_bundle(bundle)?;
    let violations = validate_bundle(&b);
    for v in &violations {
        writeln!(stdout, "{v}").map_err(|e| CliError::Io(e.to_string()))?;
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{} violation(s)", violations.len())))
    }
}

pub fn cmd_optimize(args: &OptimizeArgs, stdout: &mut impl Write) -> Result<(), CliError> {
    let cfg = RunConfig::for_optimize(args)?;
    let bundle = load_valid(&args.bundle)?;
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;

    let (result, traces) = optimize_scene(&bundle, &cfg.optimizer)?;
    let report = evaluate(&result, &cfg.metrics)?;

    let rebased = rebase_mesh_refs(&result, &bundle_dir(&args.bundle), &args.out);
    save_bundle(&rebased, args.out.join("scene.out.json"))?;
    let trace: String = traces.iter().map(|t| t.to_ndjson()).collect();
    write_file(&args.out.join("trace.ndjson"), &trace)?;
    write_file(&args.out.join("report.json"), &report.to_json())?;

    let out = |e: std::io::Error| CliError::Io(e.to_string());
    for t in traces.iter().filter(|t| t.aborted) {
        writeln!(stdout, "aborted: {} ({})", t.node, t.diagnostics.last().map_or("", String::as_str)).map_err(out)?;
    }
    writeln!(stdout, "{}", summary_line(&report)).map_err(out)?;
    Ok(())
}

fn summary_line(r: &layoutforge::PlausibilityReport) -> String {
    format!(
        "col_o={} col_s={} inst_o={} inst_s={} reach={} walk={}",
        r.col_o, r.col_s, r.inst_o, r.inst_s, r.reach, r.walk
    )
}

pub fn cmd_report(args: &ReportArgs, stdout: &mut impl Write) -> Result<(), CliError> {
    let cfg = RunConfig::for_report(args)?;
    let bundle = load_valid(&args.bundle)?;
    let report = evaluate(&bundle, &cfg.metrics)?;
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    write_file(&args.out.join("report.json"), &report.to_json())?;
    for d in &report.diagnostics {
        log::info!("{d}");
    }
    writeln!(stdout, "{}", summary_line(&report)).map_err(|e| CliError::Io(e.to_string()))
}

pub fn cmd_export(bundle: &Path, out: &Path) -> Result<(), CliError> {
    let b = load_valid(bundle)?;
    let posed: Vec<(&str, layoutforge::TriangleMesh)> = b
        .graph
        .nodes
        .iter()
        .map(|n| (n.id.as_str(), b.mesh_of(n).expect("validated bundle resolves meshes").posed(&n.pose)))
        .collect();
    write_file(out, &write_obj_groups(posed.iter().map(|(id, m)| (*id, m))))
}

/// Runs one parsed command line, printing errors to stderr.
pub fn run(cli: Cli) -> ExitCode {
    let mut stdout = std::io::stdout().lock();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Validate { bundle } => cmd_validate(bundle, &mut stdout),
        Command::Optimize(args) => cmd_optimize(args, &mut stdout),
        Command::Report(args) => cmd_report(args, &mut stdout),
        Command::Export { bundle, out } => cmd_export(bundle, out),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(cli.command, Command::Validate { .. }) || e.exit_code() != 1 {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

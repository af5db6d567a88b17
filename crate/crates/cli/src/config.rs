//! Command-line surface and configuration merging.
//!
//! Every tunable resolves with fixed precedence: command-line flag, then the
//! JSON config file, then (for the output directory) the `CTQW_OUTPUT_DIR`
//! environment variable, then the built-in default.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use ctqw_core::lattice::{build_hex_patch, build_paper31, Graph, TargetSpec};

use crate::exec::AppError;

pub const OUTPUT_DIR_ENV: &str = "CTQW_OUTPUT_DIR";

pub const DEFAULT_GRAPH: &str = "paper31";
pub const DEFAULT_TARGET: &str = "C";
pub const DEFAULT_BETA: f64 = 4.16;
pub const DEFAULT_T_MAX: f64 = 5.0;
pub const DEFAULT_STEP: f64 = 0.01;
pub const DEFAULT_SCALING_BETA: f64 = 4.0;
pub const DEFAULT_MODE_UM: f64 = 13.0;
pub const DEFAULT_SCALE_UM_PX: f64 = 2.0;
pub const DEFAULT_SPACING_UM: f64 = 23.40;

#[derive(Debug, Parser)]
#[command(
    name = "ctqw",
    version,
    about = "Quantum and classical walkers searching triangular waveguide lattices"
)]
pub struct Cli {
    /// JSON config file; command-line flags override its entries
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory artifacts are written to
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads (default: one per core)
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample both walkers on a time grid and write the curves as CSV
    Evolve(EvolveArgs),
    /// Quantum target probability over a detuning x time grid, as CSV
    Sweep(SweepArgs),
    /// Optimal advantage across patch sizes (and detunings), as CSV
    Scaling(ScalingArgs),
    /// Propagate a beam through a fabricated array and render facet images
    Photonics(PhotonicsArgs),
    /// Render classical walk distributions as facet images
    RenderClassical(RenderClassicalArgs),
}

#[derive(Debug, Args, Default)]
pub struct EvolveArgs {
    /// Graph token: paper31, hex:<layers>, or file:<path>
    #[arg(long)]
    pub graph: Option<String>,
    /// Target token: C, S, 1N, 2N, or a vertex index
    #[arg(long)]
    pub target: Option<String>,
    /// Detuning beta/gamma
    #[arg(long)]
    pub beta: Option<f64>,
    /// Upper end of the gamma*t grid
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Grid step in gamma*t
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct SweepArgs {
    #[arg(long)]
    pub graph: Option<String>,
    #[arg(long)]
    pub target: Option<String>,
    /// Comma-separated detuning values
    #[arg(long)]
    pub betas: Option<String>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ScalingArgs {
    /// Layer counts, either a..b or a comma-separated list
    #[arg(long)]
    pub layers: Option<String>,
    /// Comma-separated target tokens
    #[arg(long)]
    pub targets: Option<String>,
    /// Single detuning value
    #[arg(long)]
    pub beta: Option<f64>,
    /// Detuning grid; switches to the full size x detuning surface
    #[arg(long, conflicts_with = "beta")]
    pub betas: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct PhotonicsArgs {
    /// Fabrication preset name: A, B, C, or D
    #[arg(long)]
    pub preset: Option<String>,
    /// Chip length: short, long, or a value in mm
    #[arg(long)]
    pub length: Option<String>,
    #[arg(long)]
    pub graph: Option<String>,
    /// Comma-separated target tokens (none allowed)
    #[arg(long)]
    pub targets: Option<String>,
    /// 1/e^2 intensity diameter of the input beam in um (default: plane wave)
    #[arg(long)]
    pub waist_um: Option<f64>,
    #[arg(long)]
    pub tilt_x_mrad: Option<f64>,
    #[arg(long)]
    pub tilt_y_mrad: Option<f64>,
    #[arg(long)]
    pub offset_x_um: Option<f64>,
    #[arg(long)]
    pub offset_y_um: Option<f64>,
    /// Rendered 1/e^2 mode diameter in um
    #[arg(long)]
    pub mode_um: Option<f64>,
    /// Image scale in um per pixel
    #[arg(long)]
    pub scale_um_px: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct RenderClassicalArgs {
    #[arg(long)]
    pub graph: Option<String>,
    /// Target token (none renders the sink-free walk)
    #[arg(long)]
    pub target: Option<String>,
    /// Comma-separated ascending gamma*t values
    #[arg(long)]
    pub times: Option<String>,
    /// Waveguide spacing in um used for rendering
    #[arg(long)]
    pub spacing_um: Option<f64>,
    #[arg(long)]
    pub mode_um: Option<f64>,
    #[arg(long)]
    pub scale_um_px: Option<f64>,
}

/// JSON config file contents. Unknown keys are rejected so typos surface as
/// usage errors instead of silently falling back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub graph: Option<String>,
    pub target: Option<String>,
    pub targets: Option<Vec<String>>,
    pub beta: Option<f64>,
    pub betas: Option<Vec<f64>>,
    pub t_max: Option<f64>,
    pub step: Option<f64>,
    pub layers: Option<Vec<u32>>,
    pub preset: Option<String>,
    pub length: Option<String>,
    pub times: Option<Vec<f64>>,
    pub spacing_um: Option<f64>,
    pub waist_um: Option<f64>,
    pub tilt_x_mrad: Option<f64>,
    pub tilt_y_mrad: Option<f64>,
    pub offset_x_um: Option<f64>,
    pub offset_y_um: Option<f64>,
    pub mode_um: Option<f64>,
    pub scale_um_px: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Settings shared by every command, already merged across sources.
#[derive(Debug)]
pub struct Ctx {
    pub file: FileConfig,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
}

pub fn load_context(cli: &Cli) -> Result<Ctx, AppError> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                AppError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text).map_err(|e| {
                AppError::Usage(format!("invalid config {}: {e}", path.display()))
            })?
        }
        None => FileConfig::default(),
    };
    let output_dir = cli
        .output_dir
        .clone()
        .or_else(|| file.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let threads = cli.threads.or(file.threads);
    if threads == Some(0) {
        return Err(AppError::Usage("--threads must be at least 1".into()));
    }
    Ok(Ctx { file, output_dir, threads })
}

pub fn parse_graph(token: &str) -> Result<Graph, AppError> {
    if token == "paper31" {
        return Ok(build_paper31());
    }
    if let Some(rest) = token.strip_prefix("hex:") {
        let layers: u32 = rest.parse().map_err(|_| {
            AppError::Usage(format!("invalid layer count `{rest}` in graph token `{token}`"))
        })?;
        if layers == 0 {
            return Err(AppError::Usage("hex patch needs at least 1 layer".into()));
        }
        return Ok(build_hex_patch(layers));
    }
    if let Some(path) = token.strip_prefix("file:") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Usage(format!("cannot read graph file {path}: {e}")))?;
        return Graph::from_json_str(&text)
            .map_err(|e| AppError::Usage(format!("graph file {path}: {e}")));
    }
    Err(AppError::Usage(format!(
        "unknown graph token `{token}` (expected paper31, hex:<layers>, or file:<path>)"
    )))
}

pub fn parse_target(token: &str) -> Result<TargetSpec, AppError> {
    token.parse().map_err(AppError::Usage)
}

pub fn parse_target_list(tokens: &str) -> Result<Vec<TargetSpec>, AppError> {
    let list: Vec<TargetSpec> = tokens
        .split(',')
        .map(|t| parse_target(t.trim()))
        .collect::<Result<_, _>>()?;
    if list.is_empty() {
        return Err(AppError::Usage("target list is empty".into()));
    }
    Ok(list)
}

/// Accepts `a..b` (inclusive) or a comma-separated list; layers start at 1.
pub fn parse_layers(token: &str) -> Result<Vec<u32>, AppError> {
    let layers: Vec<u32> = if let Some((a, b)) = token.split_once("..") {
        let lo: u32 = a
            .trim()
            .parse()
            .map_err(|_| AppError::Usage(format!("invalid layer range `{token}`")))?;
        let hi: u32 = b
            .trim()
            .parse()
            .map_err(|_| AppError::Usage(format!("invalid layer range `{token}`")))?;
        if lo > hi {
            return Err(AppError::Usage(format!("empty layer range `{token}`")));
        }
        (lo..=hi).collect()
    } else {
        token
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| AppError::Usage(format!("invalid layer list `{token}`")))?
    };
    if layers.is_empty() {
        return Err(AppError::Usage("layer list is empty".into()));
    }
    if layers.contains(&0) {
        return Err(AppError::Usage("layer counts start at 1".into()));
    }
    Ok(layers)
}

pub fn parse_f64_list(token: &str, what: &str) -> Result<Vec<f64>, AppError> {
    let values: Vec<f64> = token
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| AppError::Usage(format!("invalid {what} list `{token}`")))?;
    if values.is_empty() {
        return Err(AppError::Usage(format!("{what} list is empty")));
    }
    Ok(values)
}

/// Strictly ascending nonnegative grid 0, step, 2*step, ..., up to t_max.
pub fn build_grid(t_max: f64, step: f64) -> Result<Vec<f64>, AppError> {
    if !(t_max > 0.0) || !(step > 0.0) {
        return Err(AppError::Usage(format!(
            "grid needs positive t_max and step, got t_max={t_max} step={step}"
        )));
    }
    let steps = (t_max / step + 1e-9).floor() as usize;
    Ok((0..=steps).map(|k| k as f64 * step).collect())
}

/// File-name-safe rendering of graph ids and target tokens.
pub fn sanitize(component: &str) -> String {
    component
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '.' || c == '-' { c } else { '-' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_tokens() {
        assert_eq!(parse_graph("paper31").unwrap().n(), 31);
        assert_eq!(parse_graph("hex:2").unwrap().n(), 19);
        assert!(matches!(parse_graph("hex:-1"), Err(AppError::Usage(_))));
        assert!(matches!(parse_graph("hex:0"), Err(AppError::Usage(_))));
        assert!(matches!(parse_graph("ring:4"), Err(AppError::Usage(_))));
        assert!(matches!(parse_graph("file:/no/such/graph.json"), Err(AppError::Usage(_))));
    }

    #[test]
    fn layer_tokens() {
        assert_eq!(parse_layers("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_layers("2,5").unwrap(), vec![2, 5]);
        assert_eq!(parse_layers("3").unwrap(), vec![3]);
        assert!(parse_layers("4..1").is_err());
        assert!(parse_layers("0..2").is_err());
        assert!(parse_layers("a..b").is_err());
    }

    #[test]
    fn target_tokens() {
        assert_eq!(parse_target("C").unwrap(), TargetSpec::Center);
        assert_eq!(
            parse_target_list("C, 1N,2N").unwrap(),
            vec![TargetSpec::Center, TargetSpec::FirstNeighbor, TargetSpec::SecondNeighbor]
        );
        assert!(parse_target("center").is_err());
    }

    #[test]
    fn grid_construction() {
        let g = build_grid(5.0, 0.01).unwrap();
        assert_eq!(g.len(), 501);
        assert_eq!(g[0], 0.0);
        assert!((g[500] - 5.0).abs() < 1e-12);
        assert!(build_grid(0.0, 0.01).is_err());
        assert!(build_grid(5.0, -1.0).is_err());
    }

    #[test]
    fn config_file_unknown_key_rejected() {
        let err = serde_json::from_str::<FileConfig>(r#"{"bteas": [1.0]}"#);
        assert!(err.is_err());
    }

    #[test]
    fn filename_sanitizing() {
        assert_eq!(sanitize("hex:3"), "hex-3");
        assert_eq!(sanitize("paper31"), "paper31");
        assert_eq!(sanitize("2.32"), "2.32");
    }
}

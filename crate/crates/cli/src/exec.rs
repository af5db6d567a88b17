//! Command dispatch and artifact emission.
//!
//! Every command computes in memory first, then writes each artifact through
//! a temp file + rename in the destination directory, so a crash or a failed
//! computation never leaves a partial file behind. Exit codes: 0 success,
//! 1 computation error, 2 usage error.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;
use thiserror::Error;

use ctqw_core::generators::{classical_generator, quantum_hamiltonian, SearchParams};
use ctqw_core::lattice::{resolve_target, Graph, TargetSpec};
use ctqw_core::photonics::{
    classical_facet_series, facet_comment, input_field, intensity_distribution, preset_by_name,
    propagate_array, render_facet, BeamSpec, FabPreset, WaveguideArraySpec,
};
use ctqw_core::propagator::{evolve_classical, ProbabilityVector, SpectralPropagator};
use ctqw_core::search::{
    beta_time_heatmap, beta_size_surface, curves_csv, format_sig12, optimal_time_refined,
    ratio_series, run_search, scaling_csv, scaling_study, uniform_state, RatioSeries,
};

use crate::config::{
    build_grid, load_context, parse_f64_list, parse_graph, parse_layers, parse_target,
    parse_target_list, sanitize, Cli, Command, Ctx, EvolveArgs, PhotonicsArgs,
    RenderClassicalArgs, ScalingArgs, SweepArgs, DEFAULT_BETA, DEFAULT_GRAPH, DEFAULT_MODE_UM,
    DEFAULT_SCALE_UM_PX, DEFAULT_SCALING_BETA, DEFAULT_SPACING_UM, DEFAULT_STEP, DEFAULT_TARGET,
    DEFAULT_T_MAX,
};

#[derive(Debug, Error)]
pub enum AppError {
    /// Bad invocation or config; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// The run itself failed; exit code 1.
    #[error("{0}")]
    Computation(String),
}

impl AppError {
    fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Computation(_) => 1,
        }
    }
}

macro_rules! computation_from {
    ($($ty:ty),+) => {$(
        impl From<$ty> for AppError {
            fn from(e: $ty) -> Self {
                AppError::Computation(e.to_string())
            }
        }
    )+};
}
computation_from!(
    ctqw_core::lattice::LatticeError,
    ctqw_core::generators::GeneratorError,
    ctqw_core::propagator::PropagatorError,
    ctqw_core::search::SearchError,
    ctqw_core::photonics::PhotonicsError
);

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version on stdout (exit 0) and argument
            // errors on stderr (exit 2) by itself.
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), AppError> {
    let ctx = load_context(cli)?;
    if let Some(k) = ctx.threads {
        // Pool size is process-global; a repeated call (only possible from
        // tests driving dispatch twice) keeps the first pool, which is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    std::fs::create_dir_all(&ctx.output_dir).map_err(|e| {
        AppError::Usage(format!(
            "cannot create output dir {}: {e}",
            ctx.output_dir.display()
        ))
    })?;
    match &cli.command {
        Command::Evolve(a) => cmd_evolve(a, &ctx),
        Command::Sweep(a) => cmd_sweep(a, &ctx),
        Command::Scaling(a) => cmd_scaling(a, &ctx),
        Command::Photonics(a) => cmd_photonics(a, &ctx),
        Command::RenderClassical(a) => cmd_render_classical(a, &ctx),
    }
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, AppError> {
    let stage = |e: std::io::Error| {
        AppError::Computation(format!("writing {name} in {}: {e}", dir.display()))
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".ctqw.")
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(stage)?;
    tmp.write_all(bytes).map_err(stage)?;
    let path = dir.join(name);
    tmp.persist(&path)
        .map_err(|e| AppError::Computation(format!("renaming into {}: {e}", path.display())))?;
    Ok(path)
}

fn concrete_target(spec: TargetSpec, command: &str) -> Result<TargetSpec, AppError> {
    if spec == TargetSpec::None {
        return Err(AppError::Usage(format!(
            "{command} needs a concrete target (C, S, 1N, 2N, or an index), not `none`"
        )));
    }
    Ok(spec)
}

fn resolve_graph(flag: &Option<String>, ctx: &Ctx) -> Result<Graph, AppError> {
    let token = flag
        .clone()
        .or_else(|| ctx.file.graph.clone())
        .unwrap_or_else(|| DEFAULT_GRAPH.to_string());
    parse_graph(&token)
}

fn resolve_single_target(flag: &Option<String>, ctx: &Ctx) -> Result<TargetSpec, AppError> {
    let token = flag
        .clone()
        .or_else(|| ctx.file.target.clone())
        .unwrap_or_else(|| DEFAULT_TARGET.to_string());
    parse_target(&token)
}

fn resolve_grid(args_t_max: Option<f64>, args_step: Option<f64>, ctx: &Ctx) -> Result<Vec<f64>, AppError> {
    let t_max = args_t_max.or(ctx.file.t_max).unwrap_or(DEFAULT_T_MAX);
    let step = args_step.or(ctx.file.step).unwrap_or(DEFAULT_STEP);
    build_grid(t_max, step)
}

/// Golden-section polish of the grid optimum, evaluating the exact ratio.
fn refined_optimum(
    g: &Graph,
    spec: TargetSpec,
    beta_over_gamma: f64,
    ratios: &RatioSeries,
) -> Result<(f64, f64), AppError> {
    let target = resolve_target(g, spec)?
        .ok_or_else(|| AppError::Usage("a concrete target is required".into()))?;
    let params = SearchParams::new(1.0, beta_over_gamma, Some(target));
    let h = quantum_hamiltonian(g, &params)?;
    let prop = SpectralPropagator::new(&h)?;
    let coeffs = prop.project(&uniform_state(g.n()));
    let lc = classical_generator(g, Some(target))?;
    let p0 = ProbabilityVector::uniform(g.n());
    Ok(optimal_time_refined(ratios, |t| {
        let pq = prop.site_probability(&coeffs, target, t);
        let pc = evolve_classical(&lc, &p0, 1.0, t)
            .map(|p| p.get(target))
            .unwrap_or(f64::NAN);
        pq / pc
    }))
}

fn cmd_evolve(a: &EvolveArgs, ctx: &Ctx) -> Result<(), AppError> {
    let g = resolve_graph(&a.graph, ctx)?;
    let spec = concrete_target(resolve_single_target(&a.target, ctx)?, "evolve")?;
    let beta = a.beta.or(ctx.file.beta).unwrap_or(DEFAULT_BETA);
    let grid = resolve_grid(a.t_max, a.step, ctx)?;

    let series = run_search(&g, spec, beta, &grid)?;
    let ratios = ratio_series(&series)?;
    let (t_opt, r_opt) = refined_optimum(&g, spec, beta, &ratios)?;
    let name = format!("evolve_{}_{}.csv", sanitize(g.id()), sanitize(&spec.to_string()));
    let path = write_atomic(&ctx.output_dir, &name, curves_csv(&series, &ratios).as_bytes())?;
    println!(
        "evolve graph={} n={} target={} beta={} points={} t_opt={:.6} r_opt={:.6} wrote {}",
        g.id(),
        g.n(),
        spec,
        beta,
        grid.len(),
        t_opt,
        r_opt,
        path.display()
    );
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, ctx: &Ctx) -> Result<(), AppError> {
    let g = resolve_graph(&a.graph, ctx)?;
    let spec = concrete_target(resolve_single_target(&a.target, ctx)?, "sweep")?;
    let betas = match (&a.betas, &ctx.file.betas) {
        (Some(tok), _) => parse_f64_list(tok, "detuning")?,
        (None, Some(v)) if !v.is_empty() => v.clone(),
        _ => (2..=8).map(f64::from).collect(),
    };
    let grid = resolve_grid(a.t_max, a.step, ctx)?;

    let heat = beta_time_heatmap(&g, spec, &betas, &grid)?;
    let mut csv = String::from("beta_over_gamma,gamma_t,p_quantum_target\n");
    for (row, &beta) in heat.iter().zip(&betas) {
        for (&p, &t) in row.iter().zip(&grid) {
            csv.push_str(&format_sig12(beta));
            csv.push(',');
            csv.push_str(&format_sig12(t));
            csv.push(',');
            csv.push_str(&format_sig12(p));
            csv.push('\n');
        }
    }
    let name = format!("sweep_{}_{}.csv", sanitize(g.id()), sanitize(&spec.to_string()));
    let path = write_atomic(&ctx.output_dir, &name, csv.as_bytes())?;
    println!(
        "sweep graph={} target={} betas={} points={} rows={} wrote {}",
        g.id(),
        spec,
        betas.len(),
        grid.len(),
        betas.len() * grid.len(),
        path.display()
    );
    Ok(())
}

fn cmd_scaling(a: &ScalingArgs, ctx: &Ctx) -> Result<(), AppError> {
    let layers = match (&a.layers, &ctx.file.layers) {
        (Some(tok), _) => parse_layers(tok)?,
        (None, Some(v)) if !v.is_empty() => {
            if v.contains(&0) {
                return Err(AppError::Usage("layer counts start at 1".into()));
            }
            v.clone()
        }
        _ => (1..=5).collect(),
    };
    let targets = match (&a.targets, &ctx.file.targets) {
        (Some(tok), _) => parse_target_list(tok)?,
        (None, Some(v)) if !v.is_empty() => v
            .iter()
            .map(|s| parse_target(s))
            .collect::<Result<Vec<_>, _>>()?,
        _ => vec![TargetSpec::Center, TargetSpec::FirstNeighbor, TargetSpec::SecondNeighbor],
    };
    for &t in &targets {
        concrete_target(t, "scaling")?;
    }

    let betas = match (&a.betas, &ctx.file.betas) {
        (Some(tok), _) => Some(parse_f64_list(tok, "detuning")?),
        (None, Some(v)) if !v.is_empty() && a.beta.is_none() => Some(v.clone()),
        _ => None,
    };
    let (records, name) = match betas {
        Some(betas) => (
            beta_size_surface(&layers, &targets, &betas)?,
            "scaling_surface.csv",
        ),
        None => {
            let beta = a.beta.or(ctx.file.beta).unwrap_or(DEFAULT_SCALING_BETA);
            (scaling_study(&layers, &targets, beta)?, "scaling.csv")
        }
    };
    let path = write_atomic(&ctx.output_dir, name, scaling_csv(&records).as_bytes())?;
    match records.iter().max_by(|x, y| x.r_opt.total_cmp(&y.r_opt)) {
        Some(best) => println!(
            "scaling records={} best: n={} target={} beta={} t_opt={:.6} r_opt={:.6} wrote {}",
            records.len(),
            best.n,
            best.target_kind,
            best.beta_over_gamma,
            best.t_opt,
            best.r_opt,
            path.display()
        ),
        None => println!("scaling records=0 wrote {}", path.display()),
    }
    Ok(())
}

/// Chip length token: `short` and `long` select the two fabricated lengths
/// of the preset; a bare number is millimeters.
fn parse_length(token: &str, preset: &FabPreset) -> Result<(f64, String), AppError> {
    match token {
        "short" => Ok((preset.lengths_mm[0], "short".into())),
        "long" => Ok((preset.lengths_mm[1], "long".into())),
        other => {
            let mm: f64 = other.parse().map_err(|_| {
                AppError::Usage(format!(
                    "invalid length `{other}` (expected short, long, or millimeters)"
                ))
            })?;
            if !(mm >= 0.0) {
                return Err(AppError::Usage(format!("length {mm} mm must be nonnegative")));
            }
            Ok((mm, sanitize(other)))
        }
    }
}

fn cmd_photonics(a: &PhotonicsArgs, ctx: &Ctx) -> Result<(), AppError> {
    let preset_name = a
        .preset
        .clone()
        .or_else(|| ctx.file.preset.clone())
        .unwrap_or_else(|| "A".to_string());
    let preset = preset_by_name(&preset_name).map_err(|e| AppError::Usage(e.to_string()))?;
    let length_token = a
        .length
        .clone()
        .or_else(|| ctx.file.length.clone())
        .unwrap_or_else(|| "long".to_string());
    let (length_mm, length_tag) = parse_length(&length_token, &preset)?;
    let g = resolve_graph(&a.graph, ctx)?;
    let targets = match (&a.targets, &ctx.file.targets) {
        (Some(tok), _) => parse_target_list(tok)?,
        (None, Some(v)) if !v.is_empty() => v
            .iter()
            .map(|s| parse_target(s))
            .collect::<Result<Vec<_>, _>>()?,
        _ => vec![TargetSpec::None, TargetSpec::Center, TargetSpec::Shifted],
    };

    let mut beam = match a.waist_um.or(ctx.file.waist_um) {
        Some(w) if w > 0.0 => BeamSpec { waist_diameter_um: w, ..BeamSpec::uniform() },
        Some(w) => {
            return Err(AppError::Usage(format!("beam waist {w} µm must be positive")));
        }
        None => BeamSpec::uniform(),
    };
    beam = beam.with_tilt(
        a.tilt_x_mrad.or(ctx.file.tilt_x_mrad).unwrap_or(0.0),
        a.tilt_y_mrad.or(ctx.file.tilt_y_mrad).unwrap_or(0.0),
    );
    beam.offset_um = (
        a.offset_x_um.or(ctx.file.offset_x_um).unwrap_or(0.0),
        a.offset_y_um.or(ctx.file.offset_y_um).unwrap_or(0.0),
    );
    let mode_um = a.mode_um.or(ctx.file.mode_um).unwrap_or(DEFAULT_MODE_UM);
    let scale = a.scale_um_px.or(ctx.file.scale_um_px).unwrap_or(DEFAULT_SCALE_UM_PX);

    let gamma_t = preset.gamma_t(length_mm);
    // Targets propagate independently; images are collected in input order
    // and written by this single thread.
    let rendered: Result<Vec<_>, AppError> = targets
        .par_iter()
        .map(|&spec| {
            let target = resolve_target(&g, spec)?;
            let wspec = WaveguideArraySpec::from_preset(g.clone(), &preset, target, length_mm);
            let out = propagate_array(&wspec, &input_field(&wspec, &beam)?)?;
            let dist = intensity_distribution(&out)?;
            let img = render_facet(&wspec.graph, &dist, mode_um, scale)?;
            Ok((spec, img))
        })
        .collect();
    let mut written = Vec::new();
    for (spec, img) in rendered? {
        let name = format!(
            "facet_{}_{}_{}.pgm",
            sanitize(&preset.name),
            length_tag,
            sanitize(&spec.to_string())
        );
        let comment = facet_comment(g.id(), gamma_t, spec);
        written.push(write_atomic(&ctx.output_dir, &name, &img.to_pgm_bytes(&comment))?);
    }
    println!(
        "photonics preset={} length_mm={} gamma_t={:.4} graph={} images={} wrote {}",
        preset.name,
        length_mm,
        gamma_t,
        g.id(),
        written.len(),
        ctx.output_dir.display()
    );
    Ok(())
}

fn cmd_render_classical(a: &RenderClassicalArgs, ctx: &Ctx) -> Result<(), AppError> {
    let g = resolve_graph(&a.graph, ctx)?;
    let spacing = a
        .spacing_um
        .or(ctx.file.spacing_um)
        .or_else(|| g.spacing_um())
        .unwrap_or(DEFAULT_SPACING_UM);
    if !(spacing > 0.0) {
        return Err(AppError::Usage(format!("spacing {spacing} µm must be positive")));
    }
    let g = g.with_spacing(spacing);
    let spec = resolve_single_target(&a.target, ctx)?;
    let times = match (&a.times, &ctx.file.times) {
        (Some(tok), _) => parse_f64_list(tok, "time")?,
        (None, Some(v)) if !v.is_empty() => v.clone(),
        _ => vec![1.16, 2.32],
    };
    if times.windows(2).any(|w| w[1] <= w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(AppError::Usage(
            "times must be nonnegative and strictly ascending".into(),
        ));
    }
    let mode_um = a.mode_um.or(ctx.file.mode_um).unwrap_or(DEFAULT_MODE_UM);
    let scale = a.scale_um_px.or(ctx.file.scale_um_px).unwrap_or(DEFAULT_SCALE_UM_PX);

    let images = classical_facet_series(&g, spec, &times, mode_um, scale)?;
    let mut written = Vec::new();
    for (&t, img) in times.iter().zip(&images) {
        let name = format!(
            "classical_{}_{}_gt{}.pgm",
            sanitize(g.id()),
            sanitize(&spec.to_string()),
            sanitize(&format!("{t}"))
        );
        let comment = facet_comment(g.id(), t, spec);
        written.push(write_atomic(&ctx.output_dir, &name, &img.to_pgm_bytes(&comment))?);
    }
    println!(
        "render-classical graph={} target={} images={} wrote {}",
        g.id(),
        spec,
        written.len(),
        ctx.output_dir.display()
    );
    Ok(())
}

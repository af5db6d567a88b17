//! In-silico model of the femtosecond-written waveguide-array realization:
//! fabrication presets, the exponential coupling law, beam-shaped and tilted
//! input states, coupled-mode propagation, and output-facet rendering.
//!
//! Coupled-mode theory turns the array into a tight-binding system, so
//! propagation reuses the quantum walker verbatim with the propagation
//! length as the time axis.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generators::{classical_generator, quantum_hamiltonian, GeneratorError, SearchParams};
use crate::lattice::{automorphism_orbit, resolve_target, Graph, LatticeError, TargetSpec};
use crate::propagator::{
    evolve_classical_on_grid, evolve_quantum, ComplexState, ProbabilityVector, PropagatorError,
};

#[derive(Debug, Error)]
pub enum PhotonicsError {
    #[error("coupling-law fit needs at least two distinct spacings")]
    DegeneratePoints,
    #[error("coupling rates must be positive to fit an exponential law")]
    NonPositiveCoupling,
    #[error("graph has no physical waveguide spacing set")]
    MissingSpacing,
    #[error("cannot normalize a zero field")]
    ZeroState,
    #[error("cannot render an empty graph")]
    EmptyGraph,
    #[error("preset table invalid: {0}")]
    InvalidPreset(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
}

/// One fabrication recipe: writing speeds, measured coupling and detuning,
/// and the normalized propagation coordinates at the two chip lengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FabPreset {
    pub name: String,
    pub spacing_um: f64,
    pub v_mm_s: f64,
    pub v0_mm_s: f64,
    pub gamma_per_mm: f64,
    pub beta_per_mm: f64,
    pub lengths_mm: [f64; 2],
    pub gamma_t_table: [f64; 2],
}

impl FabPreset {
    pub fn beta_over_gamma(&self) -> f64 {
        self.beta_per_mm / self.gamma_per_mm
    }

    /// Dimensionless propagation coordinate γ·L at a chip length.
    pub fn gamma_t(&self, length_mm: f64) -> f64 {
        self.gamma_per_mm * length_mm
    }
}

const PRESETS_JSON: &str = include_str!("../data/presets.json");

/// The four fabrication presets, validated.
pub fn load_presets() -> Result<Vec<FabPreset>, PhotonicsError> {
    let presets: Vec<FabPreset> = serde_json::from_str(PRESETS_JSON)
        .map_err(|e| PhotonicsError::InvalidPreset(e.to_string()))?;
    for p in &presets {
        if p.gamma_per_mm <= 0.0 {
            return Err(PhotonicsError::InvalidPreset(format!(
                "preset {} has nonpositive coupling",
                p.name
            )));
        }
        let ratio = p.beta_over_gamma();
        if (ratio - 4.1).abs() > 0.05 * 4.1 {
            return Err(PhotonicsError::InvalidPreset(format!(
                "preset {} detuning ratio {ratio} outside the design window",
                p.name
            )));
        }
    }
    Ok(presets)
}

pub fn preset_by_name(name: &str) -> Result<FabPreset, PhotonicsError> {
    load_presets()?
        .into_iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| PhotonicsError::InvalidPreset(format!("no preset named {name}")))
}

/// Least-squares fit of γ(a) = γ₀·exp(−a/a₀) in log space.
/// Returns (γ₀ in 1/mm, a₀ in µm).
pub fn fit_coupling_law(points: &[(f64, f64)]) -> Result<(f64, f64), PhotonicsError> {
    if points.len() < 2 {
        return Err(PhotonicsError::DegeneratePoints);
    }
    if points.iter().any(|&(_, g)| g <= 0.0) {
        return Err(PhotonicsError::NonPositiveCoupling);
    }
    let n = points.len() as f64;
    let mean_a = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_ln = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(a, g) in points {
        sxx += (a - mean_a) * (a - mean_a);
        sxy += (a - mean_a) * (g.ln() - mean_ln);
    }
    if sxx == 0.0 {
        return Err(PhotonicsError::DegeneratePoints);
    }
    let slope = sxy / sxx;
    if slope >= 0.0 {
        // Couplings must decay with separation for a₀ to make sense.
        return Err(PhotonicsError::DegeneratePoints);
    }
    let gamma0 = (mean_ln - slope * mean_a).exp();
    Ok((gamma0, -1.0 / slope))
}

/// Physical description of one fabricated array.
#[derive(Debug, Clone)]
pub struct WaveguideArraySpec {
    pub graph: Graph,
    pub gamma_per_mm: f64,
    pub beta_per_mm: f64,
    pub target: Option<usize>,
    pub length_mm: f64,
    pub wavelength_nm: f64,
}

impl WaveguideArraySpec {
    pub fn new(graph: Graph, gamma_per_mm: f64, beta_per_mm: f64, target: Option<usize>, length_mm: f64) -> Self {
        Self { graph, gamma_per_mm, beta_per_mm, target, length_mm, wavelength_nm: 633.0 }
    }

    pub fn from_preset(graph: Graph, preset: &FabPreset, target: Option<usize>, length_mm: f64) -> Self {
        Self::new(
            graph.with_spacing(preset.spacing_um),
            preset.gamma_per_mm,
            preset.beta_per_mm,
            target,
            length_mm,
        )
    }

    fn validate(&self) -> Result<(), PhotonicsError> {
        if self.graph.spacing_um().is_none() {
            return Err(PhotonicsError::MissingSpacing);
        }
        if !(self.length_mm >= 0.0) || !(self.wavelength_nm > 0.0) {
            return Err(PhotonicsError::InvalidPreset(format!(
                "length {} mm / wavelength {} nm out of range",
                self.length_mm, self.wavelength_nm
            )));
        }
        Ok(())
    }
}

/// Input illumination: Gaussian waist (infinite = plane wave), tilts, offset.
#[derive(Debug, Clone, Copy)]
pub struct BeamSpec {
    /// 1/e² intensity diameter in µm; `f64::INFINITY` for uniform illumination.
    pub waist_diameter_um: f64,
    pub tilt_x_mrad: f64,
    pub tilt_y_mrad: f64,
    pub offset_um: (f64, f64),
}

impl BeamSpec {
    /// Plane wave at normal incidence.
    pub fn uniform() -> Self {
        Self {
            waist_diameter_um: f64::INFINITY,
            tilt_x_mrad: 0.0,
            tilt_y_mrad: 0.0,
            offset_um: (0.0, 0.0),
        }
    }

    pub fn with_tilt(mut self, x_mrad: f64, y_mrad: f64) -> Self {
        self.tilt_x_mrad = x_mrad;
        self.tilt_y_mrad = y_mrad;
        self
    }
}

/// Field amplitudes coupled into each waveguide: Gaussian envelope sampled
/// at the waveguide centers, plane-wave tilt phase, unit norm.
pub fn input_field(
    spec: &WaveguideArraySpec,
    beam: &BeamSpec,
) -> Result<ComplexState, PhotonicsError> {
    spec.validate()?;
    if !(beam.waist_diameter_um > 0.0) {
        return Err(PhotonicsError::InvalidPreset(format!(
            "beam waist {} µm must be positive",
            beam.waist_diameter_um
        )));
    }
    let positions = spec.graph.embedded_positions(true);
    let w0 = beam.waist_diameter_um / 2.0;
    let lambda_um = spec.wavelength_nm * 1e-3;
    let kx = 2.0 * std::f64::consts::PI / lambda_um * (beam.tilt_x_mrad * 1e-3).sin();
    let ky = 2.0 * std::f64::consts::PI / lambda_um * (beam.tilt_y_mrad * 1e-3).sin();
    let amplitudes = DVector::from_iterator(
        positions.len(),
        positions.iter().map(|&(x, y)| {
            let envelope = if w0.is_infinite() {
                1.0
            } else {
                let dx = x - beam.offset_um.0;
                let dy = y - beam.offset_um.1;
                (-(dx * dx + dy * dy) / (w0 * w0)).exp()
            };
            Complex64::from_polar(envelope, kx * x + ky * y)
        }),
    );
    let state = ComplexState::new(amplitudes);
    if state.norm() == 0.0 {
        return Err(PhotonicsError::ZeroState);
    }
    Ok(state.normalized())
}

/// Propagate an input field through the array: tight-binding evolution with
/// first-neighbor coupling γ, target detuning β, over the chip length.
pub fn propagate_array(
    spec: &WaveguideArraySpec,
    input: &ComplexState,
) -> Result<ComplexState, PhotonicsError> {
    spec.validate()?;
    let params = SearchParams::new(spec.gamma_per_mm, spec.beta_per_mm, spec.target);
    let h = quantum_hamiltonian(&spec.graph, &params)?;
    Ok(evolve_quantum(&h, input, spec.length_mm)?)
}

/// |ψ_j|² renormalized to sum 1, matching how measured facet images are
/// reduced to site populations.
pub fn intensity_distribution(state: &ComplexState) -> Result<ProbabilityVector, PhotonicsError> {
    let raw = state.site_probabilities();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(PhotonicsError::ZeroState);
    }
    Ok(ProbabilityVector::try_new(DVector::from_iterator(
        raw.len(),
        raw.iter().map(|p| p / total),
    ))?)
}

/// 16-bit grayscale raster, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u16>,
    pub scale_um_per_px: f64,
}

impl RasterImage {
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.width + col]
    }

    pub fn argmax_pixel(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &p) in self.pixels.iter().enumerate() {
            if p > self.pixels[best] {
                best = k;
            }
        }
        (best / self.width, best % self.width)
    }

    /// Binary PGM (P5), 16-bit big-endian, one comment line of metadata.
    pub fn to_pgm_bytes(&self, comment: &str) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 * self.pixels.len() + 64);
        out.extend_from_slice(
            format!("P5\n# {}\n{} {}\n65535\n", comment, self.width, self.height).as_bytes(),
        );
        for &p in &self.pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
        out
    }
}

/// Metadata line carried in every facet image.
pub fn facet_comment(graph_id: &str, gamma_t: f64, target: TargetSpec) -> String {
    format!("graph={} gamma_t={:.6} target={}", graph_id, gamma_t, target)
}

/// Render site intensities as a sum of Gaussian fiber modes (1/e² intensity
/// diameter `mode_diameter_um`) at the physical waveguide positions,
/// normalized so the brightest pixel is full scale.
pub fn render_facet(
    graph: &Graph,
    intensities: &ProbabilityVector,
    mode_diameter_um: f64,
    scale_um_per_px: f64,
) -> Result<RasterImage, PhotonicsError> {
    if graph.n() == 0 {
        return Err(PhotonicsError::EmptyGraph);
    }
    if graph.spacing_um().is_none() {
        return Err(PhotonicsError::MissingSpacing);
    }
    if !(mode_diameter_um > 0.0) || !(scale_um_per_px > 0.0) {
        return Err(PhotonicsError::InvalidPreset(format!(
            "mode diameter {mode_diameter_um} µm / scale {scale_um_per_px} µm per px out of range"
        )));
    }
    let positions = graph.embedded_positions(true);
    let pad = 2.0 * mode_diameter_um;
    let xmin = positions.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - pad;
    let xmax = positions.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + pad;
    let ymin = positions.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) - pad;
    let ymax = positions.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max) + pad;
    let width = ((xmax - xmin) / scale_um_per_px).ceil() as usize + 1;
    let height = ((ymax - ymin) / scale_um_per_px).ceil() as usize + 1;

    let mode_radius = mode_diameter_um / 2.0;
    let inv_w2 = 2.0 / (mode_radius * mode_radius);
    let mut field = vec![0.0_f64; width * height];
    for row in 0..height {
        let y = ymax - (row as f64 + 0.5) * scale_um_per_px;
        for col in 0..width {
            let x = xmin + (col as f64 + 0.5) * scale_um_per_px;
            let mut acc = 0.0;
            for (j, &(wx, wy)) in positions.iter().enumerate() {
                let r2 = (x - wx) * (x - wx) + (y - wy) * (y - wy);
                acc += intensities.get(j) * (-inv_w2 * r2).exp();
            }
            field[row * width + col] = acc;
        }
    }
    let peak = field.iter().cloned().fold(0.0, f64::max);
    let pixels = if peak > 0.0 {
        field.iter().map(|&v| (v / peak * 65535.0).round() as u16).collect()
    } else {
        vec![0; width * height]
    };
    Ok(RasterImage { width, height, pixels, scale_um_per_px })
}

/// Classical sink-walk distributions at the requested times, rendered as
/// facet images. With no target the plain (sink-free) walk generator is used.
pub fn classical_facet_series(
    g: &Graph,
    spec: TargetSpec,
    gamma_t_list: &[f64],
    mode_diameter_um: f64,
    scale_um_per_px: f64,
) -> Result<Vec<RasterImage>, PhotonicsError> {
    if gamma_t_list.is_empty() {
        return Err(PhotonicsError::InvalidPreset("empty time list".into()));
    }
    if gamma_t_list.windows(2).any(|w| w[1] <= w[0]) || gamma_t_list[0] < 0.0 {
        return Err(PhotonicsError::InvalidPreset(
            "time list must be strictly ascending and nonnegative".into(),
        ));
    }
    let target = resolve_target(g, spec)?;
    let lc = classical_generator(g, target)?;
    let p0 = ProbabilityVector::uniform(g.n());
    let series = evolve_classical_on_grid(&lc, &p0, 1.0, gamma_t_list)?;
    series
        .par_iter()
        .map(|dist| render_facet(g, dist, mode_diameter_um, scale_um_per_px))
        .collect()
}

/// Worst per-site discrepancy of a distribution under the lattice rotations
/// that map the layout onto itself. Zero for a perfectly symmetric output.
pub fn rotation_asymmetry(g: &Graph, probs: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for perm in automorphism_orbit(g) {
        for (v, &image) in perm.iter().enumerate() {
            worst = worst.max((probs[v] - probs[image]).abs());
        }
    }
    worst
}

//! Spatial-search experiment logic: probability curves for both walkers,
//! the quantum/classical ratio, optimal evolution times, and the parameter
//! sweeps over detuning and patch size.
//!
//! The hopping rate is fixed to 1 internally and every time is reported as
//! the dimensionless product γt; the physics only depends on β/γ, so this
//! loses no generality.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::generators::{
    classical_generator, quantum_hamiltonian, ClassicalGenerator, GeneratorError, SearchParams,
};
use crate::lattice::{build_hex_patch, resolve_target, Graph, LatticeError, TargetSpec};
use crate::propagator::{
    evolve_classical, evolve_classical_on_grid, ComplexState, ProbabilityVector, PropagatorError,
    SpectralPropagator,
};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error("{0} grid is empty")]
    EmptyGrid(&'static str),
    #[error("time grid must be strictly ascending and nonnegative")]
    GridNotAscending,
    #[error("a search run needs a target vertex, got target spec `none`")]
    TargetRequired,
    #[error("classical probability {value:.3e} at γt={gamma_t} too small to divide by")]
    DivisionDomain { gamma_t: f64, value: f64 },
    #[error("internal consistency violated: {0}")]
    InvariantViolation(String),
}

/// Uniform superposition over all vertices, flat phase.
pub fn uniform_state(n: usize) -> ComplexState {
    assert!(n >= 1, "state needs at least one site");
    let amp = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    ComplexState::new(DVector::from_element(n, amp))
}

/// Both walkers sampled on a common time grid.
#[derive(Debug, Clone)]
pub struct EvolutionSeries {
    pub gamma_t_grid: Vec<f64>,
    /// Full per-site quantum distribution at each grid time.
    pub quantum_site_probs: Vec<Vec<f64>>,
    /// Probability accumulated at the target by the classical sink walker.
    pub classical_target_prob: Vec<f64>,
    pub target: usize,
    pub params: SearchParams,
    pub graph_id: String,
}

impl EvolutionSeries {
    /// Quantum probability at the target per grid time.
    pub fn quantum_target_prob(&self) -> Vec<f64> {
        self.quantum_site_probs.iter().map(|p| p[self.target]).collect()
    }
}

/// Pointwise quantum/classical target-probability quotient.
#[derive(Debug, Clone)]
pub struct RatioSeries {
    pub gamma_t_grid: Vec<f64>,
    pub ratio: Vec<f64>,
}

/// One point of the size/detuning scaling study.
#[derive(Debug, Clone)]
pub struct ScalingRecord {
    pub n: usize,
    pub layers: u32,
    pub target_kind: TargetSpec,
    pub beta_over_gamma: f64,
    pub t_opt: f64,
    pub r_opt: f64,
    pub pq_opt: f64,
    pub pc_opt: f64,
}

fn validate_grid(grid: &[f64]) -> Result<(), SearchError> {
    if grid.is_empty() {
        return Err(SearchError::EmptyGrid("time"));
    }
    if grid[0] < 0.0 {
        return Err(SearchError::GridNotAscending);
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) && grid.len() > 1 {
        return Err(SearchError::GridNotAscending);
    }
    Ok(())
}

/// Evolve the quantum walker (unitary, detuned target) and the classical
/// walker (sink at the target) from the uniform state over the given grid.
pub fn run_search(
    g: &Graph,
    spec: TargetSpec,
    beta_over_gamma: f64,
    gamma_t_grid: &[f64],
) -> Result<EvolutionSeries, SearchError> {
    validate_grid(gamma_t_grid)?;
    let target = resolve_target(g, spec)?.ok_or(SearchError::TargetRequired)?;
    let params = SearchParams::new(1.0, beta_over_gamma, Some(target));

    let h = quantum_hamiltonian(g, &params)?;
    let prop = SpectralPropagator::new(&h)?;
    let psi0 = uniform_state(g.n());
    let coeffs = prop.project(&psi0);
    let mut quantum_site_probs = Vec::with_capacity(gamma_t_grid.len());
    for &t in gamma_t_grid {
        let probs = prop.evolve_projected(&coeffs, t).site_probabilities();
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(SearchError::InvariantViolation(format!(
                "quantum distribution sums to {sum} at γt={t}"
            )));
        }
        quantum_site_probs.push(probs);
    }

    let lc = classical_generator(g, Some(target))?;
    let p0 = ProbabilityVector::uniform(g.n());
    let classical = evolve_classical_on_grid(&lc, &p0, 1.0, gamma_t_grid)?;
    let classical_target_prob: Vec<f64> = classical.iter().map(|p| p.get(target)).collect();
    for w in classical_target_prob.windows(2) {
        if w[1] < w[0] - 1e-12 {
            return Err(SearchError::InvariantViolation(format!(
                "classical target probability decreased from {} to {}",
                w[0], w[1]
            )));
        }
    }

    Ok(EvolutionSeries {
        gamma_t_grid: gamma_t_grid.to_vec(),
        quantum_site_probs,
        classical_target_prob,
        target,
        params,
        graph_id: g.id().to_string(),
    })
}

/// R(γt), the pointwise advantage of the quantum walker over the classical.
pub fn ratio_series(s: &EvolutionSeries) -> Result<RatioSeries, SearchError> {
    let mut ratio = Vec::with_capacity(s.gamma_t_grid.len());
    for (k, &t) in s.gamma_t_grid.iter().enumerate() {
        let pc = s.classical_target_prob[k];
        if pc <= 1e-300 {
            return Err(SearchError::DivisionDomain { gamma_t: t, value: pc });
        }
        let r = s.quantum_site_probs[k][s.target] / pc;
        if !r.is_finite() {
            return Err(SearchError::InvariantViolation(format!(
                "non-finite ratio at γt={t}"
            )));
        }
        ratio.push(r);
    }
    if s.gamma_t_grid.first() == Some(&0.0) && (ratio[0] - 1.0).abs() > 1e-9 {
        return Err(SearchError::InvariantViolation(format!(
            "R(0) = {}, both walkers start uniform so it must be 1",
            ratio[0]
        )));
    }
    Ok(RatioSeries { gamma_t_grid: s.gamma_t_grid.clone(), ratio })
}

/// Grid argmax of R; ties broken toward smaller γt.
pub fn optimal_time(r: &RatioSeries) -> (f64, f64) {
    let mut best = 0;
    for k in 1..r.ratio.len() {
        if r.ratio[k] > r.ratio[best] {
            best = k;
        }
    }
    (r.gamma_t_grid[best], r.ratio[best])
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Grid argmax sharpened by golden-section search on the bracketing interval
/// (relative tolerance 1e−6); `ratio_at` must evaluate R at arbitrary γt.
/// Falls back to the grid point if the bracket is not unimodal.
pub fn optimal_time_refined<F: Fn(f64) -> f64>(r: &RatioSeries, ratio_at: F) -> (f64, f64) {
    let (grid_t, grid_r) = optimal_time(r);
    let n = r.gamma_t_grid.len();
    if n < 3 {
        return (grid_t, grid_r);
    }
    let best = r.gamma_t_grid.iter().position(|&t| t == grid_t).unwrap();
    let mut a = r.gamma_t_grid[best.saturating_sub(1)];
    let mut b = r.gamma_t_grid[(best + 1).min(n - 1)];
    if b <= a {
        return (grid_t, grid_r);
    }

    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = ratio_at(x1);
    let mut f2 = ratio_at(x2);
    while b - a > 1e-6 * b.max(1e-3) {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = ratio_at(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = ratio_at(x1);
        }
    }
    let (t_ref, r_ref) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if r_ref > grid_r {
        (t_ref, r_ref)
    } else {
        (grid_t, grid_r)
    }
}

/// Quantum target probability over a detuning × time grid; one row per β/γ.
pub fn beta_time_heatmap(
    g: &Graph,
    spec: TargetSpec,
    beta_grid: &[f64],
    gamma_t_grid: &[f64],
) -> Result<Vec<Vec<f64>>, SearchError> {
    if beta_grid.is_empty() {
        return Err(SearchError::EmptyGrid("detuning"));
    }
    validate_grid(gamma_t_grid)?;
    let target = resolve_target(g, spec)?.ok_or(SearchError::TargetRequired)?;
    let psi0 = uniform_state(g.n());
    beta_grid
        .par_iter()
        .map(|&beta| {
            let params = SearchParams::new(1.0, beta, Some(target));
            let h = quantum_hamiltonian(g, &params)?;
            let prop = SpectralPropagator::new(&h)?;
            let coeffs = prop.project(&psi0);
            Ok(gamma_t_grid
                .iter()
                .map(|&t| prop.site_probability(&coeffs, target, t))
                .collect())
        })
        .collect()
}

/// Dense sampling grid for optimum hunting: step 1e−3 over [0, 2n/6].
fn scaling_grid(n: usize) -> Vec<f64> {
    let t_max = 2.0 * n as f64 / 6.0;
    let steps = (t_max / 1e-3).round() as usize;
    (0..=steps).map(|k| k as f64 * 1e-3).collect()
}

fn classical_target_at(
    lc: &ClassicalGenerator,
    p0: &ProbabilityVector,
    target: usize,
    t: f64,
) -> f64 {
    evolve_classical(lc, p0, 1.0, t)
        .map(|p| p.get(target))
        .unwrap_or(f64::NAN)
}

fn scaling_point(
    layers: u32,
    spec: TargetSpec,
    beta_over_gamma: f64,
) -> Result<Option<ScalingRecord>, SearchError> {
    let g = build_hex_patch(layers);
    // Patches too small to contain the requested neighbor ring are reported
    // as absent rather than failing the whole sweep.
    let target = match resolve_target(&g, spec) {
        Ok(Some(w)) => w,
        Ok(None) => return Err(SearchError::TargetRequired),
        Err(LatticeError::TargetNotInGraph(_)) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let grid = scaling_grid(g.n());
    let series = run_search(&g, spec, beta_over_gamma, &grid)?;
    let ratios = ratio_series(&series)?;

    let params = SearchParams::new(1.0, beta_over_gamma, Some(target));
    let h = quantum_hamiltonian(&g, &params)?;
    let prop = SpectralPropagator::new(&h)?;
    let coeffs = prop.project(&uniform_state(g.n()));
    let lc = classical_generator(&g, Some(target))?;
    let p0 = ProbabilityVector::uniform(g.n());
    let (t_opt, _) = optimal_time_refined(&ratios, |t| {
        prop.site_probability(&coeffs, target, t) / classical_target_at(&lc, &p0, target, t)
    });
    let pq_opt = prop.site_probability(&coeffs, target, t_opt);
    let pc_opt = evolve_classical(&lc, &p0, 1.0, t_opt)?.get(target);
    Ok(Some(ScalingRecord {
        n: g.n(),
        layers,
        target_kind: spec,
        beta_over_gamma,
        t_opt,
        r_opt: pq_opt / pc_opt,
        pq_opt,
        pc_opt,
    }))
}

/// Optimal advantage per (patch size, target kind) at fixed detuning.
///
/// Combinations whose target ring does not exist in the patch are skipped.
/// Points are computed in parallel; output order follows input order.
pub fn scaling_study(
    layer_range: &[u32],
    targets: &[TargetSpec],
    beta_over_gamma: f64,
) -> Result<Vec<ScalingRecord>, SearchError> {
    if layer_range.is_empty() {
        return Err(SearchError::EmptyGrid("layer"));
    }
    if targets.is_empty() {
        return Err(SearchError::EmptyGrid("target"));
    }
    let tuples: Vec<(u32, TargetSpec)> = layer_range
        .iter()
        .flat_map(|&l| targets.iter().map(move |&s| (l, s)))
        .collect();
    let results: Result<Vec<Option<ScalingRecord>>, SearchError> = tuples
        .par_iter()
        .map(|&(layers, spec)| scaling_point(layers, spec, beta_over_gamma))
        .collect();
    Ok(results?.into_iter().flatten().collect())
}

/// `scaling_study` extended over a detuning grid: one record per
/// (patch size, target, β/γ) point.
pub fn beta_size_surface(
    layer_range: &[u32],
    targets: &[TargetSpec],
    beta_grid: &[f64],
) -> Result<Vec<ScalingRecord>, SearchError> {
    if layer_range.is_empty() {
        return Err(SearchError::EmptyGrid("layer"));
    }
    if targets.is_empty() {
        return Err(SearchError::EmptyGrid("target"));
    }
    if beta_grid.is_empty() {
        return Err(SearchError::EmptyGrid("detuning"));
    }
    let tuples: Vec<(u32, TargetSpec, f64)> = layer_range
        .iter()
        .flat_map(|&l| {
            targets
                .iter()
                .flat_map(move |&s| beta_grid.iter().map(move |&b| (l, s, b)))
        })
        .collect();
    let results: Result<Vec<Option<ScalingRecord>>, SearchError> = tuples
        .par_iter()
        .map(|&(layers, spec, beta)| scaling_point(layers, spec, beta))
        .collect();
    Ok(results?.into_iter().flatten().collect())
}

/// Format with 12 significant digits, locale-independent.
pub fn format_sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Curve export: columns gamma_t, p_quantum_target, p_classical_target, ratio.
pub fn curves_csv(series: &EvolutionSeries, ratios: &RatioSeries) -> String {
    let mut out = String::from("gamma_t,p_quantum_target,p_classical_target,ratio\n");
    let pq = series.quantum_target_prob();
    for k in 0..series.gamma_t_grid.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_sig12(series.gamma_t_grid[k]),
            format_sig12(pq[k]),
            format_sig12(series.classical_target_prob[k]),
            format_sig12(ratios.ratio[k]),
        ));
    }
    out
}

/// Scaling export: one row per record.
pub fn scaling_csv(records: &[ScalingRecord]) -> String {
    let mut out = String::from("n,layers,target,beta_over_gamma,t_opt,r_opt,pq_opt,pc_opt\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n,
            r.layers,
            r.target_kind,
            format_sig12(r.beta_over_gamma),
            format_sig12(r.t_opt),
            format_sig12(r.r_opt),
            format_sig12(r.pq_opt),
            format_sig12(r.pc_opt),
        ));
    }
    out
}

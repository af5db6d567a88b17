//! Exact time evolution for both walkers.
//!
//! The Hermitian (quantum) path diagonalizes the Hamiltonian once and reuses
//! the spectral factors for every evaluation time; the classical path goes
//! through a dense scaling-and-squaring matrix exponential. A fixed-step RK4
//! integrator is provided as an independent brute-force oracle for tests.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::generators::{ClassicalGenerator, HamiltonianMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum PropagatorError {
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("eigensolver failed to converge within {0} sweeps")]
    ConvergenceFailure(usize),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("linear solve failed: matrix is singular")]
    SingularSystem,
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("negative probability {0:.3e} exceeds round-off tolerance")]
    NegativeProbability(f64),
    #[error("probabilities sum to {0}, expected 1")]
    NotADistribution(f64),
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("{steps} integration steps below required {required}")]
    StepCountTooSmall { steps: usize, required: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Complex site amplitudes of the walker.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexState {
    pub amplitudes: DVector<Complex64>,
}

impl ComplexState {
    pub fn new(amplitudes: DVector<Complex64>) -> Self {
        Self { amplitudes }
    }

    pub fn n(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rescale to unit norm. Leaves the zero state untouched.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.amplitudes /= Complex64::new(n, 0.0);
        }
        self
    }

    /// Per-site probabilities |ψ_j|² (not renormalized).
    pub fn site_probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    fn require_normalized(&self) -> Result<(), PropagatorError> {
        let n = self.norm();
        if (n - 1.0).abs() > 1e-10 {
            return Err(PropagatorError::NotNormalized(n));
        }
        Ok(())
    }
}

/// Nonnegative site probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    probabilities: DVector<f64>,
}

impl ProbabilityVector {
    /// Validating constructor; entries in [−1e−14, 0) are treated as
    /// round-off and clamped to zero.
    pub fn try_new(mut probabilities: DVector<f64>) -> Result<Self, PropagatorError> {
        for p in probabilities.iter_mut() {
            if *p < 0.0 {
                if *p < -1e-14 {
                    return Err(PropagatorError::NegativeProbability(*p));
                }
                *p = 0.0;
            }
        }
        let sum: f64 = probabilities.sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(PropagatorError::NotADistribution(sum));
        }
        Ok(Self { probabilities })
    }

    pub fn uniform(n: usize) -> Self {
        Self { probabilities: DVector::from_element(n, 1.0 / n as f64) }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.probabilities
    }

    pub fn n(&self) -> usize {
        self.probabilities.len()
    }

    pub fn get(&self, site: usize) -> f64 {
        self.probabilities[site]
    }
}

/// Full spectral decomposition of a real symmetric matrix; eigenvalues
/// ascending, eigenvectors as orthonormal columns.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// Spectral decomposition via cyclic Jacobi rotations.
pub fn eig_symmetric(m: &DMatrix<f64>) -> Result<Eigensystem, PropagatorError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(PropagatorError::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(PropagatorError::NonFinite);
    }
    let scale = m.amax().max(1.0);
    let mut max_asym = 0.0_f64;
    for p in 0..n {
        for q in (p + 1)..n {
            max_asym = max_asym.max((m[(p, q)] - m[(q, p)]).abs());
        }
    }
    if max_asym > 1e-12 * scale {
        return Err(PropagatorError::NotSymmetric(max_asym));
    }

    // Work on the symmetrized copy so stored round-off asymmetry cannot bias
    // the rotations.
    let mut b = DMatrix::from_fn(n, n, |p, q| 0.5 * (m[(p, q)] + m[(q, p)]));
    let mut v = DMatrix::<f64>::identity(n, n);
    let frob = b.norm().max(f64::MIN_POSITIVE);

    let off_norm = |b: &DMatrix<f64>| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += b[(p, q)] * b[(p, q)];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&b) <= 1e-14 * frob {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = b[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = b[(p, p)];
                let aqq = b[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e100 {
                    // Avoid overflow in theta²; the rotation is tiny anyway.
                    1.0 / (2.0 * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                b[(p, p)] = app - t * apq;
                b[(q, q)] = aqq + t * apq;
                b[(p, q)] = 0.0;
                b[(q, p)] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = b[(r, p)];
                    let arq = b[(r, q)];
                    let new_rp = arp - s * (arq + tau * arp);
                    let new_rq = arq + s * (arp - tau * arq);
                    b[(r, p)] = new_rp;
                    b[(p, r)] = new_rp;
                    b[(r, q)] = new_rq;
                    b[(q, r)] = new_rq;
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp - s * (vrq + tau * vrp);
                    v[(r, q)] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }
    if !converged && off_norm(&b) > 1e-14 * frob {
        return Err(PropagatorError::ConvergenceFailure(JACOBI_MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &co| b[(a, a)].partial_cmp(&b[(co, co)]).unwrap());
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| b[(k, k)]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &v.column(src));
    }
    Ok(Eigensystem { eigenvalues, eigenvectors })
}

/// Multiply a real matrix into a complex vector (two real gemvs).
fn real_mat_complex_vec(m: &DMatrix<f64>, z: &DVector<Complex64>) -> DVector<Complex64> {
    let re = DVector::from_iterator(z.len(), z.iter().map(|c| c.re));
    let im = DVector::from_iterator(z.len(), z.iter().map(|c| c.im));
    let wre = m * re;
    let wim = m * im;
    DVector::from_iterator(m.nrows(), wre.iter().zip(wim.iter()).map(|(&r, &i)| Complex64::new(r, i)))
}

/// Spectral factorization of one Hamiltonian, reusable across evaluation
/// times. Safe to share read-only between threads.
#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    eig: Eigensystem,
}

impl SpectralPropagator {
    pub fn new(h: &HamiltonianMatrix) -> Result<Self, PropagatorError> {
        Ok(Self { eig: eig_symmetric(h.entries())? })
    }

    pub fn eigensystem(&self) -> &Eigensystem {
        &self.eig
    }

    /// Expansion coefficients of a state in the eigenbasis (Vᵀψ).
    pub fn project(&self, psi: &ComplexState) -> DVector<Complex64> {
        real_mat_complex_vec(&self.eig.eigenvectors.transpose(), &psi.amplitudes)
    }

    /// Apply e^{−iHt} given precomputed eigenbasis coefficients.
    pub fn evolve_projected(&self, coeffs: &DVector<Complex64>, t: f64) -> ComplexState {
        let phased = DVector::from_iterator(
            coeffs.len(),
            coeffs
                .iter()
                .zip(self.eig.eigenvalues.iter())
                .map(|(c, &lambda)| c * Complex64::from_polar(1.0, -lambda * t)),
        );
        ComplexState::new(real_mat_complex_vec(&self.eig.eigenvectors, &phased))
    }

    pub fn evolve(&self, psi0: &ComplexState, t: f64) -> Result<ComplexState, PropagatorError> {
        if t < 0.0 {
            return Err(PropagatorError::NegativeTime(t));
        }
        psi0.require_normalized()?;
        if psi0.n() != self.eig.eigenvalues.len() {
            return Err(PropagatorError::DimensionMismatch(format!(
                "state has {} amplitudes, operator acts on {}",
                psi0.n(),
                self.eig.eigenvalues.len()
            )));
        }
        Ok(self.evolve_projected(&self.project(psi0), t))
    }

    /// |⟨site| e^{−iHt} |ψ⟩|² for precomputed coefficients, in O(n).
    pub fn site_probability(&self, coeffs: &DVector<Complex64>, site: usize, t: f64) -> f64 {
        let mut amp = Complex64::new(0.0, 0.0);
        for k in 0..coeffs.len() {
            amp += self.eig.eigenvectors[(site, k)]
                * coeffs[k]
                * Complex64::from_polar(1.0, -self.eig.eigenvalues[k] * t);
        }
        amp.norm_sqr()
    }
}

/// e^{−iHt} ψ₀ by spectral decomposition; norm is preserved to round-off.
pub fn evolve_quantum(
    h: &HamiltonianMatrix,
    psi0: &ComplexState,
    t: f64,
) -> Result<ComplexState, PropagatorError> {
    SpectralPropagator::new(h)?.evolve(psi0, t)
}

// Degree-13 diagonal Padé coefficients and the matching ‖·‖₁ threshold.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|c| m.column(c).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Dense matrix exponential: degree-13 diagonal Padé approximant with
/// scaling chosen so the scaled norm stays below the accuracy threshold,
/// undone by repeated squaring.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>, PropagatorError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(PropagatorError::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(PropagatorError::NonFinite);
    }
    let nrm = norm1(m);
    let squarings = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let a = m * 2f64.powi(-(squarings as i32));

    let identity = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (PADE13[13] * &a6 + PADE13[11] * &a4 + PADE13[9] * &a2)
        + PADE13[7] * &a6
        + PADE13[5] * &a4
        + PADE13[3] * &a2
        + PADE13[1] * &identity;
    let u = &a * u_inner;
    let v = &a6 * (PADE13[12] * &a6 + PADE13[10] * &a4 + PADE13[8] * &a2)
        + PADE13[6] * &a6
        + PADE13[4] * &a4
        + PADE13[2] * &a2
        + PADE13[0] * &identity;

    let numer = &v + &u;
    let denom = &v - &u;
    let mut result = denom
        .lu()
        .solve(&numer)
        .ok_or(PropagatorError::SingularSystem)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// `exp(−γ t L_c) p₀`. Entries within −1e−12 of zero are clamped; anything
/// more negative indicates a construction bug and is rejected.
pub fn evolve_classical(
    lc: &ClassicalGenerator,
    p0: &ProbabilityVector,
    gamma: f64,
    t: f64,
) -> Result<ProbabilityVector, PropagatorError> {
    if t < 0.0 {
        return Err(PropagatorError::NegativeTime(t));
    }
    if !(gamma > 0.0) {
        return Err(PropagatorError::DimensionMismatch(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if p0.n() != lc.n() {
        return Err(PropagatorError::DimensionMismatch(format!(
            "distribution has {} entries, generator acts on {}",
            p0.n(),
            lc.n()
        )));
    }
    let transition = expm(&(lc.entries() * (-gamma * t)))?;
    let raw = &transition * p0.values();
    clamp_to_distribution(raw)
}

fn clamp_to_distribution(mut raw: DVector<f64>) -> Result<ProbabilityVector, PropagatorError> {
    for x in raw.iter_mut() {
        if *x < 0.0 {
            if *x < -1e-12 {
                return Err(PropagatorError::NegativeProbability(*x));
            }
            *x = 0.0;
        }
    }
    ProbabilityVector::try_new(raw)
}

/// Classical distributions sampled on an ascending time grid.
///
/// Consecutive grid points are reached by one matrix-vector product with the
/// exponential of the step generator; exponentials are cached per distinct
/// step size, so uniform grids cost one `expm` total.
pub fn evolve_classical_on_grid(
    lc: &ClassicalGenerator,
    p0: &ProbabilityVector,
    gamma: f64,
    grid: &[f64],
) -> Result<Vec<ProbabilityVector>, PropagatorError> {
    let mut out = Vec::with_capacity(grid.len());
    let mut cache: Vec<(u64, DMatrix<f64>)> = Vec::new();
    let mut current = p0.values().clone();
    let mut prev_t = 0.0;
    for &t in grid {
        if t < prev_t {
            return Err(PropagatorError::NegativeTime(t - prev_t));
        }
        let dt = t - prev_t;
        if dt > 0.0 {
            let key = dt.to_bits();
            let step = match cache.iter().find(|(k, _)| *k == key) {
                Some((_, m)) => m.clone(),
                None => {
                    let m = expm(&(lc.entries() * (-gamma * dt)))?;
                    cache.push((key, m.clone()));
                    m
                }
            };
            current = &step * &current;
        }
        prev_t = t;
        out.push(clamp_to_distribution(current.clone())?);
    }
    Ok(out)
}

/// Fixed-step classical RK4 integration of `v' = m·v` from 0 to `t`.
///
/// This is the independent brute-force verifier the spectral and Padé paths
/// are tested against; it shares no code with either.
pub fn ode_oracle(
    m: &DMatrix<Complex64>,
    v0: &DVector<Complex64>,
    t: f64,
    steps: usize,
) -> Result<DVector<Complex64>, PropagatorError> {
    if m.nrows() != m.ncols() || m.nrows() != v0.len() {
        return Err(PropagatorError::DimensionMismatch(format!(
            "matrix {}x{} against vector of length {}",
            m.nrows(),
            m.ncols(),
            v0.len()
        )));
    }
    let nrm: f64 = (0..m.ncols())
        .map(|c| m.column(c).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let required = (1000.0 * (nrm * t + 1.0)).ceil() as usize;
    if steps < required {
        return Err(PropagatorError::StepCountTooSmall { steps, required });
    }
    if t == 0.0 {
        return Ok(v0.clone());
    }
    let h = t / steps as f64;
    let half = Complex64::new(h / 2.0, 0.0);
    let full = Complex64::new(h, 0.0);
    let sixth = Complex64::new(h / 6.0, 0.0);
    let two = Complex64::new(2.0, 0.0);
    let mut v = v0.clone();
    for _ in 0..steps {
        let k1 = m * &v;
        let k2 = m * &(&v + &k1 * half);
        let k3 = m * &(&v + &k2 * half);
        let k4 = m * &(&v + &k3 * full);
        v += (&k1 + &k2 * two + &k3 * two + &k4) * sixth;
    }
    Ok(v)
}

/// Embed a real matrix into the complex field (for feeding the oracle).
pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// `−iH` as a complex matrix: the generator of Schrödinger evolution.
pub fn schroedinger_generator(h: &HamiltonianMatrix) -> DMatrix<Complex64> {
    h.entries().map(|x| Complex64::new(0.0, -x))
}

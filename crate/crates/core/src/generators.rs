//! Generators of the two competing dynamics: the quantum search Hamiltonian
//! `H = −γA − β|w⟩⟨w|` and the classical continuous-time walk generator with
//! the marked vertex turned into an absorbing sink.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::lattice::Graph;

#[derive(Debug, Error, PartialEq)]
pub enum GeneratorError {
    #[error("target index {target} out of range for {n} vertices")]
    TargetOutOfRange { target: usize, n: usize },
    #[error("transition rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("target detuning must be nonnegative, got {0}")]
    NegativeDetuning(f64),
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
}

/// Hopping rate, target detuning and target vertex of one search instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    /// Transition rate γ (1/time). Must be positive.
    pub gamma: f64,
    /// Target on-site detuning β (1/time). Must be nonnegative.
    pub beta: f64,
    /// Marked vertex, if any.
    pub target: Option<usize>,
}

impl SearchParams {
    pub fn new(gamma: f64, beta: f64, target: Option<usize>) -> Self {
        Self { gamma, beta, target }
    }

    fn validate(&self, n: usize) -> Result<(), GeneratorError> {
        if !(self.gamma > 0.0) {
            return Err(GeneratorError::NonPositiveRate(self.gamma));
        }
        if !(self.beta >= 0.0) {
            return Err(GeneratorError::NegativeDetuning(self.beta));
        }
        if let Some(w) = self.target {
            if w >= n {
                return Err(GeneratorError::TargetOutOfRange { target: w, n });
            }
        }
        Ok(())
    }
}

/// Real symmetric search Hamiltonian (units 1/time); off-diagonal entries are
/// 0 or −γ, diagonal entries 0 or −β.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    entries: DMatrix<f64>,
}

impl HamiltonianMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Wrap an arbitrary real symmetric matrix (asymmetry beyond 1e−12 of
    /// the largest entry is rejected). Mostly useful for tests that evolve
    /// under matrices not derived from a graph.
    pub fn from_symmetric(entries: DMatrix<f64>) -> Result<Self, GeneratorError> {
        if entries.nrows() != entries.ncols() {
            return Err(GeneratorError::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        let scale = entries.amax().max(1.0);
        for p in 0..entries.nrows() {
            for q in (p + 1)..entries.ncols() {
                if (entries[(p, q)] - entries[(q, p)]).abs() > 1e-12 * scale {
                    return Err(GeneratorError::NotSymmetric { row: p, col: q });
                }
            }
        }
        Ok(Self { entries })
    }
}

/// Generator of the classical absorbing walk, in units of the transition
/// rate: the evolution semigroup is `exp(−γ t L_c)`.
///
/// Columns sum to zero and the target column is identically zero, so the
/// semigroup is column-stochastic and probability flowing into the target
/// never leaves it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalGenerator {
    entries: DMatrix<f64>,
    target: Option<usize>,
}

impl ClassicalGenerator {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn target(&self) -> Option<usize> {
        self.target
    }
}

/// Assemble `H = −γA − β E_ww`; without a target the oracle term is absent.
pub fn quantum_hamiltonian(
    g: &Graph,
    params: &SearchParams,
) -> Result<HamiltonianMatrix, GeneratorError> {
    params.validate(g.n())?;
    let mut entries = g.adjacency() * (-params.gamma);
    if let Some(w) = params.target {
        entries[(w, w)] -= params.beta;
    }
    Ok(HamiltonianMatrix { entries })
}

/// Assemble the sink Laplacian: off-diagonal `[L_c]_{jk} = −A_{jk}` for
/// non-target columns, diagonal entries equal to the vertex degree so each
/// column sums to zero, and an all-zero target column. Without a target this
/// is `D − A`.
pub fn classical_generator(
    g: &Graph,
    target: Option<usize>,
) -> Result<ClassicalGenerator, GeneratorError> {
    let n = g.n();
    if let Some(w) = target {
        if w >= n {
            return Err(GeneratorError::TargetOutOfRange { target: w, n });
        }
    }
    let a = g.adjacency();
    let mut entries = DMatrix::zeros(n, n);
    for k in 0..n {
        if target == Some(k) {
            continue;
        }
        let mut degree = 0.0;
        for j in 0..n {
            if j != k {
                entries[(j, k)] = -a[(j, k)];
                degree += a[(j, k)];
            }
        }
        entries[(k, k)] = degree;
    }
    Ok(ClassicalGenerator { entries, target })
}

/// Row-major comma-separated dump of a matrix, one row per line.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_from_coords, build_paper31, LatticeCoord};

    fn two_vertex_graph() -> Graph {
        build_from_coords(&[LatticeCoord::new(0, 0), LatticeCoord::new(1, 0)]).unwrap()
    }

    #[test]
    fn hamiltonian_two_vertices() {
        let g = two_vertex_graph();
        let h = quantum_hamiltonian(&g, &SearchParams::new(1.0, 2.0, Some(0))).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-2.0, -1.0, -1.0, 0.0]);
        assert_eq!(h.entries(), &expected);
    }

    #[test]
    fn hamiltonian_zero_detuning_is_scaled_adjacency() {
        let g = build_paper31();
        let h = quantum_hamiltonian(&g, &SearchParams::new(0.7, 0.0, Some(3))).unwrap();
        assert_eq!(h.entries(), &(g.adjacency() * -0.7));
    }

    #[test]
    fn hamiltonian_matches_elementwise_assembly() {
        // Elementwise reconstruction from the adjacency, as an independent check.
        let g = build_paper31();
        let (gamma, beta) = (0.060, 0.25);
        let w = 5;
        let h = quantum_hamiltonian(&g, &SearchParams::new(gamma, beta, Some(w))).unwrap();
        for j in 0..g.n() {
            for k in 0..g.n() {
                let mut expected = -gamma * g.adjacency()[(j, k)];
                if j == w && k == w {
                    expected -= beta;
                }
                assert_eq!(h.entries()[(j, k)], expected);
            }
        }
    }

    #[test]
    fn hamiltonian_exactly_symmetric() {
        let g = build_paper31();
        let h = quantum_hamiltonian(&g, &SearchParams::new(0.31, 1.29, Some(11))).unwrap();
        for j in 0..g.n() {
            for k in 0..g.n() {
                assert_eq!(h.entries()[(j, k)].to_bits(), h.entries()[(k, j)].to_bits());
            }
        }
    }

    #[test]
    fn hamiltonian_scale_covariance() {
        // A entries are 0/1, so scaling γ and β scales H entry-for-entry.
        let g = build_paper31();
        for c in [0.1, 3.0, 10.0] {
            let base = quantum_hamiltonian(&g, &SearchParams::new(1.0, 4.16, Some(0))).unwrap();
            let scaled = quantum_hamiltonian(&g, &SearchParams::new(c, c * 4.16, Some(0))).unwrap();
            assert_eq!(scaled.entries(), &(base.entries() * c));
        }
    }

    #[test]
    fn hamiltonian_target_out_of_range() {
        let g = two_vertex_graph();
        assert_eq!(
            quantum_hamiltonian(&g, &SearchParams::new(1.0, 1.0, Some(2))),
            Err(GeneratorError::TargetOutOfRange { target: 2, n: 2 })
        );
    }

    #[test]
    fn sink_generator_two_vertices() {
        let g = two_vertex_graph();
        let lc = classical_generator(&g, Some(1)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        assert_eq!(lc.entries(), &expected);
    }

    #[test]
    fn generator_without_target_is_degree_minus_adjacency() {
        let g = build_paper31();
        let lc = classical_generator(&g, None).unwrap();
        for k in 0..g.n() {
            assert_eq!(lc.entries()[(k, k)], g.degree(k) as f64);
            let col_sum: f64 = lc.entries().column(k).sum();
            assert!(col_sum.abs() < 1e-14);
        }
    }

    #[test]
    fn sink_column_is_zero_and_columns_balance() {
        let g = build_paper31();
        let w = 15;
        let lc = classical_generator(&g, Some(w)).unwrap();
        for j in 0..g.n() {
            assert_eq!(lc.entries()[(j, w)], 0.0);
        }
        for k in 0..g.n() {
            let col_sum: f64 = lc.entries().column(k).sum();
            assert_eq!(col_sum, 0.0, "column {k} must balance exactly");
        }
    }

    #[test]
    fn generator_is_metzler() {
        // Off-diagonal entries of −L_c must be nonnegative.
        let g = build_paper31();
        let lc = classical_generator(&g, Some(0)).unwrap();
        for j in 0..g.n() {
            for k in 0..g.n() {
                if j != k {
                    assert!(-lc.entries()[(j, k)] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn matrix_csv_format() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.5, 2.0]);
        assert_eq!(matrix_csv(&m), "1,0\n-1.5,2\n");
    }
}

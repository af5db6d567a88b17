//! Continuous-time quantum walk (CTQW) spatial search on finite triangular
//! lattices, together with the classical absorbing-random-walk baseline it is
//! measured against and an in-silico model of a femtosecond-laser-written
//! waveguide array that realizes the same dynamics optically.
//!
//! The crate is organized along the pipeline:
//!
//! * [`lattice`] — triangular-lattice graph construction and target resolution
//! * [`generators`] — search Hamiltonian and classical sink generator assembly
//! * [`propagator`] — exact time evolution (spectral, Padé `expm`, RK4 oracle)
//! * [`search`] — probability curves, the quantum/classical ratio `R(t)`,
//!   optimal times and size/detuning scaling studies
//! * [`photonics`] — fabrication presets, beam-shaped inputs, coupled-mode
//!   propagation and facet-image rendering

pub mod generators;
pub mod lattice;
pub mod photonics;
pub mod propagator;
pub mod search;

pub use generators::{ClassicalGenerator, HamiltonianMatrix, SearchParams};
pub use lattice::{Graph, LatticeCoord, TargetSpec};
pub use photonics::{BeamSpec, FabPreset, RasterImage, WaveguideArraySpec};
pub use propagator::{ComplexState, Eigensystem, ProbabilityVector};
pub use search::{EvolutionSeries, RatioSeries, ScalingRecord};

//! Single-electron model of ⁸⁷Rb Rydberg states in static fields.

pub mod basis;
pub mod defects;
pub mod hamiltonian;
pub mod operators;
pub mod radial;
pub mod stark;

pub use basis::{build_basis, Basis, BasisState};
pub use defects::QuantumDefectTable;
pub use hamiltonian::{
    build_hamiltonian, build_hamiltonian_with, diagonalize, transition_dipole, zero_field_energy, BasisOperators,
    FieldConfig, Hamiltonian, StarkEigenstate,
};
pub use radial::{LogGrid, RadialSet, RadialWavefunction};
pub use stark::{
    find_resonant_transitions, reference_energy, Chain, Crossing, FieldFrame, LevelSummary, StarkMap, StarkSolution,
    StarkSolver, Tracking, TrackingDiagnostic, Transition, Windows,
};

//! Multiple-network poroelasticity (MPET): strongly conservative mixed/DG
//! discretization, Crank–Nicolson time-step operator, parameter-robust block
//! preconditioning and the spectral experiments that check its stability.

pub mod assembly;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod model;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod timestep;
pub mod verify;

pub use error::{MpetError, Result};
pub use fem::{build_dofmap, DgConfig, DofMap, SpaceKind};
pub use mesh::{build_structured_mesh, EdgeTrace, Mesh};
pub use sparse::{CsrMatrix, EnvelopeLdl, TripletBuilder};
pub use model::{derive_coefficients, build_norm_weights, DerivedCoefficients, MpetParameters, NormWeights};
pub use assembly::{
    assemble_operator, assemble_operator_with, assemble_rhs, BlockLayout, BlockSystem, LoadSpec, SpaceOperators,
};
pub use solver::{direct_solve, minres, BlockPreconditioner, DirectSolver, SolveStats, Spectrum};
pub use timestep::{
    initial_state, run, run_convergence, ConvergenceReport, InitialData, SolverKind, State, StepDiagnostics,
    TimeStepper, Trajectory,
};
pub use verify::{
    measure_fem_constants, randomized_lemma_checks, sweep, FemConstants, FemConstantsReport, LemmaSummary,
    StabilityReport, SweepConfig, SweepTable,
};

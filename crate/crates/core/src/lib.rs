//! Monotone schemes for degenerate convection–diffusion equations with local or
//! Lévy diffusion, the fully non-linear dual problem, and numerical checks of
//! the quantitative L¹-contraction inequalities.

pub mod bump;
pub mod entropy;
pub mod dual;
pub mod error;
pub mod levy;
pub mod fftconv;
pub mod grid;
pub mod quad;
pub mod verify;

pub use error::{Error, Result};
pub use levy::{
    assert_tempered, drift_correction, fractional_laplacian_constant, second_moment_near, supersolution_constants, tail_mass,
    LevyMeasure, Moment, OperatorKind, SupersolutionConstants,
};
pub use grid::{
    bv_seminorm, convolve, default_split, discretize, l1_norm, operator_l1_bound_check, DriftMode, Grid,
    GridFunction, OperatorBoundReport, OperatorWeights,
};
pub use entropy::{
    cfl_dt, entropy_residual, eo_flux, pair_residual, solve, solve_pair, step, FluxSpec, InitialProfile, PhiSpec,
    ProblemSpec, ResidualReport, SolveOptions, SourceSpec, TestFunction, Trajectory,
};
pub use dual::{
    exp_supersolution_check, gamma_cutoff, gamma_test_function, heat_kernel, k_delta, solve_dual, BumpSpec,
    DualSolution, GammaSpec, HeatKernel, KernelOptions, MollifierSpec,
};
pub use verify::{
    kato_residual, reduced_dual_check, verify_bv_bound, verify_comparison, verify_contraction, verify_duhamel_linear,
    verify_duhamel_nonlinear, verify_finite_speed, verify_local_l1_bound, verify_max_principle, ContractionReport,
    InequalityId, ScenarioPair, SolvedPair, kernel_grid, exp_bound_report, operator_bound_reports,
};

//! Deterministic numerical solver for first-order mean field games in crowd
//! dynamics.
//!
//! The solver computes the coupled pair (value function, density curve) of a
//! forward-backward system: a backward Hamilton-Jacobi-Bellman equation for
//! a representative pedestrian's value function and a forward continuity
//! equation for the crowd density, coupled through a non-local interaction
//! velocity and congestion costs. The pair is found by damped Picard
//! iteration on the map "solve HJB against a frozen curve, then push the
//! initial measure forward along the optimal flow".
//!
//! Module map:
//! - [`grid`], [`field`], [`measure`]: discretization and measure plumbing
//! - [`model`]: repulsion kernel, interaction velocity, costs
//! - [`hjb`]: backward semi-Lagrangian value solver
//! - [`transport`]: particle push-forward of the continuity equation
//! - [`control`]: trajectory simulation, Pontryagin residuals, Nash probe
//! - [`metrics`]: exact and sliced Wasserstein-1 distances
//! - [`solve`]: the damped fixed-point driver, single and multi population

pub mod control;
pub mod error;
pub mod field;
pub mod grid;
pub mod hjb;
pub mod measure;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod solve;
pub mod transport;

pub use error::{Error, Result};
pub use field::{interpolate_scalar, ScalarField2D, VectorField2D};
pub use grid::{Grid2D, TimeGrid};
pub use hjb::{
    gradient_field, hamiltonian, optimal_control_from_gradient, semiconcavity_estimate,
    semiconcavity_estimate_with_margin, sl_step, solve_hjb_backward, solve_hjb_with_fields,
    ControlGrid, HjbSolution,
};
pub use measure::{deposit, kahan_sum, seed_cloud, DensityField, MeasureCurve, ParticleCloud};
pub use metrics::{
    curve_distance, w1_exact_small, w1_sliced_atoms, w1_sliced_fields, AtomSet, SlicedProjector,
};
pub use model::{
    interaction_field, interaction_velocity, kernel_f, running_cost, running_cost_field,
    smoothed_density, terminal_cost, terminal_cost_field, CongestionKernel, CostParams,
    FrozenFields, KernelParams, ModelParams, TerminalShape,
};
pub use solve::{
    apply_t, damp, picard_solve, probe_starts, solve_multi, Diagnostics, Population, Solution,
    SolveConfig, VerificationReport,
};
pub use transport::{
    advect, curve_lipschitz_estimate, push_forward_curve, push_forward_with_fields,
    support_radius, FlowVelocitySampler,
};
pub use control::{
    evaluate_cost, nash_gap, pontryagin_residual, simulate_trajectory, DeviationFamily,
    NashGapReport, Trajectory,
};

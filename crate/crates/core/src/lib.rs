//! Exact piecewise-linear solution functions for multiparametric quadratic programs.
//!
//! A [`ClosedFormModel`] maps a parameter vector `θ` to the optimal primal and
//! dual solution through a fixed-weight ReLU network whose weights are read
//! directly off the problem coefficients. Regions are found by [`discover`],
//! which walks a search pattern and grows the model wherever the KKT
//! conditions fail.

pub mod continuity;
pub mod discovery;
pub mod error;
pub mod fixtures;
pub mod kkt;
pub mod linalg;
pub mod model;
pub mod model_io;
pub mod oracle;
pub mod pattern;
pub mod problem;
pub mod real;
pub mod solve;

pub use continuity::{segment_continuity, tree_continuity, FacetCheck};
pub use discovery::{
    audit_oracle_transitions, audit_transitions, discover, identify_transition, DiscoveryOptions,
    DiscoveryOutcome, LogEvent, Transition, TransitionAudit, TransitionKind, TransitionViolation,
    UnresolvedPolicy,
};
pub use error::{Error, Result};
pub use kkt::{kkt_report, kkt_scalar, KktReport, KktTable};
pub use model::{init_model, ClosedFormModel, RegionEntry, RootTerm, SignRule};
pub use oracle::{brute_force_solve, is_feasible, OracleSolution, ORACLE_MAX_M2};
pub use pattern::{
    axis_sweep_pattern, feasible_axis_pattern, feasible_extent, feasible_ray_pattern,
    feasible_scaled_pattern, scaled_base_pattern, AxisExtent, AxisRay, Direction, SearchPattern,
};
pub use problem::{
    ActiveSet, MpQpProblem, ParameterPoint, PrimalDualSolution, ProblemData, RegionSlopes,
    VariableGroup,
};
pub use real::{Precision, Real};
pub use solve::{
    assemble_base_jacobian, factorize, lagrangian_gradients, objective_value, region_slopes,
    solve_active_set, solve_with_mu,
};

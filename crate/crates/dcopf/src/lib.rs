//! DC optimal power flow as a multiparametric QP.
//!
//! A [`PowerCase`] reduces to an [`cfqp_core::MpQpProblem`] whose equality
//! parameters θ_e perturb per-bus demand. Balance rows read `P − Bδ = P_d + θ_e`
//! so positive θ_e is extra load and renewable output enters as negative θ_e.

pub mod build;
pub mod bundled;
pub mod case;
pub mod datasets;
pub mod error;
pub mod matpower;
pub mod renewable;
pub mod sweeps;

pub use build::{
    build_dcopf, build_dcopf_with_lines, line_incidence, FlowLimits, IndexMap, ANGLE_GROUP,
    GENERATION_GROUP,
};
pub use bundled::{six_bus, synthetic_57};
pub use case::{Bus, Generator, Line, PowerCase};
pub use datasets::{
    extreme_dataset, local_perturbation_dataset, renewable_planning_dataset, scaled_dataset,
    survival_counts, Network, Sample, DAILY_LOAD_PROFILE,
};
pub use error::{CaseError, Result};
pub use matpower::import_matpower;
pub use renewable::{inject_renewable, sample_renewable, CappedExponential};
pub use sweeps::demand_sweep_pattern;

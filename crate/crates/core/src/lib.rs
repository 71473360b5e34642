//! Numerical laboratory for critical superprocesses with site-dependent
//! stable branching on a finite state space.

pub mod analysis;
pub mod cumulant;
pub mod error;
pub mod io;
pub mod limitlaw;
pub mod model;
pub mod presets;
pub mod quad;
pub mod simulator;
pub mod spine;

pub use analysis::{
    kolmogorov_table, mixture_rv_check, rv_index_fit, rv_index_fit_window, yaglom_sup_error, yaglom_table,
    KolmogorovRow, KolmogorovTable, MixtureRow, RVEstimate, YaglomRow,
};
pub use cumulant::{
    normalize_field, solve_cumulant, solve_cumulant_dense, solve_extinction, survival_from_cumulant,
    survival_probability, uniform_equivalence_gap, weighted_extinction_norm, yaglom_surface, CumulantCurve,
    DenseSolution, InitialCondition, SolverOptions, SolverReport,
};
pub use error::{Error, Result};
pub use io::{model_hash, ModelFile};
pub use limitlaw::{g_closed, laplace, mean_diagnostic, solve_delay_equation, DelayEquationProblem, DelaySolution, ZolotarevLaw};
pub use model::{
    build_feynman_kac_matrix, calibrate_critical, eta, principal_eigen, semigroup_apply,
    uniform_mixing_gap, BranchingMechanism, CriticalModel, EigenData, Field, InitialMeasure,
    MotionGenerator, StateSpace,
};
pub use simulator::{
    conditional_laplace_estimate, conditional_mean_estimate, richardson_bias, sample_positive_stable, simulate_coupled,
    simulate_paths, step_euler, CoupledRun,
    Estimate, PathStats, SimConfig,
};
pub use spine::{
    ergodic_average_check, feynman_kac_estimate, simulate_spine, spine_generator, ErgodicCheck, FeynmanKacConfig,
    FeynmanKacEstimate, SpineChain, SpinePath,
};

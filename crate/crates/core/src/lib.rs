//! Gradient Gibbs measures and boundary laws for integer-valued height models
//! on regular trees.
//!
//! Transfer operators and their norms live in [`potentials`], the good set in
//! [`goodset`], fixed-point solvers in [`boundary_law`], the two-layer
//! gradient construction in [`ggm`] and path statistics in [`pathsim`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod boundary_law;
pub mod error;
pub mod ggm;
pub mod goodset;
pub mod pathsim;
pub mod potentials;
pub mod series;

pub use boundary_law::{
    localization_bounds, periodic_solve, single_site_marginal, solve_fixed_point, BoundaryLaw, Certificate, Operator,
    SolveConfig, SolveMode, SolveReport, StartPoint, Support,
};
pub use error::{Error, Result};
pub use ggm::{
    edge_marginal, fuzzy_chain, increment_law, increment_laws, volume_marginal, EdgeMarginal, FuzzyChain,
    IncrementLaw, SmallTree, VolumeMarginal,
};
pub use goodset::{
    beta_threshold, binary_delta_boundary, large_degree_scan, membership, smallest_epsilon, BinaryBoundary,
    GoodSetQuery, LargeDegreeScan, MembershipReason, MembershipVerdict, Pairing, ScanRow, ThresholdReport,
};
pub use pathsim::{
    default_window, recover_period, wn_ggm_exact, wn_ggm_series, wn_localized_exact, wn_localized_series,
    LocalizedChain, PathDistribution, PathMode, PathSample, PeriodTest, PeriodVerdict, RecoveryConfig,
    RecoveryReport, Sampler,
};
pub use potentials::{
    check_double_sum, closed_form_norm, fuzzy_q, norm_pair, one_norm_pair, p_norm, CustomTable, DoubleSum,
    FuzzyOperator, NormDomain, NormMethod, NormOutcome, NormReport, Potential, PotentialKind, TailModel,
};

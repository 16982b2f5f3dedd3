//! Measurements and executable bounds from the convergence analysis.
//!
//! Everything here evaluates expectations exactly over finite sample sets
//! where possible, and by seed averages otherwise.

mod bounds;
mod cnc;
mod expansion;

pub use bounds::{
    check_distance_bound, check_power_iteration_bounds, check_taylor_gap, descent_violations, expected_sgd_descent,
    initial_gradient_alignment, series_bounds, DistanceReport, DistanceRow, DistanceSetting, ExpectedDescent,
    PowerIterationReport, PowerIterationRow, SeriesBounds, TaylorGapRow, MIN_DISTANCE_SEEDS,
};
pub use cnc::{
    estimate_cnc, fit_dimension_slope, isotropic_baseline, isotropic_baseline_with, projected_moments,
    verify_cnc_lower_bound, CncEstimate, CncRecord, LowerBoundEntry, LowerBoundReport,
};
pub use expansion::{decompose_trajectory, ExpansionStep, StepExpansion};

//! First-order methods and their parameter derivations.
//!
//! All runners are deterministic functions of `(objective, w0, parameters,
//! seed)`. Perturbation steps are the only place where GD-based methods touch
//! randomness.

mod methods;
mod params;
mod trajectory;

pub use methods::{
    run_cnc_pgd, run_cnc_pgd_with, run_cnc_sgd, run_cnc_sgd_with, run_gd, run_gd_with, run_iso_pgd,
    run_iso_pgd_with, run_sgd, run_sgd_with,
};
pub use params::{
    derive_pgd_params, derive_sgd_params, PgdConstants, PgdDerivation, PgdParams, SgdConstants, SgdDerivation,
    SgdParams, SmoothnessConstants,
};
pub use trajectory::{pick_uniform_iterate, Method, RunOptions, Trajectory};

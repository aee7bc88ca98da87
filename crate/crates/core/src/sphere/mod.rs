//! Hyperspherical capacity analytics and the Monte Carlo false-negative bound.

mod cap;
mod sampling;
mod special;

pub use cap::{capacity_table, max_classes, sigma_cap_ratio, CapSpec, CapacityRow};
pub use sampling::{estimate_ru_fnr, uniform_sphere_sample, McConfig, RuFnrEstimate};
pub use special::{ln_gamma, reg_inc_beta};

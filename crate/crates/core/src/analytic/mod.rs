//! Closed-form quantities: exit probabilities and their log-gradients, the
//! meander entrance law, the Imhof weight and stationary laws of drifted flows.

pub mod domain;
pub mod entrance;
pub mod exit;
pub mod stationary;

pub use domain::{Domain1D, DomainSpec};
pub use entrance::{entrance_table, imhof_weight, meander_entrance_density, EntranceTable};
pub use exit::{
    exit_prob, gauss_integral, grad_log_exit_prob, halfline_drift, halfline_survival, log_exit_prob,
    wedge_drift,
};
pub use stationary::{grad_log_theta, stationary_cdf, stationary_density, theta, DriftSpec, StationaryLaw};

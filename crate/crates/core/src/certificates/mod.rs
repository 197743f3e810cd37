//! Scalar functionals and inequality checks built on the kinetic and
//! diffusion solvers.

mod constants;
mod frequency;
mod observation;
pub mod ode;
mod smallness;
mod spectral;

pub use constants::{c_p, data_quality, observation_prefactor, sigma, trace_factor, vacuity_threshold, DataQuality};
pub use frequency::{frequency_function, frequency_parts, gaussian_weight, gaussian_weight_at, FrequencyTrace};
pub use observation::{
    dirichlet_quotient_series, interpolation_log_constant, interpolation_sides, observation_certificate,
    plateau_cutoff, regularizing_constant, time_integrated_observation, DirichletQuotientTrace, ObservationInput,
    ObservationReport,
};
pub use ode::{check_ode_lemma, m_ell_bound, MEllBound, OdeLemmaReport, OdeSystemSample};
pub use smallness::{cutoff_constant, radial_cutoff, smallness_theta, smoothstep, smoothstep_max_slope, Smallness};
pub use spectral::{eigen_sum_observability, ObservabilityCurve};

//! Optimal stopping for the Brownian sheet.
//!
//! * [`sheet`]: lattice simulation of the sheet with counter-based randomness;
//! * [`hitting`]: first hitting points along axis and diagonal search paths;
//! * [`special`]: `E₁`, semi-infinite quadrature and a bracketed root solver;
//! * [`analytics`]: closed-form value functions and optimal levels;
//! * [`montecarlo`]: estimators checking the closed forms and sheet identities;
//! * [`majorant`]: least concave majorants, the `g_n` iteration and
//!   continuation regions.

pub mod analytics;
pub mod error;
pub mod hitting;
pub mod majorant;
pub mod montecarlo;
pub mod rng;
pub mod sheet;
pub mod special;

pub use analytics::{
    axis_integrated_value, integrated_value_f, one_param_baselines, one_param_integrated_value,
    optimal_threshold_hitting, optimal_threshold_integrated, phi_hitting_value, sample_curve,
    CurveKind, DiscountConfig, IntegratedThreshold, Reward, Threshold, ValueCurve,
};
pub use error::{Error, Result};
pub use hitting::{
    first_hit, hit_independence_check, Crossing, HittingRule, ReplicationHandle, RuleKind,
    StoppingPoint,
};
pub use majorant::{
    continuation_region, iterate_gn, least_concave_majorant, nested_regions_check,
    trichotomy_violation, ContinuationRegion, GridFunction, NestedReport, SdeConfig,
};
pub use montecarlo::{
    check_exponential_martingale, check_isometry, check_second_moment, estimate_discounted_reward,
    estimate_integrated, estimate_laplace, Integrand, McConfig, McEstimate,
};
pub use rng::RngPolicy;
pub use sheet::{extend_sheet, generate_sheet, GridSpec, SheetGrid};
pub use special::{
    exp_integral_e1, integrate_semi_infinite, solve_bracketed, QuadratureConfig, RootConfig,
};

//! Numeric tolerances used by the diagnostics and checks, collected in one
//! record so reports can state which threshold they were judged against.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// `inverse_mean_map(mean_map(θ))` round trip, sup norm.
    pub round_trip: f64,
    /// `D_A(φ,θ) = D_{A*}(∇A(θ),∇A(φ))` and the three-point identity.
    pub duality: f64,
    /// Quadrature KL against the Bregman divergence.
    pub quadrature_kl: f64,
    /// Relative error of finite-difference gradients.
    pub gradient_rel: f64,
    /// Posterior enumeration against the E-step.
    pub enumeration: f64,
    /// Slack on the per-step and averaged rate inequalities.
    pub rate_slack: f64,
    /// Agreement between independent computations of the step KL.
    pub kl_agreement: f64,
    /// Slack on NLL monotonicity.
    pub monotone_slack: f64,
    /// Paired-iterate KL for the reparametrization check.
    pub reparam: f64,
    /// Responsibility row sums.
    pub row_sum: f64,
    /// Early stopping threshold on Bregman stationarity.
    pub stationarity_stop: f64,
    /// Finite-difference Hessian asymmetry that triggers a conditioning warning.
    pub hessian_asymmetry: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        round_trip: 1e-10,
        duality: 1e-8,
        quadrature_kl: 1e-6,
        gradient_rel: 1e-5,
        enumeration: 1e-10,
        rate_slack: 1e-9,
        kl_agreement: 1e-8,
        monotone_slack: 1e-10,
        reparam: 1e-10,
        row_sum: 1e-12,
        stationarity_stop: 1e-12,
        hessian_asymmetry: 1e-4,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

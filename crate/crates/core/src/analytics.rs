//! Closed-form value functions and optimal levels.
//!
//! Everything here is exact up to special-function accuracy; no simulation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::special::{exp_integral_e1, integrated_root, solve_bracketed, RootConfig};

/// Discount rate `ρ > 0` applied as `e^{-ρ τ₁ τ₂}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountConfig {
    rho: f64,
}

impl DiscountConfig {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return config(format!("discount rate must be positive, got {rho}"));
        }
        Ok(Self { rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `√(2ρ)`, the Laplace exponent matching the discount.
    pub fn root_two_rho(&self) -> f64 {
        (2.0 * self.rho).sqrt()
    }
}

/// User-supplied `C¹` reward with its derivative.
#[derive(Clone)]
pub struct CustomReward {
    pub label: String,
    pub h: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dh: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomReward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomReward")
            .field("label", &self.label)
            .finish()
    }
}

/// Reward `h` paid at the stopping level.
#[derive(Debug, Clone)]
pub enum Reward {
    Linear,
    Power(u32),
    /// `h(y) = e^{k y}`.
    Exponential(f64),
    Custom(CustomReward),
}

impl Reward {
    pub fn custom(
        label: impl Into<String>,
        h: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dh: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Reward::Custom(CustomReward {
            label: label.into(),
            h: Arc::new(h),
            dh: Arc::new(dh),
        })
    }

    pub fn value(&self, y: f64) -> f64 {
        match self {
            Reward::Linear => y,
            Reward::Power(n) => y.powi(*n as i32),
            Reward::Exponential(k) => (k * y).exp(),
            Reward::Custom(c) => (c.h)(y),
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            Reward::Linear => 1.0,
            Reward::Power(0) => 0.0,
            Reward::Power(n) => *n as f64 * y.powi(*n as i32 - 1),
            Reward::Exponential(k) => k * (k * y).exp(),
            Reward::Custom(c) => (c.dh)(y),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Reward::Linear => "linear".into(),
            Reward::Power(n) => format!("power:{n}"),
            Reward::Exponential(k) => format!("exp:{k}"),
            Reward::Custom(c) => c.label.clone(),
        }
    }
}

/// Optimal level, or the statement that the objective has no interior maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    At(f64),
    NoMaximum,
}

impl Threshold {
    pub fn level(&self) -> Option<f64> {
        match self {
            Threshold::At(y) => Some(*y),
            Threshold::NoMaximum => None,
        }
    }
}

/// Expected discounted reward `h(y) e^{-√(2ρ) y}` of any first hitting point of `y > 0`.
pub fn phi_hitting_value(cfg: &DiscountConfig, reward: &Reward, y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return domain(format!("hitting value is defined for y > 0, got {y}"));
    }
    Ok(reward.value(y) * (-cfg.root_two_rho() * y).exp())
}

/// Level maximizing [`phi_hitting_value`], solving `h'(y) = √(2ρ) h(y)`.
pub fn optimal_threshold_hitting(cfg: &DiscountConfig, reward: &Reward) -> Threshold {
    let s = cfg.root_two_rho();
    match reward {
        Reward::Linear => Threshold::At(1.0 / s),
        Reward::Power(n) if *n >= 1 => Threshold::At(*n as f64 / s),
        _ => {
            let q = |y: f64| reward.derivative(y) - s * reward.value(y);
            let (lo, hi) = (1e-6 / s, 1e3 / s);
            let (qlo, qhi) = (q(lo), q(hi));
            // A maximizer needs g' to go from positive to negative.
            if !(qlo > 0.0 && qhi < 0.0) {
                return Threshold::NoMaximum;
            }
            match solve_bracketed(q, &RootConfig::new(lo, hi).with_tol(1e-12 * hi)) {
                Ok(y) => Threshold::At(y),
                Err(_) => Threshold::NoMaximum,
            }
        }
    }
}

/// Expected discounted integral of the sheet up to a first hitting point of `y`:
/// `(2y/ρ) E1(|y| √(2ρ))`, with value 0 at `y = 0`.
pub fn integrated_value_f(cfg: &DiscountConfig, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let z = y.abs() * cfg.root_two_rho();
    let e1 = exp_integral_e1(z).expect("z > 0");
    2.0 * y / cfg.rho() * e1
}

/// Maximizer of [`integrated_value_f`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratedThreshold {
    pub y_star: f64,
    /// Root of `E1(z) = e^{-z}`; `y_star = z_star / √(2ρ)`.
    pub z_star: f64,
}

pub fn optimal_threshold_integrated(cfg: &DiscountConfig) -> Result<IntegratedThreshold> {
    let z_star = integrated_root()?;
    Ok(IntegratedThreshold {
        y_star: z_star / cfg.root_two_rho(),
        z_star,
    })
}

/// One-parameter Brownian motion optimal levels `(1/√(2ρ), -1/√(2ρ))`
/// for the discounted reward and the discounted integral respectively.
pub fn one_param_baselines(cfg: &DiscountConfig) -> (f64, f64) {
    let s = cfg.root_two_rho();
    (1.0 / s, -1.0 / s)
}

/// One-parameter analogue of [`integrated_value_f`]:
/// `E[∫₀^τ e^{-ρt} B(t) dt] = -(y/ρ) e^{-√(2ρ)|y|}` for the first hitting time of `y`.
pub fn one_param_integrated_value(cfg: &DiscountConfig, y: f64) -> f64 {
    -(y / cfg.rho()) * (-cfg.root_two_rho() * y.abs()).exp()
}

/// Exact `E ∫₀^{τ₁}∫₀^{τ₂} e^{-ρtx} B dt dx` when `τ` is the first hit of `y`
/// along an axis `t ↦ (t, x₀)`.
///
/// Before the hit the column `B(·, x)` regresses on the searched column with
/// slope `x/x₀`, and optional stopping gives `E[B(t,x₀); τ₁ > t] = -y P(τ₁ ≤ t)`.
/// Integrating the survival function against the discount leaves
/// `-(1 - (1 + a)e^{-a}) / (ρ² y)` with `a = |y|√(2ρ)`, for every `x₀`.
/// This has the sign of `-y` and differs from [`integrated_value_f`].
pub fn axis_integrated_value(cfg: &DiscountConfig, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let a = y.abs() * cfg.root_two_rho();
    // 1 - (1 + a)e^{-a} loses digits for small a; use its series there.
    let m = if a < 1e-3 {
        a * a / 2.0 - a * a * a / 3.0 + a.powi(4) / 8.0
    } else {
        -((-a).exp_m1()) - a * (-a).exp()
    };
    -m / (cfg.rho() * cfg.rho() * y)
}

/// Which closed form a [`ValueCurve`] samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    /// Hitting value `h(y) e^{-√(2ρ) y}`.
    Phi,
    /// Integrated value `(2y/ρ) E1(|y|√(2ρ))`.
    F,
    /// One-parameter integrated value.
    Baseline,
    /// Integrated value of an axis search, see [`axis_integrated_value`].
    Axis,
}

impl CurveKind {
    pub fn label(&self) -> &'static str {
        match self {
            CurveKind::Phi => "phi",
            CurveKind::F => "F",
            CurveKind::Baseline => "baseline",
            CurveKind::Axis => "axis",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueCurve {
    pub label: String,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl ValueCurve {
    /// Level of the largest sampled value.
    pub fn argmax(&self) -> Option<f64> {
        self.values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| self.ys[i])
    }
}

pub fn sample_curve(
    which: CurveKind,
    cfg: &DiscountConfig,
    reward: Option<&Reward>,
    ys: &[f64],
) -> Result<ValueCurve> {
    if ys.is_empty() {
        return config("level grid is empty");
    }
    if ys.iter().any(|y| !y.is_finite()) || ys.windows(2).any(|w| !(w[0] < w[1])) {
        return config("level grid must be finite and strictly increasing");
    }
    let values = match which {
        CurveKind::Phi => {
            let reward = reward.cloned().unwrap_or(Reward::Linear);
            ys.iter()
                .map(|&y| phi_hitting_value(cfg, &reward, y))
                .collect::<Result<Vec<_>>>()?
        }
        CurveKind::F => ys.iter().map(|&y| integrated_value_f(cfg, y)).collect(),
        CurveKind::Baseline => ys
            .iter()
            .map(|&y| one_param_integrated_value(cfg, y))
            .collect(),
        CurveKind::Axis => ys.iter().map(|&y| axis_integrated_value(cfg, y)).collect(),
    };
    Ok(ValueCurve {
        label: which.label().to_string(),
        ys: ys.to_vec(),
        values,
    })
}

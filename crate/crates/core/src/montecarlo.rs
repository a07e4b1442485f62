//! Monte Carlo estimators for the sheet identities and stopping values.
//!
//! Replication `r` draws its sheet from substream `policy.substream(r)`, so
//! every estimate is a pure function of the configuration. Replications run
//! on the rayon pool and are reduced in replication order; the worker count
//! never changes a result bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::Reward;
use crate::error::{config, domain, Result};
use crate::hitting::{first_hit_detail, HittingRule, ReplicationHandle, RuleKind};
use crate::rng::RngPolicy;
use crate::sheet::{GridSpec, SheetGrid};

/// Censored fraction above which an estimate carries a warning.
pub const CENSORED_WARN_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub censored: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl McEstimate {
    /// `(mean - target) / stderr`; zero-variance estimates give 0 on an
    /// exact match and ±∞ otherwise.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = self.mean - target;
        if self.stderr > 0.0 {
            diff / self.stderr
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.n as f64
    }

    fn from_samples(samples: &[f64], n: usize, censored: usize, seed: u64) -> Self {
        // Welford in replication order.
        let (mut mean, mut m2) = (0.0, 0.0);
        for (k, &v) in samples.iter().enumerate() {
            let d = v - mean;
            mean += d / (k + 1) as f64;
            m2 += d * (v - mean);
        }
        let m = samples.len() as f64;
        let stderr = if samples.len() > 1 {
            (m2 / (m - 1.0)).sqrt() / m.sqrt()
        } else {
            0.0
        };
        let mut est = Self {
            mean,
            stderr,
            n,
            censored,
            seed,
            warnings: Vec::new(),
        };
        if est.censored_fraction() > CENSORED_WARN_FRACTION {
            est.warnings.push(format!(
                "{:.2}% of replications censored; raise the budget",
                100.0 * est.censored_fraction()
            ));
        }
        est
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n: usize,
    /// Lattice each replication starts from; hitting searches grow it.
    pub grid: GridSpec,
    pub rule: HittingRule,
    pub rng: RngPolicy,
    /// Pair each sheet with its negation; `n` counts both members.
    #[serde(default)]
    pub antithetic: bool,
}

impl McConfig {
    pub fn new(n: usize, grid: GridSpec, rule: HittingRule, seed: u64) -> Self {
        Self {
            n,
            grid,
            rule,
            rng: RngPolicy::new(seed),
            antithetic: false,
        }
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return config(format!("need at least 2 replications, got {}", self.n));
        }
        if self.antithetic && !self.n.is_multiple_of(2) {
            return config(format!(
                "antithetic sampling needs an even n, got {}",
                self.n
            ));
        }
        self.grid.validate()?;
        self.rule.validate()
    }
}

struct Sample {
    value: f64,
    censored: bool,
    product: f64,
}

/// Run one closure per replication and reduce.
fn run<F>(cfg: &McConfig, per_rep: F) -> Result<(McEstimate, f64)>
where
    F: Fn(ReplicationHandle) -> Result<Sample> + Sync,
{
    cfg.validate()?;
    let groups = if cfg.antithetic { cfg.n / 2 } else { cfg.n };
    let out: Vec<(f64, usize, f64)> = (0..groups as u64)
        .into_par_iter()
        .map(|g| {
            let handle = ReplicationHandle::new(cfg.grid, cfg.rng.seed, cfg.rng.substream(g))?;
            if cfg.antithetic {
                let a = per_rep(handle.clone())?;
                let b = per_rep(handle.negated())?;
                Ok((
                    0.5 * (a.value + b.value),
                    a.censored as usize + b.censored as usize,
                    a.product + b.product,
                ))
            } else {
                let a = per_rep(handle)?;
                Ok((a.value, a.censored as usize, a.product))
            }
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = out.iter().map(|o| o.0).collect();
    let censored = out.iter().map(|o| o.1).sum();
    let mean_product = out.iter().map(|o| o.2).sum::<f64>() / cfg.n as f64;
    Ok((
        McEstimate::from_samples(&values, cfg.n, censored, cfg.rng.seed),
        mean_product,
    ))
}

/// Estimate `E[e^{-β²τ₁τ₂/2}]` at the first hitting point of `y`.
///
/// Censored replications contribute `e^{-β²·budget/2}`, the largest value
/// they could have had.
pub fn estimate_laplace(cfg: &McConfig, beta: f64, y: f64) -> Result<McEstimate> {
    if !(beta.is_finite() && beta > 0.0) {
        return config(format!("beta must be positive, got {beta}"));
    }
    let half = 0.5 * beta * beta;
    let (est, _) = run(cfg, |mut h| {
        let d = first_hit_detail(&mut h, &cfg.rule, y)?;
        let p = d.point.product();
        Ok(Sample {
            value: (-half * p).exp(),
            censored: d.point.censored,
            product: p,
        })
    })?;
    Ok(est)
}

/// Estimate `E[e^{-ρτ₁τ₂} h(B(τ))]` at the first hitting point of `y > 0`.
///
/// On the hitting event `B(τ) = y`; censored replications contribute 0.
pub fn estimate_discounted_reward(
    cfg: &McConfig,
    rho: f64,
    reward: &Reward,
    y: f64,
) -> Result<McEstimate> {
    if !(rho.is_finite() && rho > 0.0) {
        return config(format!("discount rate must be positive, got {rho}"));
    }
    if !(y > 0.0) {
        return domain(format!("reward level must be positive, got {y}"));
    }
    let payoff = reward.value(y);
    let (est, _) = run(cfg, |mut h| {
        let d = first_hit_detail(&mut h, &cfg.rule, y)?;
        let p = d.point.product();
        let value = if d.point.censored {
            0.0
        } else {
            (-rho * p).exp() * payoff
        };
        Ok(Sample {
            value,
            censored: d.point.censored,
            product: p,
        })
    })?;
    Ok(est)
}

/// Estimate `E ∫₀^{τ₁}∫₀^{τ₂} e^{-ρtx} B(t,x) dt dx` at the first hitting
/// point of `y`.
///
/// Each replication applies the left-endpoint rule on its lattice, with the
/// last partial row and column weighted by their true widths. An axis rule
/// that runs out of budget at `t_K` adds the exact conditional expectation of
/// the remaining integral given the sheet up to `t_K`, so censoring adds no
/// bias there; other rules drop the remainder and say so in a warning.
pub fn estimate_integrated(cfg: &McConfig, rho: f64, y: f64) -> Result<McEstimate> {
    if !(rho.is_finite() && rho > 0.0) {
        return config(format!("discount rate must be positive, got {rho}"));
    }
    let axis = matches!(cfg.rule.kind, RuleKind::Axis { .. });
    let (mut est, mean_product) = run(cfg, |mut h| {
        let d = first_hit_detail(&mut h, &cfg.rule, y)?;
        let (tau1, tau2) = (d.point.tau1, d.point.tau2);
        let mut value = lattice_integral(&h, rho, tau1, tau2);
        if d.point.censored && axis {
            value += censored_tail(&h, rho, y, d.node, tau2);
        }
        Ok(Sample {
            value,
            censored: d.point.censored,
            product: d.point.product(),
        })
    })?;
    if axis {
        // Censored axis replications are completed exactly, so the only
        // censoring warning does not apply.
        est.warnings.clear();
    }
    let cell = cfg.grid.dt() * cfg.grid.dx();
    if mean_product > 0.0 && cell > 1e-3 * mean_product {
        est.warnings.push(format!(
            "cell area {cell:.3e} exceeds 1e-3 of the mean stopped area {mean_product:.3e}"
        ));
    }
    if !axis && est.censored > 0 {
        est.warnings
            .push("censored replications dropped the remaining integral".into());
    }
    Ok(est)
}

fn lattice_integral(h: &ReplicationHandle, rho: f64, tau1: f64, tau2: f64) -> f64 {
    let (dt, dx) = (h.grid().dt(), h.grid().dx());
    let mut total = 0.0;
    let mut i = 0;
    while (i as f64) * dt < tau1 {
        let t = i as f64 * dt;
        let wt = dt.min(tau1 - t);
        let mut row = 0.0;
        let mut j = 1;
        while (j as f64) * dx < tau2 {
            let x = j as f64 * dx;
            row += (-rho * t * x).exp() * h.value(i, j) * dx.min(tau2 - x);
            j += 1;
        }
        total += wt * row;
        i += 1;
    }
    total
}

/// `E[∫_{t_K}^{τ₁}∫₀^{x₀} e^{-ρtx} B dx dt | sheet up to t_K]` on `{τ₁ > t_K}`.
///
/// Along the axis `B(·, x₀)` is a Brownian motion with rate `x₀`, and for
/// `x < x₀` the column `B(·, x)` regresses on it with slope `x/x₀`. Writing
/// `a` for the remaining distance to the level and
/// `E_x = exp(-a·√(2ρx/x₀))`, the Laplace transform of the survival
/// function gives the column contribution
/// `e^{-ρ t_K x}/(ρx) · [B(t_K,x)(1 - E_x) - (x/x₀)·a·E_x]` (in the
/// level's sign convention).
fn censored_tail(h: &ReplicationHandle, rho: f64, y: f64, node: usize, x0: f64) -> f64 {
    let sign = if y < 0.0 { -1.0 } else { 1.0 };
    let (dt, dx) = (h.grid().dt(), h.grid().dx());
    let t_k = node as f64 * dt;
    let cols = (x0 / dx).round() as usize;
    let gap = y.abs() - sign * h.value(node, cols);
    let mut total = 0.0;
    for j in 1..cols {
        let x = j as f64 * dx;
        let lambda = rho * x;
        let e = (-gap * (2.0 * lambda / x0).sqrt()).exp();
        let b = sign * h.value(node, j);
        total += (-rho * t_k * x).exp() / lambda * (b * (1.0 - e) - x / x0 * gap * e) * dx;
    }
    sign * total
}

/// Sub-lattice of the template covering exactly `[0,t] × [0,x]`.
fn sub_spec(grid: &GridSpec, t: f64, x: f64) -> Result<GridSpec> {
    let (Some(nt), Some(nx)) = (
        GridSpec::node_index(t, grid.dt()),
        GridSpec::node_index(x, grid.dx()),
    ) else {
        return domain(format!(
            "({t}, {x}) is not a lattice node of the template grid"
        ));
    };
    if nt == 0 || nx == 0 {
        // Degenerate rectangle: keep a valid spec, callers short-circuit.
        return GridSpec::new(grid.dt(), grid.dx(), 1, 1);
    }
    GridSpec::new(t, x, nt, nx)
}

fn run_sheets<F>(cfg: &McConfig, spec: GridSpec, per_sheet: F) -> Result<McEstimate>
where
    F: Fn(&SheetGrid, f64) -> f64 + Sync,
{
    let cfg = McConfig {
        grid: spec,
        ..cfg.clone()
    };
    let (est, _) = run(&cfg, |h| {
        let s = if h.is_negated() { -1.0 } else { 1.0 };
        Ok(Sample {
            value: per_sheet(h.grid(), s),
            censored: false,
            product: 0.0,
        })
    })?;
    Ok(est)
}

fn check_point(t: f64, x: f64) -> Result<()> {
    if !(t.is_finite() && x.is_finite() && t >= 0.0 && x >= 0.0) {
        return domain(format!("({t}, {x}) must lie in the first quadrant"));
    }
    Ok(())
}

/// Estimate `E[exp(βB(t,x) - β²tx/2)]`, which equals 1.
pub fn check_exponential_martingale(
    cfg: &McConfig,
    beta: f64,
    t: f64,
    x: f64,
) -> Result<McEstimate> {
    check_point(t, x)?;
    if !beta.is_finite() {
        return config(format!("beta must be finite, got {beta}"));
    }
    let spec = sub_spec(&cfg.grid, t, x)?;
    let degenerate = t == 0.0 || x == 0.0;
    let drift = 0.5 * beta * beta * t * x;
    run_sheets(cfg, spec, |g, s| {
        let b = if degenerate {
            0.0
        } else {
            s * g.value(g.nt(), g.nx())
        };
        (beta * b - drift).exp()
    })
}

/// Deterministic integrand for [`check_isometry`].
pub type Integrand<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

/// Both sides of `E[(∫∫φ dB)²] = ∫∫φ²` on `[0,t]×[0,x]`.
///
/// The stochastic integral is `Σ φ(cell midpoint)·ΔB`; the right side is the
/// midpoint rule for `φ²` on the same cells, returned with zero stderr.
pub fn check_isometry(
    cfg: &McConfig,
    phi: Integrand<'_>,
    t: f64,
    x: f64,
) -> Result<(McEstimate, McEstimate)> {
    check_point(t, x)?;
    let spec = sub_spec(&cfg.grid, t, x)?;
    let degenerate = t == 0.0 || x == 0.0;
    let (dt, dx) = (spec.dt(), spec.dx());
    let weights: Vec<f64> = if degenerate {
        Vec::new()
    } else {
        (0..spec.nt)
            .flat_map(|i| (0..spec.nx).map(move |j| ((i as f64 + 0.5) * dt, (j as f64 + 0.5) * dx)))
            .map(|(s, a)| phi(s, a))
            .collect()
    };
    let left = run_sheets(cfg, spec, |g, sign| {
        let mut acc = 0.0;
        for (k, w) in weights.iter().enumerate() {
            acc += w * g.cell_increment(k / spec.nx, k % spec.nx);
        }
        (sign * acc).powi(2)
    })?;
    let right = weights.iter().map(|w| w * w).sum::<f64>() * dt * dx;
    let right = McEstimate {
        mean: right,
        stderr: 0.0,
        n: cfg.n,
        censored: 0,
        seed: cfg.rng.seed,
        warnings: vec![],
    };
    Ok((left, right))
}

/// Estimate `E[B(t,x)²]`, which equals `tx`.
pub fn check_second_moment(cfg: &McConfig, t: f64, x: f64) -> Result<McEstimate> {
    check_point(t, x)?;
    let spec = sub_spec(&cfg.grid, t, x)?;
    let degenerate = t == 0.0 || x == 0.0;
    run_sheets(cfg, spec, |g, _| {
        if degenerate {
            0.0
        } else {
            g.value(g.nt(), g.nx()).powi(2)
        }
    })
}

//! Exponential integral, semi-infinite quadrature and a bracketed root solver.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `E1(x) = ∫ₓ^∞ e^{-s}/s ds` for `x > 0`.
///
/// Power series below `x = 1`, Lentz continued fraction above.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return domain(format!("E1 is defined for x > 0, got {x}"));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= -x / kf;
            let add = term / kf;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        Ok(-EULER_GAMMA - x.ln() - sum)
    } else {
        // E1(x) = e^{-x} / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...)))
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        Ok(h * (-x).exp())
    }
}

/// Tolerances for [`integrate_semi_infinite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return config("quadrature tolerances must be positive");
        }
        if self.max_subdivisions == 0 {
            return config("max_subdivisions must be at least 1");
        }
        Ok(())
    }
}

// Gauss-Kronrod 7/15 nodes on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let dx = h * XGK[k];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// `∫_lower^∞ f(u) du` by adaptive Gauss-Kronrod on the map `u = lower + s/(1-s)`.
///
/// On failure the error carries the best estimate reached.
pub fn integrate_semi_infinite(
    f: impl Fn(f64) -> f64,
    lower: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    cfg.validate()?;
    if !lower.is_finite() {
        return domain(format!("lower limit must be finite, got {lower}"));
    }
    let g = |s: f64| {
        let one_minus = 1.0 - s;
        let u = lower + s / one_minus;
        let v = f(u);
        if v == 0.0 {
            0.0
        } else {
            v / (one_minus * one_minus)
        }
    };
    // (a, b, value, error)
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(&g, 0.0, 1.0);
    pieces.push((0.0, 1.0, v, e));
    let mut iterations = 1;
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::Convergence {
                iterations,
                best: total,
            });
        }
        if err <= cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
            return Ok(total);
        }
        if iterations >= cfg.max_subdivisions {
            return Err(Error::Convergence {
                iterations,
                best: total,
            });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (a, b, _, _) = pieces.swap_remove(idx);
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            return Err(Error::Convergence {
                iterations,
                best: total,
            });
        }
        let (v1, e1) = gk15(&g, a, m);
        let (v2, e2) = gk15(&g, m, b);
        pieces.push((a, m, v1, e1));
        pieces.push((m, b, v2, e2));
        iterations += 1;
    }
}

/// Bracket and stopping rule for [`solve_bracketed`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootConfig {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl RootConfig {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            tol: 1e-12,
            max_iter: 200,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Root of `g` on `[lo, hi]` by bisection with secant steps.
///
/// Returns `z` with `|g(z)| <= tol` once the bracket is narrower than `tol`.
pub fn solve_bracketed(g: impl Fn(f64) -> f64, cfg: &RootConfig) -> Result<f64> {
    if !(cfg.lo < cfg.hi) || !(cfg.tol > 0.0) {
        return config(format!(
            "invalid bracket [{}, {}] or tolerance {}",
            cfg.lo, cfg.hi, cfg.tol
        ));
    }
    let (mut a, mut b) = (cfg.lo, cfg.hi);
    let (mut fa, mut fb) = (g(a), g(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::Bracketing { lo: a, hi: b });
    }
    let mut last_width = b - a;
    for _ in 0..cfg.max_iter {
        let width = b - a;
        let best = if fa.abs() < fb.abs() { a } else { b };
        if width <= cfg.tol && fa.abs().min(fb.abs()) <= cfg.tol {
            return Ok(best);
        }
        let secant = b - fb * (b - a) / (fb - fa);
        let mid = 0.5 * (a + b);
        // Fall back to bisection if the secant leaves the bracket or the
        // bracket stopped halving.
        let c = if secant > a && secant < b && width <= 0.5 * last_width {
            secant
        } else {
            mid
        };
        last_width = width;
        let fc = g(c);
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fa.signum() {
            a = c;
            fa = fc;
        } else {
            b = c;
            fb = fc;
        }
    }
    let best = if fa.abs() < fb.abs() { a } else { b };
    Err(Error::Convergence {
        iterations: cfg.max_iter,
        best,
    })
}

/// `E1(z) - e^{-z}`, whose unique positive zero fixes the integrated threshold.
pub fn e1_root_function(z: f64) -> f64 {
    exp_integral_e1(z)
        .map(|e| e - (-z).exp())
        .unwrap_or(f64::NAN)
}

/// Unique positive root `z*` of `E1(z) = e^{-z}`.
pub fn integrated_root() -> Result<f64> {
    solve_bracketed(e1_root_function, &RootConfig::new(0.1, 1.0).with_tol(1e-13))
}

//! Least concave majorants and the iterative value construction on a
//! one-dimensional state grid.
//!
//! For the driftless diffusion `dX = σ dB` indexed by the sheet, the state
//! after running to `(t, x)` is Gaussian with variance `σ²tx`. One step of the
//! iteration replaces `g` by the best Gaussian average over a ladder of
//! variances, and the iterates rise toward the least concave majorant.
//!
//! The grid is bounded while the state space is not. Convolutions are done on
//! the difference `g - ℓ`, where `ℓ` is the chord through the endpoint values,
//! with the difference killed at both ends by the method of images. Averages
//! of `ℓ` are `ℓ` itself, so concave and linear inputs are left alone and the
//! iterates never exceed the envelope by more than rounding.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Relative slack for "equal" and "concave" on the grid.
pub const GRID_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    ys: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if ys.len() < 2 {
            return config("state grid needs at least two nodes");
        }
        if ys.len() != values.len() {
            return config(format!("{} nodes but {} values", ys.len(), values.len()));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return config("state grid must be finite");
        }
        let h = (ys[ys.len() - 1] - ys[0]) / (ys.len() - 1) as f64;
        if !(h > 0.0) {
            return config("state grid must be strictly increasing");
        }
        for (k, w) in ys.windows(2).enumerate() {
            if !(w[1] > w[0]) || ((w[1] - w[0]) - h).abs() > 1e-9 * h {
                return config(format!("state grid is not uniform near node {k}"));
            }
        }
        if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return config(format!(
                "reward must be finite and nonnegative, got {} at node {k}",
                values[k]
            ));
        }
        Ok(Self { ys, values })
    }

    /// `m` equally spaced nodes on `[lo, hi]` with values `f(y)`.
    pub fn sample(lo: f64, hi: f64, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if m < 2 || !(hi > lo) {
            return config(format!("need m >= 2 and lo < hi, got m={m}, [{lo}, {hi}]"));
        }
        let h = (hi - lo) / (m - 1) as f64;
        let ys: Vec<f64> = (0..m)
            .map(|k| if k + 1 == m { hi } else { lo + k as f64 * h })
            .collect();
        let values = ys.iter().map(|&y| f(y)).collect();
        Self::new(ys, values)
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.ys[self.len() - 1] - self.ys[0]) / (self.len() - 1) as f64
    }

    pub fn width(&self) -> f64 {
        self.ys[self.len() - 1] - self.ys[0]
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            ys: self.ys.clone(),
            values,
        }
    }

    fn same_grid(&self, other: &Self) -> bool {
        self.ys == other.ys
    }

    /// Largest nodewise `|self - other|` over nodes whose distance from both
    /// ends is at least `margin`.
    pub fn sup_distance(&self, other: &Self, margin: f64) -> Result<f64> {
        if !self.same_grid(other) {
            return config("grid functions live on different grids");
        }
        let (lo, hi) = (self.ys[0] + margin, self.ys[self.len() - 1] - margin);
        let slack = 1e-9 * self.step();
        Ok(self
            .ys
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .filter(|(y, _)| **y >= lo - slack && **y <= hi + slack)
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Discrete second differences `v[k-1] - 2v[k] + v[k+1]` at interior nodes.
    pub fn second_differences(&self) -> Vec<f64> {
        self.values
            .windows(3)
            .map(|w| w[0] - 2.0 * w[1] + w[2])
            .collect()
    }

    fn scale(&self) -> f64 {
        self.values.iter().fold(1.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub sigma: f64,
    /// Products `v = t·x` searched in each step; must contain 0.
    pub variance_grid: Vec<f64>,
}

impl SdeConfig {
    /// `{0} ∪ {4^{-k}·width² : k = 0..=12}` in increasing order.
    pub fn default_for(sigma: f64, width: f64) -> Self {
        let vmax = width * width;
        let mut variance_grid = vec![0.0];
        variance_grid.extend((0..=12).rev().map(|k| vmax * 4f64.powi(-k)));
        Self {
            sigma,
            variance_grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return config(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.variance_grid.is_empty() {
            return config("variance grid is empty");
        }
        if !self.variance_grid.windows(2).all(|w| w[0] < w[1]) {
            return config("variance grid must be strictly increasing");
        }
        if self.variance_grid[0] != 0.0 {
            return config("variance grid must start at 0");
        }
        if !self.variance_grid.iter().all(|v| v.is_finite()) {
            return config("variance grid must be finite");
        }
        Ok(())
    }
}

/// Upper concave envelope through a monotone-chain hull sweep.
pub fn least_concave_majorant(g: &GridFunction) -> GridFunction {
    let (ys, vs) = (&g.ys, &g.values);
    let mut hull: Vec<usize> = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // Drop b unless it lies strictly above the chord a→k.
            let cross = (ys[b] - ys[a]) * (vs[k] - vs[a]) - (vs[b] - vs[a]) * (ys[k] - ys[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    let mut out = vs.clone();
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let slope = (vs[b] - vs[a]) / (ys[b] - ys[a]);
        for k in a + 1..b {
            out[k] = vs[a] + slope * (ys[k] - ys[a]);
        }
    }
    g.with_values(out)
}

/// Periodic kernel for a Gaussian of standard deviation `s` nodes, folded
/// onto one period of length `period`.
fn folded_kernel(s: f64, period: usize) -> Vec<f64> {
    let reach = (8.0 * s).ceil() as i64 + 1;
    let mut w = vec![0.0; period];
    let mut total = 0.0;
    for k in -reach..=reach {
        let v = (-(k as f64).powi(2) / (2.0 * s * s)).exp();
        w[k.rem_euclid(period as i64) as usize] += v;
        total += v;
    }
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// One step `g ↦ max_v (g averaged at variance σ²v)`, keeping `g` itself.
fn gn_step(prev: &GridFunction, kernels: &[Vec<f64>]) -> GridFunction {
    let m = prev.len();
    let vs = &prev.values;
    let chord: Vec<f64> = (0..m)
        .map(|k| vs[0] + (vs[m - 1] - vs[0]) * k as f64 / (m - 1) as f64)
        .collect();
    // Odd periodic extension of g - chord: the image sum for killing at both ends.
    let period = 2 * (m - 1);
    let mut ext = vec![0.0; period];
    for k in 1..m - 1 {
        ext[k] = vs[k] - chord[k];
        ext[period - k] = -ext[k];
    }
    let mut best = vs.clone();
    for w in kernels {
        for (k, b) in best.iter_mut().enumerate().take(m - 1).skip(1) {
            let mut acc = 0.0;
            for (d, wd) in w.iter().enumerate() {
                acc += wd * ext[(k + d) % period];
            }
            let v = chord[k] + acc;
            if v > *b {
                *b = v;
            }
        }
    }
    prev.with_values(best)
}

/// `g_0 = g, …, g_{n_max}` with `g_n(y) = max_v E[g_{n-1}(y + σ√v Z)]`.
///
/// Because `v = 0` is in the ladder the sequence is nondecreasing node by node.
pub fn iterate_gn(g: &GridFunction, sde: &SdeConfig, n_max: usize) -> Result<Vec<GridFunction>> {
    sde.validate()?;
    let period = 2 * (g.len() - 1);
    let h = g.step();
    let kernels: Vec<Vec<f64>> = sde
        .variance_grid
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| folded_kernel(sde.sigma * v.sqrt() / h, period))
        .collect();
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(g.clone());
    for _ in 0..n_max {
        let next = gn_step(out.last().expect("nonempty"), &kernels);
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRegion {
    pub mask: Vec<bool>,
    pub epsilon: f64,
}

impl ContinuationRegion {
    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `true` if every node of `self` is also in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.first_outside(other).is_none()
    }

    fn first_outside(&self, other: &Self) -> Option<usize> {
        self.mask
            .iter()
            .zip(&other.mask)
            .position(|(&a, &b)| a && !b)
    }

    /// Maximal runs of consecutive nodes in the region, as node index pairs.
    pub fn intervals(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = None;
        for (k, &m) in self.mask.iter().enumerate() {
            match (m, start) {
                (true, None) => start = Some(k),
                (false, Some(s)) => {
                    out.push((s, k - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, self.mask.len() - 1));
        }
        out
    }
}

/// Nodes where `g < ĝ - ε`, with a rounding slack relative to the values.
pub fn continuation_region(
    g: &GridFunction,
    ghat: &GridFunction,
    epsilon: f64,
) -> Result<ContinuationRegion> {
    if !g.same_grid(ghat) {
        return config("reward and majorant live on different grids");
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return config(format!(
            "epsilon must be finite and nonnegative, got {epsilon}"
        ));
    }
    let slack = GRID_SLACK * g.scale().max(ghat.scale());
    let mask = g
        .values
        .iter()
        .zip(&ghat.values)
        .map(|(a, b)| *a < b - epsilon - slack)
        .collect();
    Ok(ContinuationRegion { mask, epsilon })
}

/// Continuation sets of the capped rewards `min(g, N)` against the uncapped one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedReport {
    pub passed: bool,
    /// Continuation set of `g` itself.
    pub region: ContinuationRegion,
    /// One continuation set per cap, in cap order.
    pub capped: Vec<ContinuationRegion>,
    /// `(cap, node, what)` for the first failed inclusion, if any.
    pub violation: Option<(f64, usize, String)>,
}

/// Check `D_N ⊆ D_{N'} ⊆ D` for consecutive caps and `D_N ⊆ {g < N}`.
pub fn nested_regions_check(g: &GridFunction, caps: &[f64]) -> Result<NestedReport> {
    if !caps.windows(2).all(|w| w[0] < w[1]) {
        return config("caps must be strictly increasing");
    }
    if caps.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return config("caps must be finite and nonnegative");
    }
    let region = continuation_region(g, &least_concave_majorant(g), 0.0)?;
    let mut capped = Vec::with_capacity(caps.len());
    let mut violation = None;
    for (idx, &cap) in caps.iter().enumerate() {
        let gn = g.with_values(g.values.iter().map(|v| v.min(cap)).collect());
        let d = continuation_region(&gn, &least_concave_majorant(&gn), 0.0)?;
        if violation.is_none() {
            if let Some(k) = d.first_outside(&region) {
                violation = Some((cap, k, "capped region leaves the uncapped one".to_string()));
            } else if let Some(k) = d
                .mask
                .iter()
                .zip(&g.values)
                .position(|(&m, &v)| m && v >= cap)
            {
                violation = Some((cap, k, "capped region reaches g >= cap".to_string()));
            } else if let Some(prev) = idx.checked_sub(1).map(|p| &capped[p]) {
                let prev: &ContinuationRegion = prev;
                if let Some(k) = prev.first_outside(&d) {
                    violation = Some((
                        caps[idx - 1],
                        k,
                        "region shrank as the cap grew".to_string(),
                    ));
                }
            }
        }
        capped.push(d);
    }
    Ok(NestedReport {
        passed: violation.is_none(),
        region,
        capped,
        violation,
    })
}

/// First node where neither `ĝ = g` nor `ĝ` is locally linear, if any.
pub fn trichotomy_violation(g: &GridFunction, ghat: &GridFunction) -> Option<usize> {
    let slack = GRID_SLACK * g.scale().max(ghat.scale());
    let dd = ghat.second_differences();
    (0..g.len()).find(|&k| {
        let touches = (g.values[k] - ghat.values[k]).abs() <= slack;
        let linear = k > 0 && k + 1 < g.len() && dd[k - 1].abs() <= 4.0 * slack;
        !(touches || linear)
    })
}

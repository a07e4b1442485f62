//! First hitting points of a level along adapted search paths.
//!
//! A rule walks the sheet along a monotone path `t ↦ (τ₁(t), τ₂(t))` and
//! stops at the first parameter where the sheet reaches the level. Along both
//! shipped paths the sheet is a time-changed Brownian motion whose clock is
//! exactly `τ₁τ₂`:
//!
//! * axis `x₀`: `B(t, x₀)`, clock `x₀·t`;
//! * diagonal `c`: `B(t, c·t)`, clock `c·t²`.
//!
//! Between two lattice nodes the path, given its node values, is a Brownian
//! bridge in that clock. [`Crossing::Bridge`] uses this to decide whether the
//! level was crossed inside the interval and to draw the exact crossing clock
//! (an inverse-Gaussian law after the change of variables `r = s/(Δ - s)`).
//! [`Crossing::Lattice`] only looks at node values, which overshoots the level
//! by `O(√Δ)` on average.

use rand::Rng;
use rand_distr::{Distribution, InverseGaussian, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::montecarlo::{estimate_laplace, McConfig, McEstimate};
use crate::rng::{stream_key, CounterRng, DOMAIN_BRIDGE};
use crate::sheet::{generate_sheet, GridSpec, SheetGrid};

/// Budget multiplier: the default budget is `DEFAULT_BUDGET_SCALE / β²`.
pub const DEFAULT_BUDGET_SCALE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RuleKind {
    /// Search along `t ↦ (t, x0)`.
    Axis { x0: f64 },
    /// Search along `t ↦ (t, c·t)`.
    Diagonal { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Crossing {
    /// Brownian-bridge crossing test with exact in-interval hitting clock.
    Bridge,
    /// Sign change between consecutive nodes, reported at the later node.
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingRule {
    pub kind: RuleKind,
    /// Largest `τ₁τ₂` searched before the point is declared censored.
    pub budget: f64,
    /// A node within `hit_tol` of the level counts as a hit.
    pub hit_tol: f64,
    pub crossing: Crossing,
}

impl HittingRule {
    pub fn axis(x0: f64) -> Self {
        Self::new(RuleKind::Axis { x0 })
    }

    pub fn diagonal(c: f64) -> Self {
        Self::new(RuleKind::Diagonal { c })
    }

    fn new(kind: RuleKind) -> Self {
        Self {
            kind,
            budget: DEFAULT_BUDGET_SCALE,
            hit_tol: 0.0,
            crossing: Crossing::Bridge,
        }
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    /// Budget `50/β²`, which leaves discarded discount mass `e^{-25}`.
    pub fn with_budget_for_beta(self, beta: f64) -> Self {
        self.with_budget(DEFAULT_BUDGET_SCALE / (beta * beta))
    }

    pub fn with_hit_tol(mut self, tol: f64) -> Self {
        self.hit_tol = tol;
        self
    }

    pub fn with_crossing(mut self, crossing: Crossing) -> Self {
        self.crossing = crossing;
        self
    }

    pub fn label(&self) -> String {
        match self.kind {
            RuleKind::Axis { x0 } => format!("axis:{x0}"),
            RuleKind::Diagonal { c } => format!("diagonal:{c}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            RuleKind::Axis { x0 } if !(x0.is_finite() && x0 > 0.0) => {
                return config(format!("axis position must be positive, got {x0}"))
            }
            RuleKind::Diagonal { c } if !(c.is_finite() && c > 0.0) => {
                return config(format!("diagonal slope must be positive, got {c}"))
            }
            _ => {}
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return config(format!("budget must be positive, got {}", self.budget));
        }
        if !(self.hit_tol >= 0.0) {
            return config(format!(
                "hit tolerance must be nonnegative, got {}",
                self.hit_tol
            ));
        }
        Ok(())
    }

    /// Smallest lattice the rule can search, with `per_unit` rows per unit
    /// of `t` over `[0, 1]`.
    ///
    /// An axis search only reads column `x₀`, so the template is a single
    /// column of width `x₀`; a diagonal search uses square steps along the
    /// path. Searches grow the template as needed.
    pub fn search_grid(&self, per_unit: usize) -> Result<GridSpec> {
        self.validate()?;
        match self.kind {
            RuleKind::Axis { x0 } => GridSpec::new(1.0, x0, per_unit, 1),
            RuleKind::Diagonal { c } => GridSpec::new(1.0, c, per_unit, per_unit),
        }
    }

    /// Map a clock value `τ₁τ₂` on the search path to `(τ₁, τ₂)`.
    pub fn point_at_clock(&self, clock: f64) -> (f64, f64) {
        match self.kind {
            RuleKind::Axis { x0 } => (clock / x0, x0),
            RuleKind::Diagonal { c } => {
                let t = (clock / c).sqrt();
                (t, c * t)
            }
        }
    }
}

/// Stopping point returned by [`first_hit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingPoint {
    pub tau1: f64,
    pub tau2: f64,
    pub level: f64,
    /// The level was not reached within the budget; `(tau1, tau2)` is the
    /// last searched path node.
    pub censored: bool,
}

impl StoppingPoint {
    pub fn product(&self) -> f64 {
        self.tau1 * self.tau2
    }
}

/// One replication's sheet, grown on demand while a rule searches it.
#[derive(Debug, Clone)]
pub struct ReplicationHandle {
    grid: SheetGrid,
    negate: bool,
}

impl ReplicationHandle {
    pub fn new(template: GridSpec, seed: u64, substream: u64) -> Result<Self> {
        Ok(Self {
            grid: generate_sheet(template, seed, substream)?,
            negate: false,
        })
    }

    /// Same sheet with every increment negated (antithetic partner).
    pub fn negated(mut self) -> Self {
        self.negate = !self.negate;
        self
    }

    pub fn is_negated(&self) -> bool {
        self.negate
    }

    pub fn grid(&self) -> &SheetGrid {
        &self.grid
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        let v = self.grid.value(i, j);
        if self.negate {
            -v
        } else {
            v
        }
    }

    fn ensure_rows(&mut self, rows: usize, cap: usize) {
        let nt = self.grid.nt();
        if rows > nt {
            let target = (2 * nt).max(rows).min(cap.max(rows));
            self.grid.grow_t(target - nt);
        }
    }

    fn ensure_cols(&mut self, cols: usize, cap: usize) {
        let nx = self.grid.nx();
        if cols > nx {
            let target = (2 * nx).max(cols).min(cap.max(cols));
            self.grid.grow_x(target - nx);
        }
    }
}

/// Lattice geometry of a rule's search path on a particular grid.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PathLayout {
    /// Column of the axis path, or columns advanced per row on the diagonal.
    pub col: usize,
    pub diagonal: bool,
    /// Last path node whose clock does not exceed the budget.
    pub last_node: usize,
    dt: f64,
    slope: f64,
}

impl PathLayout {
    pub(crate) fn new(rule: &HittingRule, spec: &GridSpec) -> Result<Self> {
        rule.validate()?;
        let (dt, dx) = (spec.dt(), spec.dx());
        match rule.kind {
            RuleKind::Axis { x0 } => {
                let Some(col) = GridSpec::node_index(x0, dx) else {
                    return config(format!(
                        "axis position {x0} is not a lattice column (dx = {dx})"
                    ));
                };
                let last_node = (rule.budget / (x0 * dt) * (1.0 + 1e-12)).floor() as usize;
                Ok(Self {
                    col,
                    diagonal: false,
                    last_node,
                    dt,
                    slope: x0,
                })
            }
            RuleKind::Diagonal { c } => {
                let Some(step) = GridSpec::node_index(c * dt, dx).filter(|&m| m > 0) else {
                    return config(format!(
                        "diagonal slope {c} needs c*dt to be a positive multiple of dx"
                    ));
                };
                let last_node = ((rule.budget / c).sqrt() / dt * (1.0 + 1e-12)).floor() as usize;
                Ok(Self {
                    col: step,
                    diagonal: true,
                    last_node,
                    dt,
                    slope: c,
                })
            }
        }
    }

    #[inline]
    pub(crate) fn clock(&self, k: usize) -> f64 {
        let t = k as f64 * self.dt;
        if self.diagonal {
            self.slope * t * t
        } else {
            self.slope * t
        }
    }

    #[inline]
    fn node(&self, k: usize) -> (usize, usize) {
        if self.diagonal {
            (k, k * self.col)
        } else {
            (k, self.col)
        }
    }

    fn prepare(&self, handle: &mut ReplicationHandle, k: usize) {
        let (i, j) = self.node(k);
        let (ci, cj) = self.node(self.last_node);
        handle.ensure_rows(i, ci);
        handle.ensure_cols(j, cj);
    }
}

/// Result of a search, with the lattice node where it ended.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HitDetail {
    pub point: StoppingPoint,
    /// Index of the last path node read.
    pub node: usize,
}

/// First hitting point of `y` by `rule` on the replication's sheet.
pub fn first_hit(
    handle: &mut ReplicationHandle,
    rule: &HittingRule,
    y: f64,
) -> Result<StoppingPoint> {
    Ok(first_hit_detail(handle, rule, y)?.point)
}

pub(crate) fn first_hit_detail(
    handle: &mut ReplicationHandle,
    rule: &HittingRule,
    y: f64,
) -> Result<HitDetail> {
    if !y.is_finite() {
        return config(format!("level must be finite, got {y}"));
    }
    let layout = PathLayout::new(rule, handle.grid.spec())?;
    // Negative levels are searched on the sign-flipped field.
    let sign = if y < 0.0 { -1.0 } else { 1.0 };
    let level = y.abs();
    let hit = |clock: f64, node: usize| {
        let (tau1, tau2) = rule.point_at_clock(clock);
        HitDetail {
            point: StoppingPoint {
                tau1,
                tau2,
                level: y,
                censored: false,
            },
            node,
        }
    };
    if level <= rule.hit_tol {
        return Ok(hit(0.0, 0));
    }
    let (seed, substream) = (handle.grid.seed(), handle.grid.substream());
    let mut a = 0.0;
    for k in 0..layout.last_node {
        layout.prepare(handle, k + 1);
        let (i, j) = layout.node(k + 1);
        let b = sign * handle.value(i, j);
        let (s0, s1) = (layout.clock(k), layout.clock(k + 1));
        match rule.crossing {
            Crossing::Lattice => {
                if b >= level || level - b <= rule.hit_tol {
                    return Ok(hit(s1, k + 1));
                }
            }
            Crossing::Bridge => {
                let span = s1 - s0;
                let gap_start = level - a;
                let key = stream_key(seed, substream, DOMAIN_BRIDGE, k as u64, 0);
                let mut rng = CounterRng::from_key(key);
                let gap_end = (level - b).abs();
                let crossed = b >= level || {
                    let p = (-2.0 * gap_start * gap_end / span).exp();
                    rng.random::<f64>() < p
                };
                if crossed {
                    let r = bridge_crossing_ratio(&mut rng, gap_start, gap_end, span);
                    let s = s0 + span * r / (1.0 + r);
                    return Ok(hit(s.min(s1), k + 1));
                }
                if gap_end <= rule.hit_tol {
                    return Ok(hit(s1, k + 1));
                }
            }
        }
        a = b;
    }
    let clock = layout.clock(layout.last_node);
    let (tau1, tau2) = rule.point_at_clock(clock);
    Ok(HitDetail {
        point: StoppingPoint {
            tau1,
            tau2,
            level: y,
            censored: true,
        },
        node: layout.last_node,
    })
}

/// Draw `r = s/(Δ - s)` for the first passage clock `s` of a Brownian bridge
/// that starts `gap_start` below the level and ends `gap_end` away from it.
fn bridge_crossing_ratio(rng: &mut CounterRng, gap_start: f64, gap_end: f64, span: f64) -> f64 {
    let shape = gap_start * gap_start / span;
    if gap_end <= 1e-12 * gap_start {
        // Lévy limit when the bridge ends on the level.
        let z: f64 = StandardNormal.sample(rng);
        return shape / (z * z);
    }
    let mean = gap_start / gap_end;
    match InverseGaussian::new(mean, shape) {
        Ok(d) => d.sample(rng),
        Err(_) => mean,
    }
}

/// Laplace estimate `E[e^{-β²τ₁τ₂/2}]` for each rule on common sheets.
///
/// Every first hitting point of `y` shares the value `e^{-β|y|}`, so the
/// estimates should agree with each other and with that target.
pub fn hit_independence_check(
    rules: &[HittingRule],
    y: f64,
    beta: f64,
    base: &McConfig,
) -> Result<Vec<McEstimate>> {
    if base.n < 1000 {
        return config(format!(
            "rule comparison needs at least 1000 replications, got {}",
            base.n
        ));
    }
    rules
        .iter()
        .map(|rule| {
            let cfg = McConfig {
                rule: *rule,
                ..base.clone()
            };
            estimate_laplace(&cfg, beta, y)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn handle(per_unit: usize, seed: u64, sub: u64) -> ReplicationHandle {
        ReplicationHandle::new(
            GridSpec::with_resolution(1.0, 2.0, per_unit).unwrap(),
            seed,
            sub,
        )
        .unwrap()
    }

    #[test]
    fn level_zero_hits_immediately() {
        let mut h = handle(8, 1, 0);
        let p = first_hit(&mut h, &HittingRule::axis(1.0), 0.0).unwrap();
        assert_eq!(
            p,
            StoppingPoint {
                tau1: 0.0,
                tau2: 1.0,
                level: 0.0,
                censored: false
            }
        );
        let p = first_hit(&mut h, &HittingRule::diagonal(1.0), 0.0).unwrap();
        assert_eq!((p.tau1, p.tau2, p.censored), (0.0, 0.0, false));
    }

    #[test]
    fn lattice_hit_lands_on_a_crossing_node() {
        for sub in 0..50 {
            let mut h = handle(16, 3, sub);
            let rule = HittingRule::axis(1.0).with_crossing(Crossing::Lattice);
            let p = first_hit(&mut h, &rule, 0.4).unwrap();
            if p.censored {
                continue;
            }
            let v = h.grid().value_at(p.tau1, p.tau2).unwrap();
            assert!(v >= 0.4);
            // the node before did not reach the level
            let prev = h.grid().value_at(p.tau1 - h.grid().dt(), p.tau2).unwrap();
            assert!(prev < 0.4);
        }
    }

    #[test]
    fn bridge_hit_lies_within_one_step_of_the_first_node_crossing() {
        for sub in 0..50 {
            let mut h = handle(16, 4, sub);
            let bridge = first_hit(&mut h.clone(), &HittingRule::axis(1.0), 0.4).unwrap();
            let lattice = first_hit(
                &mut h,
                &HittingRule::axis(1.0).with_crossing(Crossing::Lattice),
                0.4,
            )
            .unwrap();
            if !lattice.censored {
                assert!(bridge.tau1 <= lattice.tau1 + 1e-12);
            }
        }
    }

    #[test]
    fn negative_levels_mirror_positive_ones() {
        for sub in 0..20 {
            let mut h = handle(8, 5, sub);
            let neg = first_hit(&mut h, &HittingRule::axis(1.0), -0.3).unwrap();
            let mut f = handle(8, 5, sub).negated();
            let pos = first_hit(&mut f, &HittingRule::axis(1.0), 0.3).unwrap();
            assert_eq!((neg.tau1, neg.censored), (pos.tau1, pos.censored));
        }
    }

    #[test]
    fn censoring_reports_budget_node() {
        let mut h = handle(4, 6, 0);
        let rule = HittingRule::axis(1.0).with_budget(0.5);
        let p = first_hit(&mut h, &rule, 50.0).unwrap();
        assert!(p.censored);
        assert!((p.product() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn larger_budget_never_adds_censoring() {
        let rule = HittingRule::diagonal(1.0);
        let mut small = 0;
        let mut large = 0;
        for sub in 0..200 {
            let a = first_hit(&mut handle(4, 7, sub), &rule.with_budget(2.0), 1.0).unwrap();
            let b = first_hit(&mut handle(4, 7, sub), &rule.with_budget(20.0), 1.0).unwrap();
            if !a.censored {
                assert!(!b.censored);
                assert_eq!(a.tau1, b.tau1);
            }
            small += a.censored as usize;
            large += b.censored as usize;
        }
        assert!(large <= small);
    }

    #[test]
    fn search_grows_the_sheet_only_as_needed() {
        let mut h = handle(4, 8, 1);
        let rule = HittingRule::diagonal(1.0).with_budget(16.0);
        let p = first_hit(&mut h, &rule, 0.7).unwrap();
        let reach = (p.tau1 / h.grid().dt()).ceil() as usize + 1;
        // one node past the stopping point, then at most a doubling
        assert!(h.grid().nt() <= (2 * reach).max(4));
    }

    #[test]
    fn rule_validation() {
        let spec = GridSpec::with_resolution(1.0, 1.0, 8).unwrap();
        assert!(PathLayout::new(&HittingRule::axis(0.0), &spec).is_err());
        assert!(PathLayout::new(&HittingRule::axis(0.3), &spec).is_err());
        assert!(PathLayout::new(&HittingRule::diagonal(-1.0), &spec).is_err());
        assert!(PathLayout::new(&HittingRule::diagonal(0.3), &spec).is_err());
        assert!(PathLayout::new(&HittingRule::axis(1.0).with_budget(0.0), &spec).is_err());
        assert!(PathLayout::new(&HittingRule::axis(0.5), &spec).is_ok());
        assert!(PathLayout::new(&HittingRule::diagonal(2.0), &spec).is_ok());
    }

    #[test]
    fn search_grids_fit_their_rules() {
        for rule in [
            HittingRule::axis(0.5),
            HittingRule::axis(3.0),
            HittingRule::diagonal(1.5),
        ] {
            let spec = rule.search_grid(8).unwrap();
            assert!(PathLayout::new(&rule, &spec).is_ok());
        }
        assert!(HittingRule::axis(-1.0).search_grid(8).is_err());
    }

    #[test]
    fn points_map_back_to_clock() {
        let r = HittingRule::diagonal(2.0);
        let (t1, t2) = r.point_at_clock(8.0);
        assert!((t1 - 2.0).abs() < 1e-12 && (t2 - 4.0).abs() < 1e-12);
        let r = HittingRule::axis(0.5);
        assert_eq!(r.point_at_clock(1.0), (2.0, 0.5));
    }
}

use std::fmt::Write as _;

use serde_json::{json, Value};
use sheetstop_core::analytics::{axis_integrated_value, CurveKind};
use sheetstop_core::majorant::trichotomy_violation;
use sheetstop_core::{
    check_exponential_martingale, check_isometry, check_second_moment, continuation_region,
    estimate_integrated, estimate_laplace, integrated_value_f, iterate_gn, least_concave_majorant,
    one_param_baselines, optimal_threshold_hitting, optimal_threshold_integrated,
    phi_hitting_value, sample_curve, DiscountConfig, Error, GridFunction, GridSpec, HittingRule,
    Integrand, McConfig, McEstimate, Reward, SdeConfig, Threshold,
};

use crate::args::{
    CurveArgs, CurveId, IdentityArgs, IntegratedArgs, LaplaceArgs, MajorantArgs, McArgs,
    ThresholdArgs,
};
use crate::manifest::Params;

/// What went wrong, mapped onto exit codes 2 and 1.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Convergence { .. } => Failure::Numeric(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

pub struct Outcome {
    pub body: String,
    pub passed: bool,
    pub params: Params,
    pub seed: Option<u64>,
    /// Secondary JSON document and where it goes.
    pub summary: Option<(Option<std::path::PathBuf>, String)>,
}

impl Outcome {
    fn new(body: String, passed: bool, params: Params, seed: Option<u64>) -> Self {
        Self {
            body,
            passed,
            params,
            seed,
            summary: None,
        }
    }
}

type Res = Result<Outcome, Failure>;

const Z_LIMIT: f64 = 3.0;
const MIN_IDENTITY_N: usize = 10;

pub fn parse_rule(s: &str) -> Result<HittingRule, Failure> {
    let bad = || Failure::Config(format!("rule must be axis:X0 or diagonal:C, got {s:?}"));
    let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
    let v: f64 = arg.trim().parse().map_err(|_| bad())?;
    let rule = match kind.trim() {
        "axis" => HittingRule::axis(v),
        "diagonal" => HittingRule::diagonal(v),
        _ => return Err(bad()),
    };
    rule.validate()?;
    Ok(rule)
}

pub fn parse_reward(s: &str) -> Result<Reward, Failure> {
    let bad = || {
        Failure::Config(format!(
            "reward must be linear, power:N or exp:K, got {s:?}"
        ))
    };
    match s.split_once(':') {
        None if s == "linear" => Ok(Reward::Linear),
        Some(("power", n)) => n.parse().map(Reward::Power).map_err(|_| bad()),
        Some(("exp", k)) => k.parse().map(Reward::Exponential).map_err(|_| bad()),
        _ => Err(bad()),
    }
}

fn discount(rho: f64) -> Result<DiscountConfig, Failure> {
    Ok(DiscountConfig::new(rho)?)
}

fn mc_params(p: &mut Params, mc: &McArgs) {
    p.set("n", mc.n)
        .set("seed", mc.seed)
        .set("antithetic", mc.antithetic);
    if let Some(pu) = mc.per_unit {
        p.set("per-unit", pu);
    }
}

fn warn(label: &str, est: &McEstimate) {
    for w in &est.warnings {
        eprintln!("warning [{label}]: {w}");
    }
}

pub fn laplace_check(a: &LaplaceArgs) -> Res {
    let rules = a
        .rule
        .iter()
        .map(|r| parse_rule(r))
        .collect::<Result<Vec<_>, _>>()?;
    if a.beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(Failure::Config("beta values must be positive".into()));
    }
    let per_unit = a.mc.per_unit.unwrap_or(16);
    let mut body = String::from("beta,y,rule,estimate,stderr,target,z_score,censored\n");
    let mut passed = true;
    for (rule, label) in rules.iter().zip(&a.rule) {
        for &beta in &a.beta {
            let rule = match a.budget {
                Some(b) => rule.with_budget(b),
                None => rule.with_budget_for_beta(beta),
            };
            let cfg = McConfig::new(a.mc.n, rule.search_grid(per_unit)?, rule, a.mc.seed)
                .with_antithetic(a.mc.antithetic);
            for &y in &a.y {
                let est = estimate_laplace(&cfg, beta, y)?;
                warn(label, &est);
                let target = (-beta * y.abs()).exp();
                let z = est.z_score(target);
                passed &= z.abs() <= Z_LIMIT;
                writeln!(
                    body,
                    "{beta},{y},{label},{},{},{target},{z},{}",
                    est.mean, est.stderr, est.censored
                )
                .unwrap();
            }
        }
    }
    let mut p = Params::default();
    p.list("beta", &a.beta)
        .list("y", &a.y)
        .list("rule", &a.rule);
    if let Some(b) = a.budget {
        p.set("budget", b);
    }
    mc_params(&mut p, &a.mc);
    Ok(Outcome::new(body, passed, p, Some(a.mc.seed)))
}

pub fn thresholds(a: &ThresholdArgs) -> Res {
    let cfg = discount(a.rho)?;
    let reward = parse_reward(&a.reward)?;
    let integ = optimal_threshold_integrated(&cfg)?;
    let (pos, neg) = one_param_baselines(&cfg);
    let mut doc = json!({
        "rho": a.rho,
        "reward": reward.label(),
        "integrated": integ.y_star,
        "z_star": integ.z_star,
        "integrated_value": integrated_value_f(&cfg, integ.y_star),
        "axis_integrated_value": axis_integrated_value(&cfg, integ.y_star),
        "baseline_pos": pos,
        "baseline_neg": neg,
        // The two-parameter maximizer is positive while the one-parameter one is negative.
        "sign_reversal": integ.y_star > 0.0 && neg < 0.0,
    });
    match optimal_threshold_hitting(&cfg, &reward) {
        Threshold::At(y) => {
            doc["hitting"] = json!(y);
            doc["hitting_value"] = json!(phi_hitting_value(&cfg, &reward, y)?);
        }
        Threshold::NoMaximum => {
            doc["hitting"] = Value::Null;
            doc["reason"] = json!("no maximizer");
        }
    }
    let mut p = Params::default();
    p.set("rho", a.rho).set("reward", &a.reward);
    Ok(Outcome::new(pretty(&doc), true, p, None))
}

pub fn curves(a: &CurveArgs) -> Res {
    let cfg = discount(a.rho)?;
    let reward = parse_reward(&a.reward)?;
    if a.points < 2 || !(a.y_max > a.y_min) {
        return Err(Failure::Config(format!(
            "need at least 2 points and y-min < y-max, got {} points on [{}, {}]",
            a.points, a.y_min, a.y_max
        )));
    }
    let h = (a.y_max - a.y_min) / (a.points - 1) as f64;
    let ys: Vec<f64> = (0..a.points)
        .map(|k| {
            if k + 1 == a.points {
                a.y_max
            } else {
                a.y_min + k as f64 * h
            }
        })
        .collect();
    let which = match a.which {
        CurveId::Phi => CurveKind::Phi,
        CurveId::F => CurveKind::F,
        CurveId::Baseline => CurveKind::Baseline,
        CurveId::Axis => CurveKind::Axis,
    };
    let curve = sample_curve(which, &cfg, Some(&reward), &ys)?;
    let mut body = String::from("y,value\n");
    for (y, v) in curve.ys.iter().zip(&curve.values) {
        writeln!(body, "{y},{v}").unwrap();
    }
    let mut p = Params::default();
    p.set("which", curve.label.to_lowercase())
        .set("rho", a.rho)
        .set("reward", &a.reward)
        .set("y-min", a.y_min)
        .set("y-max", a.y_max)
        .set("points", a.points);
    Ok(Outcome::new(body, true, p, None))
}

pub fn identity_suite(a: &IdentityArgs) -> Res {
    if a.n < MIN_IDENTITY_N {
        return Err(Failure::Config(format!(
            "need n >= {MIN_IDENTITY_N} for a standard error, got {}",
            a.n
        )));
    }
    if a.cells == 0 {
        return Err(Failure::Config("cells must be positive".into()));
    }
    let rule = HittingRule::axis(1.0);
    // Each check reads its own block of substreams so the checks are independent.
    let block = std::cell::Cell::new(0u64);
    let cfg = |t: f64, x: f64| -> Result<McConfig, Failure> {
        let mut c = McConfig::new(a.n, GridSpec::new(t, x, a.cells, a.cells)?, rule, a.seed);
        c.rng.first_substream = block.get() * a.n as u64;
        block.set(block.get() + 1);
        Ok(c)
    };
    let mut checks = Vec::new();
    let mut record = |name: &str, est: &McEstimate, target: f64| {
        warn(name, est);
        let z = est.z_score(target);
        checks.push(json!({
            "name": name, "estimate": est.mean, "stderr": est.stderr, "target": target, "z": z,
            "passed": z.abs() <= Z_LIMIT,
        }));
    };
    record(
        "martingale_1x1",
        &check_exponential_martingale(&cfg(1.0, 1.0)?, a.beta, 1.0, 1.0)?,
        1.0,
    );
    record(
        "martingale_2x1",
        &check_exponential_martingale(&cfg(2.0, 1.0)?, 0.5 * a.beta, 2.0, 1.0)?,
        1.0,
    );
    let e = std::f64::consts::E;
    let phis: [(&str, Integrand, f64); 3] = [
        ("isometry_const", &|_, _| 1.0, 1.0),
        ("isometry_product", &|s, x| s * x, 1.0 / 9.0),
        (
            "isometry_exp",
            &|s, x| (-s - x).exp(),
            ((1.0 - e.powi(-2)) / 2.0).powi(2),
        ),
    ];
    let mut exact = Vec::new();
    for (name, phi, truth) in phis {
        let (left, right) = check_isometry(&cfg(1.0, 1.0)?, phi, 1.0, 1.0)?;
        record(name, &left, right.mean);
        exact.push(json!({"name": name, "lattice": right.mean, "exact": truth}));
    }
    record(
        "second_moment_1x1",
        &check_second_moment(&cfg(1.0, 1.0)?, 1.0, 1.0)?,
        1.0,
    );
    record(
        "second_moment_2x0.5",
        &check_second_moment(&cfg(2.0, 0.5)?, 2.0, 0.5)?,
        1.0,
    );
    let passed = checks.iter().all(|c| c["passed"] == json!(true));
    let doc = json!({"n": a.n, "seed": a.seed, "cells": a.cells, "checks": checks, "isometry_right_side": exact, "passed": passed});
    let mut p = Params::default();
    p.set("n", a.n)
        .set("seed", a.seed)
        .set("cells", a.cells)
        .set("beta", a.beta);
    Ok(Outcome::new(pretty(&doc), passed, p, Some(a.seed)))
}

fn shape_fn(
    shape: &str,
    lo: f64,
    hi: f64,
    nodes: usize,
) -> Result<Box<dyn Fn(usize, f64) -> f64>, Failure> {
    let bad = || {
        Failure::Config(format!(
            "shape must be call:K, spike:Y0 or concave, got {shape:?}"
        ))
    };
    match shape.split_once(':') {
        None if shape == "concave" => {
            let c = 0.5 * (lo + hi);
            Ok(Box::new(move |_, y| (2.0 - (y - c).powi(2)).max(0.0)))
        }
        Some(("call", k)) => {
            let k: f64 = k.parse().map_err(|_| bad())?;
            Ok(Box::new(move |_, y| (y - k).max(0.0)))
        }
        Some(("spike", y0)) => {
            let y0: f64 = y0.parse().map_err(|_| bad())?;
            let node = ((y0 - lo) / (hi - lo) * (nodes - 1) as f64).round();
            if !(node >= 0.0 && node <= (nodes - 1) as f64) {
                return Err(Failure::Config(format!(
                    "spike position {y0} outside [{lo}, {hi}]"
                )));
            }
            let node = node as usize;
            Ok(Box::new(move |k, _| if k == node { 1.0 } else { 0.0 }))
        }
        _ => Err(bad()),
    }
}

pub fn majorant(a: &MajorantArgs) -> Res {
    if a.nodes < 3 || !(a.hi > a.lo) {
        return Err(Failure::Config(format!(
            "need at least 3 nodes and lo < hi, got {} on [{}, {}]",
            a.nodes, a.lo, a.hi
        )));
    }
    if a.epsilon.is_empty() {
        return Err(Failure::Config("need at least one epsilon".into()));
    }
    let f = shape_fn(&a.shape, a.lo, a.hi, a.nodes)?;
    let base = GridFunction::sample(a.lo, a.hi, a.nodes, |y| y)?;
    let values = base
        .ys()
        .iter()
        .enumerate()
        .map(|(k, &y)| f(k, y))
        .collect();
    let g = GridFunction::new(base.ys().to_vec(), values)?;
    let ghat = least_concave_majorant(&g);
    let sde = SdeConfig::default_for(a.sigma, g.width());
    let seq = iterate_gn(&g, &sde, a.n_max)?;
    let last = seq.last().expect("g_0 is always present");
    let regions = a
        .epsilon
        .iter()
        .map(|&e| continuation_region(&g, &ghat, e))
        .collect::<Result<Vec<_>, _>>()?;
    let mut body = String::from("y,g,ghat_envelope,g_n_final,in_continuation\n");
    for k in 0..g.len() {
        writeln!(
            body,
            "{},{},{},{},{}",
            g.ys()[k],
            g.values()[k],
            ghat.values()[k],
            last.values()[k],
            regions[0].mask[k] as u8
        )
        .unwrap();
    }
    let mut order: Vec<usize> = (0..a.epsilon.len()).collect();
    order.sort_by(|&i, &j| a.epsilon[i].total_cmp(&a.epsilon[j]));
    let shrinking = order
        .windows(2)
        .all(|w| regions[w[1]].is_subset_of(&regions[w[0]]));
    let trichotomy = trichotomy_violation(&g, &ghat);
    let region_docs: Vec<Value> = regions
        .iter()
        .map(|r| {
            let iv: Vec<[f64; 2]> = r
                .intervals()
                .iter()
                .map(|&(s, e)| [g.ys()[s], g.ys()[e]])
                .collect();
            json!({"epsilon": r.epsilon, "nodes": r.count(), "intervals": iv})
        })
        .collect();
    let doc = json!({
        "shape": a.shape,
        "nodes": a.nodes,
        "n_max": a.n_max,
        "gap_interior": last.sup_distance(&ghat, 0.1 * g.width())?,
        "gap_all": last.sup_distance(&ghat, 0.0)?,
        "regions": region_docs,
        "regions_shrink_with_epsilon": shrinking,
        "trichotomy_violation": trichotomy,
    });
    let mut p = Params::default();
    p.set("shape", &a.shape)
        .set("lo", a.lo)
        .set("hi", a.hi)
        .set("nodes", a.nodes)
        .set("n-max", a.n_max)
        .set("sigma", a.sigma)
        .list("epsilon", &a.epsilon);
    if let Some(s) = &a.summary {
        p.set("summary", s.display());
    }
    let mut out = Outcome::new(body, shrinking && trichotomy.is_none(), p, None);
    out.summary = Some((a.summary.clone(), pretty(&doc)));
    Ok(out)
}

pub fn integrated_mc(a: &IntegratedArgs) -> Res {
    let cfg = discount(a.rho)?;
    let star = optimal_threshold_integrated(&cfg)?.y_star;
    let ys =
        a.y.iter()
            .map(|s| match s.as_str() {
                "star" => Ok(star),
                _ => s
                    .parse::<f64>()
                    .map_err(|_| Failure::Config(format!("bad level {s:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
    let rule = parse_rule(&a.rule)?.with_budget(a.budget);
    let per_unit = a.mc.per_unit.unwrap_or(256);
    let width = match rule.kind {
        sheetstop_core::RuleKind::Axis { x0 } => x0,
        sheetstop_core::RuleKind::Diagonal { c } => c,
    };
    let cols = (width * per_unit as f64).round() as usize;
    let grid = GridSpec::new(1.0, width, per_unit, cols.max(1))?;
    let mc = McConfig::new(a.mc.n, grid, rule, a.mc.seed).with_antithetic(a.mc.antithetic);
    let mut body = String::from("y,estimate,stderr,target_F,z_score\n");
    let mut passed = true;
    for y in ys {
        let est = estimate_integrated(&mc, a.rho, y)?;
        warn(&a.rule, &est);
        let target = integrated_value_f(&cfg, y);
        let z = est.z_score(target);
        passed &= (est.mean - target).abs() <= (Z_LIMIT * est.stderr).max(0.02 * target.abs());
        writeln!(body, "{y},{},{},{target},{z}", est.mean, est.stderr).unwrap();
    }
    let mut p = Params::default();
    p.set("rho", a.rho)
        .list("y", &a.y)
        .set("rule", &a.rule)
        .set("budget", a.budget);
    mc_params(&mut p, &a.mc);
    Ok(Outcome::new(body, passed, p, Some(a.mc.seed)))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

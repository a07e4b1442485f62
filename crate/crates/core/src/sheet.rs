//! Brownian sheet sample fields on rectangular lattices.
//!
//! A sheet is built from independent `N(0, Δt·Δx)` cell increments, summed
//! cumulatively in both directions, which reproduces the covariance
//! `(t ∧ s)(x ∧ y)` exactly at lattice nodes. Cell increments come from the
//! counter-based generator in [`crate::rng`], so a grid is a pure function of
//! `(spec, seed, substream)` and can be grown in either direction without
//! disturbing values that already exist.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::rng::{row_normal, sheet_row_key};

/// Relative slack used when snapping parameters onto lattice nodes.
pub(crate) const LATTICE_EPS: f64 = 1e-9;

/// Rectangle `[0, t_max] × [0, x_max]` split into `nt × nx` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_max: f64,
    pub x_max: f64,
    pub nt: usize,
    pub nx: usize,
}

impl GridSpec {
    pub fn new(t_max: f64, x_max: f64, nt: usize, nx: usize) -> Result<Self> {
        let spec = Self {
            t_max,
            x_max,
            nt,
            nx,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid with `per_unit` cells per unit length in both directions.
    pub fn with_resolution(t_max: f64, x_max: f64, per_unit: usize) -> Result<Self> {
        let nt = (t_max * per_unit as f64).round() as usize;
        let nx = (x_max * per_unit as f64).round() as usize;
        Self::new(t_max, x_max, nt, nx)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return config(format!("t_max must be positive, got {}", self.t_max));
        }
        if !(self.x_max.is_finite() && self.x_max > 0.0) {
            return config(format!("x_max must be positive, got {}", self.x_max));
        }
        if self.nt == 0 || self.nx == 0 {
            return config("grid needs at least one cell in each direction");
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.nt as f64
    }

    pub fn dx(&self) -> f64 {
        self.x_max / self.nx as f64
    }

    /// Index `k` with `k·step == value` up to lattice slack, if any.
    pub(crate) fn node_index(value: f64, step: f64) -> Option<usize> {
        let r = value / step;
        let k = r.round();
        if k >= 0.0 && (r - k).abs() <= LATTICE_EPS * r.abs().max(1.0) {
            Some(k as usize)
        } else {
            None
        }
    }
}

/// One realization of the Brownian sheet on a lattice.
///
/// `values` is row-major with `nx + 1` columns; row `i` holds `B(iΔt, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetGrid {
    spec: GridSpec,
    dt: f64,
    dx: f64,
    values: Vec<f64>,
    /// Running sum of the increments in each row of cells, so columns can be
    /// appended later with exactly the sums a wider generation would form.
    row_sums: Vec<f64>,
    seed: u64,
    substream: u64,
}

/// Generate a sheet on `spec` for the given seed and substream.
pub fn generate_sheet(spec: GridSpec, seed: u64, substream: u64) -> Result<SheetGrid> {
    spec.validate()?;
    let mut grid = SheetGrid {
        spec: GridSpec { nt: 0, ..spec },
        dt: spec.dt(),
        dx: spec.dx(),
        values: vec![0.0; spec.nx + 1],
        row_sums: Vec::new(),
        seed,
        substream,
    };
    grid.push_rows(spec.nt);
    grid.spec.t_max = spec.t_max;
    Ok(grid)
}

/// Return a copy of `grid` grown along `t` to `new_t_max`.
///
/// `new_t_max - t_max` must be a whole number of cells; existing values are
/// copied bit for bit.
pub fn extend_sheet(grid: &SheetGrid, new_t_max: f64) -> Result<SheetGrid> {
    if !(new_t_max > grid.spec.t_max) {
        return config(format!(
            "new horizon {new_t_max} must exceed current t_max {}",
            grid.spec.t_max
        ));
    }
    let Some(total) = GridSpec::node_index(new_t_max, grid.dt) else {
        return config(format!(
            "new horizon {new_t_max} is not a multiple of the cell size {}",
            grid.dt
        ));
    };
    let mut out = grid.clone();
    out.grow_t(total - grid.spec.nt);
    Ok(out)
}

impl SheetGrid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn substream(&self) -> u64 {
        self.substream
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nt(&self) -> usize {
        self.spec.nt
    }

    pub fn nx(&self) -> usize {
        self.spec.nx
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.spec.nx + 1) + j]
    }

    /// Row `i`, i.e. `B(iΔt, jΔx)` for `j = 0..=nx`.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.spec.nx + 1;
        &self.values[i * w..(i + 1) * w]
    }

    /// Increment of cell `[iΔt,(i+1)Δt] × [jΔx,(j+1)Δx]`.
    pub fn cell_increment(&self, i: usize, j: usize) -> f64 {
        self.value(i + 1, j + 1) - self.value(i, j + 1) - self.value(i + 1, j) + self.value(i, j)
    }

    /// Sheet value at the lattice node below and left of `(t, x)`.
    pub fn value_at(&self, t: f64, x: f64) -> Result<f64> {
        let slack_t = LATTICE_EPS * self.spec.t_max;
        let slack_x = LATTICE_EPS * self.spec.x_max;
        if !(t >= 0.0
            && t <= self.spec.t_max + slack_t
            && x >= 0.0
            && x <= self.spec.x_max + slack_x)
        {
            return domain(format!(
                "({t}, {x}) outside [0, {}] x [0, {}]",
                self.spec.t_max, self.spec.x_max
            ));
        }
        let i = floor_index(t, self.dt).min(self.spec.nt);
        let j = floor_index(x, self.dx).min(self.spec.nx);
        Ok(self.value(i, j))
    }

    /// Grow along `t` by `rows` cells.
    pub fn grow_t(&mut self, rows: usize) {
        self.push_rows(rows);
        self.spec.t_max = self.dt * self.spec.nt as f64;
    }

    /// Grow along `x` by `cols` cells, keeping every existing value.
    pub fn grow_x(&mut self, cols: usize) {
        if cols == 0 {
            return;
        }
        let old_w = self.spec.nx + 1;
        let new_nx = self.spec.nx + cols;
        let new_w = new_nx + 1;
        let sd = (self.dt * self.dx).sqrt();
        let mut values = vec![0.0; (self.spec.nt + 1) * new_w];
        for i in 0..=self.spec.nt {
            values[i * new_w..i * new_w + old_w]
                .copy_from_slice(&self.values[i * old_w..(i + 1) * old_w]);
        }
        for i in 1..=self.spec.nt {
            let (prev, cur) = values.split_at_mut(i * new_w);
            let prev = &prev[(i - 1) * new_w..];
            let cur = &mut cur[..new_w];
            let mut prefix = self.row_sums[i - 1];
            let key = sheet_row_key(self.seed, self.substream, (i - 1) as u64);
            for j in old_w..new_w {
                prefix += sd * row_normal(key, (j - 1) as u64);
                cur[j] = prev[j] + prefix;
            }
            self.row_sums[i - 1] = prefix;
        }
        self.values = values;
        self.spec.nx = new_nx;
        self.spec.x_max = self.dx * new_nx as f64;
    }

    fn push_rows(&mut self, rows: usize) {
        let w = self.spec.nx + 1;
        let sd = (self.dt * self.dx).sqrt();
        self.values.reserve(rows * w);
        for _ in 0..rows {
            let i = self.spec.nt;
            let base = i * w;
            self.values.push(0.0);
            let mut prefix = 0.0;
            let key = sheet_row_key(self.seed, self.substream, i as u64);
            for j in 1..w {
                prefix += sd * row_normal(key, (j - 1) as u64);
                let v = self.values[base + j] + prefix;
                self.values.push(v);
            }
            self.row_sums.push(prefix);
            self.spec.nt += 1;
        }
    }
}

#[inline]
fn floor_index(v: f64, step: f64) -> usize {
    let r = v / step;
    let k = r.round();
    if (r - k).abs() <= LATTICE_EPS * r.abs().max(1.0) {
        k as usize
    } else {
        r.floor() as usize
    }
}

//! Uniform tensor grids in time and state, and the value fields stored on
//! them.
//!
//! A [`Grid`] discretizes `[0, T] x box` with `n_t + 1` time levels and at
//! least three equally spaced nodes per state axis. Level `0` is time `0`
//! and level `n_t` is exactly the horizon `T`; backward schemes fill levels
//! from `n_t` down to `0`. Spatial nodes are indexed flat, row-major with
//! the last axis fastest.
//!
//! [`ValueField`] holds one value per (mode, time level, node); the
//! non-local operators evaluate fields off-grid through clamped multilinear
//! interpolation ([`Grid::interpolate`]), reporting whether clamping
//! happened so callers can surface how often jump destinations left the box.

use crate::{Error, Result};

/// A uniform space-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    nodes: Vec<usize>,
    strides: Vec<usize>,
    n_t: usize,
    horizon: f64,
}

impl Grid {
    /// Builds a grid over `bounds` with `nodes[d]` points on axis `d` and
    /// `n_t` backward time steps on `[0, horizon]`.
    pub fn new(bounds: &[(f64, f64)], nodes: &[usize], n_t: usize, horizon: f64) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Invalid("grid needs at least one state axis".into()));
        }
        if bounds.len() != nodes.len() {
            return Err(Error::Invalid(format!(
                "{} bounds but {} node counts",
                bounds.len(),
                nodes.len()
            )));
        }
        for (d, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Invalid(format!("axis {d} bounds [{lo}, {hi}] are invalid")));
            }
            if nodes[d] < 3 {
                return Err(Error::Invalid(format!(
                    "axis {d} has {} nodes, need at least 3",
                    nodes[d]
                )));
            }
        }
        if n_t == 0 {
            return Err(Error::Invalid("need at least one time step".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Invalid(format!("horizon {horizon} must be positive and finite")));
        }
        let mut strides = vec![1usize; nodes.len()];
        for d in (0..nodes.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * nodes[d + 1];
        }
        Ok(Self {
            lower: bounds.iter().map(|b| b.0).collect(),
            upper: bounds.iter().map(|b| b.1).collect(),
            nodes: nodes.to_vec(),
            strides,
            n_t,
            horizon,
        })
    }

    /// Number of state axes.
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Node count on axis `d`.
    pub fn nodes_on_axis(&self, d: usize) -> usize {
        self.nodes[d]
    }

    /// Total number of spatial nodes.
    pub fn n_nodes(&self) -> usize {
        self.nodes.iter().product()
    }

    /// Number of backward time steps.
    pub fn n_steps(&self) -> usize {
        self.n_t
    }

    /// Number of stored time levels (`n_steps() + 1`).
    pub fn n_levels(&self) -> usize {
        self.n_t + 1
    }

    /// Terminal time `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Time step `T / n_t`.
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    /// The time of level `level`; level `n_t` returns exactly `T`.
    pub fn time(&self, level: usize) -> f64 {
        debug_assert!(level <= self.n_t);
        self.horizon * level as f64 / self.n_t as f64
    }

    /// Mesh width on axis `d`.
    pub fn spacing(&self, d: usize) -> f64 {
        (self.upper[d] - self.lower[d]) / (self.nodes[d] - 1) as f64
    }

    /// Lower bound of axis `d`.
    pub fn lower(&self, d: usize) -> f64 {
        self.lower[d]
    }

    /// Upper bound of axis `d`.
    pub fn upper(&self, d: usize) -> f64 {
        self.upper[d]
    }

    /// Coordinate of index `idx` on axis `d`.
    pub fn coord(&self, d: usize, idx: usize) -> f64 {
        self.lower[d] + self.spacing(d) * idx as f64
    }

    /// Index of `node` along axis `d`.
    pub fn axis_index(&self, node: usize, d: usize) -> usize {
        (node / self.strides[d]) % self.nodes[d]
    }

    /// Flat index of a multi-index.
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dim());
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Writes the coordinates of `node` into `out` (length `dim()`).
    pub fn fill_coords(&self, node: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        for d in 0..self.dim() {
            out[d] = self.coord(d, self.axis_index(node, d));
        }
    }

    /// Coordinates of `node` as a fresh vector.
    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.fill_coords(node, &mut out);
        out
    }

    /// The neighbor of `node` `offset` indices away along axis `d`, or
    /// `None` when that leaves the grid.
    pub fn neighbor(&self, node: usize, d: usize, offset: isize) -> Option<usize> {
        let idx = self.axis_index(node, d) as isize + offset;
        if idx < 0 || idx >= self.nodes[d] as isize {
            None
        } else {
            Some((node as isize + offset * self.strides[d] as isize) as usize)
        }
    }

    /// True when `node` is interior (not on any axis boundary).
    pub fn is_interior(&self, node: usize) -> bool {
        (0..self.dim()).all(|d| {
            let i = self.axis_index(node, d);
            i > 0 && i + 1 < self.nodes[d]
        })
    }

    /// Multilinear interpolation of a spatial slice (`n_nodes()` values) at
    /// an arbitrary point. Points outside the box are clamped to it axis by
    /// axis; the second component reports whether any clamping happened.
    pub fn interpolate(&self, values: &[f64], point: &[f64]) -> (f64, bool) {
        debug_assert_eq!(values.len(), self.n_nodes());
        debug_assert_eq!(point.len(), self.dim());
        let k = self.dim();
        let mut base = vec![0usize; k];
        let mut frac = vec![0.0f64; k];
        let mut clamped = false;
        for d in 0..k {
            let mut p = point[d];
            if p < self.lower[d] {
                p = self.lower[d];
                clamped = true;
            } else if p > self.upper[d] {
                p = self.upper[d];
                clamped = true;
            }
            let s = (p - self.lower[d]) / self.spacing(d);
            let mut cell = s.floor() as isize;
            let max_cell = self.nodes[d] as isize - 2;
            if cell < 0 {
                cell = 0;
            } else if cell > max_cell {
                cell = max_cell;
            }
            base[d] = cell as usize;
            frac[d] = (s - cell as f64).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << k) {
            let mut weight = 1.0;
            let mut node = 0usize;
            for d in 0..k {
                let hi = (corner >> d) & 1 == 1;
                weight *= if hi { frac[d] } else { 1.0 - frac[d] };
                node += (base[d] + hi as usize) * self.strides[d];
            }
            if weight != 0.0 {
                acc += weight * values[node];
            }
        }
        (acc, clamped)
    }
}

/// One value per (mode, time level, spatial node).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    grid: Grid,
    modes: usize,
    values: Vec<f64>,
}

impl ValueField {
    /// An all-zero field for `modes` modes on `grid`.
    pub fn zeros(grid: &Grid, modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::Invalid("a value field needs at least one mode".into()));
        }
        let len = modes * grid.n_levels() * grid.n_nodes();
        Ok(Self { grid: grid.clone(), modes, values: vec![0.0; len] })
    }

    /// The grid the field lives on.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of modes.
    pub fn modes(&self) -> usize {
        self.modes
    }

    fn offset(&self, mode: usize, level: usize) -> usize {
        debug_assert!(mode < self.modes && level < self.grid.n_levels());
        (mode * self.grid.n_levels() + level) * self.grid.n_nodes()
    }

    /// The spatial slice of `mode` at `level`.
    pub fn level(&self, mode: usize, level: usize) -> &[f64] {
        let o = self.offset(mode, level);
        &self.values[o..o + self.grid.n_nodes()]
    }

    /// Mutable spatial slice of `mode` at `level`.
    pub fn level_mut(&mut self, mode: usize, level: usize) -> &mut [f64] {
        let o = self.offset(mode, level);
        let n = self.grid.n_nodes();
        &mut self.values[o..o + n]
    }

    /// Single value accessor.
    pub fn at(&self, mode: usize, level: usize, node: usize) -> f64 {
        self.values[self.offset(mode, level) + node]
    }

    /// Largest absolute value stored in the field.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// True when the two fields share mode count and grid shape.
    pub fn same_shape(&self, other: &ValueField) -> bool {
        self.modes == other.modes && self.grid == other.grid
    }
}

//! Problem data for a multi-mode switching system.
//!
//! A [`SwitchingProblem`] collects everything the solvers need:
//!
//! * dimensions: `modes` operating modes, a `state_dim`-dimensional state,
//!   `noise_dim` Brownian drivers, `mark_dim`-dimensional jump marks;
//! * the horizon `T` and a polynomial growth exponent `p` used by the
//!   weighted norms and moment checks;
//! * coefficient expressions: drift `b(t, x)`, diffusion `sigma(t, x)`
//!   (a `state_dim x noise_dim` matrix), jump shift `beta(x, e)`, and a
//!   per-mode jump weight `gamma_i(x, e)`;
//! * per-mode drivers `f_i(t, x, y1.., z1.., q)` where the `y` slots see the
//!   current values of all modes, the `z` slots see `sigma' * grad u_i`, and
//!   `q` sees the mode's non-local jump functional;
//! * switching costs `g_ij(t, x)` (cost of moving from mode `i` to mode `j`;
//!   the diagonal is identically zero) and terminal conditions `h_i(x)`;
//! * a finite jump measure and a bounding box for grids and samplers.
//!
//! All coefficients are [`expr`](crate::expr) expressions over fixed,
//! positional variable sets; the helpers [`time_state_vars`],
//! [`state_mark_vars`], [`driver_vars`], and [`state_vars`] define the
//! variable order for each slot. Modes are indexed from `0` in this API; the
//! problem-file front end translates from the 1-based names (`f1`, `g12`,
//! ...) used on disk.

pub mod validate;

use std::collections::BTreeMap;

use crate::expr::{self, Expr, VarSet};
use crate::measure::FiniteLevyMeasure;
use crate::{Error, Result};

/// Variables for drift, diffusion, and switching costs: `t, x1..xk`.
pub fn time_state_vars(state_dim: usize) -> VarSet {
    let mut names = vec!["t".to_string()];
    names.extend((1..=state_dim).map(|i| format!("x{i}")));
    VarSet::new(names).expect("generated names are valid")
}

/// Variables for jump coefficients: `x1..xk, e1..el`.
pub fn state_mark_vars(state_dim: usize, mark_dim: usize) -> VarSet {
    let mut names: Vec<String> = (1..=state_dim).map(|i| format!("x{i}")).collect();
    names.extend((1..=mark_dim).map(|i| format!("e{i}")));
    VarSet::new(names).expect("generated names are valid")
}

/// Variables for drivers: `t, x1..xk, y1..ym, z1..zd, q`.
pub fn driver_vars(state_dim: usize, modes: usize, noise_dim: usize) -> VarSet {
    let mut names = vec!["t".to_string()];
    names.extend((1..=state_dim).map(|i| format!("x{i}")));
    names.extend((1..=modes).map(|i| format!("y{i}")));
    names.extend((1..=noise_dim).map(|i| format!("z{i}")));
    names.push("q".to_string());
    VarSet::new(names).expect("generated names are valid")
}

/// Variables for terminal conditions: `x1..xk`.
pub fn state_vars(state_dim: usize) -> VarSet {
    VarSet::new((1..=state_dim).map(|i| format!("x{i}"))).expect("generated names are valid")
}

/// A fully specified switching problem. Construct through
/// [`ProblemBuilder`].
#[derive(Debug, Clone)]
pub struct SwitchingProblem {
    modes: usize,
    state_dim: usize,
    noise_dim: usize,
    mark_dim: usize,
    horizon: f64,
    growth_exponent: u32,
    drift: Vec<Expr>,
    diffusion: Vec<Expr>,
    jump_shift: Vec<Expr>,
    jump_weight: Vec<Expr>,
    driver: Vec<Expr>,
    switch_cost: Vec<Expr>,
    terminal: Vec<Expr>,
    levy: FiniteLevyMeasure,
    bbox: Vec<(f64, f64)>,
}

impl SwitchingProblem {
    /// Number of operating modes (at least 2).
    pub fn modes(&self) -> usize {
        self.modes
    }

    /// State dimension `k`.
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Brownian dimension `d`.
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// Jump-mark dimension `l`.
    pub fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    /// Horizon `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Growth exponent `p` for weighted norms and moment checks.
    pub fn growth_exponent(&self) -> u32 {
        self.growth_exponent
    }

    /// The jump measure.
    pub fn levy(&self) -> &FiniteLevyMeasure {
        &self.levy
    }

    /// The bounding box, one `(lower, upper)` pair per state axis.
    pub fn bounding_box(&self) -> &[(f64, f64)] {
        &self.bbox
    }

    /// Drift component `c` over `(t, x)`.
    pub fn drift_expr(&self, c: usize) -> &Expr {
        &self.drift[c]
    }

    /// Diffusion entry in state row `c`, noise column `dd`, over `(t, x)`.
    pub fn diffusion_expr(&self, c: usize, dd: usize) -> &Expr {
        &self.diffusion[c * self.noise_dim + dd]
    }

    /// Jump-shift component `c` over `(x, e)`.
    pub fn jump_shift_expr(&self, c: usize) -> &Expr {
        &self.jump_shift[c]
    }

    /// Jump weight of `mode` over `(x, e)`.
    pub fn jump_weight_expr(&self, mode: usize) -> &Expr {
        &self.jump_weight[mode]
    }

    /// Driver of `mode` over `(t, x, y, z, q)`.
    pub fn driver_expr(&self, mode: usize) -> &Expr {
        &self.driver[mode]
    }

    /// Cost of switching from mode `from` to mode `to`, over `(t, x)`. The
    /// diagonal is the constant zero.
    pub fn switch_cost_expr(&self, from: usize, to: usize) -> &Expr {
        &self.switch_cost[from * self.modes + to]
    }

    /// Terminal condition of `mode` over `(x)`.
    pub fn terminal_expr(&self, mode: usize) -> &Expr {
        &self.terminal[mode]
    }

    /// Fills `buf` with `(t, x)` arguments in declaration order.
    pub fn time_state_args(&self, t: f64, x: &[f64], buf: &mut Vec<f64>) {
        buf.clear();
        buf.push(t);
        buf.extend_from_slice(x);
    }

    /// Fills `buf` with `(x, e)` arguments in declaration order.
    pub fn state_mark_args(&self, x: &[f64], e: &[f64], buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend_from_slice(x);
        buf.extend_from_slice(e);
    }

    /// Fills `buf` with `(t, x, y, z, q)` driver arguments in declaration
    /// order.
    pub fn driver_args(&self, t: f64, x: &[f64], y: &[f64], z: &[f64], q: f64, buf: &mut Vec<f64>) {
        buf.clear();
        buf.push(t);
        buf.extend_from_slice(x);
        buf.extend_from_slice(y);
        buf.extend_from_slice(z);
        buf.push(q);
    }

    /// Number of driver arguments: `2 + state_dim + modes + noise_dim`.
    pub fn driver_args_len(&self) -> usize {
        2 + self.state_dim + self.modes + self.noise_dim
    }

    /// Driver slot of the first state variable (`t` is slot 0).
    pub fn driver_slot_x(&self) -> usize {
        1
    }

    /// Driver slot of `y1`.
    pub fn driver_slot_y(&self) -> usize {
        1 + self.state_dim
    }

    /// Driver slot of `z1`.
    pub fn driver_slot_z(&self) -> usize {
        1 + self.state_dim + self.modes
    }

    /// Driver slot of `q` (the last slot).
    pub fn driver_slot_q(&self) -> usize {
        1 + self.state_dim + self.modes + self.noise_dim
    }

    /// Evaluates the drift vector at `(t, x)`.
    pub fn drift_at(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut args = Vec::with_capacity(1 + self.state_dim);
        self.time_state_args(t, x, &mut args);
        self.drift.iter().map(|e| e.eval(&args)).collect()
    }

    /// Evaluates the diffusion matrix at `(t, x)`, row-major
    /// `state_dim x noise_dim`.
    pub fn diffusion_at(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut args = Vec::with_capacity(1 + self.state_dim);
        self.time_state_args(t, x, &mut args);
        self.diffusion.iter().map(|e| e.eval(&args)).collect()
    }

    /// Evaluates the jump shift at `(x, e)`.
    pub fn jump_shift_at(&self, x: &[f64], e: &[f64]) -> Result<Vec<f64>> {
        let mut args = Vec::with_capacity(self.state_dim + self.mark_dim);
        self.state_mark_args(x, e, &mut args);
        self.jump_shift.iter().map(|ex| ex.eval(&args)).collect()
    }

    /// Evaluates the jump weight of `mode` at `(x, e)`.
    pub fn jump_weight_at(&self, mode: usize, x: &[f64], e: &[f64]) -> Result<f64> {
        let mut args = Vec::with_capacity(self.state_dim + self.mark_dim);
        self.state_mark_args(x, e, &mut args);
        self.jump_weight[mode].eval(&args)
    }

    /// Evaluates the switching cost `from -> to` at `(t, x)`.
    pub fn switch_cost_at(&self, from: usize, to: usize, t: f64, x: &[f64]) -> Result<f64> {
        let mut args = Vec::with_capacity(1 + self.state_dim);
        self.time_state_args(t, x, &mut args);
        self.switch_cost_expr(from, to).eval(&args)
    }

    /// Evaluates the terminal condition of `mode` at `x`.
    pub fn terminal_at(&self, mode: usize, x: &[f64]) -> Result<f64> {
        self.terminal[mode].eval(x)
    }

    /// Evaluates the driver of `mode` at `(t, x, y, z, q)`.
    pub fn driver_at(&self, mode: usize, t: f64, x: &[f64], y: &[f64], z: &[f64], q: f64) -> Result<f64> {
        let mut args = Vec::with_capacity(self.driver_args_len());
        self.driver_args(t, x, y, z, q, &mut args);
        self.driver[mode].eval(&args)
    }
}

/// Builder for [`SwitchingProblem`]. Coefficients are given as expression
/// text; everything except dimensions, horizon, and bounding box defaults to
/// zero. Mode and axis indices are 0-based.
#[derive(Debug, Clone)]
pub struct ProblemBuilder {
    modes: usize,
    state_dim: usize,
    noise_dim: usize,
    mark_dim: usize,
    horizon: f64,
    growth_exponent: u32,
    drift: Option<Vec<String>>,
    diffusion: Option<Vec<String>>,
    jump_shift: Option<Vec<String>>,
    jump_weight: Option<Vec<String>>,
    driver: Option<Vec<String>>,
    terminal: Option<Vec<String>>,
    cost_default: Option<String>,
    costs: BTreeMap<(usize, usize), String>,
    levy: Option<FiniteLevyMeasure>,
    bbox: Option<Vec<(f64, f64)>>,
}

fn collect_strings<I, S>(items: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    items.into_iter().map(Into::into).collect()
}

impl ProblemBuilder {
    /// Starts a problem with the given dimensions and horizon. The growth
    /// exponent defaults to 2.
    pub fn new(modes: usize, state_dim: usize, noise_dim: usize, mark_dim: usize, horizon: f64) -> Self {
        Self {
            modes,
            state_dim,
            noise_dim,
            mark_dim,
            horizon,
            growth_exponent: 2,
            drift: None,
            diffusion: None,
            jump_shift: None,
            jump_weight: None,
            driver: None,
            terminal: None,
            cost_default: None,
            costs: BTreeMap::new(),
            levy: None,
            bbox: None,
        }
    }

    /// Sets the growth exponent `p >= 1`.
    pub fn growth_exponent(mut self, p: u32) -> Self {
        self.growth_exponent = p;
        self
    }

    /// Drift components `b_1..b_k` over `(t, x)`.
    pub fn drift<I, S>(mut self, items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.drift = Some(collect_strings(items));
        self
    }

    /// Diffusion entries, row-major `state_dim x noise_dim`, over `(t, x)`.
    pub fn diffusion<I, S>(mut self, items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.diffusion = Some(collect_strings(items));
        self
    }

    /// Jump-shift components `beta_1..beta_k` over `(x, e)`.
    pub fn jump_shift<I, S>(mut self, items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.jump_shift = Some(collect_strings(items));
        self
    }

    /// Per-mode jump weights `gamma_1..gamma_m` over `(x, e)`.
    pub fn jump_weight<I, S>(mut self, items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.jump_weight = Some(collect_strings(items));
        self
    }

    /// Per-mode drivers over `(t, x, y, z, q)`.
    pub fn driver<I, S>(mut self, items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.driver = Some(collect_strings(items));
        self
    }

    /// Per-mode terminal conditions over `(x)`.
    pub fn terminal<I, S>(mut self, items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.terminal = Some(collect_strings(items));
        self
    }

    /// Switching cost for one ordered pair of distinct modes, over `(t, x)`.
    pub fn cost(mut self, from: usize, to: usize, text: impl Into<String>) -> Self {
        self.costs.insert((from, to), text.into());
        self
    }

    /// Fallback switching cost for pairs without an explicit entry.
    pub fn cost_default(mut self, text: impl Into<String>) -> Self {
        self.cost_default = Some(text.into());
        self
    }

    /// The jump measure; defaults to the zero measure.
    pub fn levy(mut self, levy: FiniteLevyMeasure) -> Self {
        self.levy = Some(levy);
        self
    }

    /// The bounding box (required), one `(lower, upper)` pair per state axis.
    pub fn bounding_box(mut self, bbox: &[(f64, f64)]) -> Self {
        self.bbox = Some(bbox.to_vec());
        self
    }

    /// Validates dimensions, parses every coefficient against its variable
    /// set, and assembles the problem.
    pub fn build(self) -> Result<SwitchingProblem> {
        if self.modes < 2 {
            return Err(Error::Invalid(format!("need at least 2 modes, got {}", self.modes)));
        }
        if self.state_dim == 0 || self.noise_dim == 0 || self.mark_dim == 0 {
            return Err(Error::Invalid(
                "state, noise, and mark dimensions must all be at least 1".into(),
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Invalid(format!("horizon {} must be positive and finite", self.horizon)));
        }
        if self.growth_exponent == 0 {
            return Err(Error::Invalid("growth exponent must be at least 1".into()));
        }
        let bbox = self
            .bbox
            .ok_or_else(|| Error::Invalid("a bounding box is required".into()))?;
        if bbox.len() != self.state_dim {
            return Err(Error::Invalid(format!(
                "bounding box has {} axes, state has {}",
                bbox.len(),
                self.state_dim
            )));
        }
        for (d, &(lo, hi)) in bbox.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Invalid(format!("bounding box axis {d}: [{lo}, {hi}] is invalid")));
            }
        }
        let levy = match self.levy {
            Some(levy) => {
                if levy.mark_dim() != self.mark_dim {
                    return Err(Error::Invalid(format!(
                        "jump measure has mark dimension {}, problem declares {}",
                        levy.mark_dim(),
                        self.mark_dim
                    )));
                }
                levy
            }
            None => FiniteLevyMeasure::zero(self.mark_dim),
        };

        let ts_vars = time_state_vars(self.state_dim);
        let sm_vars = state_mark_vars(self.state_dim, self.mark_dim);
        let dr_vars = driver_vars(self.state_dim, self.modes, self.noise_dim);
        let st_vars = state_vars(self.state_dim);

        let parse_list = |texts: Option<Vec<String>>,
                          expected: usize,
                          vars: &VarSet,
                          what: &str|
         -> Result<Vec<Expr>> {
            let texts = texts.unwrap_or_else(|| vec!["0".to_string(); expected]);
            if texts.len() != expected {
                return Err(Error::Invalid(format!(
                    "{what}: expected {expected} expressions, got {}",
                    texts.len()
                )));
            }
            texts
                .iter()
                .enumerate()
                .map(|(i, text)| {
                    expr::parse(text, vars)
                        .map_err(|e| Error::Invalid(format!("{what}[{i}] `{text}`: {e}")))
                })
                .collect()
        };

        let drift = parse_list(self.drift, self.state_dim, &ts_vars, "drift")?;
        let diffusion =
            parse_list(self.diffusion, self.state_dim * self.noise_dim, &ts_vars, "diffusion")?;
        let jump_shift = parse_list(self.jump_shift, self.state_dim, &sm_vars, "jump shift")?;
        let jump_weight = parse_list(self.jump_weight, self.modes, &sm_vars, "jump weight")?;
        let driver = parse_list(self.driver, self.modes, &dr_vars, "driver")?;
        let terminal = parse_list(self.terminal, self.modes, &st_vars, "terminal")?;

        for &(from, to) in self.costs.keys() {
            if from >= self.modes || to >= self.modes {
                return Err(Error::Invalid(format!(
                    "switching cost ({from}, {to}) is out of range for {} modes",
                    self.modes
                )));
            }
            if from == to {
                return Err(Error::Invalid(format!(
                    "switching cost ({from}, {from}) is diagonal; diagonal costs are fixed at zero"
                )));
            }
        }
        let mut switch_cost = Vec::with_capacity(self.modes * self.modes);
        for from in 0..self.modes {
            for to in 0..self.modes {
                if from == to {
                    switch_cost.push(Expr::constant(0.0, &ts_vars)?);
                    continue;
                }
                let text = self
                    .costs
                    .get(&(from, to))
                    .or(self.cost_default.as_ref())
                    .ok_or_else(|| {
                        Error::Invalid(format!(
                            "switching cost ({from}, {to}) is missing and no default cost is set"
                        ))
                    })?;
                let parsed = expr::parse(text, &ts_vars).map_err(|e| {
                    Error::Invalid(format!("switching cost ({from}, {to}) `{text}`: {e}"))
                })?;
                switch_cost.push(parsed);
            }
        }

        Ok(SwitchingProblem {
            modes: self.modes,
            state_dim: self.state_dim,
            noise_dim: self.noise_dim,
            mark_dim: self.mark_dim,
            horizon: self.horizon,
            growth_exponent: self.growth_exponent,
            drift,
            diffusion,
            jump_shift,
            jump_weight,
            driver,
            switch_cost,
            terminal,
            levy,
            bbox,
        })
    }
}

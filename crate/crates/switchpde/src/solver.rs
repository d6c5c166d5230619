//! Backward-in-time solver for the obstacle system with a frozen jump slot.
//!
//! One backward step from level `n+1` to level `n` builds, for each mode
//! `i`, the unconstrained candidate
//!
//! ```text
//! cand_i = u_i(n+1) + dt * [ L u_i(n+1) + K u_i(n+1)
//!                            + f_i(t_n, x, (u_j(n+1))_j,
//!                                  sigma(t_n, x)' grad u_i(n+1),
//!                                  q_i(n)) ]
//! ```
//!
//! and then projects the candidates onto the switching constraints
//! `u_i >= max_{j != i} (u_j - g_ij(t_n, x))` node by node
//! ([`project_modes`]). The projection is a monotone fixed-point sweep that
//! only ever raises values, settles within one sweep per mode for costs with
//! strictly positive cycle sums, and reports how much each value rose — the
//! reflection increment, which is exactly the discrete local time the
//! constraint consumed at that node.
//!
//! The jump slot `q_i` is data here ([`FrozenJumpField`]); the fixed-point
//! iteration in [`picard`](crate::picard) refreshes it between solves.
//! [`solve_direct`] instead feeds the slot from the level just computed,
//! which is the cheaper single-pass scheme; it is only justified when the
//! drivers are non-decreasing in `q` and the jump weights are non-negative
//! (see [`check_monotone_case`](crate::problem::validate::check_monotone_case)).
//!
//! The scheme is fully explicit; [`cfl_number`] reports the parabolic
//! stability indicator `dt * (sum_c max|b_c|/h_c + sum_c max a_cc/h_c^2 +
//! total jump mass)`, which should stay below 1.

use crate::grid::{Grid, ValueField};
use crate::operators::{apply_b, apply_k, apply_local, gradient_at};
use crate::problem::SwitchingProblem;
use crate::{Error, Result};

/// Per-mode, per-level, per-node values of the jump functional fed to the
/// driver's `q` slot.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenJumpField {
    modes: usize,
    levels: usize,
    nodes: usize,
    values: Vec<f64>,
}

impl FrozenJumpField {
    /// An all-zero jump field shaped for `modes` modes on `grid`.
    pub fn zeros(grid: &Grid, modes: usize) -> Self {
        let (levels, nodes) = (grid.n_levels(), grid.n_nodes());
        Self { modes, levels, nodes, values: vec![0.0; modes * levels * nodes] }
    }

    fn offset(&self, mode: usize, level: usize) -> usize {
        debug_assert!(mode < self.modes && level < self.levels);
        (mode * self.levels + level) * self.nodes
    }

    /// The slice of `mode` at `level`.
    pub fn level(&self, mode: usize, level: usize) -> &[f64] {
        let o = self.offset(mode, level);
        &self.values[o..o + self.nodes]
    }

    /// Mutable slice of `mode` at `level`.
    pub fn level_mut(&mut self, mode: usize, level: usize) -> &mut [f64] {
        let o = self.offset(mode, level);
        let n = self.nodes;
        &mut self.values[o..o + n]
    }

    /// True when shaped for `modes` modes on `grid`.
    pub fn matches(&self, grid: &Grid, modes: usize) -> bool {
        self.modes == modes && self.levels == grid.n_levels() && self.nodes == grid.n_nodes()
    }
}

/// Reflection increments: how much the switching constraint raised each
/// value during the backward sweep. Non-negative everywhere; zero wherever
/// the equation (rather than the obstacle) determined the value.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionField {
    modes: usize,
    levels: usize,
    nodes: usize,
    values: Vec<f64>,
}

impl ReflectionField {
    /// An all-zero reflection field shaped for `modes` modes on `grid`.
    pub fn zeros(grid: &Grid, modes: usize) -> Self {
        let (levels, nodes) = (grid.n_levels(), grid.n_nodes());
        Self { modes, levels, nodes, values: vec![0.0; modes * levels * nodes] }
    }

    fn offset(&self, mode: usize, level: usize) -> usize {
        debug_assert!(mode < self.modes && level < self.levels);
        (mode * self.levels + level) * self.nodes
    }

    /// The slice of `mode` at `level`.
    pub fn level(&self, mode: usize, level: usize) -> &[f64] {
        let o = self.offset(mode, level);
        &self.values[o..o + self.nodes]
    }

    /// Mutable slice of `mode` at `level`.
    pub fn level_mut(&mut self, mode: usize, level: usize) -> &mut [f64] {
        let o = self.offset(mode, level);
        let n = self.nodes;
        &mut self.values[o..o + n]
    }

    /// Single value accessor.
    pub fn at(&self, mode: usize, level: usize, node: usize) -> f64 {
        self.values[self.offset(mode, level) + node]
    }
}

/// Statistics from one backward step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepStats {
    /// Largest number of projection sweeps any node needed.
    pub sweeps: usize,
    /// Clamped jump destinations while applying the non-local operator.
    pub clamped: u64,
}

/// Diagnostics of a full backward solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    /// Parabolic stability indicator; see [`cfl_number`].
    pub cfl: f64,
    /// Total clamped jump destinations over all levels and modes.
    pub clamped: u64,
    /// Per-level maximum projection sweep count, terminal level first.
    pub sweeps: Vec<usize>,
}

impl SolveDiagnostics {
    /// Largest sweep count over all levels.
    pub fn max_sweeps(&self) -> usize {
        self.sweeps.iter().copied().max().unwrap_or(0)
    }
}

/// A solved field with its reflection increments and diagnostics.
#[derive(Debug, Clone)]
pub struct FrozenSolution {
    pub value: ValueField,
    pub reflection: ReflectionField,
    pub diagnostics: SolveDiagnostics,
}

/// Projects one node's mode values onto the switching constraints by
/// monotone sweeps, in place. `costs` is the `m x m` row-major table of
/// `g_ij` at this `(t, x)`. Returns the number of sweeps on success, `None`
/// if values still move by more than `tol` after `max_sweeps` sweeps (which
/// indicates a cost cycle with non-positive sum).
///
/// Values only increase, each sweep resolves one more link of any chain of
/// profitable switches, and equal alternatives resolve deterministically
/// (modes are visited in ascending order), so the result is the least
/// fixed point above the candidates — independent of mode labelling down to
/// the last bit.
pub(crate) fn project_modes(
    values: &mut [f64],
    costs: &[f64],
    max_sweeps: usize,
    tol: f64,
) -> Option<usize> {
    let m = values.len();
    debug_assert_eq!(costs.len(), m * m);
    // Canonicalize -0.0 so later subtractions cannot produce a negative
    // zero and label-permutation equivariance holds bitwise.
    for v in values.iter_mut() {
        *v += 0.0;
    }
    let mut last_delta = 0.0f64;
    for sweep in 1..=max_sweeps {
        last_delta = 0.0;
        for i in 0..m {
            let mut obstacle = f64::NEG_INFINITY;
            for j in 0..m {
                if j != i {
                    let v = values[j] - costs[i * m + j];
                    if v > obstacle {
                        obstacle = v;
                    }
                }
            }
            if obstacle > values[i] {
                last_delta = last_delta.max(obstacle - values[i]);
                values[i] = obstacle;
            }
        }
        if last_delta == 0.0 {
            return Some(sweep);
        }
    }
    // Accept sub-tolerance residual motion at the cap.
    (last_delta <= tol).then_some(max_sweeps)
}

/// One backward step: fills `field` and `reflection` at `level` from
/// `field` at `level + 1`, reading the jump slot from `frozen` at `level`.
pub fn step_backward(
    problem: &SwitchingProblem,
    field: &mut ValueField,
    reflection: &mut ReflectionField,
    frozen: &FrozenJumpField,
    level: usize,
) -> Result<StepStats> {
    let m = problem.modes();
    let q: Vec<&[f64]> = (0..m).map(|i| frozen.level(i, level)).collect();
    step_with_slot(problem, field, reflection, &q, level)
}

/// Shared stepping core; `q[mode]` supplies the jump slot values at the
/// level being computed.
fn step_with_slot(
    problem: &SwitchingProblem,
    field: &mut ValueField,
    reflection: &mut ReflectionField,
    q: &[&[f64]],
    level: usize,
) -> Result<StepStats> {
    let grid = field.grid().clone();
    let m = problem.modes();
    let k = problem.state_dim();
    let d = problem.noise_dim();
    let n_nodes = grid.n_nodes();
    let nxt = level + 1;
    let t = grid.time(level);
    let dt = grid.dt();
    let mut clamped = 0u64;

    // Unconstrained candidates per mode.
    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut x = vec![0.0; k];
    let mut grad = vec![0.0; k];
    let mut sigma_args = Vec::with_capacity(1 + k);
    let mut sigma = vec![0.0; k * d];
    let mut args = Vec::with_capacity(problem.driver_args_len());
    let mut y = vec![0.0; m];
    let mut z = vec![0.0; d];
    for i in 0..m {
        let local = apply_local(problem, field, i, nxt)?;
        let non_local = apply_k(problem, field, i, nxt)?;
        clamped += non_local.clamped;
        let slice = field.level(i, nxt);
        let mut cand = vec![0.0; n_nodes];
        for node in 0..n_nodes {
            grid.fill_coords(node, &mut x);
            // z slot: sigma(t_n, x)' grad u_i(n+1).
            problem.time_state_args(t, &x, &mut sigma_args);
            for cd in 0..k * d {
                sigma[cd] = problem.diffusion_expr(cd / d, cd % d).eval(&sigma_args)?;
            }
            gradient_at(&grid, slice, node, &mut grad);
            for dd in 0..d {
                let mut acc = 0.0;
                for c in 0..k {
                    acc += sigma[c * d + dd] * grad[c];
                }
                z[dd] = acc;
            }
            for (j, yj) in y.iter_mut().enumerate() {
                *yj = field.at(j, nxt, node);
            }
            problem.driver_args(t, &x, &y, &z, q[i][node], &mut args);
            let f = problem.driver_expr(i).eval(&args)?;
            cand[node] = slice[node] + dt * (local[node] + non_local.values[node] + f);
        }
        candidates.push(cand);
    }

    // Node-by-node projection onto the switching constraints.
    let max_sweeps = m + 3;
    let mut sweeps_used = 0usize;
    let mut costs = vec![0.0; m * m];
    let mut vals = vec![0.0; m];
    let mut cost_args = Vec::with_capacity(1 + k);
    let mut max_abs = 0.0f64;
    for cand in &candidates {
        for v in cand {
            max_abs = max_abs.max(v.abs());
        }
    }
    let tol = 1e-12 * (1.0 + max_abs);
    for node in 0..n_nodes {
        grid.fill_coords(node, &mut x);
        problem.time_state_args(t, &x, &mut cost_args);
        for i in 0..m {
            for j in 0..m {
                costs[i * m + j] =
                    if i == j { 0.0 } else { problem.switch_cost_expr(i, j).eval(&cost_args)? };
            }
            vals[i] = candidates[i][node];
        }
        let sweeps = project_modes(&mut vals, &costs, max_sweeps, tol)
            .ok_or(Error::SweepDivergence { level, sweeps: max_sweeps })?;
        sweeps_used = sweeps_used.max(sweeps);
        for i in 0..m {
            field.level_mut(i, level)[node] = vals[i];
            reflection.level_mut(i, level)[node] = vals[i] - candidates[i][node];
        }
    }
    Ok(StepStats { sweeps: sweeps_used, clamped })
}

/// Parabolic stability indicator of the explicit scheme on `grid`:
/// `dt * (sum_c max|b_c|/h_c + sum_c max a_cc/h_c^2 + total jump mass)`,
/// with the maxima sampled over all nodes at times `0`, `T/2`, and `T`.
/// Values at or above 1 mean the unconstrained update is not monotone and
/// the solve may oscillate.
pub fn cfl_number(problem: &SwitchingProblem, grid: &Grid) -> Result<f64> {
    let k = problem.state_dim();
    let d = problem.noise_dim();
    let mut worst = 0.0f64;
    let mut x = vec![0.0; k];
    for &t in &[0.0, 0.5 * problem.horizon(), problem.horizon()] {
        for node in 0..grid.n_nodes() {
            grid.fill_coords(node, &mut x);
            let b = problem.drift_at(t, &x)?;
            let sigma = problem.diffusion_at(t, &x)?;
            let mut rate = 0.0;
            for c in 0..k {
                rate += b[c].abs() / grid.spacing(c);
                let mut a_cc = 0.0;
                for dd in 0..d {
                    a_cc += sigma[c * d + dd] * sigma[c * d + dd];
                }
                rate += a_cc / (grid.spacing(c) * grid.spacing(c));
            }
            worst = worst.max(rate);
        }
    }
    Ok(grid.dt() * (worst + problem.levy().total_mass()))
}

/// Solves the obstacle system backward from the terminal conditions with
/// the jump slot frozen to `frozen`.
pub fn solve_frozen(
    problem: &SwitchingProblem,
    grid: &Grid,
    frozen: &FrozenJumpField,
) -> Result<FrozenSolution> {
    if !frozen.matches(grid, problem.modes()) {
        return Err(Error::Invalid("jump field shape does not match the grid".into()));
    }
    solve_impl(problem, grid, Some(frozen))
}

/// Single-pass variant: the jump slot at each level is the non-local
/// operator applied to the level just computed (`q_i(n) = B_i u_i(n+1)`).
/// Only justified for the comparison-friendly structure (drivers
/// non-decreasing in `q`, non-negative jump weights).
pub fn solve_direct(problem: &SwitchingProblem, grid: &Grid) -> Result<FrozenSolution> {
    solve_impl(problem, grid, None)
}

fn solve_impl(
    problem: &SwitchingProblem,
    grid: &Grid,
    frozen: Option<&FrozenJumpField>,
) -> Result<FrozenSolution> {
    let m = problem.modes();
    let mut field = ValueField::zeros(grid, m)?;
    let mut reflection = ReflectionField::zeros(grid, m);
    let terminal_level = grid.n_steps();
    let mut x = vec![0.0; problem.state_dim()];
    for i in 0..m {
        for node in 0..grid.n_nodes() {
            grid.fill_coords(node, &mut x);
            // + 0.0 canonicalizes -0.0; see project_modes.
            field.level_mut(i, terminal_level)[node] = problem.terminal_at(i, &x)? + 0.0;
        }
    }
    let mut clamped = 0u64;
    let mut sweeps = vec![0usize; grid.n_levels()];
    for level in (0..terminal_level).rev() {
        let stats = match frozen {
            Some(frozen) => step_backward(problem, &mut field, &mut reflection, frozen, level)?,
            None => {
                let q_owned: Vec<Vec<f64>> = (0..m)
                    .map(|i| apply_b(problem, &field, i, level + 1).map(|nl| nl.values))
                    .collect::<Result<_>>()?;
                let q: Vec<&[f64]> = q_owned.iter().map(|v| v.as_slice()).collect();
                step_with_slot(problem, &mut field, &mut reflection, &q, level)?
            }
        };
        clamped += stats.clamped;
        sweeps[level] = stats.sweeps;
    }
    let cfl = cfl_number(problem, grid)?;
    Ok(FrozenSolution {
        value: field,
        reflection,
        diagnostics: SolveDiagnostics { cfl, clamped, sweeps },
    })
}

//! Path-simulation oracles: independent references for the grid solver.
//!
//! Three estimators of the optimal-switching value live here, none of which
//! share numerics with the finite-difference solver:
//!
//! * [`dp_switching_value_deterministic`] — exact dynamic programming along
//!   the single forward-Euler path of a problem with zero diffusion and
//!   zero jumps.
//! * [`enumerate_strategies_value`] — brute force over every switching
//!   strategy (up to a switch budget) on that same deterministic path; a
//!   cross-check for the dynamic program that does not use backward
//!   induction at all.
//! * [`regression_switching_value`] — a regression Monte-Carlo estimate on
//!   simulated jump-diffusion paths ([`simulate_paths`]), with a bootstrap
//!   standard error.
//!
//! Paths follow the compensated Euler scheme
//!
//! ```text
//! X_{n+1} = X_n + [b(t_n, X_n) - sum_j w_j beta(X_n, e_j)] dt
//!           + sigma(t_n, X_n) sqrt(dt) xi_n
//!           + sum_{jumps in (t_n, t_{n+1}]} beta(X_n, e_J)
//! ```
//!
//! with the jump clock run at the measure's total mass and marks drawn by
//! weight. Each path owns one counter-mode RNG stream, and the jump
//! schedule is drawn before the Gaussian increments, so path `p` of a run
//! is reproducible in isolation and insensitive to how many jumps other
//! paths saw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::problem::{driver_vars, SwitchingProblem};
use crate::solver::project_modes;
use crate::{Error, Result};

/// Hard cap on the estimated strategy count for brute-force enumeration.
pub const ENUMERATION_LIMIT: f64 = 1e7;

/// A bundle of simulated state paths on a shared time lattice.
#[derive(Debug, Clone)]
pub struct PathSet {
    start_time: f64,
    end_time: f64,
    n_paths: usize,
    n_steps: usize,
    state_dim: usize,
    seed: u64,
    /// `n_paths * (n_steps + 1) * state_dim`, path-major then step-major.
    states: Vec<f64>,
    /// Per path: `(step index the jump lands in, atom index)`, in time order.
    jump_steps: Vec<Vec<(usize, usize)>>,
}

impl PathSet {
    /// Time of the first lattice node.
    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    /// Time of the last lattice node.
    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    /// Number of simulated paths.
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Number of time steps (`n_steps + 1` lattice nodes per path).
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// State dimension.
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Seed the bundle was drawn from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Lattice spacing in time.
    pub fn dt(&self) -> f64 {
        (self.end_time - self.start_time) / self.n_steps as f64
    }

    /// Time of lattice node `step`; exact at both endpoints.
    pub fn time(&self, step: usize) -> f64 {
        debug_assert!(step <= self.n_steps);
        self.start_time + (self.end_time - self.start_time) * step as f64 / self.n_steps as f64
    }

    /// State of `path` at lattice node `step`.
    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        debug_assert!(path < self.n_paths && step <= self.n_steps);
        let o = (path * (self.n_steps + 1) + step) * self.state_dim;
        &self.states[o..o + self.state_dim]
    }

    /// The jumps of `path` as `(containing step, atom index)` pairs.
    pub fn jumps(&self, path: usize) -> &[(usize, usize)] {
        &self.jump_steps[path]
    }
}

/// Simulates `n_paths` compensated Euler paths of the state process from
/// `(start_time, x0)` to the problem horizon in `n_steps` steps.
pub fn simulate_paths(
    problem: &SwitchingProblem,
    start_time: f64,
    x0: &[f64],
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<PathSet> {
    let k = problem.state_dim();
    let d = problem.noise_dim();
    if x0.len() != k {
        return Err(Error::Invalid(format!(
            "starting state has {} coordinates, problem has {k}",
            x0.len()
        )));
    }
    if !(start_time >= 0.0 && start_time < problem.horizon()) {
        return Err(Error::Invalid(format!(
            "start time {start_time} is outside [0, {})",
            problem.horizon()
        )));
    }
    if n_paths == 0 || n_steps == 0 {
        return Err(Error::Invalid("need at least one path and one step".into()));
    }
    let span = problem.horizon() - start_time;
    let dt = span / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let lambda = problem.levy().total_mass();
    let atoms = problem.levy().atoms();

    let nodes = n_steps + 1;
    let mut states = vec![0.0; n_paths * nodes * k];
    let jump_steps: Vec<Vec<(usize, usize)>> = states
        .par_chunks_mut(nodes * k)
        .enumerate()
        .map(|(path, chunk)| -> Result<Vec<(usize, usize)>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64 + 1);

            // Jump schedule first, then the Gaussian increments, so the
            // Gaussian draws line up across paths.
            let mut jumps: Vec<(usize, usize)> = Vec::new();
            if lambda > 0.0 {
                let clock = Exp::new(lambda)
                    .map_err(|e| Error::Invalid(format!("jump clock rate {lambda}: {e}")))?;
                let mut tau = 0.0f64;
                loop {
                    tau += clock.sample(&mut rng);
                    if tau > span {
                        break;
                    }
                    let mut pick = rng.random::<f64>() * lambda;
                    let mut atom = atoms.len() - 1;
                    for (j, a) in atoms.iter().enumerate() {
                        pick -= a.weight;
                        if pick <= 0.0 {
                            atom = j;
                            break;
                        }
                    }
                    let step = ((tau / dt).ceil() as usize).max(1).min(n_steps) - 1;
                    jumps.push((step, atom));
                }
            }
            let normals: Vec<f64> =
                (0..n_steps * d).map(|_| StandardNormal.sample(&mut rng)).collect();

            chunk[..k].copy_from_slice(x0);
            let mut args = Vec::new();
            let mut mark_args = Vec::new();
            let mut beta = vec![0.0; k];
            let mut next_jump = 0usize;
            for n in 0..n_steps {
                let t = start_time + span * n as f64 / n_steps as f64;
                let (left, right) = chunk[n * k..].split_at_mut(k);
                let x = &left[..k];
                problem.time_state_args(t, x, &mut args);
                for c in 0..k {
                    let b = problem.drift_expr(c).eval(&args)?;
                    let mut acc = x[c] + b * dt;
                    for dd in 0..d {
                        let s = problem.diffusion_expr(c, dd).eval(&args)?;
                        acc += s * (sqrt_dt * normals[n * d + dd]);
                    }
                    right[c] = acc;
                }
                if lambda > 0.0 {
                    // Compensator and jump increments both use the left
                    // state; jumps in (t_n, t_{n+1}] land at the step end.
                    for (j, a) in atoms.iter().enumerate() {
                        problem.state_mark_args(x, &a.mark, &mut mark_args);
                        for c in 0..k {
                            beta[c] = problem.jump_shift_expr(c).eval(&mark_args)?;
                        }
                        for c in 0..k {
                            right[c] -= a.weight * beta[c] * dt;
                        }
                        let mut hits = next_jump;
                        while hits < jumps.len() && jumps[hits].0 == n {
                            if jumps[hits].1 == j {
                                for c in 0..k {
                                    right[c] += beta[c];
                                }
                            }
                            hits += 1;
                        }
                    }
                    while next_jump < jumps.len() && jumps[next_jump].0 == n {
                        next_jump += 1;
                    }
                }
                for c in 0..k {
                    if !right[c].is_finite() {
                        return Err(Error::NonFinite {
                            context: format!("path {path} coordinate {c} at step {}", n + 1),
                        });
                    }
                }
            }
            Ok(jumps)
        })
        .collect::<Result<_>>()?;

    Ok(PathSet {
        start_time,
        end_time: problem.horizon(),
        n_paths,
        n_steps,
        state_dim: k,
        seed,
        states,
        jump_steps,
    })
}

/// Empirical running-supremum moment of a path bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCheck {
    /// Mean over paths of `sup_n |X_n|^p`.
    pub empirical: f64,
    /// `empirical / (1 + |x0|^p)` — the constant a polynomial growth bound
    /// of exponent `p` would need at this starting point.
    pub fitted_c: f64,
}

/// Computes the empirical `sup`-moment of order `p` over a path bundle.
pub fn moment_check(paths: &PathSet, p: u32) -> MomentCheck {
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut acc = 0.0;
    for path in 0..paths.n_paths() {
        let mut sup = 0.0f64;
        for step in 0..=paths.n_steps() {
            sup = sup.max(norm(paths.state(path, step)).powi(p as i32));
        }
        acc += sup;
    }
    let empirical = acc / paths.n_paths() as f64;
    let fitted_c = empirical / (1.0 + norm(paths.state(0, 0)).powi(p as i32));
    MomentCheck { empirical, fitted_c }
}

/// A deterministic switching strategy: a starting mode and a time-ordered
/// list of `(time, target mode)` switches. Several switches may share one
/// time (a multi-hop through intermediate modes).
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub initial_mode: usize,
    pub switches: Vec<(f64, usize)>,
}

impl Strategy {
    /// A strategy that stays in `mode` forever.
    pub fn stay(mode: usize) -> Self {
        Self { initial_mode: mode, switches: Vec::new() }
    }

    /// Checks mode indices, time ordering, and the time window
    /// `[start_time, horizon]`.
    pub fn validate(&self, problem: &SwitchingProblem, start_time: f64) -> Result<()> {
        let m = problem.modes();
        if self.initial_mode >= m {
            return Err(Error::Invalid(format!(
                "initial mode {} out of range (modes: {m})",
                self.initial_mode
            )));
        }
        let mut mode = self.initial_mode;
        let mut last = start_time;
        let horizon = problem.horizon();
        for (idx, &(tau, to)) in self.switches.iter().enumerate() {
            if !tau.is_finite() || tau < start_time - 1e-9 * (1.0 + start_time.abs()) {
                return Err(Error::Invalid(format!(
                    "switch {idx} at time {tau} is before the start time {start_time}"
                )));
            }
            if tau > horizon + 1e-9 * (1.0 + horizon.abs()) {
                return Err(Error::Invalid(format!(
                    "switch {idx} at time {tau} is after the horizon {horizon}"
                )));
            }
            if tau < last {
                return Err(Error::Invalid(format!(
                    "switch times must be non-decreasing (switch {idx} at {tau} after {last})"
                )));
            }
            if to >= m {
                return Err(Error::Invalid(format!(
                    "switch {idx} targets mode {to}, out of range (modes: {m})"
                )));
            }
            if to == mode {
                return Err(Error::Invalid(format!(
                    "switch {idx} targets the current mode {mode}"
                )));
            }
            mode = to;
            last = tau;
        }
        Ok(())
    }
}

/// Errors out unless every driver uses only variable slots below `bound`
/// (slot 0 is time, slots `1..=k` are the state coordinates, then mode
/// values, gradient, jump). `bound = 1 + k` means "time and state only".
fn require_driver_slots_below(problem: &SwitchingProblem, bound: usize) -> Result<()> {
    let names = driver_vars(problem.state_dim(), problem.modes(), problem.noise_dim());
    for mode in 0..problem.modes() {
        for idx in problem.driver_expr(mode).free_vars() {
            if idx >= bound {
                return Err(Error::DriverNotStateOnly {
                    mode,
                    variable: names.name(idx).to_string(),
                });
            }
        }
    }
    Ok(())
}

/// Where a switch time sits on the path lattice: snapped to a node if it is
/// within a relative `1e-9` of one, otherwise strictly inside a step.
#[derive(Debug, Clone, Copy)]
enum SwitchSpot {
    Node(usize),
    Inside { tau: f64, left: usize },
}

fn locate_switch(paths: &PathSet, tau: f64) -> SwitchSpot {
    let n_steps = paths.n_steps();
    let rel = (tau - paths.start_time()) / paths.dt();
    let nearest = rel.round().clamp(0.0, n_steps as f64) as usize;
    if (tau - paths.time(nearest)).abs() <= 1e-9 * (1.0 + paths.time(nearest).abs()) {
        SwitchSpot::Node(nearest)
    } else {
        SwitchSpot::Inside { tau, left: (rel.floor().clamp(0.0, n_steps as f64)) as usize }
    }
}

/// Realized payoff of a switching strategy along one simulated path:
/// left-endpoint Riemann sum of the running driver, minus the switching
/// costs, plus the terminal reward of the final mode. After a switch at
/// time `tau`, the new mode's driver applies from `tau` on (the mode path
/// is right-continuous), and the cost is evaluated at the state of the
/// lattice node at or immediately before `tau`.
///
/// Only drivers depending on time and state alone can be integrated along
/// a path; anything else is reported as [`Error::DriverNotStateOnly`].
pub fn strategy_payoff(
    problem: &SwitchingProblem,
    paths: &PathSet,
    path: usize,
    strategy: &Strategy,
) -> Result<f64> {
    if path >= paths.n_paths() {
        return Err(Error::Invalid(format!(
            "path {path} out of range ({} simulated)",
            paths.n_paths()
        )));
    }
    if paths.state_dim() != problem.state_dim() {
        return Err(Error::Invalid("path bundle and problem state dimensions differ".into()));
    }
    strategy.validate(problem, paths.start_time())?;
    require_driver_slots_below(problem, 1 + problem.state_dim())?;

    let n_steps = paths.n_steps();
    let dt = paths.dt();
    let spots: Vec<SwitchSpot> =
        strategy.switches.iter().map(|&(tau, _)| locate_switch(paths, tau)).collect();
    // applies(spot, n): the switch takes effect at or before node n.
    let applies = |spot: SwitchSpot, n: usize| match spot {
        SwitchSpot::Node(j) => j <= n,
        SwitchSpot::Inside { tau, .. } => tau <= paths.time(n),
    };

    let m = problem.modes();
    let y = vec![0.0; m];
    let z = vec![0.0; problem.noise_dim()];
    let mut args = Vec::new();
    let mut cost_args = Vec::new();
    let mut mode = strategy.initial_mode;
    let mut next = 0usize;
    let mut total = 0.0f64;
    let mut pay = |mode: &mut usize, s: usize, total: &mut f64| -> Result<()> {
        let (eval_t, left) = match spots[s] {
            SwitchSpot::Node(j) => (paths.time(j), j),
            SwitchSpot::Inside { tau, left } => (tau, left),
        };
        let to = strategy.switches[s].1;
        problem.time_state_args(eval_t, paths.state(path, left), &mut cost_args);
        *total -= problem.switch_cost_expr(*mode, to).eval(&cost_args)?;
        *mode = to;
        Ok(())
    };
    for n in 0..n_steps {
        while next < spots.len() && applies(spots[next], n) {
            pay(&mut mode, next, &mut total)?;
            next += 1;
        }
        problem.driver_args(paths.time(n), paths.state(path, n), &y, &z, 0.0, &mut args);
        total += dt * problem.driver_expr(mode).eval(&args)?;
    }
    while next < spots.len() {
        pay(&mut mode, next, &mut total)?;
        next += 1;
    }
    total += problem.terminal_expr(mode).eval(paths.state(path, n_steps))?;
    Ok(total)
}

/// Errors out unless the diffusion is (sampled) zero everywhere and the
/// jump part is inert (zero total mass or zero shift at every atom).
fn require_deterministic(problem: &SwitchingProblem) -> Result<()> {
    let k = problem.state_dim();
    let per_axis = if k > 4 { 3 } else { 5 };
    let mut lattice: Vec<Vec<f64>> = vec![Vec::new()];
    for c in 0..k {
        let (lo, hi) = problem.bounding_box()[c];
        let mut next = Vec::new();
        for base in &lattice {
            for i in 0..per_axis {
                let mut x = base.clone();
                x.push(lo + (hi - lo) * i as f64 / (per_axis - 1) as f64);
                next.push(x);
            }
        }
        lattice = next;
    }
    let mut args = Vec::new();
    for &t in &[0.0, 0.5 * problem.horizon(), problem.horizon()] {
        for x in &lattice {
            problem.time_state_args(t, x, &mut args);
            for c in 0..k {
                for dd in 0..problem.noise_dim() {
                    let v = problem.diffusion_expr(c, dd).eval(&args)?;
                    if v.abs() > 1e-12 {
                        return Err(Error::NotDeterministic {
                            detail: format!(
                                "diffusion entry ({c}, {dd}) is {v} at t = {t}, x = {x:?}"
                            ),
                        });
                    }
                }
            }
        }
    }
    if problem.levy().total_mass() > 0.0 {
        let mut mark_args = Vec::new();
        for atom in problem.levy().atoms() {
            for x in &lattice {
                problem.state_mark_args(x, &atom.mark, &mut mark_args);
                for c in 0..k {
                    let v = problem.jump_shift_expr(c).eval(&mark_args)?;
                    if v.abs() > 1e-12 {
                        return Err(Error::NotDeterministic {
                            detail: format!(
                                "jump shift coordinate {c} is {v} at x = {x:?}, mark {:?}",
                                atom.mark
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// True when the diffusion and jump parts are (sampled) inert, so the
/// dynamic-programming oracle applies; false when the state is genuinely
/// random and values must be estimated from simulated paths.
pub fn has_deterministic_state(problem: &SwitchingProblem) -> Result<bool> {
    match require_deterministic(problem) {
        Ok(()) => Ok(true),
        Err(Error::NotDeterministic { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// The forward-Euler state path of a deterministic problem, flat
/// `(n_steps + 1) * k`.
fn forward_path(
    problem: &SwitchingProblem,
    start_time: f64,
    x0: &[f64],
    n_steps: usize,
) -> Result<Vec<f64>> {
    let k = problem.state_dim();
    let span = problem.horizon() - start_time;
    let dt = span / n_steps as f64;
    let mut states = vec![0.0; (n_steps + 1) * k];
    states[..k].copy_from_slice(x0);
    let mut args = Vec::new();
    for n in 0..n_steps {
        let t = start_time + span * n as f64 / n_steps as f64;
        let (left, right) = states[n * k..].split_at_mut(k);
        problem.time_state_args(t, &left[..k], &mut args);
        for c in 0..k {
            right[c] = left[c] + dt * problem.drift_expr(c).eval(&args)?;
        }
    }
    Ok(states)
}

fn check_start(problem: &SwitchingProblem, start_time: f64, x0: &[f64], n_steps: usize) -> Result<()> {
    if x0.len() != problem.state_dim() {
        return Err(Error::Invalid(format!(
            "starting state has {} coordinates, problem has {}",
            x0.len(),
            problem.state_dim()
        )));
    }
    if !(start_time >= 0.0 && start_time < problem.horizon()) {
        return Err(Error::Invalid(format!(
            "start time {start_time} is outside [0, {})",
            problem.horizon()
        )));
    }
    if n_steps == 0 {
        return Err(Error::Invalid("need at least one step".into()));
    }
    Ok(())
}

/// Exact dynamic programming along the deterministic forward path: the
/// switching value per starting mode at `(start_time, x0)`.
///
/// Requires zero diffusion and an inert jump part (checked by sampling),
/// because then the gradient and jump slots of the drivers vanish
/// identically and the state is a single known path. The mode-value slots
/// are fed with the next level's values, matching the grid scheme.
pub fn dp_switching_value_deterministic(
    problem: &SwitchingProblem,
    start_time: f64,
    x0: &[f64],
    n_steps: usize,
) -> Result<Vec<f64>> {
    check_start(problem, start_time, x0, n_steps)?;
    require_deterministic(problem)?;
    let states = forward_path(problem, start_time, x0, n_steps)?;
    let (m, k) = (problem.modes(), problem.state_dim());
    let span = problem.horizon() - start_time;
    let dt = span / n_steps as f64;

    let mut values = vec![0.0; m];
    let mut term_args = Vec::new();
    let terminal = &states[n_steps * k..];
    for (i, v) in values.iter_mut().enumerate() {
        term_args.clear();
        term_args.extend_from_slice(terminal);
        *v = problem.terminal_expr(i).eval(&term_args)? + 0.0;
    }

    let z = vec![0.0; problem.noise_dim()];
    let mut args = Vec::new();
    let mut cost_args = Vec::new();
    let mut costs = vec![0.0; m * m];
    let mut cand = vec![0.0; m];
    for n in (0..n_steps).rev() {
        let t = start_time + span * n as f64 / n_steps as f64;
        let x = &states[n * k..(n + 1) * k];
        for i in 0..m {
            problem.driver_args(t, x, &values, &z, 0.0, &mut args);
            cand[i] = values[i] + dt * problem.driver_expr(i).eval(&args)?;
        }
        problem.time_state_args(t, x, &mut cost_args);
        for i in 0..m {
            for j in 0..m {
                costs[i * m + j] =
                    if i == j { 0.0 } else { problem.switch_cost_expr(i, j).eval(&cost_args)? };
            }
        }
        let scale = cand.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        project_modes(&mut cand, &costs, m + 3, 1e-12 * (1.0 + scale))
            .ok_or(Error::SweepDivergence { level: n, sweeps: m + 3 })?;
        values.copy_from_slice(&cand);
    }
    Ok(values)
}

fn binomial(n: u64, r: u64) -> f64 {
    (0..r).fold(1.0f64, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Estimated number of strategies with at most `max_switches` switches on
/// `n_times` allowed switch times and `m` modes.
fn strategy_count(n_times: usize, m: usize, max_switches: usize) -> f64 {
    let mut total = 0.0;
    for r in 0..=max_switches as u64 {
        // Non-decreasing time sequences of length r (multi-hop allowed)
        // times the mode choices.
        total += binomial(n_times as u64 - 1 + r, r) * ((m - 1) as f64).powi(r as i32);
    }
    total
}

struct EnumerationTables {
    n_steps: usize,
    m: usize,
    dt: f64,
    /// `driver[n * m + i]` = f_i(t_n, X_n).
    driver: Vec<f64>,
    /// `costs[n][i * m + j]` = g_ij(t_n, X_n).
    costs: Vec<Vec<f64>>,
    /// `terminal[i]` = h_i(X_N).
    terminal: Vec<f64>,
}

fn enumerate_from(
    tables: &EnumerationTables,
    n: usize,
    mode: usize,
    acc: f64,
    switches_left: usize,
    best: &mut f64,
) {
    if n == tables.n_steps {
        let v = acc + tables.terminal[mode];
        if v > *best {
            *best = v;
        }
        return;
    }
    enumerate_from(
        tables,
        n + 1,
        mode,
        acc + tables.dt * tables.driver[n * tables.m + mode],
        switches_left,
        best,
    );
    if switches_left > 0 {
        for j in 0..tables.m {
            if j != mode {
                enumerate_from(
                    tables,
                    n,
                    j,
                    acc - tables.costs[n][mode * tables.m + j],
                    switches_left - 1,
                    best,
                );
            }
        }
    }
}

/// Brute force over every switching strategy (switches at path lattice
/// times before the horizon, at most `max_switches` of them, multi-hops
/// allowed) on the deterministic forward path. Returns the best payoff per
/// starting mode. Shares only the forward path with the dynamic program;
/// the optimization itself is an explicit search.
pub fn enumerate_strategies_value(
    problem: &SwitchingProblem,
    start_time: f64,
    x0: &[f64],
    n_steps: usize,
    max_switches: usize,
) -> Result<Vec<f64>> {
    check_start(problem, start_time, x0, n_steps)?;
    require_deterministic(problem)?;
    require_driver_slots_below(problem, 1 + problem.state_dim())?;
    let m = problem.modes();
    let estimate = strategy_count(n_steps, m, max_switches);
    if estimate > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { estimate, limit: ENUMERATION_LIMIT });
    }

    let states = forward_path(problem, start_time, x0, n_steps)?;
    let k = problem.state_dim();
    let span = problem.horizon() - start_time;
    let dt = span / n_steps as f64;
    let y = vec![0.0; m];
    let z = vec![0.0; problem.noise_dim()];
    let mut args = Vec::new();
    let mut cost_args = Vec::new();
    let mut driver = vec![0.0; n_steps * m];
    let mut costs = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        let t = start_time + span * n as f64 / n_steps as f64;
        let x = &states[n * k..(n + 1) * k];
        problem.driver_args(t, x, &y, &z, 0.0, &mut args);
        for i in 0..m {
            driver[n * m + i] = problem.driver_expr(i).eval(&args)?;
        }
        problem.time_state_args(t, x, &mut cost_args);
        let mut table = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                table[i * m + j] =
                    if i == j { 0.0 } else { problem.switch_cost_expr(i, j).eval(&cost_args)? };
            }
        }
        costs.push(table);
    }
    let mut terminal = vec![0.0; m];
    let term_x = states[n_steps * k..].to_vec();
    for (i, v) in terminal.iter_mut().enumerate() {
        *v = problem.terminal_expr(i).eval(&term_x)?;
    }

    let tables = EnumerationTables { n_steps, m, dt, driver, costs, terminal };
    let mut out = Vec::with_capacity(m);
    for mode in 0..m {
        let mut best = f64::NEG_INFINITY;
        enumerate_from(&tables, 0, mode, 0.0, max_switches, &mut best);
        out.push(best);
    }
    Ok(out)
}

/// A regression Monte-Carlo value estimate with its bootstrap error bars.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionValue {
    /// Estimated value per starting mode at the bundle's starting point.
    pub values: Vec<f64>,
    /// Bootstrap standard error per mode (200 resamples of the paths).
    pub stderr: Vec<f64>,
    /// Number of basis functions used per regression.
    pub basis_dim: usize,
}

/// All monomial exponent vectors of total degree at most `degree`.
fn multi_indices(k: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(c: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if c == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[c] = v;
            rec(c + 1, left - v, cur, out);
        }
        cur[c] = 0;
    }
    let mut out = Vec::new();
    rec(0, degree, &mut vec![0u32; k], &mut out);
    out
}

const BOOTSTRAP_RESAMPLES: usize = 200;

/// Regression Monte-Carlo (least-squares dynamic programming) value of the
/// switching problem on a simulated path bundle.
///
/// At each backward step the continuation value of every mode is projected
/// onto standardized total-degree monomials of the state by least squares
/// (normal equations, eigenvalue-checked), the driver is added, and the
/// switching constraints are applied path by path. Cross-sections whose
/// states all coincide fall back to the plain mean, so a degenerate bundle
/// (zero diffusion, no jumps) reproduces exact dynamic programming.
///
/// Drivers may use time, state, and the mode-value slots (fed with the
/// regressed continuations); gradient or jump slots cannot be estimated
/// from paths and are rejected.
pub fn regression_switching_value(
    problem: &SwitchingProblem,
    paths: &PathSet,
    basis_degree: u32,
) -> Result<RegressionValue> {
    let k = problem.state_dim();
    let m = problem.modes();
    if paths.state_dim() != k {
        return Err(Error::Invalid("path bundle and problem state dimensions differ".into()));
    }
    require_driver_slots_below(problem, 1 + k + m)?;
    let indices = multi_indices(k, basis_degree);
    let dim = indices.len();
    let n_paths = paths.n_paths();
    if n_paths < 10 * dim {
        return Err(Error::Invalid(format!(
            "{n_paths} paths cannot support {dim} basis functions; need at least {}",
            10 * dim
        )));
    }
    let n_steps = paths.n_steps();
    let dt = paths.dt();

    // Terminal values per (path, mode).
    let mut values = vec![0.0; n_paths * m];
    {
        let results: Vec<Vec<f64>> = (0..n_paths)
            .into_par_iter()
            .map(|p| -> Result<Vec<f64>> {
                let x = paths.state(p, n_steps).to_vec();
                (0..m).map(|i| problem.terminal_expr(i).eval(&x).map(|v| v + 0.0)).collect()
            })
            .collect::<Result<_>>()?;
        for (p, row) in results.into_iter().enumerate() {
            values[p * m..(p + 1) * m].copy_from_slice(&row);
        }
    }

    let mut final_values: Option<Vec<f64>> = None;
    let mut pathwise_next: Option<Vec<f64>> = None;
    for n in (0..n_steps).rev() {
        let t = paths.time(n);
        // Cross-sectional standardization of the step's states.
        let mut mean = vec![0.0; k];
        let mut lo = vec![f64::INFINITY; k];
        let mut hi = vec![f64::NEG_INFINITY; k];
        for p in 0..n_paths {
            let x = paths.state(p, n);
            for c in 0..k {
                mean[c] += x[c];
                lo[c] = lo[c].min(x[c]);
                hi[c] = hi[c].max(x[c]);
            }
        }
        for v in mean.iter_mut() {
            *v /= n_paths as f64;
        }
        let degenerate =
            (0..k).all(|c| hi[c] - lo[c] <= 1e-13 * (1.0 + mean[c].abs()));

        // Continuation estimates per (path, mode).
        let mut continuation = vec![0.0; n_paths * m];
        if degenerate {
            for i in 0..m {
                let avg =
                    (0..n_paths).map(|p| values[p * m + i]).sum::<f64>() / n_paths as f64;
                for p in 0..n_paths {
                    continuation[p * m + i] = avg;
                }
            }
        } else {
            let mut sd = vec![0.0; k];
            for p in 0..n_paths {
                let x = paths.state(p, n);
                for c in 0..k {
                    sd[c] += (x[c] - mean[c]) * (x[c] - mean[c]);
                }
            }
            for v in sd.iter_mut() {
                *v = (*v / n_paths as f64).sqrt();
                if *v < 1e-12 {
                    *v = 1.0;
                }
            }
            let features = DMatrix::from_fn(n_paths, dim, |p, j| {
                let x = paths.state(p, n);
                indices[j]
                    .iter()
                    .enumerate()
                    .map(|(c, &a)| ((x[c] - mean[c]) / sd[c]).powi(a as i32))
                    .product::<f64>()
            });
            let gram: DMatrix<f64> = features.tr_mul(&features);
            let eig = SymmetricEigen::new(gram);
            let lam_max = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
            let lam_min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &l| a.min(l.abs()));
            if lam_min < 1e-12 * lam_max {
                return Err(Error::RankDeficient { step: n });
            }
            for i in 0..m {
                let target = DVector::from_fn(n_paths, |p, _| values[p * m + i]);
                let rhs: DVector<f64> = features.tr_mul(&target);
                let mut theta = DVector::zeros(dim);
                for j in 0..dim {
                    let q = eig.eigenvectors.column(j);
                    theta.axpy(q.dot(&rhs) / eig.eigenvalues[j], &q, 1.0);
                }
                let predicted: DVector<f64> = &features * &theta;
                for p in 0..n_paths {
                    continuation[p * m + i] = predicted[p];
                }
            }
        }

        if n == 0 {
            // Save the step-1 pathwise values for the bootstrap before the
            // final aggregation overwrites them.
            pathwise_next = Some(values.clone());
        }

        // Candidate values and switching projection, path by path.
        let continuation_ref = &continuation;
        values
            .par_chunks_mut(m)
            .enumerate()
            .try_for_each(|(p, row)| -> Result<()> {
                let x = paths.state(p, n);
                let chat = &continuation_ref[p * m..(p + 1) * m];
                let z = vec![0.0; problem.noise_dim()];
                let mut args = Vec::new();
                let mut cand = vec![0.0; m];
                for i in 0..m {
                    problem.driver_args(t, x, chat, &z, 0.0, &mut args);
                    cand[i] = chat[i] + dt * problem.driver_expr(i).eval(&args)?;
                }
                let mut cost_args = Vec::new();
                problem.time_state_args(t, x, &mut cost_args);
                let mut costs = vec![0.0; m * m];
                for i in 0..m {
                    for j in 0..m {
                        costs[i * m + j] = if i == j {
                            0.0
                        } else {
                            problem.switch_cost_expr(i, j).eval(&cost_args)?
                        };
                    }
                }
                let scale = cand.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                project_modes(&mut cand, &costs, m + 3, 1e-12 * (1.0 + scale))
                    .ok_or(Error::SweepDivergence { level: n, sweeps: m + 3 })?;
                row.copy_from_slice(&cand);
                Ok(())
            })?;
        if n == 0 {
            final_values = Some(values[..m].to_vec());
        }
    }

    let final_values = final_values.expect("at least one backward step");
    let pathwise = pathwise_next.expect("at least one backward step");

    // Bootstrap the path aggregation at the first step: resample paths,
    // re-average the step-1 values, redo the final candidate/projection.
    let x0 = paths.state(0, 0).to_vec();
    let t0 = paths.start_time();
    let mut cost_args = Vec::new();
    problem.time_state_args(t0, &x0, &mut cost_args);
    let mut costs0 = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            costs0[i * m + j] =
                if i == j { 0.0 } else { problem.switch_cost_expr(i, j).eval(&cost_args)? };
        }
    }
    let boot_seed = paths.seed() ^ 0xB0075;
    let replicates: Vec<Vec<f64>> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| -> Result<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(boot_seed);
            rng.set_stream(b as u64 + 1);
            let mut means = vec![0.0; m];
            for _ in 0..n_paths {
                let p = rng.random_range(0..n_paths);
                for i in 0..m {
                    means[i] += pathwise[p * m + i];
                }
            }
            for v in means.iter_mut() {
                *v /= n_paths as f64;
            }
            let z = vec![0.0; problem.noise_dim()];
            let mut args = Vec::new();
            let mut cand = vec![0.0; m];
            for i in 0..m {
                problem.driver_args(t0, &x0, &means, &z, 0.0, &mut args);
                cand[i] = means[i] + dt * problem.driver_expr(i).eval(&args)?;
            }
            let scale = cand.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            project_modes(&mut cand, &costs0, m + 3, 1e-12 * (1.0 + scale))
                .ok_or(Error::SweepDivergence { level: 0, sweeps: m + 3 })?;
            Ok(cand)
        })
        .collect::<Result<_>>()?;
    let mut stderr = vec![0.0; m];
    for (i, s) in stderr.iter_mut().enumerate() {
        let mean =
            replicates.iter().map(|r| r[i]).sum::<f64>() / BOOTSTRAP_RESAMPLES as f64;
        let var = replicates.iter().map(|r| (r[i] - mean) * (r[i] - mean)).sum::<f64>()
            / (BOOTSTRAP_RESAMPLES - 1) as f64;
        *s = var.sqrt();
    }

    Ok(RegressionValue { values: final_values, stderr, basis_dim: dim })
}

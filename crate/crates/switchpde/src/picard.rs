//! Fixed-point iteration over the jump slot.
//!
//! The full system couples every mode's value into every driver through the
//! non-local functional `q_i = B_i u_i`. We decouple it: start from
//! `u^(0) = 0`, and at stage `n` solve the obstacle system with the jump
//! slot frozen to `B_i u^(n-1)`. Each stage is one [`solve_frozen`] pass;
//! the map from one stage to the next is a contraction in the weighted
//! supremum norm with weight `phi(x) = (1 + |x|^2)^(-p)` provided the
//! horizon (or the iteration window) is short enough relative to the
//! driver's Lipschitz constant — [`contraction_window`] gives the safe
//! window length for a given constant.

use crate::grid::{Grid, ValueField};
use crate::operators::apply_b;
use crate::problem::validate::estimate_lipschitz;
use crate::problem::SwitchingProblem;
use crate::solver::{solve_frozen, FrozenJumpField, FrozenSolution};
use crate::{Error, Result};

/// Polynomial decay weight `phi(x) = (1 + |x|^2)^(-p)` used for the
/// convergence norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    exponent: u32,
}

impl WeightSpec {
    /// A weight with decay exponent `p >= 1`.
    pub fn new(exponent: u32) -> Result<Self> {
        if exponent < 1 {
            return Err(Error::Invalid("weight exponent must be at least 1".into()));
        }
        Ok(Self { exponent })
    }

    /// The decay exponent `p`.
    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    /// `phi(x) = (1 + |x|^2)^(-p)`.
    pub fn phi(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        (1.0 + r2).powi(-(self.exponent as i32))
    }
}

/// Termination status of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PicardStatus {
    /// The weighted sup distance between stages dropped below the
    /// tolerance.
    Converged,
    /// The iteration cap was reached first.
    MaxIterations,
    /// The stage distance blew up instead of shrinking.
    Diverged,
}

/// Convergence record of a fixed-point run.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// `D_n` = weighted sup distance between stages `n` and `n-1`,
    /// for `n = 1, 2, ...`.
    pub sup_diffs: Vec<f64>,
    /// Consecutive ratios `D_{n+1} / D_n` (skipping zero denominators).
    pub ratios: Vec<f64>,
    /// Sampled Lipschitz estimate of the driver in `(y, z, q)`.
    pub lipschitz_estimate: f64,
    /// Safe window length for that estimate, if it is positive.
    pub window: Option<f64>,
    /// How the run ended.
    pub status: PicardStatus,
    /// Number of stages performed.
    pub iterations: usize,
}

/// A converged (or stopped) fixed-point solution.
#[derive(Debug, Clone)]
pub struct PicardSolution {
    pub solution: FrozenSolution,
    pub frozen: FrozenJumpField,
    pub report: ConvergenceReport,
}

/// Applies the per-mode non-local functional to every level of `field`,
/// producing the jump slot for the next stage. Also returns the total
/// number of clamped jump destinations.
pub fn jump_field_from_value(
    problem: &SwitchingProblem,
    field: &ValueField,
) -> Result<(FrozenJumpField, u64)> {
    let grid = field.grid();
    let m = problem.modes();
    let mut out = FrozenJumpField::zeros(grid, m);
    let mut clamped = 0u64;
    for mode in 0..m {
        for level in 0..grid.n_levels() {
            let nl = apply_b(problem, field, mode, level)?;
            clamped += nl.clamped;
            out.level_mut(mode, level).copy_from_slice(&nl.values);
        }
    }
    Ok((out, clamped))
}

/// Weighted sup distance `max |a - b| * phi(x)` over all modes, levels,
/// and nodes. The shapes must match.
pub fn weighted_sup_diff(a: &ValueField, b: &ValueField, weight: &WeightSpec) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Invalid("value fields have different shapes".into()));
    }
    let grid = a.grid();
    let mut x = vec![0.0; grid.dim()];
    let mut phi = vec![0.0; grid.n_nodes()];
    for (node, w) in phi.iter_mut().enumerate() {
        grid.fill_coords(node, &mut x);
        *w = weight.phi(&x);
    }
    let mut worst = 0.0f64;
    for mode in 0..a.modes() {
        for level in 0..grid.n_levels() {
            let (la, lb) = (a.level(mode, level), b.level(mode, level));
            for node in 0..grid.n_nodes() {
                worst = worst.max((la[node] - lb[node]).abs() * phi[node]);
            }
        }
    }
    Ok(worst)
}

/// Safe iteration window for a driver with Lipschitz constant `c`:
/// the length `eta` with `(16 / c) * (exp(c * eta) - 1) = 1/8`, i.e.
/// `eta = ln(1 + c/128) / c`. Stages on horizons at most `eta` contract
/// with factor 1/8 in the weighted sup norm.
pub fn contraction_window(c: f64) -> Result<f64> {
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::Invalid(format!(
            "contraction window needs a positive finite constant, got {c}"
        )));
    }
    Ok((1.0 + c / 128.0).ln() / c)
}

/// Runs the fixed-point iteration from `u^(0) = 0` until the weighted sup
/// distance between stages drops below `tol`, the stage count reaches
/// `max_iter`, or the distance blows up.
pub fn picard_solve(
    problem: &SwitchingProblem,
    grid: &Grid,
    weight: &WeightSpec,
    tol: f64,
    max_iter: usize,
) -> Result<PicardSolution> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance must be positive and finite, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Invalid("at least one iteration is required".into()));
    }
    let c_hat = estimate_lipschitz(problem, 64, 0x5EED)?;
    let window = (c_hat > 0.0).then(|| contraction_window(c_hat).unwrap());

    let mut previous = ValueField::zeros(grid, problem.modes())?;
    let mut frozen = FrozenJumpField::zeros(grid, problem.modes());
    let mut sup_diffs = Vec::new();
    let mut current: Option<(FrozenSolution, FrozenJumpField)> = None;
    let mut status = PicardStatus::MaxIterations;
    for n in 1..=max_iter {
        let sol = solve_frozen(problem, grid, &frozen)?;
        let d_n = weighted_sup_diff(&sol.value, &previous, weight)?;
        sup_diffs.push(d_n);
        previous = sol.value.clone();
        let (next_frozen, _) = jump_field_from_value(problem, &sol.value)?;
        current = Some((sol, frozen));
        frozen = next_frozen;
        if d_n <= tol {
            status = PicardStatus::Converged;
            break;
        }
        if n > 1 && d_n > 1e6 * (1.0 + sup_diffs[0]) {
            status = PicardStatus::Diverged;
            break;
        }
    }
    let (solution, frozen_used) = current.expect("at least one stage ran");
    let ratios = sup_diffs
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let report = ConvergenceReport {
        iterations: sup_diffs.len(),
        sup_diffs,
        ratios,
        lipschitz_estimate: c_hat,
        window,
        status,
    };
    Ok(PicardSolution { solution, frozen: frozen_used, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, FiniteLevyMeasure};
    use crate::problem::ProblemBuilder;

    #[test]
    fn weight_decays_polynomially() {
        let w = WeightSpec::new(2).unwrap();
        assert_eq!(w.phi(&[0.0]), 1.0);
        assert!((w.phi(&[1.0]) - 0.25).abs() < 1e-15);
        assert!((w.phi(&[1.0, 1.0]) - 1.0 / 9.0).abs() < 1e-15);
        assert!(WeightSpec::new(0).is_err());
    }

    #[test]
    fn window_solves_the_defining_identity() {
        for &c in &[0.1, 1.0, 10.0, 128.0] {
            let eta = contraction_window(c).unwrap();
            let lhs = 16.0 / c * ((c * eta).exp() - 1.0);
            assert!((lhs - 0.125).abs() < 1e-12, "c = {c}: identity residual {}", lhs - 0.125);
        }
        // Spot values.
        assert!((contraction_window(1.0).unwrap() - 7.782140442e-3).abs() < 1e-11);
        assert!((contraction_window(128.0).unwrap() - std::f64::consts::LN_2 / 128.0).abs() < 1e-15);
        assert!(contraction_window(0.0).is_err());
        assert!(contraction_window(-2.0).is_err());
        assert!(contraction_window(f64::NAN).is_err());
    }

    #[test]
    fn window_shrinks_as_the_constant_grows() {
        let mut last = f64::INFINITY;
        for &c in &[0.01, 0.1, 1.0, 10.0, 100.0] {
            let eta = contraction_window(c).unwrap();
            assert!(eta < last);
            last = eta;
        }
    }

    #[test]
    fn uncoupled_problem_converges_in_two_stages() {
        // No jump weights: the slot never feeds back, so stage 2 already
        // reproduces stage 1 and D_2 = 0.
        let p = ProblemBuilder::new(2, 1, 1, 1, 1.0)
            .driver(["x1", "t"])
            .terminal(["sin(x1)", "0"])
            .cost_default("0.5")
            .diffusion(["0.2"])
            .bounding_box(&[(-1.0, 1.0)])
            .build()
            .unwrap();
        let grid = Grid::new(&[(-1.0, 1.0)], &[11], 16, 1.0).unwrap();
        let w = WeightSpec::new(2).unwrap();
        let sol = picard_solve(&p, &grid, &w, 1e-10, 10).unwrap();
        assert_eq!(sol.report.status, PicardStatus::Converged);
        assert_eq!(sol.report.iterations, 2);
        assert_eq!(sol.report.sup_diffs[1], 0.0);
    }

    #[test]
    fn coupled_jump_slot_contracts() {
        let levy = FiniteLevyMeasure::new(
            1,
            vec![Atom { mark: vec![0.5], weight: 1.0 }],
        )
        .unwrap();
        let p = ProblemBuilder::new(2, 1, 1, 1, 0.5)
            .driver(["0.5*q + 1", "0.5*q - 1"])
            .jump_shift(["e1"])
            .jump_weight(["1", "1"])
            .levy(levy)
            .terminal(["sin(x1)", "cos(x1)"])
            .cost_default("0.6")
            .diffusion(["0.3"])
            .bounding_box(&[(-4.0, 4.0)])
            .build()
            .unwrap();
        let grid = Grid::new(&[(-4.0, 4.0)], &[41], 32, 0.5).unwrap();
        let w = WeightSpec::new(2).unwrap();
        let sol = picard_solve(&p, &grid, &w, 1e-9, 40).unwrap();
        assert_eq!(sol.report.status, PicardStatus::Converged);
        // Geometric-looking decay after the first stage.
        for w2 in sol.report.sup_diffs[1..].windows(2) {
            assert!(w2[1] <= w2[0] + 1e-15, "stage distances should not grow: {w2:?}");
        }
        // The converged field reproduces its own jump slot.
        let (refreshed, _) = jump_field_from_value(&p, &sol.solution.value).unwrap();
        let re_solved = solve_frozen(&p, &grid, &refreshed).unwrap();
        let residual = weighted_sup_diff(&re_solved.value, &sol.solution.value, &w).unwrap();
        assert!(residual <= 1e-8, "fixed-point residual {residual}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let g1 = Grid::new(&[(-1.0, 1.0)], &[11], 4, 1.0).unwrap();
        let g2 = Grid::new(&[(-1.0, 1.0)], &[13], 4, 1.0).unwrap();
        let a = ValueField::zeros(&g1, 2).unwrap();
        let b = ValueField::zeros(&g2, 2).unwrap();
        let w = WeightSpec::new(1).unwrap();
        assert!(weighted_sup_diff(&a, &b, &w).is_err());
    }

    #[test]
    fn bad_arguments_are_rejected() {
        let p = ProblemBuilder::new(2, 1, 1, 1, 1.0)
            .cost_default("1")
            .bounding_box(&[(-1.0, 1.0)])
            .build()
            .unwrap();
        let grid = Grid::new(&[(-1.0, 1.0)], &[11], 4, 1.0).unwrap();
        let w = WeightSpec::new(2).unwrap();
        assert!(picard_solve(&p, &grid, &w, 0.0, 5).is_err());
        assert!(picard_solve(&p, &grid, &w, 1e-8, 0).is_err());
    }
}

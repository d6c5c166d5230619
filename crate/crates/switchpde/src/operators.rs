//! Finite-difference discretizations of the local and non-local operators.
//!
//! [`apply_local`] discretizes the drift/diffusion generator
//!
//! ```text
//! L u = b . grad u + 1/2 Tr[sigma sigma' D2 u]
//! ```
//!
//! with first-order upwind differences for the drift (forward when the drift
//! component is non-negative, backward otherwise), compact centered second
//! differences on the diagonal of the Hessian, and products of first
//! difference stencils for the mixed terms (the classical four-point cross
//! at interior nodes). At boundary nodes every stencil falls back to its
//! one-sided variant, which keeps first differences exact on affine
//! functions and second differences exact on quadratics.
//!
//! [`apply_k`] and [`apply_b`] discretize the jump integrals
//!
//! ```text
//! K u (x) = sum_atoms w * [u(x + beta) - u(x) - beta . grad u(x)]
//! B u (x) = sum_atoms w * gamma(x, e) * [u(x + beta) - u(x)]
//! ```
//!
//! where off-grid values are read through clamped multilinear interpolation;
//! both report how many (node, atom) destinations were clamped back into the
//! box. All three operators are linear in the field, and coefficients are
//! evaluated at the time of the level they are applied to.

use crate::grid::{Grid, ValueField};
use crate::problem::SwitchingProblem;
use crate::Result;

/// Result of a non-local operator on one level: one value per node plus the
/// number of clamped jump destinations.
#[derive(Debug, Clone)]
pub struct NonLocal {
    pub values: Vec<f64>,
    pub clamped: u64,
}

/// First-difference stencil along axis `d` at `node`: two `(node, weight)`
/// pairs. Centered at interior nodes, one-sided on the boundary; exact on
/// affine functions everywhere.
fn first_diff(grid: &Grid, node: usize, d: usize) -> [(usize, f64); 2] {
    let h = grid.spacing(d);
    match (grid.neighbor(node, d, -1), grid.neighbor(node, d, 1)) {
        (Some(lo), Some(hi)) => [(hi, 0.5 / h), (lo, -0.5 / h)],
        (None, Some(hi)) => [(hi, 1.0 / h), (node, -1.0 / h)],
        (Some(lo), None) => [(node, 1.0 / h), (lo, -1.0 / h)],
        (None, None) => unreachable!("grids have at least 3 nodes per axis"),
    }
}

/// Second difference along axis `d` at `node`; shifted one-sided at the
/// boundary, exact on quadratics everywhere.
fn second_diff(grid: &Grid, slice: &[f64], node: usize, d: usize) -> f64 {
    let h2 = grid.spacing(d) * grid.spacing(d);
    match (grid.neighbor(node, d, -1), grid.neighbor(node, d, 1)) {
        (Some(lo), Some(hi)) => (slice[hi] - 2.0 * slice[node] + slice[lo]) / h2,
        (None, Some(hi)) => {
            let hi2 = grid.neighbor(hi, d, 1).expect("at least 3 nodes");
            (slice[node] - 2.0 * slice[hi] + slice[hi2]) / h2
        }
        (Some(lo), None) => {
            let lo2 = grid.neighbor(lo, d, -1).expect("at least 3 nodes");
            (slice[node] - 2.0 * slice[lo] + slice[lo2]) / h2
        }
        (None, None) => unreachable!("grids have at least 3 nodes per axis"),
    }
}

/// Writes the centered (one-sided at the boundary) gradient of `slice` at
/// `node` into `out`.
pub fn gradient_at(grid: &Grid, slice: &[f64], node: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), grid.dim());
    for d in 0..grid.dim() {
        let stencil = first_diff(grid, node, d);
        out[d] = stencil[0].1 * slice[stencil[0].0] + stencil[1].1 * slice[stencil[1].0];
    }
}

/// Applies the discretized drift/diffusion generator to `field[mode]` at
/// `level`, evaluating the coefficients at that level's time.
pub fn apply_local(
    problem: &SwitchingProblem,
    field: &ValueField,
    mode: usize,
    level: usize,
) -> Result<Vec<f64>> {
    let grid = field.grid();
    let k = problem.state_dim();
    let d = problem.noise_dim();
    let t = grid.time(level);
    let slice = field.level(mode, level);
    let mut out = vec![0.0; grid.n_nodes()];
    let mut x = vec![0.0; k];
    let mut args = Vec::with_capacity(1 + k);
    let mut b = vec![0.0; k];
    let mut sigma = vec![0.0; k * d];
    for node in 0..grid.n_nodes() {
        grid.fill_coords(node, &mut x);
        problem.time_state_args(t, &x, &mut args);
        for c in 0..k {
            b[c] = problem.drift_expr(c).eval(&args)?;
        }
        for cd in 0..k * d {
            sigma[cd] = problem.diffusion_expr(cd / d, cd % d).eval(&args)?;
        }
        let mut acc = 0.0;
        for c in 0..k {
            // Upwind first difference: the direction follows the drift sign
            // but falls back to the available one-sided difference on the
            // boundary.
            let h = grid.spacing(c);
            let fwd = grid.neighbor(node, c, 1);
            let bwd = grid.neighbor(node, c, -1);
            let diff = if b[c] >= 0.0 {
                match fwd {
                    Some(f) => (slice[f] - slice[node]) / h,
                    None => (slice[node] - slice[bwd.expect("3+ nodes")]) / h,
                }
            } else {
                match bwd {
                    Some(bk) => (slice[node] - slice[bk]) / h,
                    None => (slice[fwd.expect("3+ nodes")] - slice[node]) / h,
                }
            };
            acc += b[c] * diff;

            // Diagonal diffusion: a_cc = sum_dd sigma[c][dd]^2.
            let mut a_cc = 0.0;
            for dd in 0..d {
                a_cc += sigma[c * d + dd] * sigma[c * d + dd];
            }
            if a_cc != 0.0 {
                acc += 0.5 * a_cc * second_diff(grid, slice, node, c);
            }

            // Mixed terms: a_cc2 appears twice in the symmetric Hessian sum,
            // cancelling the 1/2.
            for c2 in c + 1..k {
                let mut a_cc2 = 0.0;
                for dd in 0..d {
                    a_cc2 += sigma[c * d + dd] * sigma[c2 * d + dd];
                }
                if a_cc2 != 0.0 {
                    let outer = first_diff(grid, node, c);
                    let mut cross = 0.0;
                    for (n1, w1) in outer {
                        for (n2, w2) in first_diff(grid, n1, c2) {
                            cross += w1 * w2 * slice[n2];
                        }
                    }
                    acc += a_cc2 * cross;
                }
            }
        }
        out[node] = acc;
    }
    Ok(out)
}

/// Applies the compensated jump operator `K` to `field[mode]` at `level`.
pub fn apply_k(
    problem: &SwitchingProblem,
    field: &ValueField,
    mode: usize,
    level: usize,
) -> Result<NonLocal> {
    let grid = field.grid();
    let k = problem.state_dim();
    let slice = field.level(mode, level);
    let mut values = vec![0.0; grid.n_nodes()];
    let mut clamped = 0u64;
    if problem.levy().atoms().is_empty() {
        return Ok(NonLocal { values, clamped });
    }
    let mut x = vec![0.0; k];
    let mut grad = vec![0.0; k];
    let mut dest = vec![0.0; k];
    let mut args = Vec::with_capacity(k + problem.mark_dim());
    for node in 0..grid.n_nodes() {
        grid.fill_coords(node, &mut x);
        gradient_at(grid, slice, node, &mut grad);
        let here = slice[node];
        let mut acc = 0.0;
        for atom in problem.levy().atoms() {
            problem.state_mark_args(&x, &atom.mark, &mut args);
            let mut compensation = 0.0;
            for c in 0..k {
                let shift = problem.jump_shift_expr(c).eval(&args)?;
                dest[c] = x[c] + shift;
                compensation += shift * grad[c];
            }
            let (shifted, was_clamped) = grid.interpolate(slice, &dest);
            clamped += was_clamped as u64;
            acc += atom.weight * (shifted - here - compensation);
        }
        values[node] = acc;
    }
    Ok(NonLocal { values, clamped })
}

/// Applies the uncompensated, weighted jump operator `B` for `mode` to
/// `field[mode]` at `level`.
pub fn apply_b(
    problem: &SwitchingProblem,
    field: &ValueField,
    mode: usize,
    level: usize,
) -> Result<NonLocal> {
    let grid = field.grid();
    let k = problem.state_dim();
    let slice = field.level(mode, level);
    let mut values = vec![0.0; grid.n_nodes()];
    let mut clamped = 0u64;
    if problem.levy().atoms().is_empty() {
        return Ok(NonLocal { values, clamped });
    }
    let mut x = vec![0.0; k];
    let mut dest = vec![0.0; k];
    let mut args = Vec::with_capacity(k + problem.mark_dim());
    for node in 0..grid.n_nodes() {
        grid.fill_coords(node, &mut x);
        let here = slice[node];
        let mut acc = 0.0;
        for atom in problem.levy().atoms() {
            problem.state_mark_args(&x, &atom.mark, &mut args);
            let weight = problem.jump_weight_expr(mode).eval(&args)?;
            for c in 0..k {
                dest[c] = x[c] + problem.jump_shift_expr(c).eval(&args)?;
            }
            let (shifted, was_clamped) = grid.interpolate(slice, &dest);
            clamped += was_clamped as u64;
            acc += atom.weight * weight * (shifted - here);
        }
        values[node] = acc;
    }
    Ok(NonLocal { values, clamped })
}

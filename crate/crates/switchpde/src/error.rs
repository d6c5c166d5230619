//! Crate-wide error type.
//!
//! Everything fallible in the crate returns [`enum@Error`]; the CLI maps the
//! variants onto exit codes and human-readable diagnostics.

use thiserror::Error;

/// Errors produced while parsing expressions or problem files, validating
/// problem data, or running the solvers and oracles.
#[derive(Debug, Error)]
pub enum Error {
    /// The expression text could not be parsed. `offset` is the byte position
    /// of the first offending character.
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    /// The expression refers to a variable that is not legal in its slot
    /// (for example `y1` inside a terminal condition).
    #[error("undeclared variable `{name}` at byte {offset}")]
    UndeclaredVariable { name: String, offset: usize },

    /// Evaluation divided by zero.
    #[error("division by zero while evaluating `{context}`")]
    DivisionByZero { context: String },

    /// Evaluation took the square root of a negative number.
    #[error("square root of a negative number while evaluating `{context}`")]
    SqrtOfNegative { context: String },

    /// Evaluation produced NaN or an infinity (overflow, 0/0, ...).
    #[error("non-finite value while evaluating `{context}`")]
    NonFinite { context: String },

    /// A constructor or routine received structurally invalid input
    /// (dimension mismatch, non-positive weight, too few grid nodes, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The obstacle projection at one backward time level kept growing past
    /// its sweep budget. With non-negative switching costs and positive cycle
    /// costs the projection settles in at most one sweep per mode, so this
    /// almost always means a cost cycle with non-positive total cost.
    #[error(
        "obstacle projection did not settle at time level {level} after {sweeps} sweeps; \
         check the switching costs for cycles with non-positive total cost"
    )]
    SweepDivergence { level: usize, sweeps: usize },

    /// The least-squares system for the continuation value is singular.
    #[error("regression basis is rank deficient at step {step}; lower the degree or use richer paths")]
    RankDeficient { step: usize },

    /// Brute-force strategy enumeration would exceed its combinatorial guard.
    #[error("strategy enumeration needs about {estimate:.3e} combinations (limit {limit:.3e})")]
    EnumerationTooLarge { estimate: f64, limit: f64 },

    /// A pathwise payoff was requested for a driver that depends on more than
    /// the time and state variables.
    #[error("driver for mode {mode} depends on `{variable}`; pathwise payoffs need drivers in (t, x) only")]
    DriverNotStateOnly { mode: usize, variable: String },

    /// A deterministic-state oracle was requested for a problem whose
    /// diffusion or jump coefficients are not identically zero.
    #[error("dynamic-programming oracle needs a deterministic state: {detail}")]
    NotDeterministic { detail: String },

    /// A problem file failed to parse. `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    ProblemFile { path: String, line: usize, message: String },

    /// Passed through from the filesystem.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! Solvers for systems of integro-partial differential equations with
//! interconnected obstacles, the kind that price optimal multi-mode switching
//! decisions for a jump-diffusion state process.
//!
//! The value of running a system in mode `i` solves, backwards from a terminal
//! payoff, a variational inequality of the form
//!
//! ```text
//! min{ u_i - max_{j != i} (u_j - g_ij) ,
//!      -du_i/dt - L u_i - K u_i - f_i(t, x, u, grad-term, jump-term) } = 0
//! ```
//!
//! where `L` is the drift/diffusion generator, `K` a non-local operator built
//! from a finite jump measure, `g_ij` the cost of switching from mode `i` to
//! mode `j`, and the driver `f_i` may depend on every component of the
//! solution plus two derivative-like slots. The crate provides:
//!
//! * a small expression language ([`expr`]) so problems are data, not code;
//! * problem containers and validators ([`problem`]) for the structural
//!   conditions the solvers rely on (switching-cost cycle positivity,
//!   terminal-condition consistency, Lipschitz/growth estimates);
//! * finite-difference discretizations of the local and non-local operators
//!   ([`operators`]) on tensor grids ([`grid`]);
//! * a backward scheme for the obstacle system with the jump slot held fixed
//!   ([`solver`]) and the fixed-point iteration that refreshes the jump slot
//!   until the scheme stabilizes ([`picard`]);
//! * an independent Monte Carlo / dynamic-programming oracle ([`oracle`]) used
//!   to cross-check the grid solver on problems where a probabilistic
//!   representation is available;
//! * a command-line front end ([`cli`]) with a plain-text problem format.

pub mod cli;
pub mod error;
pub mod expr;
pub mod grid;
pub mod measure;
pub mod operators;
pub mod oracle;
pub mod picard;
pub mod problem;
pub mod solver;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

//! Batch front door: problem files in, deterministic artifacts out.
//!
//! A problem lives in a line-oriented text file with `[section]` headers
//! and `key = value` lines (`#` starts a comment anywhere):
//!
//! ```text
//! [dims]            # must come first: m modes, k states, d noises, l marks
//! m = 2
//! k = 1
//! d = 1
//! l = 1
//! T = 1.0
//! p = 2             # optional growth/weight exponent, default 2
//!
//! [levy]            # optional; one atom per row: e1 .. el weight
//! 0.5  1.0
//!
//! [coeffs]          # optional; anything omitted is 0
//! b1      = 0.1
//! sigma11 = 0.4     # row c, column d of the diffusion matrix
//! beta1   = e1      # jump shift, variables x1..xk, e1..el
//! gamma1  = 1       # per-mode jump weight, same variables
//!
//! [drivers]         # required: f1..fm over (t, x1..xk, y1..ym, z1..zd, q)
//! f1 = 0.5*q + 1
//! f2 = 0.5*q - 1
//!
//! [costs]           # g{i}{j} for i != j; g_default fills the gaps
//! g12 = 0.6
//! g_default = 0.6
//!
//! [terminal]        # required: h1..hm over (x1..xk)
//! h1 = sin(x1)
//! h2 = cos(x1)
//!
//! [box]             # required: one axis per state coordinate
//! x1 = -6 6
//! ```
//!
//! All indices in file keys are 1-based and single-digit, so every
//! dimension is capped at 9 in this format (the library itself has no such
//! cap). Mode and cycle numbers in reports use the same 1-based convention.
//!
//! Subcommands: `validate`, `solve`, `oracle`, `compare`, `report`. Every
//! artifact starts with the fully resolved configuration, contains no
//! timestamps, and is byte-identical across reruns with the same inputs.
//! Exit status: 0 on success, 1 when a domain check fails (validation
//! failure, missed tolerance, non-converged iteration — artifacts are
//! still written), 2 on usage, file, or evaluation errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::expr;
use crate::grid::Grid;
use crate::measure::{Atom, FiniteLevyMeasure};
use crate::oracle::{
    dp_switching_value_deterministic, has_deterministic_state, moment_check,
    regression_switching_value, simulate_paths,
};
use crate::picard::{picard_solve, PicardSolution, PicardStatus, WeightSpec};
use crate::problem::validate::{validate_all, CheckStatus};
use crate::problem::{
    driver_vars, state_mark_vars, state_vars, time_state_vars, ProblemBuilder, SwitchingProblem,
};
use crate::{Error, Result};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "SWITCHPDE_OUT";

/// Fallback output directory when neither `--out` nor the environment
/// variable is set.
pub const OUT_DIR_DEFAULT: &str = "switchpde-out";

/// Which subcommand to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Validate,
    Solve,
    Oracle,
    Compare,
    Report,
}

impl CommandKind {
    fn name(self) -> &'static str {
        match self {
            CommandKind::Validate => "validate",
            CommandKind::Solve => "solve",
            CommandKind::Oracle => "oracle",
            CommandKind::Compare => "compare",
            CommandKind::Report => "report",
        }
    }
}

/// Fully resolved run configuration; every field has a value regardless of
/// which subcommand is active, and all of them are echoed into the reports.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandKind,
    pub problem_path: PathBuf,
    pub out_dir: PathBuf,
    /// Grid nodes per axis; a single entry is replicated over all axes.
    pub grid_nx: Vec<usize>,
    pub n_t: usize,
    /// Convergence-weight exponent; `None` means "use the problem's".
    pub weight_exponent: Option<u32>,
    pub tol: f64,
    pub max_iter: usize,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub basis_degree: u32,
    /// Probe points `(t, x1..xk)`; empty means "t = 0 at the box centre".
    pub probes: Vec<Vec<f64>>,
    pub compare_tol: f64,
}

#[derive(Parser, Debug)]
#[command(
    name = "switchpde",
    version,
    about = "Finite-difference solver and path oracles for optimal mode switching with jumps"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Problem description file.
    problem: PathBuf,
    /// Output directory (default: $SWITCHPDE_OUT, else ./switchpde-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Grid nodes per axis: one value, or a comma-separated per-axis list.
    #[arg(long = "grid-nx", default_value = "41")]
    grid_nx: String,
    /// Number of time steps.
    #[arg(long, default_value_t = 50)]
    nt: usize,
    /// Decay exponent of the convergence weight (default: the problem's
    /// growth exponent).
    #[arg(long = "weight-p")]
    weight_p: Option<u32>,
    /// Stopping tolerance of the fixed-point iteration.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Iteration cap of the fixed-point iteration.
    #[arg(long = "max-iter", default_value_t = 50)]
    max_iter: usize,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Number of simulated paths.
    #[arg(long, default_value_t = 20_000)]
    paths: usize,
    /// Number of time steps per path.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Base RNG seed (probe i uses seed + i).
    #[arg(long, default_value_t = 0x5EED)]
    seed: u64,
    /// Total degree of the regression basis.
    #[arg(long, default_value_t = 3)]
    degree: u32,
    /// Probe point "t,x1,...,xk"; repeatable. Default: t = 0, box centre.
    #[arg(long = "probe")]
    probe: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum CliCommand {
    /// Check the problem's structural conditions and write a validation report.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve the obstacle system on a grid and export the value and
    /// reflection fields as CSV.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Estimate switching values by dynamic programming (deterministic
    /// state) or regression Monte Carlo (random state).
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        oracle: OracleArgs,
    },
    /// Solve on the grid and cross-check the values against the oracle at
    /// the probe points.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Largest acceptable |grid - oracle| per probe and mode.
        #[arg(long = "compare-tol", default_value_t = 0.05)]
        compare_tol: f64,
    },
    /// Summarize the parsed problem and its validation status.
    Report {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn parse_grid_nx(text: &str) -> Result<Vec<usize>> {
    let parts: Result<Vec<usize>> = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Invalid(format!("grid size `{p}` is not a positive integer")))
        })
        .collect();
    let parts = parts?;
    if parts.is_empty() || parts.iter().any(|&n| n < 3) {
        return Err(Error::Invalid("each grid axis needs at least 3 nodes".into()));
    }
    Ok(parts)
}

fn parse_probe(text: &str) -> Result<Vec<f64>> {
    let vals: Result<Vec<f64>> = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("probe component `{p}` is not a number")))
        })
        .collect();
    let vals = vals?;
    if vals.len() < 2 {
        return Err(Error::Invalid(format!(
            "probe `{text}` needs a time and at least one coordinate"
        )));
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("probe `{text}` has a non-finite component")));
    }
    Ok(vals)
}

fn resolve_out(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(OUT_DIR_DEFAULT))
}

impl RunConfig {
    fn defaults(command: CommandKind, common: CommonArgs) -> Self {
        Self {
            command,
            problem_path: common.problem,
            out_dir: resolve_out(common.out),
            grid_nx: vec![41],
            n_t: 50,
            weight_exponent: None,
            tol: 1e-8,
            max_iter: 50,
            n_paths: 20_000,
            n_steps: 100,
            seed: 0x5EED,
            basis_degree: 3,
            probes: Vec::new(),
            compare_tol: 0.05,
        }
    }

    fn apply_solve(&mut self, solve: SolveArgs) -> Result<()> {
        self.grid_nx = parse_grid_nx(&solve.grid_nx)?;
        self.n_t = solve.nt;
        self.weight_exponent = solve.weight_p;
        self.tol = solve.tol;
        self.max_iter = solve.max_iter;
        Ok(())
    }

    fn apply_oracle(&mut self, oracle: OracleArgs) -> Result<()> {
        self.n_paths = oracle.paths;
        self.n_steps = oracle.steps;
        self.seed = oracle.seed;
        self.basis_degree = oracle.degree;
        self.probes = oracle.probe.iter().map(|p| parse_probe(p)).collect::<Result<_>>()?;
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.max_iter == 0 || self.n_paths == 0 || self.n_steps == 0 {
            return Err(Error::Invalid(
                "time steps, iteration cap, path count, and path steps must be positive".into(),
            ));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Invalid(format!("tolerance {} must be positive", self.tol)));
        }
        if !(self.compare_tol.is_finite() && self.compare_tol > 0.0) {
            return Err(Error::Invalid(format!(
                "comparison tolerance {} must be positive",
                self.compare_tol
            )));
        }
        if self.weight_exponent == Some(0) {
            return Err(Error::Invalid("weight exponent must be at least 1".into()));
        }
        Ok(())
    }

    fn from_cli(cli: Cli) -> Result<Self> {
        let config = match cli.command {
            CliCommand::Validate { common } => Self::defaults(CommandKind::Validate, common),
            CliCommand::Solve { common, solve } => {
                let mut c = Self::defaults(CommandKind::Solve, common);
                c.apply_solve(solve)?;
                c
            }
            CliCommand::Oracle { common, oracle } => {
                let mut c = Self::defaults(CommandKind::Oracle, common);
                c.apply_oracle(oracle)?;
                c
            }
            CliCommand::Compare { common, solve, oracle, compare_tol } => {
                let mut c = Self::defaults(CommandKind::Compare, common);
                c.apply_solve(solve)?;
                c.apply_oracle(oracle)?;
                c.compare_tol = compare_tol;
                c
            }
            CliCommand::Report { common } => Self::defaults(CommandKind::Report, common),
        };
        config.validate()?;
        Ok(config)
    }
}

/// Parses a full command line (including the program name) into a resolved
/// configuration.
pub fn config_from_args<I, S>(args: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Invalid(e.to_string()))?;
    RunConfig::from_cli(cli)
}

/// Entry point for the binary: parse `std::env::args`, run, map errors to
/// stderr and the exit code contract (0 ok, 1 domain failure, 2 errors).
pub fn run_main() -> i32 {
    let cli = match Cli::try_parse_from(std::env::args_os()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let config = match RunConfig::from_cli(cli) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match run(&config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

// ---------------------------------------------------------------------------
// Problem files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Dims,
    Levy,
    Coeffs,
    Drivers,
    Costs,
    Terminal,
    Box,
}

impl Section {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "dims" => Some(Section::Dims),
            "levy" => Some(Section::Levy),
            "coeffs" => Some(Section::Coeffs),
            "drivers" => Some(Section::Drivers),
            "costs" => Some(Section::Costs),
            "terminal" => Some(Section::Terminal),
            "box" => Some(Section::Box),
            _ => None,
        }
    }
}

/// Loads and parses a problem file. See the module docs for the format.
pub fn load_problem(path: &Path) -> Result<SwitchingProblem> {
    let text = fs::read_to_string(path)?;
    parse_problem_text(&text, &path.display().to_string())
}

struct Dims {
    modes: usize,
    state: usize,
    noise: usize,
    mark: usize,
    horizon: f64,
    growth: u32,
}

/// One-or-two-digit 1-based index suffix after `prefix`, checked against
/// `limit`.
fn key_index(key: &str, prefix: &str, limit: usize, what: &str) -> Option<std::result::Result<usize, String>> {
    let rest = key.strip_prefix(prefix)?;
    if rest.len() != 1 || !rest.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let idx: usize = rest.parse().ok()?;
    Some(if (1..=limit).contains(&idx) {
        Ok(idx - 1)
    } else {
        Err(format!("{what} index {idx} out of range 1..={limit}"))
    })
}

fn key_index_pair(
    key: &str,
    prefix: &str,
    limit_a: usize,
    limit_b: usize,
    what: &str,
) -> Option<std::result::Result<(usize, usize), String>> {
    let rest = key.strip_prefix(prefix)?;
    if rest.len() != 2 || !rest.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let a: usize = rest[..1].parse().ok()?;
    let b: usize = rest[1..].parse().ok()?;
    Some(if (1..=limit_a).contains(&a) && (1..=limit_b).contains(&b) {
        Ok((a - 1, b - 1))
    } else {
        Err(format!("{what} indices ({a}, {b}) out of range 1..=({limit_a}, {limit_b})"))
    })
}

fn parse_problem_text(text: &str, path: &str) -> Result<SwitchingProblem> {
    let err = |line: usize, message: String| Error::ProblemFile {
        path: path.to_string(),
        line,
        message,
    };

    let mut section: Option<Section> = None;
    let mut section_lines: BTreeMap<&'static str, usize> = BTreeMap::new();

    // [dims] accumulator.
    let mut dim_vals: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut dims: Option<Dims> = None;
    let finish_dims = |vals: &BTreeMap<String, (f64, usize)>, line: usize| -> Result<Dims> {
        let get = |key: &str| vals.get(key).map(|&(v, _)| v);
        let int_in = |key: &str, lo: usize, hi: usize| -> Result<usize> {
            let v = get(key)
                .ok_or_else(|| err(line, format!("[dims] is missing `{key}`")))?;
            if v.fract() != 0.0 || v < lo as f64 || v > hi as f64 {
                return Err(err(
                    line,
                    format!("[dims] `{key}` must be an integer in {lo}..={hi}, got {v}"),
                ));
            }
            Ok(v as usize)
        };
        // Single-digit key indices cap every dimension at 9 in this format.
        let modes = int_in("m", 2, 9)?;
        let state = int_in("k", 1, 9)?;
        let noise = int_in("d", 1, 9)?;
        let mark = int_in("l", 1, 9)?;
        let horizon =
            get("T").ok_or_else(|| err(line, "[dims] is missing `T`".into()))?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(err(line, format!("[dims] `T` must be positive, got {horizon}")));
        }
        let growth = match get("p") {
            None => 2,
            Some(v) if v.fract() == 0.0 && v >= 1.0 && v <= 64.0 => v as u32,
            Some(v) => {
                return Err(err(line, format!("[dims] `p` must be an integer >= 1, got {v}")))
            }
        };
        Ok(Dims { modes, state, noise, mark, horizon, growth })
    };

    // Key-value stores per section: key -> (value text, line).
    let mut coeffs: BTreeMap<String, (String, usize)> = BTreeMap::new();
    let mut drivers: BTreeMap<String, (String, usize)> = BTreeMap::new();
    let mut costs: BTreeMap<String, (String, usize)> = BTreeMap::new();
    let mut terminal: BTreeMap<String, (String, usize)> = BTreeMap::new();
    let mut box_axes: BTreeMap<String, ((f64, f64), usize)> = BTreeMap::new();
    let mut levy_atoms: Vec<Atom> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }

        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(ln, format!("malformed section header `{line}`")))?
                .trim();
            let next = Section::from_name(name)
                .ok_or_else(|| err(ln, format!("unknown section `[{name}]`")))?;
            if section.is_none() && next != Section::Dims {
                return Err(err(ln, "the first section must be [dims]".into()));
            }
            if section == Some(Section::Dims) {
                dims = Some(finish_dims(&dim_vals, section_lines["dims"])?);
            }
            let key = match next {
                Section::Dims => "dims",
                Section::Levy => "levy",
                Section::Coeffs => "coeffs",
                Section::Drivers => "drivers",
                Section::Costs => "costs",
                Section::Terminal => "terminal",
                Section::Box => "box",
            };
            if section_lines.insert(key, ln).is_some() {
                return Err(err(ln, format!("duplicate section `[{name}]`")));
            }
            section = Some(next);
            continue;
        }

        let Some(current) = section else {
            return Err(err(ln, "content before the first section header".into()));
        };

        if current == Section::Levy {
            let d = dims.as_ref().expect("[dims] precedes [levy]");
            let nums: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            let nums = nums.map_err(|_| {
                err(ln, format!("jump atom row `{line}` has a non-numeric entry"))
            })?;
            if nums.len() != d.mark + 1 {
                return Err(err(
                    ln,
                    format!(
                        "jump atom row needs {} mark components plus a weight, got {} values",
                        d.mark,
                        nums.len()
                    ),
                ));
            }
            let weight = nums[d.mark];
            if !(weight.is_finite() && weight > 0.0) {
                return Err(err(ln, format!("jump atom weight {weight} must be positive")));
            }
            if nums[..d.mark].iter().any(|v| !v.is_finite()) {
                return Err(err(ln, "jump atom mark components must be finite".into()));
            }
            levy_atoms.push(Atom { mark: nums[..d.mark].to_vec(), weight });
            continue;
        }

        let Some(eq) = line.find('=') else {
            return Err(err(ln, format!("expected `key = value`, got `{line}`")));
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(err(ln, format!("expected `key = value`, got `{line}`")));
        }

        match current {
            Section::Dims => {
                if !matches!(key.as_str(), "m" | "k" | "d" | "l" | "T" | "p") {
                    return Err(err(ln, format!("unknown [dims] key `{key}`")));
                }
                let v: f64 = value.parse().map_err(|_| {
                    err(ln, format!("[dims] `{key}` value `{value}` is not a number"))
                })?;
                if dim_vals.insert(key.clone(), (v, ln)).is_some() {
                    return Err(err(ln, format!("duplicate [dims] key `{key}`")));
                }
            }
            Section::Coeffs => {
                let d = dims.as_ref().expect("[dims] precedes [coeffs]");
                let ts = time_state_vars(d.state);
                let sm = state_mark_vars(d.state, d.mark);
                let vars = if let Some(r) = key_index(&key, "b", d.state, "drift") {
                    r.map_err(|m| err(ln, m))?;
                    ts
                } else if let Some(r) =
                    key_index_pair(&key, "sigma", d.state, d.noise, "diffusion")
                {
                    r.map_err(|m| err(ln, m))?;
                    ts
                } else if let Some(r) = key_index(&key, "beta", d.state, "jump shift") {
                    r.map_err(|m| err(ln, m))?;
                    sm
                } else if let Some(r) = key_index(&key, "gamma", d.modes, "jump weight") {
                    r.map_err(|m| err(ln, m))?;
                    sm
                } else {
                    return Err(err(ln, format!("unknown [coeffs] key `{key}`")));
                };
                expr::parse(&value, &vars)
                    .map_err(|e| err(ln, format!("`{key}`: {e}")))?;
                if coeffs.insert(key.clone(), (value, ln)).is_some() {
                    return Err(err(ln, format!("duplicate [coeffs] key `{key}`")));
                }
            }
            Section::Drivers => {
                let d = dims.as_ref().expect("[dims] precedes [drivers]");
                match key_index(&key, "f", d.modes, "driver") {
                    Some(r) => {
                        r.map_err(|m| err(ln, m))?;
                    }
                    None => return Err(err(ln, format!("unknown [drivers] key `{key}`"))),
                }
                let vars = driver_vars(d.state, d.modes, d.noise);
                expr::parse(&value, &vars).map_err(|e| err(ln, format!("`{key}`: {e}")))?;
                if drivers.insert(key.clone(), (value, ln)).is_some() {
                    return Err(err(ln, format!("duplicate [drivers] key `{key}`")));
                }
            }
            Section::Costs => {
                let d = dims.as_ref().expect("[dims] precedes [costs]");
                if key != "g_default" {
                    match key_index_pair(&key, "g", d.modes, d.modes, "switching cost") {
                        Some(Ok((from, to))) if from == to => {
                            return Err(err(
                                ln,
                                format!(
                                    "diagonal switching cost `{key}` must be omitted \
                                     (staying in mode {} is free)",
                                    from + 1
                                ),
                            ));
                        }
                        Some(Ok(_)) => {}
                        Some(Err(m)) => return Err(err(ln, m)),
                        None => return Err(err(ln, format!("unknown [costs] key `{key}`"))),
                    }
                }
                let vars = time_state_vars(d.state);
                expr::parse(&value, &vars).map_err(|e| err(ln, format!("`{key}`: {e}")))?;
                if costs.insert(key.clone(), (value, ln)).is_some() {
                    return Err(err(ln, format!("duplicate [costs] key `{key}`")));
                }
            }
            Section::Terminal => {
                let d = dims.as_ref().expect("[dims] precedes [terminal]");
                match key_index(&key, "h", d.modes, "terminal") {
                    Some(r) => {
                        r.map_err(|m| err(ln, m))?;
                    }
                    None => return Err(err(ln, format!("unknown [terminal] key `{key}`"))),
                }
                let vars = state_vars(d.state);
                expr::parse(&value, &vars).map_err(|e| err(ln, format!("`{key}`: {e}")))?;
                if terminal.insert(key.clone(), (value, ln)).is_some() {
                    return Err(err(ln, format!("duplicate [terminal] key `{key}`")));
                }
            }
            Section::Box => {
                let d = dims.as_ref().expect("[dims] precedes [box]");
                match key_index(&key, "x", d.state, "box axis") {
                    Some(r) => {
                        r.map_err(|m| err(ln, m))?;
                    }
                    None => return Err(err(ln, format!("unknown [box] key `{key}`"))),
                }
                let nums: std::result::Result<Vec<f64>, _> =
                    value.split_whitespace().map(str::parse::<f64>).collect();
                let nums = nums
                    .map_err(|_| err(ln, format!("`{key}` bounds `{value}` are not numbers")))?;
                if nums.len() != 2 || !nums[0].is_finite() || !nums[1].is_finite() {
                    return Err(err(
                        ln,
                        format!("`{key}` needs two finite bounds `lo hi`, got `{value}`"),
                    ));
                }
                if nums[0] >= nums[1] {
                    return Err(err(
                        ln,
                        format!("`{key}` bounds [{}, {}] are not increasing", nums[0], nums[1]),
                    ));
                }
                if box_axes.insert(key.clone(), ((nums[0], nums[1]), ln)).is_some() {
                    return Err(err(ln, format!("duplicate [box] key `{key}`")));
                }
            }
            Section::Levy => unreachable!("handled above"),
        }
    }

    if section == Some(Section::Dims) {
        dims = Some(finish_dims(&dim_vals, section_lines["dims"])?);
    }
    let d = dims.ok_or_else(|| err(0, "missing section [dims]".into()))?;
    for required in ["drivers", "terminal", "box"] {
        if !section_lines.contains_key(required) {
            return Err(err(0, format!("missing section [{required}]")));
        }
    }
    for i in 1..=d.modes {
        if !drivers.contains_key(&format!("f{i}")) {
            return Err(err(
                section_lines["drivers"],
                format!("[drivers] is missing `f{i}`"),
            ));
        }
        if !terminal.contains_key(&format!("h{i}")) {
            return Err(err(
                section_lines["terminal"],
                format!("[terminal] is missing `h{i}`"),
            ));
        }
    }
    let mut bbox = Vec::with_capacity(d.state);
    for c in 1..=d.state {
        match box_axes.get(&format!("x{c}")) {
            Some(&(bounds, _)) => bbox.push(bounds),
            None => {
                return Err(err(section_lines["box"], format!("[box] is missing `x{c}`")))
            }
        }
    }

    let take = |map: &BTreeMap<String, (String, usize)>, key: String| -> Option<String> {
        map.get(&key).map(|(v, _)| v.clone())
    };
    let list = |map: &BTreeMap<String, (String, usize)>, prefix: &str, n: usize| -> Vec<String> {
        (1..=n)
            .map(|i| take(map, format!("{prefix}{i}")).unwrap_or_else(|| "0".into()))
            .collect()
    };

    let mut builder = ProblemBuilder::new(d.modes, d.state, d.noise, d.mark, d.horizon)
        .growth_exponent(d.growth)
        .bounding_box(&bbox)
        .drift(list(&coeffs, "b", d.state))
        .jump_shift(list(&coeffs, "beta", d.state))
        .jump_weight(list(&coeffs, "gamma", d.modes))
        .driver(list(&drivers, "f", d.modes))
        .terminal(list(&terminal, "h", d.modes));
    let mut sigma = Vec::with_capacity(d.state * d.noise);
    for c in 1..=d.state {
        for dd in 1..=d.noise {
            sigma.push(take(&coeffs, format!("sigma{c}{dd}")).unwrap_or_else(|| "0".into()));
        }
    }
    builder = builder.diffusion(sigma);
    if !levy_atoms.is_empty() {
        builder = builder.levy(FiniteLevyMeasure::new(d.mark, levy_atoms)?);
    }
    for from in 1..=d.modes {
        for to in 1..=d.modes {
            if from != to {
                if let Some(text) = take(&costs, format!("g{from}{to}")) {
                    builder = builder.cost(from - 1, to - 1, text);
                }
            }
        }
    }
    if let Some(text) = take(&costs, "g_default".to_string()) {
        builder = builder.cost_default(text);
    }
    builder.build()
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

fn config_header(config: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "command: {}", config.command.name());
    let _ = writeln!(s, "problem: {}", config.problem_path.display());
    let _ = writeln!(s, "out: {}", config.out_dir.display());
    let nx: Vec<String> = config.grid_nx.iter().map(|n| n.to_string()).collect();
    let _ = writeln!(s, "grid_nx: {}", nx.join(","));
    let _ = writeln!(s, "nt: {}", config.n_t);
    match config.weight_exponent {
        Some(p) => {
            let _ = writeln!(s, "weight_p: {p}");
        }
        None => {
            let _ = writeln!(s, "weight_p: problem");
        }
    }
    let _ = writeln!(s, "tol: {}", config.tol);
    let _ = writeln!(s, "max_iter: {}", config.max_iter);
    let _ = writeln!(s, "paths: {}", config.n_paths);
    let _ = writeln!(s, "steps: {}", config.n_steps);
    let _ = writeln!(s, "seed: {}", config.seed);
    let _ = writeln!(s, "degree: {}", config.basis_degree);
    let probes: Vec<String> = config
        .probes
        .iter()
        .map(|p| p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .collect();
    let _ = writeln!(
        s,
        "probes: {}",
        if probes.is_empty() { "default".to_string() } else { probes.join("; ") }
    );
    let _ = writeln!(s, "compare_tol: {}", config.compare_tol);
    s
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::write(dir.join(name), content)?;
    Ok(())
}

fn solve_grid(problem: &SwitchingProblem, config: &RunConfig) -> Result<Grid> {
    let k = problem.state_dim();
    let nx: Vec<usize> = if config.grid_nx.len() == 1 {
        vec![config.grid_nx[0]; k]
    } else if config.grid_nx.len() == k {
        config.grid_nx.clone()
    } else {
        return Err(Error::Invalid(format!(
            "--grid-nx has {} entries for {k} state axes",
            config.grid_nx.len()
        )));
    };
    Grid::new(problem.bounding_box(), &nx, config.n_t, problem.horizon())
}

fn weight_for(problem: &SwitchingProblem, config: &RunConfig) -> Result<WeightSpec> {
    WeightSpec::new(config.weight_exponent.unwrap_or_else(|| problem.growth_exponent()))
}

fn field_csv(
    grid: &Grid,
    values_at: impl Fn(usize, usize) -> f64,
    column: &str,
) -> String {
    let k = grid.dim();
    let mut s = String::new();
    s.push('t');
    for c in 1..=k {
        let _ = write!(s, ",x{c}");
    }
    let _ = writeln!(s, ",{column}");
    let mut coords = vec![0.0; k];
    for level in 0..grid.n_levels() {
        let t = grid.time(level);
        for node in 0..grid.n_nodes() {
            grid.fill_coords(node, &mut coords);
            let _ = write!(s, "{t}");
            for &c in &coords {
                let _ = write!(s, ",{c}");
            }
            let _ = writeln!(s, ",{}", values_at(level, node));
        }
    }
    s
}

fn run_solve(
    problem: &SwitchingProblem,
    config: &RunConfig,
) -> Result<(Grid, PicardSolution)> {
    let grid = solve_grid(problem, config)?;
    let weight = weight_for(problem, config)?;
    let sol = picard_solve(problem, &grid, &weight, config.tol, config.max_iter)?;
    Ok((grid, sol))
}

fn write_solution_artifacts(
    problem: &SwitchingProblem,
    config: &RunConfig,
    grid: &Grid,
    sol: &PicardSolution,
) -> Result<()> {
    for mode in 0..problem.modes() {
        let value_csv =
            field_csv(grid, |level, node| sol.solution.value.at(mode, level, node), "u");
        write_artifact(&config.out_dir, &format!("value_mode{}.csv", mode + 1), &value_csv)?;
        let refl_csv = field_csv(
            grid,
            |level, node| sol.solution.reflection.at(mode, level, node),
            "r",
        );
        write_artifact(
            &config.out_dir,
            &format!("reflection_mode{}.csv", mode + 1),
            &refl_csv,
        )?;
    }

    let mut report = config_header(config);
    let r = &sol.report;
    let _ = writeln!(report);
    let _ = writeln!(
        report,
        "status: {}",
        match r.status {
            PicardStatus::Converged => "converged",
            PicardStatus::MaxIterations => "max_iterations",
            PicardStatus::Diverged => "diverged",
        }
    );
    let _ = writeln!(report, "iterations: {}", r.iterations);
    for (i, d) in r.sup_diffs.iter().enumerate() {
        let _ = writeln!(report, "sup_diff_{}: {d}", i + 1);
    }
    for (i, q) in r.ratios.iter().enumerate() {
        let _ = writeln!(report, "ratio_{}: {q}", i + 2);
    }
    let _ = writeln!(report, "lipschitz_estimate: {}", r.lipschitz_estimate);
    match r.window {
        Some(w) => {
            let _ = writeln!(report, "contraction_window: {w}");
        }
        None => {
            let _ = writeln!(report, "contraction_window: none");
        }
    }
    let diag = &sol.solution.diagnostics;
    let _ = writeln!(report, "cfl: {}", diag.cfl);
    let _ = writeln!(report, "clamped_jumps: {}", diag.clamped);
    let _ = writeln!(report, "max_sweeps: {}", diag.max_sweeps());
    let _ = writeln!(report, "grid_dt: {}", grid.dt());
    let _ = writeln!(report, "value_max_abs: {}", sol.solution.value.max_abs());
    write_artifact(&config.out_dir, "run_report.txt", &report)?;
    Ok(())
}

/// One oracle estimate at a probe point.
struct ProbeEstimate {
    values: Vec<f64>,
    stderr: Option<Vec<f64>>,
    method: &'static str,
    moment_c: Option<f64>,
}

fn resolve_probes(problem: &SwitchingProblem, config: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let k = problem.state_dim();
    if config.probes.is_empty() {
        let mut probe = vec![0.0];
        for &(lo, hi) in problem.bounding_box() {
            probe.push(0.5 * (lo + hi));
        }
        return Ok(vec![probe]);
    }
    for p in &config.probes {
        if p.len() != 1 + k {
            return Err(Error::Invalid(format!(
                "probe has {} components, expected time plus {k} coordinates",
                p.len()
            )));
        }
        if !(p[0] >= 0.0 && p[0] < problem.horizon()) {
            return Err(Error::Invalid(format!(
                "probe time {} is outside [0, {})",
                p[0],
                problem.horizon()
            )));
        }
    }
    Ok(config.probes.clone())
}

fn estimate_probe(
    problem: &SwitchingProblem,
    config: &RunConfig,
    probe_index: usize,
    probe: &[f64],
    deterministic: bool,
) -> Result<ProbeEstimate> {
    let (t0, x0) = (probe[0], &probe[1..]);
    if deterministic {
        let values = dp_switching_value_deterministic(problem, t0, x0, config.n_steps)?;
        Ok(ProbeEstimate { values, stderr: None, method: "dynamic_programming", moment_c: None })
    } else {
        let paths = simulate_paths(
            problem,
            t0,
            x0,
            config.n_paths,
            config.n_steps,
            config.seed + probe_index as u64,
        )?;
        let reg = regression_switching_value(problem, &paths, config.basis_degree)?;
        let mc = moment_check(&paths, problem.growth_exponent());
        Ok(ProbeEstimate {
            values: reg.values,
            stderr: Some(reg.stderr),
            method: "regression_monte_carlo",
            moment_c: Some(mc.fitted_c),
        })
    }
}

fn probe_report_lines(out: &mut String, index: usize, probe: &[f64], est: &ProbeEstimate) {
    let coords: Vec<String> = probe[1..].iter().map(|v| v.to_string()).collect();
    let _ = writeln!(out, "probe_{index}_t: {}", probe[0]);
    let _ = writeln!(out, "probe_{index}_x: {}", coords.join(","));
    let _ = writeln!(out, "probe_{index}_method: {}", est.method);
    for (i, v) in est.values.iter().enumerate() {
        let _ = writeln!(out, "probe_{index}_mode{}_value: {v}", i + 1);
    }
    if let Some(se) = &est.stderr {
        for (i, v) in se.iter().enumerate() {
            let _ = writeln!(out, "probe_{index}_mode{}_stderr: {v}", i + 1);
        }
    }
    if let Some(c) = est.moment_c {
        let _ = writeln!(out, "probe_{index}_moment_c: {c}");
    }
}

/// Renders a witness's mode sequence with the file format's 1-based mode
/// numbers, e.g. `(1,2,1)`.
fn render_cycle(modes: &[usize]) -> String {
    let parts: Vec<String> = modes.iter().map(|&m| (m + 1).to_string()).collect();
    format!("({})", parts.join(","))
}

fn validation_text(problem: &SwitchingProblem, config: &RunConfig) -> (String, bool) {
    let report = validate_all(problem);
    let mut out = config_header(config);
    let _ = writeln!(out);
    let _ = write!(out, "{report}");
    for check in &report.checks {
        if check.status == CheckStatus::Fail {
            if let Some(w) = &check.witness {
                if w.modes.len() > 2 {
                    let _ = writeln!(out, "cycle: {}", render_cycle(&w.modes));
                }
            }
        }
    }
    let _ = writeln!(out, "validation: {}", if report.passed() { "pass" } else { "fail" });
    (out, report.passed())
}

/// Executes a resolved configuration. Returns the process exit code on a
/// completed run (0 success, 1 failed domain checks); hard errors (file,
/// parse, evaluation) surface as `Err` and map to exit code 2 in `main`.
pub fn run(config: &RunConfig) -> Result<i32> {
    fs::create_dir_all(&config.out_dir)?;
    let problem = load_problem(&config.problem_path)?;
    match config.command {
        CommandKind::Validate => {
            let (text, passed) = validation_text(&problem, config);
            write_artifact(&config.out_dir, "validation_report.txt", &text)?;
            Ok(if passed { 0 } else { 1 })
        }
        CommandKind::Solve => {
            let (grid, sol) = run_solve(&problem, config)?;
            write_solution_artifacts(&problem, config, &grid, &sol)?;
            Ok(if sol.report.status == PicardStatus::Converged { 0 } else { 1 })
        }
        CommandKind::Oracle => {
            let deterministic = has_deterministic_state(&problem)?;
            let probes = resolve_probes(&problem, config)?;
            let mut out = config_header(config);
            let _ = writeln!(out);
            let _ = writeln!(out, "probes_total: {}", probes.len());
            for (j, probe) in probes.iter().enumerate() {
                let est = estimate_probe(&problem, config, j, probe, deterministic)?;
                probe_report_lines(&mut out, j + 1, probe, &est);
            }
            write_artifact(&config.out_dir, "oracle_report.txt", &out)?;
            Ok(0)
        }
        CommandKind::Compare => {
            let (grid, sol) = run_solve(&problem, config)?;
            write_solution_artifacts(&problem, config, &grid, &sol)?;
            let deterministic = has_deterministic_state(&problem)?;
            let probes = resolve_probes(&problem, config)?;
            let mut out = config_header(config);
            let _ = writeln!(out);
            let mut all_pass = true;
            let mut worst = 0.0f64;
            for (j, probe) in probes.iter().enumerate() {
                let est = estimate_probe(&problem, config, j, probe, deterministic)?;
                probe_report_lines(&mut out, j + 1, probe, &est);
                // Nearest time level of the grid to the probe time.
                let level = ((probe[0] / problem.horizon()) * grid.n_steps() as f64)
                    .round()
                    .clamp(0.0, grid.n_steps() as f64) as usize;
                let _ = writeln!(out, "probe_{}_grid_time: {}", j + 1, grid.time(level));
                for mode in 0..problem.modes() {
                    let (gv, clamped) =
                        grid.interpolate(sol.solution.value.level(mode, level), &probe[1..]);
                    let diff = (gv - est.values[mode]).abs();
                    worst = worst.max(diff);
                    let pass = diff <= config.compare_tol;
                    all_pass &= pass;
                    let _ = writeln!(out, "probe_{}_mode{}_grid: {gv}", j + 1, mode + 1);
                    let _ = writeln!(out, "probe_{}_mode{}_absdiff: {diff}", j + 1, mode + 1);
                    if clamped {
                        let _ = writeln!(out, "probe_{}_mode{}_clamped: true", j + 1, mode + 1);
                    }
                    let _ = writeln!(
                        out,
                        "probe_{}_mode{}_pass: {}",
                        j + 1,
                        mode + 1,
                        if pass { "yes" } else { "no" }
                    );
                }
            }
            let converged = sol.report.status == PicardStatus::Converged;
            let _ = writeln!(out, "max_absdiff: {worst}");
            let _ = writeln!(out, "solver_converged: {}", if converged { "yes" } else { "no" });
            let _ = writeln!(out, "compare: {}", if all_pass { "pass" } else { "fail" });
            write_artifact(&config.out_dir, "compare_report.txt", &out)?;
            Ok(if all_pass && converged { 0 } else { 1 })
        }
        CommandKind::Report => {
            let mut out = config_header(config);
            let _ = writeln!(out);
            let _ = writeln!(out, "modes: {}", problem.modes());
            let _ = writeln!(out, "state_dim: {}", problem.state_dim());
            let _ = writeln!(out, "noise_dim: {}", problem.noise_dim());
            let _ = writeln!(out, "mark_dim: {}", problem.mark_dim());
            let _ = writeln!(out, "horizon: {}", problem.horizon());
            let _ = writeln!(out, "growth_p: {}", problem.growth_exponent());
            let _ = writeln!(out, "jump_atoms: {}", problem.levy().atoms().len());
            let _ = writeln!(out, "jump_mass: {}", problem.levy().total_mass());
            for (c, &(lo, hi)) in problem.bounding_box().iter().enumerate() {
                let _ = writeln!(out, "box_x{}: {lo} {hi}", c + 1);
            }
            for c in 0..problem.state_dim() {
                let _ = writeln!(out, "b{}: {}", c + 1, problem.drift_expr(c));
                for dd in 0..problem.noise_dim() {
                    let _ = writeln!(
                        out,
                        "sigma{}{}: {}",
                        c + 1,
                        dd + 1,
                        problem.diffusion_expr(c, dd)
                    );
                }
                let _ = writeln!(out, "beta{}: {}", c + 1, problem.jump_shift_expr(c));
            }
            for i in 0..problem.modes() {
                let _ = writeln!(out, "gamma{}: {}", i + 1, problem.jump_weight_expr(i));
                let _ = writeln!(out, "f{}: {}", i + 1, problem.driver_expr(i));
                let _ = writeln!(out, "h{}: {}", i + 1, problem.terminal_expr(i));
            }
            for i in 0..problem.modes() {
                for j in 0..problem.modes() {
                    if i != j {
                        let _ = writeln!(
                            out,
                            "g{}{}: {}",
                            i + 1,
                            j + 1,
                            problem.switch_cost_expr(i, j)
                        );
                    }
                }
            }
            let _ = writeln!(out);
            let (validation, passed) = validation_text(&problem, config);
            // Skip the duplicated config header of the nested report.
            let body = validation.split_once("\n\n").map(|(_, b)| b).unwrap_or(&validation);
            let _ = write!(out, "{body}");
            write_artifact(&config.out_dir, "problem_report.txt", &out)?;
            Ok(if passed { 0 } else { 1 })
        }
    }
}

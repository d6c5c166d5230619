//! A small arithmetic expression language.
//!
//! Problem data (drift, diffusion, jump coefficients, drivers, switching
//! costs, terminal conditions) is given as text in this language rather than
//! as compiled code, so problems can live in plain files and be validated
//! and differenced numerically.
//!
//! Grammar, lowest to highest precedence, all binary operators
//! left-associative:
//!
//! ```text
//! sum    := term  (("+" | "-") term)*
//! term   := unary (("*" | "/") unary)*
//! unary  := "-" unary | power
//! power  := atom  ("^" ["-"] integer)*
//! atom   := number | variable | func "(" sum ("," sum)? ")" | "(" sum ")"
//! ```
//!
//! Note that `^` binds tighter than unary minus (`-x^2` is `-(x^2)`) and its
//! exponent must be an integer literal. The functions are `sin`, `cos`,
//! `exp`, `tanh`, `abs`, `sqrt` (one argument) and `min`, `max` (two
//! arguments).
//!
//! Parsing is checked against an explicit [`VarSet`]: any other identifier is
//! an error, so a typo like `x2` in a one-dimensional problem is caught when
//! the file is read, not mid-solve. Evaluation is total over finite inputs
//! except for division by zero, square roots of negative numbers, and
//! overflow to NaN/infinity, which are reported as errors instead of being
//! silently propagated into a solver.

use std::fmt;

use crate::{Error, Result};

const UNARY_FUNCS: [&str; 6] = ["sin", "cos", "exp", "tanh", "abs", "sqrt"];
const BINARY_FUNCS: [&str; 2] = ["min", "max"];

fn is_func_name(name: &str) -> bool {
    UNARY_FUNCS.contains(&name) || BINARY_FUNCS.contains(&name)
}

/// The ordered set of variable names an expression may refer to.
///
/// Evaluation binds values positionally: `values[i]` is the value of
/// `vars.name(i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarSet {
    names: Vec<String>,
}

impl VarSet {
    /// Builds a variable set from unique, identifier-shaped names. Function
    /// names (`sin`, `max`, ...) are reserved and cannot be variables.
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        for (idx, name) in names.iter().enumerate() {
            let mut chars = name.chars();
            let head_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
            let tail_ok = chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !head_ok || !tail_ok {
                return Err(Error::Invalid(format!("`{name}` is not a valid variable name")));
            }
            if is_func_name(name) {
                return Err(Error::Invalid(format!("`{name}` is a reserved function name")));
            }
            if names[..idx].contains(name) {
                return Err(Error::Invalid(format!("duplicate variable name `{name}`")));
            }
        }
        Ok(Self { names })
    }

    /// Number of variables.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    /// True when the set is empty (constant expressions only).
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// The name at slot `idx`.
    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    /// Slot of `name`, if declared.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func1 {
    Sin,
    Cos,
    Exp,
    Tanh,
    Abs,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func2 {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call1(Func1, Box<Node>),
    Call2(Func2, Box<Node>, Box<Node>),
}

/// A parsed expression together with the variable set it was parsed against.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    vars: VarSet,
    root: Node,
}

/// Parses `text` against the allowed variables.
///
/// Syntax errors carry the byte offset of the offending token; identifiers
/// outside `vars` (and not function names) produce
/// [`Error::UndeclaredVariable`].
pub fn parse(text: &str, vars: &VarSet) -> Result<Expr> {
    let mut parser = Parser { text, pos: 0, vars };
    let root = parser.parse_sum()?;
    parser.skip_ws();
    if parser.pos < text.len() {
        return Err(parser.syntax("unexpected trailing input"));
    }
    Ok(Expr { vars: vars.clone(), root })
}

impl Expr {
    /// A constant expression over the given variables.
    pub fn constant(value: f64, vars: &VarSet) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Invalid(format!("constant {value} is not finite")));
        }
        Ok(Self { vars: vars.clone(), root: Node::Num(value) })
    }

    /// The variable set this expression binds against.
    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    /// Evaluates with `values[i]` bound to variable slot `i`.
    pub fn eval(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.vars.len() {
            return Err(Error::Invalid(format!(
                "expression over {} variables evaluated with {} values",
                self.vars.len(),
                values.len()
            )));
        }
        eval_node(&self.root, values).map_err(|kind| {
            let context = self.to_string();
            match kind {
                EvalErr::DivZero => Error::DivisionByZero { context },
                EvalErr::SqrtNeg => Error::SqrtOfNegative { context },
                EvalErr::NonFinite => Error::NonFinite { context },
            }
        })
    }

    /// Slots of the variables that actually appear, sorted ascending.
    pub fn free_vars(&self) -> Vec<usize> {
        let mut seen = vec![false; self.vars.len()];
        collect_vars(&self.root, &mut seen);
        seen.iter().enumerate().filter_map(|(i, &s)| s.then_some(i)).collect()
    }

    /// True when the expression never reads a variable slot outside
    /// `allowed`.
    pub fn depends_only_on(&self, allowed: &[usize]) -> bool {
        self.free_vars().iter().all(|v| allowed.contains(v))
    }
}

fn collect_vars(node: &Node, seen: &mut [bool]) {
    match node {
        Node::Num(_) => {}
        Node::Var(i) => seen[*i] = true,
        Node::Neg(a) | Node::Pow(a, _) | Node::Call1(_, a) => collect_vars(a, seen),
        Node::Bin(_, a, b) | Node::Call2(_, a, b) => {
            collect_vars(a, seen);
            collect_vars(b, seen);
        }
    }
}

enum EvalErr {
    DivZero,
    SqrtNeg,
    NonFinite,
}

/// Every node checks its own result for finiteness: `min`/`max` would
/// otherwise be able to mask an intermediate overflow (`f64::min(NaN, 1.0)`
/// is `1.0`).
fn eval_node(node: &Node, values: &[f64]) -> std::result::Result<f64, EvalErr> {
    let out = match node {
        Node::Num(v) => *v,
        Node::Var(i) => values[*i],
        Node::Neg(a) => -eval_node(a, values)?,
        Node::Bin(op, a, b) => {
            let a = eval_node(a, values)?;
            let b = eval_node(b, values)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(EvalErr::DivZero);
                    }
                    a / b
                }
            }
        }
        Node::Pow(a, n) => {
            let a = eval_node(a, values)?;
            if a == 0.0 && *n < 0 {
                return Err(EvalErr::DivZero);
            }
            a.powi(*n)
        }
        Node::Call1(f, a) => {
            let a = eval_node(a, values)?;
            match f {
                Func1::Sin => a.sin(),
                Func1::Cos => a.cos(),
                Func1::Exp => a.exp(),
                Func1::Tanh => a.tanh(),
                Func1::Abs => a.abs(),
                Func1::Sqrt => {
                    if a < 0.0 {
                        return Err(EvalErr::SqrtNeg);
                    }
                    a.sqrt()
                }
            }
        }
        Node::Call2(f, a, b) => {
            let a = eval_node(a, values)?;
            let b = eval_node(b, values)?;
            match f {
                Func2::Min => a.min(b),
                Func2::Max => a.max(b),
            }
        }
    };
    if out.is_finite() {
        Ok(out)
    } else {
        Err(EvalErr::NonFinite)
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
    vars: &'a VarSet,
}

impl<'a> Parser<'a> {
    fn syntax(&self, message: &str) -> Error {
        Error::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek_char() {
            if c.is_ascii_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    /// Consumes `c` if it is next (after whitespace).
    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek_char() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.syntax(&format!("expected `{c}`")))
        }
    }

    fn parse_sum(&mut self) -> Result<Node> {
        let mut acc = self.parse_term()?;
        loop {
            if self.eat('+') {
                acc = Node::Bin(BinOp::Add, Box::new(acc), Box::new(self.parse_term()?));
            } else if self.eat('-') {
                acc = Node::Bin(BinOp::Sub, Box::new(acc), Box::new(self.parse_term()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn parse_term(&mut self) -> Result<Node> {
        let mut acc = self.parse_unary()?;
        loop {
            if self.eat('*') {
                acc = Node::Bin(BinOp::Mul, Box::new(acc), Box::new(self.parse_unary()?));
            } else if self.eat('/') {
                acc = Node::Bin(BinOp::Div, Box::new(acc), Box::new(self.parse_unary()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            Ok(Node::Neg(Box::new(self.parse_unary()?)))
        } else {
            self.parse_power()
        }
    }

    fn parse_power(&mut self) -> Result<Node> {
        let mut acc = self.parse_atom()?;
        while self.eat('^') {
            let negative = self.eat('-');
            self.skip_ws();
            let start = self.pos;
            let value = self.parse_number()?;
            if value.fract() != 0.0 || value.abs() > i32::MAX as f64 {
                self.pos = start;
                return Err(self.syntax("exponent must be an integer literal"));
            }
            let mut n = value as i32;
            if negative {
                n = -n;
            }
            acc = Node::Pow(Box::new(acc), n);
        }
        Ok(acc)
    }

    fn parse_atom(&mut self) -> Result<Node> {
        self.skip_ws();
        match self.peek_char() {
            None => Err(self.syntax("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let inner = self.parse_sum()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => Ok(Node::Num(self.parse_number()?)),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => self.parse_ident(),
            Some(_) => Err(self.syntax("expected a number, variable, function call, or `(`")),
        }
    }

    fn parse_number(&mut self) -> Result<f64> {
        let start = self.pos;
        let bytes = self.text.as_bytes();
        let mut end = start;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
        if end < bytes.len() && bytes[end] == b'.' {
            end += 1;
            while end < bytes.len() && bytes[end].is_ascii_digit() {
                end += 1;
            }
        }
        if end == start || &self.text[start..end] == "." {
            return Err(self.syntax("expected a number"));
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut exp_end = end + 1;
            if exp_end < bytes.len() && (bytes[exp_end] == b'+' || bytes[exp_end] == b'-') {
                exp_end += 1;
            }
            let digits_start = exp_end;
            while exp_end < bytes.len() && bytes[exp_end].is_ascii_digit() {
                exp_end += 1;
            }
            if exp_end > digits_start {
                end = exp_end;
            }
        }
        let value: f64 = self.text[start..end]
            .parse()
            .map_err(|_| self.syntax("malformed number"))?;
        if !value.is_finite() {
            return Err(self.syntax("number literal overflows f64"));
        }
        self.pos = end;
        Ok(value)
    }

    fn parse_ident(&mut self) -> Result<Node> {
        let start = self.pos;
        let bytes = self.text.as_bytes();
        let mut end = start;
        while end < bytes.len()
            && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
        {
            end += 1;
        }
        let name = &self.text[start..end];
        self.pos = end;
        if is_func_name(name) {
            self.expect('(')?;
            let first = self.parse_sum()?;
            let node = if let Some(func) = match name {
                "sin" => Some(Func1::Sin),
                "cos" => Some(Func1::Cos),
                "exp" => Some(Func1::Exp),
                "tanh" => Some(Func1::Tanh),
                "abs" => Some(Func1::Abs),
                "sqrt" => Some(Func1::Sqrt),
                _ => None,
            } {
                Node::Call1(func, Box::new(first))
            } else {
                self.expect(',')?;
                let second = self.parse_sum()?;
                let func = if name == "min" { Func2::Min } else { Func2::Max };
                Node::Call2(func, Box::new(first), Box::new(second))
            };
            self.expect(')')?;
            Ok(node)
        } else if let Some(slot) = self.vars.index_of(name) {
            Ok(Node::Var(slot))
        } else {
            Err(Error::UndeclaredVariable { name: name.to_string(), offset: start })
        }
    }
}

/// Precedence levels used when printing: high enough means "no parentheses
/// needed in this position".
fn prec(node: &Node) -> u8 {
    match node {
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        // A negative literal prints with a leading minus, so it needs the
        // same protective parentheses as an explicit negation (`(-2)^2`
        // rather than `-2^2`).
        Node::Neg(_) => 3,
        Node::Num(v) if v.is_sign_negative() => 3,
        Node::Pow(..) => 4,
        Node::Num(_) | Node::Var(_) | Node::Call1(..) | Node::Call2(..) => 5,
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, vars: &VarSet, min_prec: u8) -> fmt::Result {
    let own = prec(node);
    if own < min_prec {
        write!(f, "(")?;
        write_node(f, node, vars, 0)?;
        return write!(f, ")");
    }
    match node {
        Node::Num(v) => write!(f, "{v}"),
        Node::Var(i) => write!(f, "{}", vars.name(*i)),
        Node::Neg(a) => {
            write!(f, "-")?;
            write_node(f, a, vars, 3)
        }
        // The right operand of a same-precedence chain keeps its parentheses
        // (`a - (b - c)` does not reprint as `a - b - c`), so reparsing the
        // printed form reproduces the tree exactly, not just up to floating
        // point reassociation.
        Node::Bin(op, a, b) => {
            write_node(f, a, vars, own)?;
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
            };
            write!(f, " {sym} ")?;
            write_node(f, b, vars, own + 1)
        }
        Node::Pow(a, n) => {
            write_node(f, a, vars, 5)?;
            write!(f, "^{n}")
        }
        Node::Call1(func, a) => {
            let name = match func {
                Func1::Sin => "sin",
                Func1::Cos => "cos",
                Func1::Exp => "exp",
                Func1::Tanh => "tanh",
                Func1::Abs => "abs",
                Func1::Sqrt => "sqrt",
            };
            write!(f, "{name}(")?;
            write_node(f, a, vars, 0)?;
            write!(f, ")")
        }
        Node::Call2(func, a, b) => {
            write!(f, "{}(", if *func == Func2::Min { "min" } else { "max" })?;
            write_node(f, a, vars, 0)?;
            write!(f, ", ")?;
            write_node(f, b, vars, 0)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, &self.vars, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vars(names: &[&str]) -> VarSet {
        VarSet::new(names.iter().copied()).unwrap()
    }

    fn eval_str(text: &str, names: &[&str], values: &[f64]) -> Result<f64> {
        parse(text, &vars(names))?.eval(values)
    }

    #[test]
    fn literals_and_arithmetic() {
        assert_eq!(eval_str("1 + 2*3", &[], &[]).unwrap(), 7.0);
        assert_eq!(eval_str("(1 + 2)*3", &[], &[]).unwrap(), 9.0);
        assert_eq!(eval_str("10 - 4 - 3", &[], &[]).unwrap(), 3.0); // left-assoc
        assert_eq!(eval_str("12 / 4 / 3", &[], &[]).unwrap(), 1.0);
        assert_eq!(eval_str("1.5e2", &[], &[]).unwrap(), 150.0);
        assert_eq!(eval_str(".5 + 2.", &[], &[]).unwrap(), 2.5);
    }

    #[test]
    fn power_binds_tighter_than_unary_minus() {
        assert_eq!(eval_str("-2^2", &[], &[]).unwrap(), -4.0);
        assert_eq!(eval_str("(-2)^2", &[], &[]).unwrap(), 4.0);
        assert_eq!(eval_str("2^3^2", &[], &[]).unwrap(), 64.0); // left-assoc: (2^3)^2
        assert_eq!(eval_str("2^-2", &[], &[]).unwrap(), 0.25);
        assert_eq!(eval_str("2*-3", &[], &[]).unwrap(), -6.0);
    }

    #[test]
    fn variables_bind_positionally() {
        let v = vars(&["t", "x1"]);
        let e = parse("t*x1 + x1^2", &v).unwrap();
        assert_eq!(e.eval(&[2.0, 3.0]).unwrap(), 15.0);
        assert_eq!(e.free_vars(), vec![0, 1]);
        let c = parse("t + 1", &v).unwrap();
        assert_eq!(c.free_vars(), vec![0]);
        assert!(c.depends_only_on(&[0]));
        assert!(!e.depends_only_on(&[0]));
    }

    #[test]
    fn functions_evaluate() {
        assert_eq!(eval_str("min(1, 2 - 4)", &[], &[]).unwrap(), -2.0);
        assert_eq!(eval_str("max(1, 2 - 4)", &[], &[]).unwrap(), 1.0);
        assert_eq!(eval_str("abs(0 - 3)", &[], &[]).unwrap(), 3.0);
        assert_eq!(eval_str("sqrt(9)", &[], &[]).unwrap(), 3.0);
        let v = eval_str("sin(1)^2 + cos(1)^2", &[], &[]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert!((eval_str("tanh(100)", &[], &[]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn undeclared_variable_reports_name_and_offset() {
        let err = parse("x1 + nope", &vars(&["x1"])).unwrap_err();
        match err {
            Error::UndeclaredVariable { name, offset } => {
                assert_eq!(name, "nope");
                assert_eq!(offset, 5);
            }
            other => panic!("expected undeclared variable, got {other:?}"),
        }
        // Variables legal in one slot are not legal in another.
        assert!(parse("y1", &vars(&["t", "x1"])).is_err());
    }

    #[test]
    fn syntax_errors_carry_byte_offsets() {
        match parse("1 + * 2", &vars(&[])).unwrap_err() {
            Error::Syntax { offset, .. } => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse("(1 + 2", &vars(&[])).unwrap_err() {
            Error::Syntax { offset, .. } => assert_eq!(offset, 6),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse("x1^2.5", &vars(&["x1"])).unwrap_err() {
            Error::Syntax { offset, .. } => assert_eq!(offset, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert!(parse("", &vars(&[])).is_err());
        assert!(parse("1 2", &vars(&[])).is_err());
        assert!(parse("sin", &vars(&[])).is_err()); // function name without call
        assert!(parse("sin(1, 2)", &vars(&[])).is_err()); // arity
        assert!(parse("min(1)", &vars(&[])).is_err());
    }

    #[test]
    fn eval_rejects_non_finite_results() {
        assert!(matches!(
            eval_str("1 / (x1 - x1)", &["x1"], &[3.0]),
            Err(Error::DivisionByZero { .. })
        ));
        assert!(matches!(
            eval_str("sqrt(0 - 1)", &["x1"], &[0.0]),
            Err(Error::SqrtOfNegative { .. })
        ));
        assert!(matches!(
            eval_str("exp(1000)", &[], &[]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(eval_str("0^-1", &[], &[]), Err(Error::DivisionByZero { .. })));
    }

    #[test]
    fn varset_rejects_bad_names() {
        assert!(VarSet::new(["x1", "x1"]).is_err());
        assert!(VarSet::new(["1x"]).is_err());
        assert!(VarSet::new(["sin"]).is_err());
        assert!(VarSet::new(["a b"]).is_err());
        assert!(VarSet::new(["x1", "t"]).is_ok());
    }

    #[test]
    fn printing_reparses_to_the_same_tree() {
        let v = vars(&["t", "x1"]);
        for text in [
            "1 + 2*3",
            "-x1^2 + t*(x1 - 1)",
            "min(t, max(x1, 0 - 1))",
            "t - (x1 - 1) - 2",
            "2^3^2 / (1 + x1^2)",
            "-(t*x1)",
            "sqrt(abs(x1)) * exp(0 - t)",
        ] {
            let parsed = parse(text, &v).unwrap();
            let reparsed = parse(&parsed.to_string(), &v).unwrap();
            assert_eq!(parsed, reparsed, "round trip changed `{text}` -> `{parsed}`");
        }
    }

    // Random expression trees for the round-trip property below. Literals
    // are non-negative because the printer has no way to distinguish a
    // negative literal from a negated positive one; negative values arise
    // through Neg nodes instead.
    fn arb_node(depth: u32) -> BoxedStrategy<Node> {
        let leaf = prop_oneof![
            (0.0f64..4.0).prop_map(Node::Num),
            (0usize..3).prop_map(Node::Var),
        ];
        leaf.prop_recursive(depth, 64, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone(), prop_oneof![
                    Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)
                ])
                    .prop_map(|(a, b, op)| Node::Bin(op, Box::new(a), Box::new(b))),
                inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
                (inner.clone(), 0i32..4).prop_map(|(a, n)| Node::Pow(Box::new(a), n)),
                (inner.clone(), prop_oneof![
                    Just(Func1::Sin), Just(Func1::Cos), Just(Func1::Tanh), Just(Func1::Abs)
                ])
                    .prop_map(|(a, f)| Node::Call1(f, Box::new(a))),
                (inner.clone(), inner, prop_oneof![Just(Func2::Min), Just(Func2::Max)])
                    .prop_map(|(a, b, f)| Node::Call2(f, Box::new(a), Box::new(b))),
            ]
        })
        .boxed()
    }

    proptest! {
        // parse(print(e)) rebuilds the identical tree, and therefore
        // evaluates bit-for-bit identically on random bindings.
        #[test]
        fn print_parse_round_trip(
            root in arb_node(4),
            bindings in proptest::collection::vec(
                proptest::collection::vec(-10.0f64..10.0, 3), 100),
        ) {
            let v = vars(&["t", "x1", "x2"]);
            let expr = Expr { vars: v.clone(), root };
            let reparsed = parse(&expr.to_string(), &v).unwrap();
            prop_assert_eq!(&expr, &reparsed);
            for binding in &bindings {
                let a = expr.eval(binding);
                let b = reparsed.eval(binding);
                match (a, b) {
                    (Ok(x), Ok(y)) => prop_assert!(
                        x.to_bits() == y.to_bits(),
                        "{} vs {} on {:?}", x, y, binding
                    ),
                    (Err(_), Err(_)) => {}
                    other => prop_assert!(false, "mismatched results {:?}", other),
                }
            }
        }
    }
}

//! Vector-valued expressions over x1..xn, u1..um and t.
//!
//! Grammar: components separated by `;`, operators `+ - * /`, integer powers
//! `^k`, parentheses, calls to `sin cos tan exp ln tanh abs`, `#` comments.

mod lipschitz;
mod parse;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // float methods come from here when std is not linked
use num_traits::Float;

use crate::error::ExprError;
use crate::linalg::Mat;

pub use lipschitz::{estimate_lipschitz, LipschitzEstimate};
pub use parse::MAX_NODES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Tanh,
    Abs,
    /// Derivative of `abs`; never produced by the parser.
    Sign,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }
}

/// Scalar expression tree. Variable indices are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    X(usize),
    U(usize),
    T,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Func(Func, Box<Node>),
}

fn eval_err(msg: impl Into<String>) -> ExprError {
    ExprError::Eval(msg.into())
}

impl Node {
    pub fn eval(&self, x: &[f64], u: &[f64], t: f64) -> Result<f64, ExprError> {
        let v = match self {
            Node::Const(c) => *c,
            Node::X(i) => x[*i],
            Node::U(i) => u[*i],
            Node::T => t,
            Node::Neg(a) => -a.eval(x, u, t)?,
            Node::Add(a, b) => a.eval(x, u, t)? + b.eval(x, u, t)?,
            Node::Sub(a, b) => a.eval(x, u, t)? - b.eval(x, u, t)?,
            Node::Mul(a, b) => a.eval(x, u, t)? * b.eval(x, u, t)?,
            Node::Div(a, b) => {
                let den = b.eval(x, u, t)?;
                if den == 0.0 {
                    return Err(eval_err("division by zero"));
                }
                a.eval(x, u, t)? / den
            }
            Node::Pow(a, k) => {
                let base = a.eval(x, u, t)?;
                if *k < 0 && base == 0.0 {
                    return Err(eval_err("zero raised to a negative power"));
                }
                base.powi(*k)
            }
            Node::Func(f, a) => {
                let v = a.eval(x, u, t)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Tan => v.tan(),
                    Func::Exp => v.exp(),
                    Func::Ln => {
                        if v <= 0.0 {
                            return Err(eval_err(format!("ln of nonpositive value {v}")));
                        }
                        v.ln()
                    }
                    Func::Tanh => v.tanh(),
                    Func::Abs => v.abs(),
                    Func::Sign => {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(eval_err("non-finite result"))
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Node::Const(_) | Node::X(_) | Node::U(_) | Node::T => 1,
            Node::Neg(a) | Node::Pow(a, _) | Node::Func(_, a) => 1 + a.node_count(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                1 + a.node_count() + b.node_count()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Node::Const(c) if *c == 0.0)
    }

    /// Symbolic partial derivative with respect to x_{var}.
    pub fn derivative(&self, var: usize) -> Node {
        match self {
            Node::Const(_) | Node::U(_) | Node::T => Node::Const(0.0),
            Node::X(i) => Node::Const(if *i == var { 1.0 } else { 0.0 }),
            Node::Neg(a) => neg(a.derivative(var)),
            Node::Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Node::Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Node::Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Node::Div(a, b) => div(
                sub(
                    mul(a.derivative(var), (**b).clone()),
                    mul((**a).clone(), b.derivative(var)),
                ),
                pow((**b).clone(), 2),
            ),
            Node::Pow(a, k) => {
                if *k == 0 {
                    Node::Const(0.0)
                } else {
                    mul(mul(Node::Const(*k as f64), pow((**a).clone(), k - 1)), a.derivative(var))
                }
            }
            Node::Func(f, a) => {
                let da = a.derivative(var);
                if da.is_zero() {
                    return Node::Const(0.0);
                }
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => func(Func::Cos, inner),
                    Func::Cos => neg(func(Func::Sin, inner)),
                    Func::Tan => add(Node::Const(1.0), pow(func(Func::Tan, inner), 2)),
                    Func::Exp => func(Func::Exp, inner),
                    Func::Ln => div(Node::Const(1.0), inner),
                    Func::Tanh => sub(Node::Const(1.0), pow(func(Func::Tanh, inner), 2)),
                    Func::Abs => func(Func::Sign, inner),
                    Func::Sign => return Node::Const(0.0),
                };
                mul(outer, da)
            }
        }
    }
}

fn func(f: Func, a: Node) -> Node {
    Node::Func(f, Box::new(a))
}

fn neg(a: Node) -> Node {
    match a {
        Node::Const(c) => Node::Const(-c),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn add(a: Node, b: Node) -> Node {
    match (a, b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x + y),
        (a, b) if a.is_zero() => b,
        (a, b) if b.is_zero() => a,
        (a, b) => Node::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Node, b: Node) -> Node {
    match (a, b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x - y),
        (a, b) if b.is_zero() => a,
        (a, b) if a.is_zero() => neg(b),
        (a, b) => Node::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (a, b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x * y),
        (a, b) if a.is_zero() || b.is_zero() => Node::Const(0.0),
        (Node::Const(1.0), b) => b,
        (a, Node::Const(1.0)) => a,
        (Node::Const(-1.0), b) => neg(b),
        (a, Node::Const(-1.0)) => neg(a),
        (a, b) => Node::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Node, b: Node) -> Node {
    match (a, b) {
        (a, _) if a.is_zero() => Node::Const(0.0),
        (a, Node::Const(1.0)) => a,
        (a, b) => Node::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Node, k: i32) -> Node {
    match (a, k) {
        (_, 0) => Node::Const(1.0),
        (a, 1) => a,
        (Node::Const(c), k) => Node::Const(c.powi(k)),
        (a, k) => Node::Pow(Box::new(a), k),
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Node::X(i) => write!(f, "x{}", i + 1),
            Node::U(i) => write!(f, "u{}", i + 1),
            Node::T => write!(f, "t"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Pow(a, k) => {
                if *k < 0 {
                    write!(f, "{a}^({k})")
                } else {
                    write!(f, "{a}^{k}")
                }
            }
            Node::Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// A parsed vector expression with its symbolic Jacobian in x.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    components: Vec<Node>,
    jacobian: Vec<Vec<Node>>,
    n: usize,
    m: usize,
    source: String,
}

impl ExprAst {
    /// Parses `source` with `n` state variables and `m` inputs available.
    pub fn parse(source: &str, n: usize, m: usize) -> Result<Self, ExprError> {
        let components = parse::parse_components(source, n, m)?;
        Ok(Self::from_components(components, n, m, source.to_string()))
    }

    /// Builds an expression from trees; indices must be within `n` and `m`.
    pub fn from_nodes(components: Vec<Node>, n: usize, m: usize) -> Result<Self, ExprError> {
        fn check(node: &Node, n: usize, m: usize) -> Result<(), ExprError> {
            match node {
                Node::X(i) if *i >= n => Err(ExprError::Dimension(format!("x{} out of range", i + 1))),
                Node::U(i) if *i >= m => Err(ExprError::Dimension(format!("u{} out of range", i + 1))),
                Node::Const(_) | Node::X(_) | Node::U(_) | Node::T => Ok(()),
                Node::Neg(a) | Node::Pow(a, _) | Node::Func(_, a) => check(a, n, m),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    check(a, n, m)?;
                    check(b, n, m)
                }
            }
        }
        let total: usize = components.iter().map(Node::node_count).sum();
        if total > MAX_NODES {
            return Err(ExprError::TooLarge(format!("{total} nodes exceeds {MAX_NODES}")));
        }
        for c in &components {
            check(c, n, m)?;
        }
        let source = components
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        Ok(Self::from_components(components, n, m, source))
    }

    /// `count` constant-zero components.
    pub fn zeros(count: usize, n: usize, m: usize) -> Self {
        let comps = (0..count).map(|_| Node::Const(0.0)).collect();
        let src = (0..count).map(|_| "0").collect::<Vec<_>>().join("; ");
        Self::from_components(comps, n, m, src)
    }

    fn from_components(components: Vec<Node>, n: usize, m: usize, source: String) -> Self {
        let jacobian = components
            .iter()
            .map(|c| (0..n).map(|j| c.derivative(j)).collect())
            .collect();
        Self { components, jacobian, n, m, source }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn components(&self) -> &[Node] {
        &self.components
    }

    /// True when every component is the literal constant zero.
    pub fn is_identically_zero(&self) -> bool {
        self.components.iter().all(Node::is_zero)
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<(), ExprError> {
        if x.len() != self.n || u.len() != self.m {
            return Err(ExprError::Dimension(format!(
                "expected x of length {} and u of length {}, got {} and {}",
                self.n,
                self.m,
                x.len(),
                u.len()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>, ExprError> {
        self.check_dims(x, u)?;
        self.components.iter().map(|c| c.eval(x, u, t)).collect()
    }

    /// Jacobian with respect to x, one row per component.
    pub fn jacobian_x(&self, x: &[f64], u: &[f64], t: f64) -> Result<Mat, ExprError> {
        self.check_dims(x, u)?;
        let mut out = Mat::zeros(self.components.len(), self.n);
        for (i, row) in self.jacobian.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                out[(i, j)] = d.eval(x, u, t)?;
            }
        }
        Ok(out)
    }
}

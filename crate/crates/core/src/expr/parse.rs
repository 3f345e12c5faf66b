//! Lexer and recursive-descent parser for the nonlinearity grammar.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods come from here when std is not linked
use num_traits::Float;

use super::{Func, Node};
use crate::error::ExprError;

/// Largest accepted source tree.
pub const MAX_NODES: usize = 100_000;
const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Semi,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> ExprError {
    ExprError::Syntax { line, col, msg: msg.into() }
}

fn lex(src: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, line: tl, col: tc });
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| syntax(tl, tc, format!("malformed number `{text}`")))?;
            col += i - start;
            out.push(Token { tok: Tok::Num(v), line: tl, col: tc });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Token { tok: Tok::Ident(text), line: tl, col: tc });
            continue;
        }
        return Err(syntax(tl, tc, format!("unexpected character `{c}`")));
    }
    out.push(Token { tok: Tok::End, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    n: usize,
    m: usize,
    nodes: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn count(&mut self, t: &Token) -> Result<(), ExprError> {
        self.nodes += 1;
        if self.nodes > MAX_NODES {
            return Err(ExprError::TooLarge(format!(
                "more than {MAX_NODES} nodes (at {}:{})",
                t.line, t.col
            )));
        }
        Ok(())
    }

    fn enter(&mut self, t: &Token) -> Result<(), ExprError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ExprError::TooLarge(format!(
                "nesting deeper than {MAX_DEPTH} (at {}:{})",
                t.line, t.col
            )));
        }
        Ok(())
    }

    fn list(&mut self) -> Result<Vec<Node>, ExprError> {
        let mut comps = Vec::new();
        loop {
            while self.peek().tok == Tok::Semi {
                self.bump();
            }
            if self.peek().tok == Tok::End {
                break;
            }
            comps.push(self.expr()?);
            match self.peek().tok {
                Tok::Semi => {
                    self.bump();
                }
                Tok::End => break,
                _ => {
                    let t = self.peek().clone();
                    return Err(syntax(t.line, t.col, "expected `;` or end of input"));
                }
            }
        }
        Ok(comps)
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let start = self.peek().clone();
        self.enter(&start)?;
        let mut items = vec![(false, self.term()?)];
        loop {
            let t = self.peek().clone();
            let inverse = match t.tok {
                Tok::Plus => false,
                Tok::Minus => true,
                _ => break,
            };
            self.bump();
            self.count(&t)?;
            items.push((inverse, self.term()?));
        }
        self.depth -= 1;
        Ok(balanced(items, &|a, b| Node::Add(a, b), &|a, b| Node::Sub(a, b)))
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut items = vec![(false, self.unary()?)];
        loop {
            let t = self.peek().clone();
            let inverse = match t.tok {
                Tok::Star => false,
                Tok::Slash => true,
                _ => break,
            };
            self.bump();
            self.count(&t)?;
            items.push((inverse, self.unary()?));
        }
        Ok(balanced(items, &|a, b| Node::Mul(a, b), &|a, b| Node::Div(a, b)))
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Minus => {
                self.bump();
                self.count(&t)?;
                self.enter(&t)?;
                let inner = self.unary()?;
                self.depth -= 1;
                Ok(Node::Neg(Box::new(inner)))
            }
            Tok::Plus => {
                self.bump();
                self.enter(&t)?;
                let inner = self.unary()?;
                self.depth -= 1;
                Ok(inner)
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.peek().tok != Tok::Caret {
            return Ok(base);
        }
        let caret = self.bump();
        self.count(&caret)?;
        let exp = self.int_exponent()?;
        Ok(Node::Pow(Box::new(base), exp))
    }

    fn int_exponent(&mut self) -> Result<i32, ExprError> {
        let t = self.peek().clone();
        let paren = t.tok == Tok::LParen;
        if paren {
            self.bump();
        }
        let mut sign = 1i32;
        if self.peek().tok == Tok::Minus {
            self.bump();
            sign = -1;
        }
        let nt = self.bump();
        let value = match nt.tok {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() <= 64.0 => v as i32,
            _ => {
                return Err(syntax(
                    nt.line,
                    nt.col,
                    "exponent must be an integer literal with magnitude at most 64",
                ))
            }
        };
        if paren {
            let close = self.bump();
            if close.tok != Tok::RParen {
                return Err(syntax(close.line, close.col, "expected `)` after exponent"));
            }
        }
        Ok(sign * value)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let t = self.bump();
        self.count(&t)?;
        match t.tok {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                let close = self.bump();
                if close.tok != Tok::RParen {
                    return Err(syntax(close.line, close.col, "expected `)`"));
                }
                Ok(inner)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    return self.call(name, t.line, t.col);
                }
                self.variable(&name, t.line, t.col)
            }
            Tok::End => Err(syntax(t.line, t.col, "unexpected end of input")),
            other => Err(syntax(t.line, t.col, format!("unexpected token {other:?}"))),
        }
    }

    fn variable(&self, name: &str, line: usize, col: usize) -> Result<Node, ExprError> {
        let unknown = || ExprError::UnknownIdentifier { name: name.to_string(), line, col };
        if name == "t" {
            return Ok(Node::T);
        }
        let (kind, digits) = name.split_at(1);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
            return Err(unknown());
        }
        let k: usize = digits.parse().map_err(|_| unknown())?;
        match kind {
            "x" if k >= 1 && k <= self.n => Ok(Node::X(k - 1)),
            "u" if k >= 1 && k <= self.m => Ok(Node::U(k - 1)),
            _ => Err(unknown()),
        }
    }

    fn call(&mut self, name: String, line: usize, col: usize) -> Result<Node, ExprError> {
        let func = match name.as_str() {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            _ => return Err(ExprError::UnknownIdentifier { name, line, col }),
        };
        let open = self.bump();
        self.enter(&open)?;
        let mut args = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                args.push(self.expr()?);
                if self.peek().tok == Tok::Comma {
                    self.bump();
                    continue;
                }
                break;
            }
        }
        let close = self.bump();
        if close.tok != Tok::RParen {
            return Err(syntax(close.line, close.col, "expected `)` to close the argument list"));
        }
        self.depth -= 1;
        if args.len() != 1 {
            return Err(ExprError::Arity {
                func: name,
                expected: 1,
                found: args.len(),
                line,
                col,
            });
        }
        Ok(Node::Func(func, Box::new(args.pop().expect("one argument"))))
    }
}

type Combine<'a> = &'a dyn Fn(Box<Node>, Box<Node>) -> Node;

/// Folds `a0 op1 a1 op2 a2 ...` into a tree of logarithmic height, so long sums and
/// products do not exhaust the stack when evaluated, differentiated or dropped.
/// `a - b + c` becomes `a - (b - c)`; the leading item is never inverted.
fn balanced(mut items: Vec<(bool, Node)>, direct: Combine<'_>, inverse: Combine<'_>) -> Node {
    if items.len() == 1 {
        return items.pop().expect("one item").1;
    }
    let right = items.split_off(items.len() / 2);
    let flip = right[0].0;
    let right: Vec<(bool, Node)> = right
        .into_iter()
        .enumerate()
        .map(|(i, (inv, node))| (if i == 0 { false } else { inv != flip }, node))
        .collect();
    let l = Box::new(balanced(items, direct, inverse));
    let r = Box::new(balanced(right, direct, inverse));
    if flip {
        inverse(l, r)
    } else {
        direct(l, r)
    }
}

/// Parses a ';'-separated list of scalar expressions over x1..xn, u1..um and t.
pub(crate) fn parse_components(src: &str, n: usize, m: usize) -> Result<Vec<Node>, ExprError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, n, m, nodes: 0, depth: 0 };
    p.list()
}

//! A small arithmetic expression language for coefficient fields and custom
//! closed forms.
//!
//! Supported: numeric literals, the constant `pi`, named variables, the binary
//! operators `+ - * / ^` (with `^` right-associative), unary minus, parentheses
//! and the functions `log`, `exp`, `abs`, `min`, `max`. Variable names are
//! resolved to slots at parse time, so evaluation is a plain tree walk over a
//! slice of values.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Log,
    Exp,
    Abs,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        match name {
            "log" => Some((Func::Log, 1)),
            "exp" => Some((Func::Exp, 1)),
            "abs" => Some((Func::Abs, 1)),
            "min" => Some((Func::Min, 2)),
            "max" => Some((Func::Max, 2)),
            _ => None,
        }
    }
}

/// A parsed expression bound to an ordered list of variable names.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    arity: usize,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    /// Parses `source`; identifiers must appear in `vars`, whose order fixes
    /// the layout of the slice passed to [`Expr::eval`].
    pub fn parse(source: &str, vars: &[&str]) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { tokens, pos: 0, vars };
        let root = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Parse(format!("unexpected trailing input in {source:?}")));
        }
        Ok(Expr { source: source.to_string(), root, arity: vars.len() })
    }

    /// Shorthand for a coefficient field over `x1..xn`.
    pub fn parse_field(source: &str, n: usize) -> Result<Self> {
        let names = coordinate_names(n);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Self::parse(source, &refs)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Evaluates with `vals[i]` bound to the i-th declared variable.
    pub fn eval(&self, vals: &[f64]) -> f64 {
        debug_assert!(vals.len() >= self.arity);
        eval_node(&self.root, vals)
    }

    /// True when the expression is a literal constant.
    pub fn constant_value(&self) -> Option<f64> {
        match self.root {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }
}

/// `["x1", .., "xn"]`.
pub fn coordinate_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn eval_node(node: &Node, vals: &[f64]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(i) => vals[*i],
        Node::Neg(a) => -eval_node(a, vals),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval_node(a, vals), eval_node(b, vals));
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Pow => a.powf(b),
            }
        }
        Node::Call(f, args) => {
            let a = eval_node(&args[0], vals);
            match f {
                Func::Log => a.ln(),
                Func::Exp => a.exp(),
                Func::Abs => a.abs(),
                Func::Min => a.min(eval_node(&args[1], vals)),
                Func::Max => a.max(eval_node(&args[1], vals)),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' | '-' | '*' | '/' | '^' => {
                out.push(Tok::Op(c));
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                out.push(Tok::Comma);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // exponent part, e.g. 1e-3
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
                let v = text.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {text:?}")))?;
                out.push(Tok::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(Error::Parse(format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            other => Err(Error::Parse(format!("expected {tok:?}, found {other:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { Op::Add } else { Op::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { Op::Mul } else { Op::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(match inner {
                Node::Num(v) => Node::Num(-v),
                other => Node::Neg(Box::new(other)),
            });
        }
        if let Some(Tok::Op('+')) = self.peek() {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if let Some((func, arity)) = Func::lookup(&name) {
                    self.expect(Tok::LParen)?;
                    let mut args = vec![self.expr()?];
                    while let Some(Tok::Comma) = self.peek() {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen)?;
                    if args.len() != arity {
                        return Err(Error::Parse(format!("{name} takes {arity} argument(s), got {}", args.len())));
                    }
                    return Ok(Node::Call(func, args));
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Node::Var(i)),
                    None => Err(Error::Parse(format!("unknown identifier {name:?} (allowed: {:?})", self.vars))),
                }
            }
            other => Err(Error::Parse(format!("unexpected token {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, vals: &[f64]) -> f64 {
        Expr::parse(src, &["x1", "x2", "t"]).unwrap().eval(vals)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[0.0; 3]), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[0.0; 3]), 512.0);
        assert_eq!(ev("-2 ^ 2", &[0.0; 3]), -4.0);
        assert_eq!(ev("(1 - 2) - 3", &[0.0; 3]), -4.0);
        assert_eq!(ev("8 / 2 / 2", &[0.0; 3]), 2.0);
        assert_eq!(ev("2^-1", &[0.0; 3]), 0.5);
    }

    #[test]
    fn variables_and_functions() {
        let v = [0.5, 2.0, 3.0];
        assert_eq!(ev("x1 * t^2", &v), 4.5);
        assert_eq!(ev("max(x1, x2) + min(x1, x2)", &v), 2.5);
        assert!((ev("log(exp(t))", &v) - 3.0).abs() < 1e-15);
        assert_eq!(ev("abs(x1 - x2)", &v), 1.5);
        assert_eq!(ev("1e-3 * 2E2", &v), 0.2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Expr::parse("y + 1", &["x1"]).is_err());
        assert!(Expr::parse("min(1)", &["x1"]).is_err());
        assert!(Expr::parse("1 +", &["x1"]).is_err());
        assert!(Expr::parse("(1", &["x1"]).is_err());
        assert!(Expr::parse("1 # 2", &["x1"]).is_err());
    }

    #[test]
    fn constant_detection() {
        assert_eq!(Expr::parse_field("-2.5", 2).unwrap().constant_value(), Some(-2.5));
        assert_eq!(Expr::parse_field("x1", 2).unwrap().constant_value(), None);
    }
}

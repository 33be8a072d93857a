//! A small arithmetic language for custom densities and estimating functions.
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = ("-" | "+") unary | power ;
//! power   = atom [ "^" unary ] ;
//! atom    = number | name | call | "(" expr ")" ;
//! call    = ("exp" | "log") "(" expr ")" | "pow" "(" expr "," expr ")" ;
//! name    = "x" | "x1" | "x2" | "theta" | "theta" index | "z" | "z" index
//!         | "pi" | "e" ;
//! index   = digit { digit } ;          (* 1-based *)
//! number  = digit { digit } [ "." { digit } ] [ ("e" | "E") [ "+" | "-" ] digit { digit } ] ;
//! ```
//!
//! `x` is the same as `x1`, `theta` the same as `theta1` and `z` the same as
//! `z1`. Exponentiation binds tighter than unary minus on its left, so
//! `-x^2` is `-(x^2)`, and is right associative.

use std::fmt;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X(usize),
    Theta(usize),
    Z(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, src };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64], theta: &[f64], z: &[f64]) -> f64 {
        use Expr::*;
        match self {
            Num(v) => *v,
            X(i) => x.get(*i).copied().unwrap_or(f64::NAN),
            Theta(i) => theta.get(*i).copied().unwrap_or(f64::NAN),
            Z(i) => z.get(*i).copied().unwrap_or(f64::NAN),
            Neg(a) => -a.eval(x, theta, z),
            Add(a, b) => a.eval(x, theta, z) + b.eval(x, theta, z),
            Sub(a, b) => a.eval(x, theta, z) - b.eval(x, theta, z),
            Mul(a, b) => a.eval(x, theta, z) * b.eval(x, theta, z),
            Div(a, b) => a.eval(x, theta, z) / b.eval(x, theta, z),
            Pow(a, b) => pow(a.eval(x, theta, z), b.eval(x, theta, z)),
            Exp(a) => a.eval(x, theta, z).exp(),
            Log(a) => a.eval(x, theta, z).ln(),
        }
    }

    /// Largest `(x, theta, z)` indices used, as counts (0 when unused).
    pub fn arity(&self) -> (usize, usize, usize) {
        use Expr::*;
        match self {
            Num(_) => (0, 0, 0),
            X(i) => (i + 1, 0, 0),
            Theta(i) => (0, i + 1, 0),
            Z(i) => (0, 0, i + 1),
            Neg(a) | Exp(a) | Log(a) => a.arity(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                let (p, q) = (a.arity(), b.arity());
                (p.0.max(q.0), p.1.max(q.1), p.2.max(q.2))
            }
        }
    }

    /// Errors if the expression refers to coordinates beyond the given sizes.
    pub fn check_arity(&self, x_dim: usize, theta_dim: usize, z_dim: usize) -> Result<()> {
        let (a, b, c) = self.arity();
        if a > x_dim {
            return Err(Error::Config(format!("expression uses x{a} but the sample space has dimension {x_dim}")));
        }
        if b > theta_dim {
            return Err(Error::Config(format!("expression uses theta{b} but theta has dimension {theta_dim}")));
        }
        if c > z_dim {
            return Err(Error::Config(format!("expression uses z{c} but z has dimension {z_dim}")));
        }
        Ok(())
    }
}

// Integer powers go through powi so that negative bases work.
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        match self {
            Num(v) => write!(f, "{v}"),
            X(i) => write!(f, "x{}", i + 1),
            Theta(i) => write!(f, "theta{}", i + 1),
            Z(i) => write!(f, "z{}", i + 1),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a} ^ {b})"),
            Exp(a) => write!(f, "exp({a})"),
            Log(a) => write!(f, "log({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && (bytes[i + 1] as char).is_ascii_digit()) {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| Error::Config(format!("bad number `{text}` at offset {start}")))?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^(),".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(Error::Config(format!("unexpected character `{c}` at offset {i}")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        let at = self.tokens.get(self.pos).map(|t| t.0).unwrap_or(self.src.len());
        Error::Config(format!("{msg} at offset {at} in `{}`", self.src))
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.1)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some((_, tok)) = self.tokens.get(self.pos).cloned() else {
            return Err(self.error("unexpected end of expression"));
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Sym(c) => {
                self.pos -= 1;
                Err(self.error(&format!("unexpected `{c}`")))
            }
            Tok::Ident(name) => self.name(&name),
        }
    }

    fn name(&mut self, name: &str) -> Result<Expr> {
        match name {
            "exp" | "log" => {
                self.expect('(')?;
                let a = Box::new(self.expr()?);
                self.expect(')')?;
                Ok(if name == "exp" { Expr::Exp(a) } else { Expr::Log(a) })
            }
            "pow" => {
                self.expect('(')?;
                let a = self.expr()?;
                self.expect(',')?;
                let b = self.expr()?;
                self.expect(')')?;
                Ok(Expr::Pow(Box::new(a), Box::new(b)))
            }
            "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            "e" => Ok(Expr::Num(std::f64::consts::E)),
            _ => {
                let (stem, digits) = split_index(name);
                let idx = if digits.is_empty() {
                    0
                } else {
                    match digits.parse::<usize>() {
                        Ok(k) if k >= 1 => k - 1,
                        _ => {
                            self.pos -= 1;
                            return Err(self.error(&format!("bad index in `{name}`")));
                        }
                    }
                };
                match stem {
                    "x" => Ok(Expr::X(idx)),
                    "theta" => Ok(Expr::Theta(idx)),
                    "z" => Ok(Expr::Z(idx)),
                    _ => {
                        self.pos -= 1;
                        Err(self.error(&format!("unknown name `{name}`")))
                    }
                }
            }
        }
    }
}

fn split_index(name: &str) -> (&str, &str) {
    let cut = name.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    name.split_at(cut)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str) -> f64 {
        Expr::parse(s).unwrap().eval(&[2.0, 5.0], &[0.5, 3.0], &[4.0])
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3"), 7.0);
        assert_eq!(ev("(1 + 2) * 3"), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2"), 512.0);
        assert_eq!(ev("-x^2"), -4.0);
        assert_eq!(ev("8 / 4 / 2"), 1.0);
        assert_eq!(ev("1 - 2 - 3"), -4.0);
        assert_eq!(ev("2^-1"), 0.5);
    }

    #[test]
    fn variables_and_functions() {
        assert_eq!(ev("x"), 2.0);
        assert_eq!(ev("x2"), 5.0);
        assert_eq!(ev("theta"), 0.5);
        assert_eq!(ev("theta2"), 3.0);
        assert_eq!(ev("z1"), 4.0);
        assert!((ev("log(exp(1.5))") - 1.5).abs() < 1e-15);
        assert_eq!(ev("pow(x, 3)"), 8.0);
        assert_eq!(ev("pow(-2, 3)"), -8.0);
        assert!((ev("pi") - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(ev("1.5e1 + 2E-1"), 15.2);
    }

    #[test]
    fn normal_density_expression() {
        let e = Expr::parse("exp(-(x - theta)^2 / (2*z)) / pow(2*pi*z, 0.5)").unwrap();
        let v = e.eval(&[0.3], &[0.0], &[1.0]);
        let want = (-0.045f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((v - want).abs() < 1e-15);
        assert_eq!(e.arity(), (1, 1, 1));
    }

    #[test]
    fn parse_errors_are_reported() {
        for bad in ["", "1 +", "(1", "foo", "x0", "exp 1", "1 $ 2", "pow(1)", "2 3"] {
            assert!(Expr::parse(bad).is_err(), "{bad}");
        }
        let e = Expr::parse("theta3").unwrap();
        assert!(e.check_arity(1, 2, 1).is_err());
    }

    #[test]
    fn display_round_trips() {
        let e = Expr::parse("-(x - theta)^2 / (2*z) + log(z2)").unwrap();
        assert_eq!(Expr::parse(&e.to_string()).unwrap(), e);
    }
}

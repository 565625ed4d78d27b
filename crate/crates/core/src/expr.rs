//! Minimal arithmetic expressions for configuration strings.
//!
//! Grammar: numbers, named variables, `+ - * / ^`, unary minus, parentheses,
//! the constants `pi` and `e`, and the functions `sin cos tan exp ln sqrt abs
//! sgn atan tanh` (one argument) and `min max atan2 pow` (two arguments).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(String, Vec<Node>),
}

/// A parsed expression over a fixed list of variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    arity: usize,
}

impl Expr {
    pub fn parse(source: &str, vars: &[&str]) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens, pos: 0, vars };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!("unexpected trailing input in `{source}`")));
        }
        Ok(Self { source: source.to_string(), root, arity: vars.len() })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates with `args` bound to the variable list given at parse time.
    pub fn eval(&self, args: &[f64]) -> f64 {
        debug_assert_eq!(args.len(), self.arity);
        eval(&self.root, args)
    }
}

fn eval(node: &Node, args: &[f64]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(i) => args[*i],
        Node::Neg(a) => -eval(a, args),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval(a, args), eval(b, args));
            match op {
                '+' => x + y,
                '-' => x - y,
                '*' => x * y,
                '/' => x / y,
                _ => x.powf(y),
            }
        }
        Node::Call(name, a) => {
            let x = eval(&a[0], args);
            match name.as_str() {
                "sin" => x.sin(),
                "cos" => x.cos(),
                "tan" => x.tan(),
                "exp" => x.exp(),
                "ln" => x.ln(),
                "sqrt" => x.sqrt(),
                "abs" => x.abs(),
                "sgn" => {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                "atan" => x.atan(),
                "tanh" => x.tanh(),
                "min" => x.min(eval(&a[1], args)),
                "max" => x.max(eval(&a[1], args)),
                "atan2" => x.atan2(eval(&a[1], args)),
                _ => x.powf(eval(&a[1], args)),
            }
        }
    }
}

fn arity(name: &str) -> Option<usize> {
    match name {
        "sin" | "cos" | "tan" | "exp" | "ln" | "sqrt" | "abs" | "sgn" | "atan" | "tanh" => Some(1),
        "min" | "max" | "atan2" | "pow" => Some(2),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(s: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent suffix, e.g. 1e-3
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
            let v = text.parse().map_err(|_| Error::Expr(format!("bad number `{text}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character `{c}` in `{s}`")));
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

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Bin('+', Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Bin('-', Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Bin('*', Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Bin('/', Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    // right-associative, binds tighter than unary minus on its left operand
    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.tokens.get(self.pos).cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(n) = arity(&name) {
                    if !self.eat('(') {
                        return Err(Error::Expr(format!("function `{name}` needs arguments")));
                    }
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    if !self.eat(')') {
                        return Err(Error::Expr(format!("missing `)` after `{name}(`")));
                    }
                    if args.len() != n {
                        return Err(Error::Expr(format!("`{name}` takes {n} argument(s)")));
                    }
                    return Ok(Node::Call(name, args));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(i));
                }
                match name.as_str() {
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "e" => Ok(Node::Num(std::f64::consts::E)),
                    _ => Err(Error::Expr(format!("unknown identifier `{name}`"))),
                }
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(Error::Expr("missing `)`".into()));
                }
                Ok(inner)
            }
            other => Err(Error::Expr(format!("unexpected token {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_functions() {
        let e = Expr::parse("1 + 2*x^2 - -3", &["x"]).unwrap();
        assert_eq!(e.eval(&[2.0]), 12.0);
        let e = Expr::parse("-x^2", &["x"]).unwrap();
        assert_eq!(e.eval(&[3.0]), -9.0);
        let e = Expr::parse("exp(-(x-1)^2/0.5) * cos(pi*y)", &["x", "y"]).unwrap();
        assert!((e.eval(&[1.0, 1.0]) + 1.0).abs() < 1e-15);
        let e = Expr::parse("max(sgn(x), 0.25) + atan2(1, 1)", &["x"]).unwrap();
        assert!((e.eval(&[-2.0]) - 0.25 - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert_eq!(Expr::parse("2^3^2", &[]).unwrap().eval(&[]), 512.0);
        assert_eq!(Expr::parse("1.5e-1*2", &[]).unwrap().eval(&[]), 0.3);
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("1 +", &[]).is_err());
        assert!(Expr::parse("foo(1)", &[]).is_err());
        assert!(Expr::parse("z", &["x"]).is_err());
        assert!(Expr::parse("sin 1", &[]).is_err());
        assert!(Expr::parse("(1", &[]).is_err());
        assert!(Expr::parse("max(1)", &[]).is_err());
        assert!(Expr::parse("1 $ 2", &[]).is_err());
    }
}

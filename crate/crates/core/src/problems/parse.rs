//! Small arithmetic grammar for closed-form fields.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | 'e' | x<i> | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | tan | exp | ln | log | tanh | sqrt
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so `-x1^2`
//! is `-(x1²)`. Coordinates are one-based: `x1 … xd`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;

use crate::diffengine::{ExprBuilder, FieldExpr, NodeId, UnaryFn};
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Ast {
    Num(f64),
    Var(usize),
    Neg(Box<Ast>),
    Bin(char, Box<Ast>, Box<Ast>),
    Call(Func, Box<Ast>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Tanh,
    Sqrt,
}

impl Func {
    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "tanh" => Func::Tanh,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn eval(self, v: f64) -> f64 {
        match self {
            Func::Sin => math::sin(v),
            Func::Cos => math::cos(v),
            Func::Tan => math::sin(v) / math::cos(v),
            Func::Exp => math::exp(v),
            Func::Ln => math::ln(v),
            Func::Tanh => math::tanh(v),
            Func::Sqrt => math::sqrt(v),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Ast> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => '+',
                Some(b'-') => '-',
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Ast> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => '*',
                Some(b'/') => '/',
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Ast> {
        if self.eat(b'-') {
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast> {
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Ast::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ast> {
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.word(),
            Some(c) => self.err(format!("unexpected character `{}`", c as char)),
        }
    }

    fn number(&mut self) -> Result<Ast> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = core::str::from_utf8(&s[start..i]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) => {
                self.pos = i;
                Ok(Ast::Num(v))
            }
            Err(_) => self.err(format!("malformed number `{text}`")),
        }
    }

    fn word(&mut self) -> Result<Ast> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let w = core::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match w {
            "pi" => return Ok(Ast::Num(core::f64::consts::PI)),
            "e" => return Ok(Ast::Num(core::f64::consts::E)),
            _ => {}
        }
        if let Some(idx) = w.strip_prefix('x').and_then(|r| r.parse::<usize>().ok()) {
            if idx == 0 || idx > self.dim {
                self.pos = start;
                return self.err(format!("coordinate `{w}` outside x1..x{}", self.dim));
            }
            return Ok(Ast::Var(idx - 1));
        }
        if let Some(f) = Func::from_name(w) {
            if !self.eat(b'(') {
                return self.err(format!("expected `(` after `{w}`"));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return self.err("expected `)`");
            }
            return Ok(Ast::Call(f, Box::new(arg)));
        }
        self.pos = start;
        self.err(format!("unknown identifier `{w}`"))
    }
}

#[derive(Clone, Copy)]
enum Val {
    Const(f64),
    Node(NodeId),
}

fn node(b: &mut ExprBuilder, v: Val) -> NodeId {
    match v {
        Val::Const(c) => b.scalar(c),
        Val::Node(n) => n,
    }
}

fn lower(ast: &Ast, b: &mut ExprBuilder) -> Result<Val> {
    Ok(match ast {
        Ast::Num(v) => Val::Const(*v),
        Ast::Var(i) => Val::Node(b.coordinate(*i)?),
        Ast::Neg(a) => match lower(a, b)? {
            Val::Const(c) => Val::Const(-c),
            Val::Node(n) => Val::Node(b.scale(n, -1.0)?),
        },
        Ast::Call(f, a) => match lower(a, b)? {
            Val::Const(c) => Val::Const(f.eval(c)),
            Val::Node(n) => Val::Node(match f {
                Func::Sin => b.map(n, UnaryFn::Sin)?,
                Func::Cos => b.map(n, UnaryFn::Cos)?,
                Func::Tan => {
                    let s = b.map(n, UnaryFn::Sin)?;
                    let c = b.map(n, UnaryFn::Cos)?;
                    b.div(s, c)?
                }
                Func::Exp => b.map(n, UnaryFn::Exp)?,
                Func::Ln => b.map(n, UnaryFn::Ln)?,
                Func::Tanh => b.map(n, UnaryFn::Tanh)?,
                Func::Sqrt => b.map(n, UnaryFn::Powf(0.5))?,
            }),
        },
        Ast::Bin(op, l, r) => {
            let lv = lower(l, b)?;
            let rv = lower(r, b)?;
            match (op, lv, rv) {
                ('+', Val::Const(x), Val::Const(y)) => Val::Const(x + y),
                ('-', Val::Const(x), Val::Const(y)) => Val::Const(x - y),
                ('*', Val::Const(x), Val::Const(y)) => Val::Const(x * y),
                ('/', Val::Const(x), Val::Const(y)) => Val::Const(x / y),
                ('^', Val::Const(x), Val::Const(y)) => Val::Const(math::pow(x, y)),
                ('+', Val::Node(n), Val::Const(c)) | ('+', Val::Const(c), Val::Node(n)) => {
                    let k = b.scalar(c);
                    Val::Node(b.add(n, k)?)
                }
                ('*', Val::Node(n), Val::Const(c)) | ('*', Val::Const(c), Val::Node(n)) => {
                    Val::Node(b.scale(n, c)?)
                }
                ('/', Val::Node(n), Val::Const(c)) => Val::Node(b.scale(n, 1.0 / c)?),
                ('^', Val::Node(n), Val::Const(p)) => {
                    let f = if p == libm::trunc(p) && p.abs() <= i32::MAX as f64 {
                        UnaryFn::Powi(p as i32)
                    } else {
                        UnaryFn::Powf(p)
                    };
                    Val::Node(b.map(n, f)?)
                }
                ('^', base, expo) => {
                    // a^b = exp(b ln a)
                    let e = node(b, expo);
                    let lg = match base {
                        Val::Const(c) => Val::Const(math::ln(c)),
                        Val::Node(n) => Val::Node(b.map(n, UnaryFn::Ln)?),
                    };
                    let prod = match lg {
                        Val::Const(c) => b.scale(e, c)?,
                        Val::Node(l) => b.mul(e, l)?,
                    };
                    Val::Node(b.map(prod, UnaryFn::Exp)?)
                }
                (op, lv, rv) => {
                    let x = node(b, lv);
                    let y = node(b, rv);
                    Val::Node(match op {
                        '+' => b.add(x, y)?,
                        '-' => b.sub(x, y)?,
                        '*' => b.mul(x, y)?,
                        '/' => b.div(x, y)?,
                        _ => unreachable!("operators are + - * / ^"),
                    })
                }
            }
        }
    })
}

/// Parses `src` into a scalar field over `dim` coordinates.
pub fn parse_field(src: &str, dim: usize) -> Result<FieldExpr> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        dim,
    };
    let ast = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    let mut b = ExprBuilder::new(dim);
    let v = lower(&ast, &mut b)?;
    let out = match v {
        Val::Const(c) => b.constant(vec![c])?,
        Val::Node(n) => n,
    };
    b.finish(out)
}

//! Arithmetic expressions in the CUSTOM function syntax.
//!
//! Grammar accepted by [`parse`]:
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | primary ;
//! primary = number | ident | "exp" "(" expr ")" | "(" expr ")" ;
//! number  = digit { digit } [ "." { digit } ] [ ("e" | "E") [ "+" | "-" ] digit { digit } ] ;
//! ident   = letter { letter | digit | "_" } ;
//! ```
//!
//! Subtrees are reference counted so that generated expressions can share
//! repeated pieces without copying them.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::rc::Rc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Rc<Expr>),
    Bin(BinOp, Rc<Expr>, Rc<Expr>),
    Exp(Rc<Expr>),
    /// Explicit parentheses, kept so printing reproduces parsed text.
    Group(Rc<Expr>),
}

const ATOM: u8 = 4;
const UNARY: u8 = 3;

impl Expr {
    pub fn num(x: f64) -> Rc<Self> {
        Rc::new(Expr::Num(x))
    }

    pub fn var(name: impl Into<String>) -> Rc<Self> {
        Rc::new(Expr::Var(name.into()))
    }

    pub fn negate(e: Rc<Self>) -> Rc<Self> {
        Rc::new(Expr::Neg(e))
    }

    pub fn bin(op: BinOp, l: Rc<Self>, r: Rc<Self>) -> Rc<Self> {
        Rc::new(Expr::Bin(op, l, r))
    }

    pub fn exp(e: Rc<Self>) -> Rc<Self> {
        Rc::new(Expr::Exp(e))
    }

    pub fn group(e: Rc<Self>) -> Rc<Self> {
        Rc::new(Expr::Group(e))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.precedence(),
            Expr::Neg(_) => UNARY,
            _ => ATOM,
        }
    }

    /// Evaluate with a lookup for variable values.
    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        Ok(match self {
            Expr::Num(x) => *x,
            Expr::Var(name) => lookup(name).ok_or_else(|| Error::UnknownVariable(name.clone()))?,
            Expr::Neg(e) => -e.eval_with(lookup)?,
            Expr::Exp(e) => e.eval_with(lookup)?.exp(),
            Expr::Group(e) => e.eval_with(lookup)?,
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval_with(lookup)?, r.eval_with(lookup)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
        })
    }

    /// Evaluate with `v1, v2, ...` bound to `values` in order.
    pub fn eval_indexed(&self, values: &[f64]) -> Result<f64> {
        self.eval_with(&|name| {
            let i: usize = name.strip_prefix('v')?.parse().ok()?;
            values.get(i.checked_sub(1)?).copied()
        })
    }

    /// Evaluate with named variables.
    pub fn eval(&self, vars: &HashMap<String, f64>) -> Result<f64> {
        self.eval_with(&|name| vars.get(name).copied())
    }

    /// Length of the printed text, counting shared subtrees once per use.
    pub fn printed_len(&self) -> u128 {
        let mut memo = HashMap::new();
        len_of(self, 0, &mut memo)
    }

    fn write_to(&self, out: &mut String, min_prec: u8) {
        let wrap = self.precedence() < min_prec;
        if wrap {
            out.push('(');
        }
        match self {
            Expr::Num(x) => out.push_str(&fmt_number(*x)),
            Expr::Var(name) => out.push_str(name),
            Expr::Neg(e) => {
                out.push('-');
                e.write_to(out, UNARY);
            }
            Expr::Exp(e) => {
                out.push_str("exp(");
                e.write_to(out, 0);
                out.push(')');
            }
            Expr::Group(e) => {
                out.push('(');
                e.write_to(out, 0);
                out.push(')');
            }
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                l.write_to(out, p);
                out.push(op.symbol());
                // left associative: a right operand of equal precedence needs parentheses
                r.write_to(out, p + 1);
            }
        }
        if wrap {
            out.push(')');
        }
    }
}

fn len_of(e: &Expr, min_prec: u8, memo: &mut HashMap<(*const Expr, u8), u128>) -> u128 {
    let key = (e as *const Expr, min_prec);
    if let Some(&n) = memo.get(&key) {
        return n;
    }
    let wrap = if e.precedence() < min_prec { 2 } else { 0 };
    let n = wrap
        + match e {
            Expr::Num(x) => fmt_number(*x).len() as u128,
            Expr::Var(name) => name.len() as u128,
            Expr::Neg(inner) => 1 + len_of(inner, UNARY, memo),
            Expr::Exp(inner) => 5 + len_of(inner, 0, memo),
            Expr::Group(inner) => 2 + len_of(inner, 0, memo),
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                len_of(l, p, memo) + 1 + len_of(r, p + 1, memo)
            }
        };
    memo.insert(key, n);
    n
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_to(&mut s, 0);
        f.write_str(&s)
    }
}

/// Shortest text that parses back to the same double. Negative values are
/// parenthesized so they can follow any operator.
pub fn fmt_number(x: f64) -> String {
    let a = x.abs();
    let mut s = String::new();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        write!(s, "{a:e}").expect("write to string");
    } else {
        write!(s, "{a}").expect("write to string");
    }
    if x.is_sign_negative() && x != 0.0 {
        format!("(-{s})")
    } else {
        s
    }
}

/// Parse the concrete syntax produced by the emitter.
pub fn parse(text: &str) -> Result<Rc<Expr>> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

/// Parse and evaluate in one go.
pub fn eval_expression(text: &str, vars: &HashMap<String, f64>) -> Result<f64> {
    parse(text)?.eval(vars)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        let found = match self.src.get(self.pos) {
            Some(&c) => format!(", found `{}`", c as char),
            None => ", found end of input".to_string(),
        };
        Error::Parse { pos: self.pos, msg: format!("{msg}{found}") }
    }

    fn skip_ws(&mut self) {
        while self.src.get(self.pos).is_some_and(u8::is_ascii_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Rc<Expr>> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::bin(op, lhs, self.term()?);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Rc<Expr>> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::bin(op, lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Rc<Expr>> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::negate(self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Rc<Expr>> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(Expr::group(e))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.src.get(self.pos).is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_') {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
                if name == "exp" && self.peek() == Some(b'(') {
                    self.pos += 1;
                    let e = self.expr()?;
                    self.expect(b')')?;
                    Ok(Expr::exp(e))
                } else {
                    Ok(Expr::var(name))
                }
            }
            _ => Err(self.error("expected a number, variable, `exp(` or `(`")),
        }
    }

    fn number(&mut self) -> Result<Rc<Expr>> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.src.get(p.pos).is_some_and(u8::is_ascii_digit) {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                return Err(self.error("missing exponent digits"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        text.parse::<f64>()
            .map(Expr::num)
            .map_err(|_| Error::Parse { pos: start, msg: format!("malformed number `{text}`") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vars(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(eval_expression("1/(1+exp(-0))", &HashMap::new()).unwrap(), 0.5);
    }

    #[test]
    fn simple_arithmetic() {
        assert_eq!(eval_expression("(2*v1)/(2)", &vars(&[("v1", 3.0)])).unwrap(), 3.0);
        assert_eq!(eval_expression("1-2-3", &HashMap::new()).unwrap(), -4.0);
        assert_eq!(eval_expression("8/4/2", &HashMap::new()).unwrap(), 1.0);
        assert_eq!(eval_expression("2+3*4", &HashMap::new()).unwrap(), 14.0);
        assert_eq!(eval_expression("--2", &HashMap::new()).unwrap(), 2.0);
        assert_eq!(eval_expression("1.5e2 + .5", &HashMap::new()).unwrap(), 150.5);
    }

    #[test]
    fn errors_carry_positions() {
        match parse("1+*2") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 2),
            other => panic!("{other:?}"),
        }
        match parse("(1+2") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("1e"), Err(Error::Parse { .. })));
        assert!(matches!(parse("2 3"), Err(Error::Parse { pos: 2, .. })));
        assert!(matches!(
            eval_expression("v1+v2", &vars(&[("v1", 1.0)])),
            Err(Error::UnknownVariable(v)) if v == "v2"
        ));
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_number(1.0), "1");
        assert_eq!(fmt_number(0.0), "0");
        assert_eq!(fmt_number(0.1), "0.1");
        assert_eq!(fmt_number(-2.5), "(-2.5)");
        assert_eq!(fmt_number(1e-7), "1e-7");
        assert_eq!(fmt_number(-3e20), "(-3e20)");
        assert_eq!(fmt_number(1.0 / 3.0), "0.3333333333333333");
    }

    #[test]
    fn printer_adds_needed_parentheses() {
        let e = Expr::bin(BinOp::Sub, Expr::var("a"), Expr::bin(BinOp::Add, Expr::var("b"), Expr::var("c")));
        assert_eq!(e.to_string(), "a-(b+c)");
        let e = Expr::bin(BinOp::Mul, Expr::negate(Expr::var("a")), Expr::var("b"));
        assert_eq!(e.to_string(), "-a*b");
        let e = Expr::negate(Expr::bin(BinOp::Mul, Expr::var("a"), Expr::var("b")));
        assert_eq!(e.to_string(), "-(a*b)");
        assert_eq!(e.printed_len(), 6);
    }

    fn arb_expr() -> impl Strategy<Value = Rc<Expr>> {
        let leaf = prop_oneof![
            (-1e3..1e3f64).prop_map(Expr::num),
            (1usize..4).prop_map(|i| Expr::var(format!("v{i}"))),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Expr::negate),
                inner.clone().prop_map(|e| Expr::exp(Expr::bin(BinOp::Mul, Expr::num(1e-3), e))),
                inner.clone().prop_map(Expr::group),
                (inner.clone(), inner.clone(), 0..4usize).prop_map(|(l, r, k)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][k];
                    Expr::bin(op, l, r)
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr(), x in prop::collection::vec(-2.0..2.0f64, 3)) {
            let text = e.to_string();
            prop_assert_eq!(text.len() as u128, e.printed_len());
            let back = parse(&text).unwrap();
            prop_assert_eq!(back.to_string(), text.clone());
            let a = e.eval_indexed(&x).unwrap();
            let b = back.eval_indexed(&x).unwrap();
            prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()), "{} vs {} for {}", a, b, text);
        }

        #[test]
        fn numbers_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            let back = parse(&fmt_number(x)).unwrap().eval_indexed(&[]).unwrap();
            prop_assert_eq!(back.to_bits(), if x == 0.0 { 0.0f64.to_bits() } else { x.to_bits() });
        }
    }
}

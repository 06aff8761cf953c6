use num_complex::Complex64;

use super::expr::{ClassicalExpr, Coord, FunctionRegistry};
use super::ObservableError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Imag(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ObservableError> {
    let chars: Vec<char> = src.chars().collect();
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
            let v: f64 =
                text.parse().map_err(|_| ObservableError::Parse { pos: start, msg: format!("bad number '{text}'") })?;
            let imag = i < chars.len() && chars[i] == 'i' && !(i + 1 < chars.len() && chars[i + 1].is_alphanumeric());
            if imag {
                i += 1;
                out.push((start, Tok::Imag(v)));
            } else {
                out.push((start, Tok::Num(v)));
            }
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((start, Tok::Ident(chars[start..i].iter().collect())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            return Err(ObservableError::Parse { pos: i, msg: format!("unexpected character '{c}'") });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    registry: &'a FunctionRegistry,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ObservableError> {
        Err(ObservableError::Parse { pos: self.at(), msg: msg.into() })
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<ClassicalExpr, ObservableError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat('+') {
                terms.push(self.term()?);
            } else if self.eat('-') {
                terms.push(ClassicalExpr::Product(vec![ClassicalExpr::constant(-1.0), self.term()?]));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { ClassicalExpr::Sum(terms) })
    }

    fn term(&mut self) -> Result<ClassicalExpr, ObservableError> {
        let mut factors = vec![self.unary()?];
        loop {
            if self.eat('*') {
                factors.push(self.unary()?);
            } else if self.eat('/') {
                let at = self.at();
                let d = self.unary()?;
                let c = constant_value(&d)
                    .ok_or(ObservableError::Parse { pos: at, msg: "division only by a constant".into() })?;
                if c.norm() == 0.0 {
                    return Err(ObservableError::Parse { pos: at, msg: "division by zero".into() });
                }
                factors.push(ClassicalExpr::Const(c.inv()));
            } else {
                break;
            }
        }
        Ok(if factors.len() == 1 { factors.pop().unwrap() } else { ClassicalExpr::Product(factors) })
    }

    fn unary(&mut self) -> Result<ClassicalExpr, ObservableError> {
        if self.eat('-') {
            return Ok(ClassicalExpr::Product(vec![ClassicalExpr::constant(-1.0), self.unary()?]));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<ClassicalExpr, ObservableError> {
        let base = self.atom()?;
        if self.eat('^') {
            match self.peek().cloned() {
                Some(Tok::Num(v)) if v >= 0.0 && v.fract() == 0.0 && v <= 64.0 => {
                    self.pos += 1;
                    Ok(ClassicalExpr::Pow(Box::new(base), v as u32))
                }
                _ => self.err("exponent must be a non-negative integer literal"),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<ClassicalExpr, ObservableError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(ClassicalExpr::constant(v))
            }
            Some(Tok::Imag(v)) => {
                self.pos += 1;
                Ok(ClassicalExpr::Const(Complex64::new(0.0, v)))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected ')'");
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                self.ident(&name)
            }
            Some(Tok::Op(c)) => self.err(format!("unexpected '{c}'")),
            None => self.err("unexpected end of input"),
        }
    }

    fn call_arg(&mut self, name: &str) -> Result<ClassicalExpr, ObservableError> {
        if !self.eat('(') {
            return self.err(format!("expected '(' after {name}"));
        }
        let e = self.expr()?;
        if !self.eat(')') {
            return self.err("expected ')'");
        }
        Ok(e)
    }

    fn ident(&mut self, name: &str) -> Result<ClassicalExpr, ObservableError> {
        if name == "i" {
            return Ok(ClassicalExpr::Const(Complex64::new(0.0, 1.0)));
        }
        if let Some(v) = variable(name) {
            return Ok(v);
        }
        if name == "exp" {
            let at = self.at();
            let arg = self.call_arg(name)?;
            let n = arg.dof();
            let lin =
                arg.as_linear(n).ok_or(ObservableError::Parse { pos: at, msg: "exp() takes a linear form".into() })?;
            return Ok(ClassicalExpr::Exp(lin));
        }
        if let Some((func, growth)) = self.registry.get(name).cloned() {
            let arg = self.call_arg(name)?;
            return ClassicalExpr::opaque(name, arg, func, growth);
        }
        self.err(format!("unknown identifier '{name}'"))
    }
}

fn variable(name: &str) -> Option<ClassicalExpr> {
    let mut chars = name.chars();
    let coord = match chars.next()? {
        'q' | 'Q' => Coord::Q,
        'p' | 'P' => Coord::P,
        _ => return None,
    };
    let rest: String = chars.collect();
    if rest.is_empty() {
        return Some(ClassicalExpr::Var(coord, 0));
    }
    let k: usize = rest.parse().ok()?;
    if k == 0 {
        return None;
    }
    Some(ClassicalExpr::Var(coord, k - 1))
}

fn constant_value(e: &ClassicalExpr) -> Option<Complex64> {
    let n = e.dof();
    let lin = e.as_linear(n)?;
    if lin.q.iter().chain(&lin.p).all(|c| c.norm() == 0.0) {
        Some(lin.offset)
    } else {
        None
    }
}

/// Parses an observable; upper- and lower-case coordinate names share slots.
pub fn parse_expr(src: &str, registry: &FunctionRegistry) -> Result<ClassicalExpr, ObservableError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, end: src.len(), registry };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

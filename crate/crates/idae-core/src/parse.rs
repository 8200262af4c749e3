//! Parser for the IDAE system DSL.
//!
//! ```text
//! system <name> {
//!   time t from <t0>;
//!   var x1, x2, ...;
//!   param J = 1;
//!   eq <expr> = 0;
//! }
//! ```
//!
//! `der(x,k)` denotes the k-th derivative of x. Inside `int(...)` variables are
//! implicitly at the integration dummy `s` (an explicit `(s)` suffix is also
//! accepted), the kernel symbol `(t-s)` is the only legal appearance of `t`,
//! and products may carry at most one integral factor. Parameters are inlined
//! as exact rational constants; parameters named `xi<k>` are recognized as
//! embedding constants so reduced systems round-trip.

use crate::error::ParseError;
use crate::expr::{rat_int, Expr, JetVar, Rat, UnaryFn, VarKind};
use crate::model::{IdaeEquation, IdaeSystem, IntegralTerm, VariableInfo};
use num_bigint::BigInt;
use num_traits::{Pow, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(Rat),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Eq,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl Lexer<'_> {
    fn bump(&mut self) -> char {
        let c = self.chars.next().unwrap();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer { chars: text.chars().peekable(), line: 1, col: 1 };
    let mut toks = Vec::new();
    while let Some(&c) = lx.chars.peek() {
        let (line, col) = (lx.line, lx.col);
        if c.is_whitespace() {
            lx.bump();
            continue;
        }
        if c == '#' {
            while lx.chars.peek().map(|&c| c != '\n').unwrap_or(false) {
                lx.bump();
            }
            continue;
        }
        let tok = match c {
            '{' => { lx.bump(); Tok::LBrace }
            '}' => { lx.bump(); Tok::RBrace }
            '(' => { lx.bump(); Tok::LParen }
            ')' => { lx.bump(); Tok::RParen }
            ',' => { lx.bump(); Tok::Comma }
            ';' => { lx.bump(); Tok::Semi }
            '=' => { lx.bump(); Tok::Eq }
            '+' => { lx.bump(); Tok::Plus }
            '-' => { lx.bump(); Tok::Minus }
            '*' => { lx.bump(); Tok::Star }
            '/' => { lx.bump(); Tok::Slash }
            '^' => { lx.bump(); Tok::Caret }
            c if c.is_ascii_digit() => {
                let mut num = String::new();
                let mut seen_dot = false;
                while let Some(&c2) = lx.chars.peek() {
                    if c2.is_ascii_digit() || (c2 == '.' && !seen_dot) {
                        seen_dot |= c2 == '.';
                        num.push(lx.bump());
                    } else {
                        break;
                    }
                }
                Tok::Number(parse_decimal(&num).ok_or_else(|| {
                    ParseError::new(line, col, format!("invalid number literal `{num}`"))
                })?)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut id = String::new();
                while let Some(&c2) = lx.chars.peek() {
                    if c2.is_ascii_alphanumeric() || c2 == '_' {
                        id.push(lx.bump());
                    } else {
                        break;
                    }
                }
                Tok::Ident(id)
            }
            other => {
                return Err(ParseError::new(line, col, format!("unexpected character `{other}`")));
            }
        };
        toks.push(Token { tok, line, col });
    }
    Ok(toks)
}

fn parse_decimal(s: &str) -> Option<Rat> {
    if let Some(dot) = s.find('.') {
        let whole = &s[..dot];
        let frac = &s[dot + 1..];
        if frac.is_empty() {
            return whole.parse::<BigInt>().ok().map(Rat::from_integer);
        }
        let denom = BigInt::from(10u32).pow(frac.len() as u32);
        let combined: BigInt = format!("{whole}{frac}").parse().ok()?;
        Some(Rat::new(combined, denom))
    } else {
        s.parse::<BigInt>().ok().map(Rat::from_integer)
    }
}

/// Lowered equation-level expression: a part at time t plus integral terms.
#[derive(Debug, Clone)]
struct Lowered {
    dae: Expr,
    ints: Vec<IntegralTerm>,
}

impl Lowered {
    fn pure(e: Expr) -> Self {
        Lowered { dae: e, ints: Vec::new() }
    }
    fn neg(self) -> Self {
        Lowered {
            dae: self.dae.neg(),
            ints: self.ints.into_iter().map(|t| scale_term(&t, &-rat_int(1))).collect(),
        }
    }
    fn scale(self, c: &Rat) -> Self {
        Lowered {
            dae: self.dae.scale(c),
            ints: self.ints.into_iter().map(|t| scale_term(&t, c)).collect(),
        }
    }
}

fn scale_term(t: &IntegralTerm, c: &Rat) -> IntegralTerm {
    IntegralTerm::new(t.kernel.iter().map(|a| a * c).collect(), t.integrand.clone())
}

/// Inside an integral: a polynomial in (t-s) with expression coefficients.
#[derive(Debug, Clone)]
struct KernelPoly {
    coeffs: Vec<Expr>,
}

impl KernelPoly {
    fn scalar(e: Expr) -> Self {
        KernelPoly { coeffs: vec![e] }
    }
    fn ts() -> Self {
        KernelPoly { coeffs: vec![Expr::zero(), Expr::one()] }
    }
    fn add(&self, o: &KernelPoly) -> KernelPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        let mut coeffs = vec![Expr::zero(); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs[i] = coeffs[i].add(c);
        }
        for (i, c) in o.coeffs.iter().enumerate() {
            coeffs[i] = coeffs[i].add(c);
        }
        KernelPoly { coeffs }
    }
    fn neg(&self) -> KernelPoly {
        KernelPoly { coeffs: self.coeffs.iter().map(Expr::neg).collect() }
    }
    fn mul(&self, o: &KernelPoly) -> KernelPoly {
        let mut coeffs = vec![Expr::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                coeffs[i + j] = coeffs[i + j].add(&a.mul(b));
            }
        }
        KernelPoly { coeffs }
    }
    fn powi(&self, n: u32) -> KernelPoly {
        let mut acc = KernelPoly::scalar(Expr::one());
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }
    fn as_scalar(&self) -> Option<&Expr> {
        if self.coeffs.len() == 1 {
            Some(&self.coeffs[0])
        } else {
            None
        }
    }
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    vars: BTreeMap<String, usize>,
    params: BTreeMap<String, Rat>,
    xi_values: Vec<Rat>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn err_here(&self, msg: impl Into<String>) -> ParseError {
        match self.toks.get(self.pos).or_else(|| self.toks.last()) {
            Some(t) => ParseError::new(t.line, t.col, msg),
            None => ParseError::new(1, 1, msg),
        }
    }

    fn next(&mut self) -> Result<Token, ParseError> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err_here("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        let t = self.next()?;
        if t.tok == tok {
            Ok(())
        } else {
            Err(ParseError::new(t.line, t.col, format!("expected {what}, found {:?}", t.tok)))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, usize, usize), ParseError> {
        let t = self.next()?;
        match t.tok {
            Tok::Ident(s) => Ok((s, t.line, t.col)),
            other => Err(ParseError::new(t.line, t.col, format!("expected identifier, found {other:?}"))),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_signed_number(&mut self) -> Result<Rat, ParseError> {
        let neg = self.eat(&Tok::Minus);
        let t = self.next()?;
        let mut value = match t.tok {
            Tok::Number(r) => r,
            other => {
                return Err(ParseError::new(t.line, t.col, format!("expected number, found {other:?}")));
            }
        };
        if self.eat(&Tok::Slash) {
            let d = self.next()?;
            match d.tok {
                Tok::Number(r) if !r.is_zero() => value /= r,
                _ => return Err(ParseError::new(d.line, d.col, "expected nonzero denominator")),
            }
        }
        Ok(if neg { -value } else { value })
    }

    fn parse_exponent(&mut self) -> Result<u32, ParseError> {
        let t = self.next()?;
        match &t.tok {
            Tok::Number(r) if r.is_integer() && !r.is_negative() => r
                .to_integer()
                .to_u32()
                .ok_or_else(|| ParseError::new(t.line, t.col, "exponent too large")),
            _ => Err(ParseError::new(t.line, t.col, "expected a nonnegative integer exponent")),
        }
    }

    // ---- equation-level expressions (integrals allowed) ----

    fn parse_expr(&mut self) -> Result<Lowered, ParseError> {
        let mut acc = self.parse_term()?;
        loop {
            if self.eat(&Tok::Plus) {
                let r = self.parse_term()?;
                acc.dae = acc.dae.add(&r.dae);
                acc.ints.extend(r.ints);
            } else if self.eat(&Tok::Minus) {
                let r = self.parse_term()?.neg();
                acc.dae = acc.dae.add(&r.dae);
                acc.ints.extend(r.ints);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn parse_term(&mut self) -> Result<Lowered, ParseError> {
        let mut acc = self.parse_factor()?;
        loop {
            if self.eat(&Tok::Star) {
                let r = self.parse_factor()?;
                acc = self.lowered_mul(acc, r)?;
            } else if self.eat(&Tok::Slash) {
                let r = self.parse_factor()?;
                let c = r
                    .ints
                    .is_empty()
                    .then(|| r.dae.as_constant())
                    .flatten()
                    .filter(|c| !c.is_zero())
                    .ok_or_else(|| self.err_here("division is only supported by nonzero constants"))?;
                let inv = Rat::new(c.denom().clone(), c.numer().clone());
                acc = acc.scale(&inv);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn lowered_mul(&self, a: Lowered, b: Lowered) -> Result<Lowered, ParseError> {
        if !a.ints.is_empty() && !b.ints.is_empty() {
            return Err(self.err_here("products of integrals are not supported"));
        }
        if a.ints.is_empty() && b.ints.is_empty() {
            return Ok(Lowered::pure(a.dae.mul(&b.dae)));
        }
        let (with_int, other) = if a.ints.is_empty() { (b, a) } else { (a, b) };
        let c = other
            .dae
            .as_constant()
            .ok_or_else(|| self.err_here("an integral may only be scaled by a constant"))?;
        Ok(with_int.scale(&c))
    }

    fn parse_factor(&mut self) -> Result<Lowered, ParseError> {
        if self.eat(&Tok::Minus) {
            return Ok(self.parse_factor()?.neg());
        }
        let base = self.parse_primary()?;
        if self.eat(&Tok::Caret) {
            if !base.ints.is_empty() {
                return Err(self.err_here("integrals cannot be raised to powers"));
            }
            let p = self.parse_exponent()?;
            return Ok(Lowered::pure(base.dae.powi(p)));
        }
        Ok(base)
    }

    fn parse_primary(&mut self) -> Result<Lowered, ParseError> {
        if let Some(Tok::Ident(name)) = self.peek() {
            if name == "int" {
                self.pos += 1;
                self.expect(Tok::LParen, "`(` after int")?;
                let poly = self.parse_kernel_sum()?;
                self.expect(Tok::RParen, "`)` after integrand")?;
                let ints = poly
                    .coeffs
                    .into_iter()
                    .enumerate()
                    .filter(|(_, g)| !g.is_zero())
                    .map(|(k, g)| IntegralTerm::monomial(rat_int(1), k, g))
                    .collect();
                return Ok(Lowered { dae: Expr::zero(), ints });
            }
        }
        let t = self.next()?;
        match t.tok {
            Tok::Number(r) => Ok(Lowered::pure(Expr::constant(r))),
            Tok::LParen => {
                let inner = self.parse_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => Ok(Lowered::pure(self.parse_named(name, t.line, t.col, false)?)),
            other => Err(ParseError::new(t.line, t.col, format!("expected expression, found {other:?}"))),
        }
    }

    /// Resolve identifiers: variables, der(...), functions, params, t/s.
    fn parse_named(
        &mut self,
        name: String,
        line: usize,
        col: usize,
        in_integral: bool,
    ) -> Result<Expr, ParseError> {
        match name.as_str() {
            "t" => {
                if in_integral {
                    Err(ParseError::new(line, col, "bare t inside an integrand; use the kernel (t-s)"))
                } else {
                    Ok(Expr::t())
                }
            }
            "s" => {
                if in_integral {
                    Ok(Expr::s())
                } else {
                    Err(ParseError::new(line, col, "the integration dummy s is only legal inside int(...)"))
                }
            }
            "der" => {
                self.expect(Tok::LParen, "`(` after der")?;
                let (var, vl, vc) = self.expect_ident()?;
                let idx = *self
                    .vars
                    .get(&var)
                    .ok_or_else(|| ParseError::new(vl, vc, format!("unknown variable `{var}` in der")))?;
                self.expect(Tok::Comma, "`,` in der")?;
                let ord = self.parse_exponent()?;
                self.expect(Tok::RParen, "`)` after der")?;
                if in_integral {
                    self.maybe_at_s()?;
                }
                Ok(Expr::var(JetVar::state(idx, ord)))
            }
            _ => {
                if let Some(f) = UnaryFn::from_name(&name) {
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let arg = if in_integral {
                        let poly = self.parse_kernel_sum()?;
                        if poly.coeffs.len() > 1 {
                            return Err(self.err_here("(t-s) may not appear inside function arguments"));
                        }
                        poly.coeffs.into_iter().next().unwrap_or_else(Expr::zero)
                    } else {
                        let lowered = self.parse_expr()?;
                        if !lowered.ints.is_empty() {
                            return Err(self.err_here("integrals may not appear inside function arguments"));
                        }
                        lowered.dae
                    };
                    self.expect(Tok::RParen, "`)` after function argument")?;
                    return Ok(Expr::func(f, arg));
                }
                if let Some(&idx) = self.vars.get(&name) {
                    if in_integral {
                        self.maybe_at_s()?;
                    }
                    return Ok(Expr::var(JetVar::state(idx, 0)));
                }
                if let Some(k) = name
                    .strip_prefix("xi")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1 && k <= self.xi_values.len())
                {
                    return Ok(Expr::var(JetVar::xi(k - 1)));
                }
                if let Some(v) = self.params.get(&name) {
                    return Ok(Expr::constant(v.clone()));
                }
                Err(ParseError::new(
                    line,
                    col,
                    format!("unknown identifier `{name}` (functions are limited to sin, cos, exp, tanh)"),
                ))
            }
        }
    }

    /// Optional `(s)` suffix on variables inside integrands.
    fn maybe_at_s(&mut self) -> Result<(), ParseError> {
        if self.peek() == Some(&Tok::LParen) {
            let save = self.pos;
            self.pos += 1;
            if let Ok(Token { tok: Tok::Ident(ref s), .. }) = self.next() {
                if s == "s" && self.eat(&Tok::RParen) {
                    return Ok(());
                }
            }
            self.pos = save;
        }
        Ok(())
    }

    // ---- integral bodies: polynomials in (t-s) with expression coefficients ----

    fn parse_kernel_sum(&mut self) -> Result<KernelPoly, ParseError> {
        let mut acc = self.parse_kernel_term()?;
        loop {
            if self.eat(&Tok::Plus) {
                acc = acc.add(&self.parse_kernel_term()?);
            } else if self.eat(&Tok::Minus) {
                acc = acc.add(&self.parse_kernel_term()?.neg());
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn parse_kernel_term(&mut self) -> Result<KernelPoly, ParseError> {
        let mut acc = self.parse_kernel_factor()?;
        loop {
            if self.eat(&Tok::Star) {
                acc = acc.mul(&self.parse_kernel_factor()?);
            } else if self.eat(&Tok::Slash) {
                let r = self.parse_kernel_factor()?;
                let c = r
                    .as_scalar()
                    .and_then(Expr::as_constant)
                    .filter(|c| !c.is_zero())
                    .ok_or_else(|| self.err_here("division inside integrands is only supported by nonzero constants"))?;
                let inv = Rat::new(c.denom().clone(), c.numer().clone());
                acc = KernelPoly { coeffs: acc.coeffs.iter().map(|e| e.scale(&inv)).collect() };
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn parse_kernel_factor(&mut self) -> Result<KernelPoly, ParseError> {
        if self.eat(&Tok::Minus) {
            return Ok(self.parse_kernel_factor()?.neg());
        }
        let base = self.parse_kernel_primary()?;
        if self.eat(&Tok::Caret) {
            let p = self.parse_exponent()?;
            return Ok(base.powi(p));
        }
        Ok(base)
    }

    fn parse_kernel_primary(&mut self) -> Result<KernelPoly, ParseError> {
        if self.peek() == Some(&Tok::LParen) {
            // the token sequence `( t - s )` is the kernel symbol
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(Tok::Ident(s)) if s == "t") {
                self.pos += 1;
                if self.eat(&Tok::Minus)
                    && matches!(self.peek(), Some(Tok::Ident(s)) if s == "s")
                {
                    self.pos += 1;
                    if self.eat(&Tok::RParen) {
                        return Ok(KernelPoly::ts());
                    }
                }
            }
            self.pos = save + 1;
            let inner = self.parse_kernel_sum()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(inner);
        }
        let t = self.next()?;
        match t.tok {
            Tok::Number(r) => Ok(KernelPoly::scalar(Expr::constant(r))),
            Tok::Ident(name) => {
                let e = self.parse_named(name, t.line, t.col, true)?;
                Ok(KernelPoly::scalar(e))
            }
            other => Err(ParseError::new(t.line, t.col, format!("expected integrand expression, found {other:?}"))),
        }
    }
}

/// Parse a complete system definition.
pub fn parse_system(text: &str) -> Result<IdaeSystem, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        vars: BTreeMap::new(),
        params: BTreeMap::new(),
        xi_values: Vec::new(),
    };

    let (kw, l, c) = p.expect_ident()?;
    if kw != "system" {
        return Err(ParseError::new(l, c, "expected `system`"));
    }
    let (name, _, _) = p.expect_ident()?;
    p.expect(Tok::LBrace, "`{`")?;

    let (kw, l, c) = p.expect_ident()?;
    if kw != "time" {
        return Err(ParseError::new(l, c, "expected `time`"));
    }
    let (tname, l, c) = p.expect_ident()?;
    if tname != "t" {
        return Err(ParseError::new(l, c, "the independent variable must be named t"));
    }
    let (kw, l, c) = p.expect_ident()?;
    if kw != "from" {
        return Err(ParseError::new(l, c, "expected `from`"));
    }
    let t0 = p.parse_signed_number()?;
    p.expect(Tok::Semi, "`;`")?;

    let (kw, l, c) = p.expect_ident()?;
    if kw != "var" {
        return Err(ParseError::new(l, c, "expected `var`"));
    }
    let mut names = Vec::new();
    loop {
        let (n, l, c) = p.expect_ident()?;
        if ["t", "s", "int", "der", "sin", "cos", "exp", "tanh"].contains(&n.as_str()) {
            return Err(ParseError::new(l, c, format!("`{n}` is reserved and cannot name a variable")));
        }
        if p.vars.contains_key(&n) {
            return Err(ParseError::new(l, c, format!("duplicate variable `{n}`")));
        }
        p.vars.insert(n.clone(), names.len());
        names.push(n);
        if !p.eat(&Tok::Comma) {
            break;
        }
    }
    p.expect(Tok::Semi, "`;`")?;

    let mut params = BTreeMap::new();
    let mut equations = Vec::new();
    loop {
        if p.eat(&Tok::RBrace) {
            break;
        }
        let (kw, l, c) = p.expect_ident()?;
        match kw.as_str() {
            "param" => {
                let (n, nl, nc) = p.expect_ident()?;
                p.expect(Tok::Eq, "`=`")?;
                let v = p.parse_signed_number()?;
                p.expect(Tok::Semi, "`;`")?;
                if let Some(k) = n
                    .strip_prefix("xi")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                {
                    if p.xi_values.len() < k {
                        p.xi_values.resize(k, Rat::zero());
                    }
                    p.xi_values[k - 1] = v;
                } else {
                    if p.vars.contains_key(&n) {
                        return Err(ParseError::new(nl, nc, format!("`{n}` is already a variable")));
                    }
                    params.insert(n.clone(), v.clone());
                    p.params.insert(n, v);
                }
            }
            "eq" => {
                let mut lowered = p.parse_expr()?;
                p.expect(Tok::Eq, "`=` in equation")?;
                let t = p.next()?;
                match t.tok {
                    Tok::Number(r) if r.is_zero() => {}
                    _ => return Err(ParseError::new(t.line, t.col, "equations must end in `= 0`")),
                }
                p.expect(Tok::Semi, "`;`")?;
                lowered.ints.retain(|t| !t.is_zero());
                equations.push(IdaeEquation::new(lowered.dae, lowered.ints));
            }
            other => {
                return Err(ParseError::new(l, c, format!("expected `param`, `eq` or `}}`, found `{other}`")));
            }
        }
    }

    let sys = IdaeSystem {
        name,
        variables: names
            .into_iter()
            .map(|n| VariableInfo { name: n, kind: VarKind::State })
            .collect(),
        t0,
        equations,
        parameters: params,
        xi_values: p.xi_values.clone(),
    };
    sys.validate().map_err(|e| match e {
        crate::error::IdaeError::Parse(pe) => pe,
        other => ParseError::new(1, 1, other.to_string()),
    })?;
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::rat;

    #[test]
    fn parses_two_stage_drive() {
        let text = r#"
system drive2 {
  time t from 0;
  var w1, w2, w3, w4;
  eq der(w1,1) + der(w2,1) + int(w1 - w2) + w1 - w2 + 2 - sin(t) = 0;
  eq int(w1^2 - w2^2) = 0;
  eq der(w3,1) + der(w4,1) + int(w3 - w4) + w3 - w4 + sin(t) - 1 = 0;
  eq int(w3^2 - w4^2) = 0;
}
"#;
        let sys = parse_system(text).unwrap();
        assert_eq!(sys.equations.len(), 4);
        assert_eq!(sys.n(), 4);
        for eq in &sys.equations {
            for term in &eq.integrals {
                assert_eq!(term.degree(), 0, "kernels must all be (t-s)^0");
            }
        }
        assert_eq!(sys.equations[1].dae, Expr::zero());
    }

    #[test]
    fn parses_degree_one_kernel_with_derivative_integrand() {
        let text = r#"
system smoothing {
  time t from 0;
  var x, y;
  eq y - der(x,2) = 0;
  eq int((t-s)^1 * (y(s)/2 - der(x,2)(s)) * y(s)) = 0;
}
"#;
        let sys = parse_system(text).unwrap();
        let terms = &sys.equations[1].integrals;
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].kernel, vec![Rat::zero(), rat_int(1)]);
        let y = Expr::var(JetVar::state(1, 0));
        let xdd = Expr::var(JetVar::state(0, 2));
        assert_eq!(terms[0].integrand, y.scale(&rat(1, 2)).sub(&xdd).mul(&y));
    }

    #[test]
    fn mixed_kernel_powers_split_into_terms() {
        let text = r#"
system split {
  time t from 0;
  var x1, x2;
  eq x1 = 0;
  eq int(x1 + x2 + (t-s) * x1 * x2) - t = 0;
}
"#;
        let sys = parse_system(text).unwrap();
        let terms = &sys.equations[1].integrals;
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[0].kernel, vec![rat_int(1)]);
        assert_eq!(terms[1].kernel, vec![Rat::zero(), rat_int(1)]);
    }

    #[test]
    fn empty_equation_is_a_parse_error() {
        let text = "system bad { time t from 0; var x; eq = 0; }";
        assert!(parse_system(text).is_err());
    }

    #[test]
    fn disallowed_function_rejected() {
        let text = "system bad { time t from 0; var x; eq log(x) = 0; }";
        let err = parse_system(text).unwrap_err();
        assert!(err.message.contains("unknown identifier"), "{err}");
    }

    #[test]
    fn bare_t_in_integrand_rejected() {
        let text = "system bad { time t from 0; var x; eq int(t * x) = 0; }";
        assert!(parse_system(text).is_err());
    }

    #[test]
    fn kernel_degree_cap_enforced() {
        let text = "system bad { time t from 0; var x; eq int((t-s)^5 * x) = 0; }";
        assert!(parse_system(text).is_err());
    }

    #[test]
    fn non_square_rejected() {
        let text = "system bad { time t from 0; var x, y; eq x = 0; }";
        assert!(parse_system(text).is_err());
    }

    #[test]
    fn scaled_integral_folds_into_kernel() {
        let text = r#"
system scaled {
  time t from 0;
  var x, y;
  param k = 3;
  eq der(x,1) + k * int(x - y) = 0;
  eq y - x = 0;
}
"#;
        let sys = parse_system(text).unwrap();
        let terms = &sys.equations[0].integrals;
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].kernel, vec![rat_int(3)]);
    }

    #[test]
    fn print_parse_roundtrip() {
        let text = r#"
system rt {
  time t from 0;
  var x, y;
  param k = 3/2;
  eq k * der(x,1) + y^2 - exp(-t) = 0;
  eq int((t-s) * (x(s) * y(s))) + int(x + y) - 1/2 = 0;
}
"#;
        let sys = parse_system(text).unwrap();
        let printed = sys.to_dsl();
        let reparsed = parse_system(&printed).unwrap();
        assert_eq!(reparsed.equations, sys.equations);
        assert_eq!(reparsed.to_dsl(), printed);
    }

    #[test]
    fn negative_exponent_rejected() {
        let text = "system bad { time t from 0; var x; eq x^-1 = 0; }";
        assert!(parse_system(text).is_err());
    }

    #[test]
    fn reserved_names_cannot_be_variables() {
        for name in ["t", "s", "sin", "der", "int"] {
            let text = format!("system bad {{ time t from 0; var {name}; eq {name} = 0; }}");
            assert!(parse_system(&text).is_err(), "`{name}` should be reserved");
        }
    }

    #[test]
    fn duplicate_variable_rejected() {
        let text = "system bad { time t from 0; var x, x; eq x = 0; eq x = 0; }";
        let err = parse_system(text).unwrap_err();
        assert!(err.message.contains("duplicate"), "{err}");
    }

    #[test]
    fn unknown_variable_in_der_rejected() {
        let text = "system bad { time t from 0; var x; eq der(y,1) = 0; }";
        let err = parse_system(text).unwrap_err();
        assert!(err.message.contains("unknown variable"), "{err}");
    }

    #[test]
    fn division_by_zero_rejected() {
        let text = "system bad { time t from 0; var x; eq x / 0 = 0; }";
        assert!(parse_system(text).is_err());
    }

    #[test]
    fn error_carries_line_and_column() {
        let text = "system bad {\n  time t from 0;\n  var x;\n  eq log(x) = 0;\n}";
        let err = parse_system(text).unwrap_err();
        assert_eq!(err.line, 4);
        assert!(err.column > 1);
    }

    #[test]
    fn xi_params_roundtrip_as_embedding_constants() {
        let text = r#"
system aug {
  time t from 0;
  var x, u1;
  param xi1 = 7/10;
  eq der(x,1) + xi1 * u1 = 0;
  eq u1 - x = 0;
}
"#;
        let sys = parse_system(text).unwrap();
        assert_eq!(sys.xi_values, vec![rat(7, 10)]);
        let printed = sys.to_dsl();
        let reparsed = parse_system(&printed).unwrap();
        assert_eq!(reparsed.equations, sys.equations);
        assert_eq!(reparsed.xi_values, sys.xi_values);
    }
}

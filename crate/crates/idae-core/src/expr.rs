//! Scalar expression algebra over the independent variable `t` and jet variables.
//!
//! Expressions are kept in a normal form: a sum of monomials with exact rational
//! coefficients, where each monomial is a power product of atoms. Analytic
//! function applications (`sin`, `cos`, `exp`, `tanh`) are atomic factors whose
//! argument is itself a normalized expression. Conversion to floating point
//! happens only at evaluation, so symbolic cancellation is exact.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Exact rational scalar used for all symbolic coefficients.
pub type Rat = BigRational;

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// What a jet variable stands for in the containing system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    /// Ordinary dependent variable of the model.
    State,
    /// Fresh unknown introduced by embedding (`u`).
    EmbeddedU,
    /// Embedding constant (`xi`); behaves as a constant under differentiation.
    EmbeddedXi,
    /// Auxiliary quadrature state produced by integral materialization.
    IntegralState,
}

/// The symbol `x_j^(k)` treated as an independent algebraic unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JetVar {
    pub kind: VarKind,
    pub index: usize,
    pub order: u32,
}

impl JetVar {
    pub fn state(index: usize, order: u32) -> Self {
        JetVar { kind: VarKind::State, index, order }
    }
    pub fn embedded_u(index: usize) -> Self {
        JetVar { kind: VarKind::EmbeddedU, index, order: 0 }
    }
    pub fn xi(index: usize) -> Self {
        JetVar { kind: VarKind::EmbeddedXi, index, order: 0 }
    }
    pub fn integral_state(index: usize) -> Self {
        JetVar { kind: VarKind::IntegralState, index, order: 0 }
    }
    /// Same variable, derivative order raised by `k`.
    pub fn raise(&self, k: u32) -> Self {
        JetVar { kind: self.kind, index: self.index, order: self.order + k }
    }
    pub fn is_constant(&self) -> bool {
        self.kind == VarKind::EmbeddedXi
    }
}

impl fmt::Display for JetVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.kind {
            VarKind::State => format!("x{}", self.index + 1),
            VarKind::EmbeddedU => format!("u{}", self.index + 1),
            VarKind::EmbeddedXi => format!("xi{}", self.index + 1),
            VarKind::IntegralState => format!("z{}", self.index + 1),
        };
        if self.order == 0 {
            write!(f, "{base}")
        } else {
            write!(f, "der({base},{})", self.order)
        }
    }
}

/// Fixed whitelist of unary analytic functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnaryFn {
    Sin,
    Cos,
    Exp,
    Tanh,
}

impl UnaryFn {
    pub fn name(&self) -> &'static str {
        match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Exp => "exp",
            UnaryFn::Tanh => "tanh",
        }
    }
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(UnaryFn::Sin),
            "cos" => Some(UnaryFn::Cos),
            "exp" => Some(UnaryFn::Exp),
            "tanh" => Some(UnaryFn::Tanh),
            _ => None,
        }
    }
}

/// Atomic factor of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    /// The independent variable.
    T,
    /// The integration dummy; only legal inside integrands.
    S,
    Jet(JetVar),
    Func(UnaryFn, Box<Expr>),
}

/// `coeff * prod(atom^power)`, factors sorted, powers >= 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub coeff: Rat,
    pub factors: Vec<(Atom, u32)>,
}

impl Monomial {
    fn constant(c: Rat) -> Self {
        Monomial { coeff: c, factors: Vec::new() }
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut factors: BTreeMap<Atom, u32> = BTreeMap::new();
        for (a, p) in self.factors.iter().chain(other.factors.iter()) {
            *factors.entry(a.clone()).or_insert(0) += *p;
        }
        Monomial {
            coeff: &self.coeff * &other.coeff,
            factors: factors.into_iter().collect(),
        }
    }
}

/// Normalized sum of monomials. Structural equality is decidable and the
/// normal form is idempotent by construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Expr {
    terms: Vec<Monomial>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ExprError {
    #[error("expression contains the integration dummy `s`; total derivatives apply only to equations at time t")]
    ContainsDummy,
    #[error("unassigned variable {0} during evaluation")]
    Unassigned(JetVar),
}

impl Expr {
    pub fn zero() -> Self {
        Expr { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Expr::constant(rat_int(1))
    }

    pub fn constant(c: Rat) -> Self {
        if c.is_zero() {
            Expr::zero()
        } else {
            Expr { terms: vec![Monomial::constant(c)] }
        }
    }

    pub fn int(n: i64) -> Self {
        Expr::constant(rat_int(n))
    }

    pub fn var(v: JetVar) -> Self {
        Expr::atom(Atom::Jet(v))
    }

    pub fn t() -> Self {
        Expr::atom(Atom::T)
    }

    pub fn s() -> Self {
        Expr::atom(Atom::S)
    }

    pub fn func(f: UnaryFn, arg: Expr) -> Self {
        Expr::atom(Atom::Func(f, Box::new(arg)))
    }

    fn atom(a: Atom) -> Self {
        Expr {
            terms: vec![Monomial { coeff: rat_int(1), factors: vec![(a, 1)] }],
        }
    }

    fn from_terms(terms: Vec<Monomial>) -> Self {
        let mut merged: BTreeMap<Vec<(Atom, u32)>, Rat> = BTreeMap::new();
        for m in terms {
            let entry = merged.entry(m.factors).or_insert_with(Rat::zero);
            *entry += m.coeff;
        }
        Expr {
            terms: merged
                .into_iter()
                .filter(|(_, c)| !c.is_zero())
                .map(|(factors, coeff)| Monomial { coeff, factors })
                .collect(),
        }
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The expression as a rational constant, if it is one.
    pub fn as_constant(&self) -> Option<Rat> {
        match self.terms.len() {
            0 => Some(Rat::zero()),
            1 if self.terms[0].factors.is_empty() => Some(self.terms[0].coeff.clone()),
            _ => None,
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Expr::from_terms(terms)
    }

    pub fn neg(&self) -> Expr {
        Expr {
            terms: self
                .terms
                .iter()
                .map(|m| Monomial { coeff: -m.coeff.clone(), factors: m.factors.clone() })
                .collect(),
        }
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(a.mul(b));
            }
        }
        Expr::from_terms(terms)
    }

    pub fn scale(&self, c: &Rat) -> Expr {
        self.mul(&Expr::constant(c.clone()))
    }

    pub fn powi(&self, n: u32) -> Expr {
        let mut acc = Expr::one();
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// Partial derivative with respect to a single jet variable.
    pub fn partial(&self, v: &JetVar) -> Expr {
        let mut out = Expr::zero();
        for m in &self.terms {
            out = out.add(&monomial_derivative(m, &mut |a| match a {
                Atom::Jet(w) if w == v => Expr::one(),
                Atom::Func(f, arg) => chain(*f, arg).mul(&arg.partial(v)),
                _ => Expr::zero(),
            }));
        }
        out
    }

    /// Partial derivative with respect to the explicit symbol `t`.
    pub fn partial_t(&self) -> Expr {
        let mut out = Expr::zero();
        for m in &self.terms {
            out = out.add(&monomial_derivative(m, &mut |a| match a {
                Atom::T => Expr::one(),
                Atom::Func(f, arg) => chain(*f, arg).mul(&arg.partial_t()),
                _ => Expr::zero(),
            }));
        }
        out
    }

    /// Formal total derivative: d/dt plus the shift x^(k) -> x^(k+1) on every
    /// jet variable. Embedding constants differentiate to zero.
    pub fn total_derivative(&self) -> Result<Expr, ExprError> {
        if self.contains_s() {
            return Err(ExprError::ContainsDummy);
        }
        Ok(self.total_derivative_unchecked())
    }

    fn total_derivative_unchecked(&self) -> Expr {
        let mut out = Expr::zero();
        for m in &self.terms {
            out = out.add(&monomial_derivative(m, &mut |a| match a {
                Atom::T => Expr::one(),
                Atom::S => unreachable!("checked by total_derivative"),
                Atom::Jet(w) => {
                    if w.is_constant() {
                        Expr::zero()
                    } else {
                        Expr::var(w.raise(1))
                    }
                }
                Atom::Func(f, arg) => chain(*f, arg).mul(&arg.total_derivative_unchecked()),
            }));
        }
        out
    }

    /// Highest derivative order of dependent variable `index` occurring in the
    /// expression; `None` encodes "absent" (the -infinity signature entry).
    /// Embedding constants never count.
    pub fn leading_order(&self, index: usize) -> Option<u32> {
        let mut best: Option<u32> = None;
        self.visit_jets(&mut |v| {
            if v.index == index && !v.is_constant() {
                best = Some(best.map_or(v.order, |b| b.max(v.order)));
            }
        });
        best
    }

    /// Like `leading_order` but restricted to one variable kind.
    pub fn leading_order_of(&self, kind: VarKind, index: usize) -> Option<u32> {
        let mut best: Option<u32> = None;
        self.visit_jets(&mut |v| {
            if v.kind == kind && v.index == index {
                best = Some(best.map_or(v.order, |b| b.max(v.order)));
            }
        });
        best
    }

    pub fn jet_vars(&self) -> BTreeSet<JetVar> {
        let mut set = BTreeSet::new();
        self.visit_jets(&mut |v| {
            set.insert(*v);
        });
        set
    }

    fn visit_jets(&self, f: &mut impl FnMut(&JetVar)) {
        for m in &self.terms {
            for (a, _) in &m.factors {
                match a {
                    Atom::Jet(v) => f(v),
                    Atom::Func(_, arg) => arg.visit_jets(f),
                    _ => {}
                }
            }
        }
    }

    pub fn contains_s(&self) -> bool {
        self.any_atom(&mut |a| matches!(a, Atom::S))
    }

    pub fn contains_t(&self) -> bool {
        self.any_atom(&mut |a| matches!(a, Atom::T))
    }

    /// True when no analytic function wraps any part of the expression, i.e.
    /// the expression is polynomial in t, s and the jet variables.
    pub fn is_polynomial(&self) -> bool {
        !self.any_atom(&mut |a| matches!(a, Atom::Func(_, _)))
    }

    fn any_atom(&self, pred: &mut impl FnMut(&Atom) -> bool) -> bool {
        self.terms.iter().any(|m| {
            m.factors.iter().any(|(a, _)| {
                if pred(a) {
                    return true;
                }
                match a {
                    Atom::Func(_, arg) => arg.any_atom(pred),
                    _ => false,
                }
            })
        })
    }

    /// Total degree in the jet variables (functions count as opaque degree-1
    /// factors); used for Bezout path counts.
    pub fn total_degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|m| {
                m.factors
                    .iter()
                    .map(|(a, p)| match a {
                        Atom::Jet(v) if !v.is_constant() => *p,
                        _ => 0,
                    })
                    .sum()
            })
            .max()
            .unwrap_or(0)
    }

    /// Substitute whole jet variables by expressions.
    pub fn substitute(&self, map: &BTreeMap<JetVar, Expr>) -> Expr {
        self.rewrite_atoms(&mut |a| match a {
            Atom::Jet(v) => map.get(v).cloned(),
            _ => None,
        })
    }

    /// Replace the symbol `t` by a rational constant.
    pub fn substitute_t(&self, value: &Rat) -> Expr {
        self.rewrite_atoms(&mut |a| match a {
            Atom::T => Some(Expr::constant(value.clone())),
            _ => None,
        })
    }

    /// Inline embedding constants as rational values.
    pub fn substitute_xi(&self, values: &[Rat]) -> Expr {
        self.rewrite_atoms(&mut |a| match a {
            Atom::Jet(v) if v.kind == VarKind::EmbeddedXi => {
                values.get(v.index).map(|r| Expr::constant(r.clone()))
            }
            _ => None,
        })
    }

    /// Replace the dummy `s` by the symbol `t` (restriction to the diagonal s = t).
    pub fn substitute_s_with_t(&self) -> Expr {
        self.rewrite_atoms(&mut |a| match a {
            Atom::S => Some(Expr::t()),
            _ => None,
        })
    }

    fn rewrite_atoms(&self, rw: &mut impl FnMut(&Atom) -> Option<Expr>) -> Expr {
        let mut out = Expr::zero();
        for m in &self.terms {
            let mut term = Expr::constant(m.coeff.clone());
            for (a, p) in &m.factors {
                let factor = match rw(a) {
                    Some(e) => e,
                    None => match a {
                        Atom::Func(f, arg) => Expr::func(*f, arg.rewrite_atoms(rw)),
                        other => Expr::atom(other.clone()),
                    },
                };
                term = term.mul(&factor.powi(*p));
            }
            out = out.add(&term);
        }
        out
    }

    /// Evaluate over any scalar supporting the required operations.
    pub fn eval<T: EvalScalar>(
        &self,
        t: &T,
        s: Option<&T>,
        lookup: &mut impl FnMut(&JetVar) -> Option<T>,
    ) -> Result<T, ExprError> {
        let mut acc = T::zero();
        for m in &self.terms {
            let mut term = T::from_rational(&m.coeff);
            for (a, p) in &m.factors {
                let base = match a {
                    Atom::T => t.clone(),
                    Atom::S => match s {
                        Some(v) => v.clone(),
                        None => return Err(ExprError::ContainsDummy),
                    },
                    Atom::Jet(v) => lookup(v).ok_or(ExprError::Unassigned(*v))?,
                    Atom::Func(f, arg) => {
                        let inner = arg.eval(t, s, lookup)?;
                        inner.apply(*f)
                    }
                };
                term = term.mul(&base.powu(*p));
            }
            acc = acc.add(&term);
        }
        Ok(acc)
    }

    /// Convenience f64 evaluation from a point map.
    pub fn eval_point(&self, point: &BTreeMap<JetVar, f64>, t: f64) -> Result<f64, ExprError> {
        self.eval(&t, None, &mut |v| point.get(v).copied())
    }

    /// Render with caller-supplied variable naming (DSL syntax).
    pub fn display<'a>(&'a self, namer: &'a dyn Fn(&JetVar) -> String) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, namer }
    }
}

/// d(f)/d(arg) for the whitelisted analytic functions.
fn chain(f: UnaryFn, arg: &Expr) -> Expr {
    match f {
        UnaryFn::Sin => Expr::func(UnaryFn::Cos, arg.clone()),
        UnaryFn::Cos => Expr::func(UnaryFn::Sin, arg.clone()).neg(),
        UnaryFn::Exp => Expr::func(UnaryFn::Exp, arg.clone()),
        // d tanh = 1 - tanh^2
        UnaryFn::Tanh => Expr::one().sub(&Expr::func(UnaryFn::Tanh, arg.clone()).powi(2)),
    }
}

/// Product rule over one monomial, with `datom` giving the derivative of each atom.
fn monomial_derivative(m: &Monomial, datom: &mut impl FnMut(&Atom) -> Expr) -> Expr {
    let mut out = Expr::zero();
    for (i, (a, p)) in m.factors.iter().enumerate() {
        let da = datom(a);
        if da.is_zero() {
            continue;
        }
        let mut term = Expr::constant(&m.coeff * rat_int(*p as i64));
        term = term.mul(&Expr::atom(a.clone()).powi(p - 1));
        term = term.mul(&da);
        for (j, (b, q)) in m.factors.iter().enumerate() {
            if i != j {
                term = term.mul(&Expr::atom(b.clone()).powi(*q));
            }
        }
        out = out.add(&term);
    }
    out
}

/// Scalars an expression can be evaluated over.
pub trait EvalScalar: Clone {
    fn zero() -> Self;
    fn from_rational(r: &Rat) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn powu(&self, p: u32) -> Self;
    fn apply(&self, f: UnaryFn) -> Self;
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Extremely large rationals only arise from pathological inputs.
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

impl EvalScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_rational(r: &Rat) -> Self {
        rat_to_f64(r)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn powu(&self, p: u32) -> Self {
        self.powi(p as i32)
    }
    fn apply(&self, f: UnaryFn) -> Self {
        match f {
            UnaryFn::Sin => self.sin(),
            UnaryFn::Cos => self.cos(),
            UnaryFn::Exp => self.exp(),
            UnaryFn::Tanh => self.tanh(),
        }
    }
}

impl EvalScalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_rational(r: &Rat) -> Self {
        Complex64::new(rat_to_f64(r), 0.0)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn powu(&self, p: u32) -> Self {
        self.powi(p as i32)
    }
    fn apply(&self, f: UnaryFn) -> Self {
        match f {
            UnaryFn::Sin => self.sin(),
            UnaryFn::Cos => self.cos(),
            UnaryFn::Exp => self.exp(),
            UnaryFn::Tanh => self.tanh(),
        }
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    namer: &'a dyn Fn(&JetVar) -> String,
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.expr.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, m) in self.expr.terms.iter().enumerate() {
            let neg = m.coeff.is_negative();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let c = m.coeff.abs();
            let show_coeff = c != rat_int(1) || m.factors.is_empty();
            if show_coeff {
                write!(f, "{}", fmt_rat(&c))?;
            }
            for (k, (a, p)) in m.factors.iter().enumerate() {
                if show_coeff || k > 0 {
                    write!(f, "*")?;
                }
                match a {
                    Atom::T => write!(f, "t")?,
                    Atom::S => write!(f, "s")?,
                    Atom::Jet(v) => write!(f, "{}", (self.namer)(v))?,
                    Atom::Func(func, arg) => {
                        write!(f, "{}({})", func.name(), arg.display(self.namer))?
                    }
                }
                if *p > 1 {
                    write!(f, "^{p}")?;
                }
            }
        }
        Ok(())
    }
}

pub fn fmt_rat(r: &Rat) -> String {
    if r.denom() == &BigInt::from(1) {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let namer = |v: &JetVar| v.to_string();
        write!(f, "{}", self.display(&namer))
    }
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    /// Unnormalized expression tree, evaluated by direct tree walking; the
    /// oracle for the normal form.
    #[derive(Debug, Clone)]
    enum Raw {
        Const(i32, u32),
        Var(usize, u32),
        T,
        Add(Box<Raw>, Box<Raw>),
        Mul(Box<Raw>, Box<Raw>),
        Neg(Box<Raw>),
        Sin(Box<Raw>),
    }

    impl Raw {
        fn eval(&self, vals: &[[f64; 3]; 2], t: f64) -> f64 {
            match self {
                Raw::Const(n, d) => *n as f64 / (*d as f64 + 1.0),
                Raw::Var(i, k) => vals[*i][*k as usize],
                Raw::T => t,
                Raw::Add(a, b) => a.eval(vals, t) + b.eval(vals, t),
                Raw::Mul(a, b) => a.eval(vals, t) * b.eval(vals, t),
                Raw::Neg(a) => -a.eval(vals, t),
                Raw::Sin(a) => a.eval(vals, t).sin(),
            }
        }

        fn lower(&self) -> Expr {
            match self {
                Raw::Const(n, d) => {
                    Expr::constant(Rat::new((*n).into(), (i64::from(*d) + 1).into()))
                }
                Raw::Var(i, k) => Expr::var(JetVar::state(*i, *k)),
                Raw::T => Expr::t(),
                Raw::Add(a, b) => a.lower().add(&b.lower()),
                Raw::Mul(a, b) => a.lower().mul(&b.lower()),
                Raw::Neg(a) => a.lower().neg(),
                Raw::Sin(a) => Expr::func(UnaryFn::Sin, a.lower()),
            }
        }
    }

    fn raw_strategy() -> impl Strategy<Value = Raw> {
        let leaf = prop_oneof![
            (-6i32..=6, 0u32..4).prop_map(|(n, d)| Raw::Const(n, d)),
            (0usize..2, 0u32..3).prop_map(|(i, k)| Raw::Var(i, k)),
            Just(Raw::T),
        ];
        leaf.prop_recursive(3, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Raw::Add(a.into(), b.into())),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Raw::Mul(a.into(), b.into())),
                inner.clone().prop_map(|a| Raw::Neg(a.into())),
                inner.prop_map(|a| Raw::Sin(a.into())),
            ]
        })
    }

    fn point_for(vals: &[[f64; 3]; 2]) -> BTreeMap<JetVar, f64> {
        let mut pt = BTreeMap::new();
        for (i, orders) in vals.iter().enumerate() {
            for (k, v) in orders.iter().enumerate() {
                pt.insert(JetVar::state(i, k as u32), *v);
            }
        }
        pt
    }

    proptest! {
        #[test]
        fn normalization_preserves_evaluation(
            raw in raw_strategy(),
            vals in proptest::array::uniform2(proptest::array::uniform3(-1.5f64..1.5)),
            t in -1.0f64..1.0,
        ) {
            let direct = raw.eval(&vals, t);
            let lowered = raw.lower().eval_point(&point_for(&vals), t).unwrap();
            let scale = direct.abs().max(1.0);
            prop_assert!((direct - lowered).abs() <= 1e-9 * scale,
                "direct {direct} vs normalized {lowered}");
        }

        #[test]
        fn total_derivative_is_linear_and_leibniz(
            a in raw_strategy(),
            b in raw_strategy(),
        ) {
            let (ea, eb) = (a.lower(), b.lower());
            let sum = ea.add(&eb).total_derivative().unwrap();
            let parts = ea.total_derivative().unwrap().add(&eb.total_derivative().unwrap());
            prop_assert_eq!(sum, parts);
            let prod = ea.mul(&eb).total_derivative().unwrap();
            let leibniz = ea
                .total_derivative()
                .unwrap()
                .mul(&eb)
                .add(&ea.mul(&eb.total_derivative().unwrap()));
            prop_assert_eq!(prod, leibniz);
        }

        #[test]
        fn griewank_shift_holds_for_random_expressions(
            raw in raw_strategy(),
            p in 1u32..3,
        ) {
            let e = raw.lower();
            if let Some(sigma) = e.leading_order(0) {
                let base = e.partial(&JetVar::state(0, sigma));
                let mut d = e.clone();
                for _ in 0..p {
                    d = d.total_derivative().unwrap();
                }
                prop_assert_eq!(d.partial(&JetVar::state(0, sigma + p)), base);
            }
        }
    }
}

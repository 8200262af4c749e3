//! Representation of IDAE systems: each equation splits into an algebraic/
//! differential part and a list of Volterra integral terms with polynomial
//! kernels in (t - s).

use crate::error::IdaeError;
use crate::expr::{fmt_rat, rat_int, Expr, JetVar, Rat, VarKind};
use num_traits::Zero;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Default cap on the degree of integral kernels.
pub const KERNEL_DEGREE_CAP: usize = 4;

/// One term `int_{t0}^{t} (sum_k a_k (t-s)^k) * g(s, x(s), ...) ds`.
///
/// The kernel carries every explicit t-dependence; the integrand is an
/// expression in `s` and jet variables understood to be evaluated at `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralTerm {
    /// Coefficients (a_0, ..., a_K) of the kernel in powers of (t - s).
    pub kernel: Vec<Rat>,
    pub integrand: Expr,
}

impl IntegralTerm {
    pub fn new(kernel: Vec<Rat>, integrand: Expr) -> Self {
        let mut t = IntegralTerm { kernel, integrand };
        t.trim();
        t
    }

    /// Kernel with a single monomial coefficient `c * (t-s)^k`.
    pub fn monomial(c: Rat, k: usize, integrand: Expr) -> Self {
        let mut kernel = vec![Rat::zero(); k + 1];
        kernel[k] = c;
        IntegralTerm::new(kernel, integrand)
    }

    fn trim(&mut self) {
        while self.kernel.len() > 1 && self.kernel.last().map(Rat::is_zero).unwrap_or(false) {
            self.kernel.pop();
        }
        if self.kernel.is_empty() {
            self.kernel.push(Rat::zero());
        }
    }

    pub fn degree(&self) -> usize {
        self.kernel.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.integrand.is_zero() || self.kernel.iter().all(Rat::is_zero)
    }

    /// Leibniz derivative: d/dt of the term is a boundary expression
    /// `a_0 * g(t)` plus a new integral term with the differentiated kernel.
    pub fn leibniz_derivative(&self) -> (Expr, Option<IntegralTerm>) {
        let boundary = self.integrand.substitute_s_with_t().scale(&self.kernel[0]);
        if self.kernel.len() == 1 {
            (boundary, None)
        } else {
            let dk: Vec<Rat> = (1..self.kernel.len())
                .map(|k| &self.kernel[k] * rat_int(k as i64))
                .collect();
            let rest = IntegralTerm::new(dk, self.integrand.clone());
            let rest = if rest.is_zero() { None } else { Some(rest) };
            (boundary, rest)
        }
    }

    /// Restriction of the p-th formal t-derivative of kernel * integrand to the
    /// diagonal s = t. For a polynomial kernel only the power-p monomial
    /// survives the restriction, giving `p! * a_p * g(t)`.
    pub fn diagonal_chain(&self, p: usize) -> Expr {
        if p >= self.kernel.len() || self.kernel[p].is_zero() {
            return Expr::zero();
        }
        let mut fact = rat_int(1);
        for k in 1..=p {
            fact *= rat_int(k as i64);
        }
        self.integrand
            .substitute_s_with_t()
            .scale(&(&self.kernel[p] * fact))
    }
}

/// A single equation `dae + sum(integral terms) = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdaeEquation {
    pub dae: Expr,
    pub integrals: Vec<IntegralTerm>,
}

impl IdaeEquation {
    pub fn new(dae: Expr, integrals: Vec<IntegralTerm>) -> Self {
        IdaeEquation {
            dae,
            integrals: integrals.into_iter().filter(|t| !t.is_zero()).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.dae.is_zero() && self.integrals.is_empty()
    }

    /// Highest derivative order of variable `j` anywhere in the equation,
    /// integrands included.
    pub fn leading_order_any(&self, j: usize) -> Option<u32> {
        let mut best = self.dae.leading_order(j);
        for term in &self.integrals {
            if let Some(k) = term.integrand.leading_order(j) {
                best = Some(best.map_or(k, |b| b.max(k)));
            }
        }
        best
    }
}

/// Kinds and names of the dependent variables of a system, in index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableInfo {
    pub name: String,
    pub kind: VarKind,
}

/// A square IDAE system in jet form.
#[derive(Debug, Clone, PartialEq)]
pub struct IdaeSystem {
    pub name: String,
    pub variables: Vec<VariableInfo>,
    pub t0: Rat,
    pub equations: Vec<IdaeEquation>,
    pub parameters: BTreeMap<String, Rat>,
    /// Values of embedding constants, indexed by xi id. Exact rationals so the
    /// pretty-printed form round-trips.
    pub xi_values: Vec<Rat>,
}

impl IdaeSystem {
    pub fn new(name: &str, var_names: &[&str], t0: Rat, equations: Vec<IdaeEquation>) -> Result<Self, IdaeError> {
        let sys = IdaeSystem {
            name: name.to_string(),
            variables: var_names
                .iter()
                .map(|n| VariableInfo { name: n.to_string(), kind: VarKind::State })
                .collect(),
            t0,
            equations,
            parameters: BTreeMap::new(),
            xi_values: Vec::new(),
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn n(&self) -> usize {
        self.variables.len()
    }

    pub fn validate(&self) -> Result<(), IdaeError> {
        self.validate_with_cap(KERNEL_DEGREE_CAP)
    }

    pub fn validate_with_cap(&self, kernel_cap: usize) -> Result<(), IdaeError> {
        if self.equations.len() != self.variables.len() {
            return Err(IdaeError::NonSquare {
                equations: self.equations.len(),
                variables: self.variables.len(),
            });
        }
        for (i, eq) in self.equations.iter().enumerate() {
            if eq.is_empty() {
                return Err(IdaeError::EmptyEquation { index: i });
            }
            for term in &eq.integrals {
                if term.degree() > kernel_cap {
                    return Err(IdaeError::KernelDegree {
                        index: i,
                        degree: term.degree(),
                        cap: kernel_cap,
                    });
                }
                if term.integrand.contains_t() {
                    return Err(IdaeError::BareTInIntegrand { index: i });
                }
            }
            let check_indices = |e: &Expr| -> Result<(), IdaeError> {
                for v in e.jet_vars() {
                    let in_range = match v.kind {
                        VarKind::EmbeddedXi => v.index < self.xi_values.len(),
                        _ => v.index < self.variables.len(),
                    };
                    if !in_range {
                        return Err(IdaeError::UnknownVariable {
                            equation: i,
                            var: v.to_string(),
                        });
                    }
                }
                Ok(())
            };
            check_indices(&eq.dae)?;
            for term in &eq.integrals {
                check_indices(&term.integrand)?;
            }
        }
        Ok(())
    }

    /// Split into the pure DAE parts and the integral parts, exactly as stored.
    pub fn decompose(&self) -> (Vec<Expr>, Vec<Vec<IntegralTerm>>) {
        let phi = self.equations.iter().map(|e| e.dae.clone()).collect();
        let integrals = self.equations.iter().map(|e| e.integrals.clone()).collect();
        (phi, integrals)
    }

    pub fn var_name(&self, v: &JetVar) -> String {
        let base = match v.kind {
            VarKind::EmbeddedXi => format!("xi{}", v.index + 1),
            VarKind::IntegralState => format!("z{}", v.index + 1),
            VarKind::State | VarKind::EmbeddedU => self
                .variables
                .get(v.index)
                .map(|i| i.name.clone())
                .unwrap_or_else(|| format!("v{}", v.index)),
        };
        if v.order == 0 {
            base
        } else {
            format!("der({base},{})", v.order)
        }
    }

    pub fn expr_string(&self, e: &Expr) -> String {
        let namer = |v: &JetVar| self.var_name(v);
        format!("{}", e.display(&namer))
    }

    fn kernel_string(kernel: &[Rat]) -> String {
        let mut parts = Vec::new();
        for (k, a) in kernel.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let coeff = if *a == rat_int(1) && k > 0 {
                String::new()
            } else {
                fmt_rat(a)
            };
            let base = match k {
                0 => coeff.clone(),
                1 => {
                    if coeff.is_empty() {
                        "(t-s)".to_string()
                    } else {
                        format!("{coeff}*(t-s)")
                    }
                }
                _ => {
                    if coeff.is_empty() {
                        format!("(t-s)^{k}")
                    } else {
                        format!("{coeff}*(t-s)^{k}")
                    }
                }
            };
            parts.push(base);
        }
        if parts.is_empty() {
            "0".to_string()
        } else {
            parts.join(" + ")
        }
    }

    pub fn equation_string(&self, eq: &IdaeEquation) -> String {
        let mut out = String::new();
        if !eq.dae.is_zero() || eq.integrals.is_empty() {
            write!(out, "{}", self.expr_string(&eq.dae)).unwrap();
        }
        for term in &eq.integrals {
            if !out.is_empty() {
                out.push_str(" + ");
            }
            let integrand = self.expr_string(&term.integrand);
            if term.kernel.len() == 1 && term.kernel[0] == rat_int(1) {
                write!(out, "int({integrand})").unwrap();
            } else {
                write!(out, "int({} * ({integrand}))", Self::kernel_string(&term.kernel)).unwrap();
            }
        }
        out
    }

    /// Emit the system in the DSL grammar. Parsing the output reproduces the
    /// system bit-exactly for normalized systems.
    pub fn to_dsl(&self) -> String {
        let mut out = String::new();
        writeln!(out, "system {} {{", self.name).unwrap();
        writeln!(out, "  time t from {};", fmt_rat(&self.t0)).unwrap();
        let names: Vec<String> = self.variables.iter().map(|v| v.name.clone()).collect();
        writeln!(out, "  var {};", names.join(", ")).unwrap();
        for (k, v) in self.xi_values.iter().enumerate() {
            writeln!(out, "  param xi{} = {};", k + 1, fmt_rat(v)).unwrap();
        }
        for eq in &self.equations {
            writeln!(out, "  eq {} = 0;", self.equation_string(eq)).unwrap();
        }
        writeln!(out, "}}").unwrap();
        out
    }

    /// Lookup closure for evaluation that resolves embedding constants from
    /// the system table and everything else from the point.
    pub fn eval_equation_dae(
        &self,
        e: &Expr,
        point: &BTreeMap<JetVar, f64>,
        t: f64,
    ) -> Result<f64, crate::expr::ExprError> {
        let xi = &self.xi_values;
        e.eval(&t, None, &mut |v: &JetVar| {
            if v.kind == VarKind::EmbeddedXi {
                xi.get(v.index).map(crate::expr::rat_to_f64)
            } else {
                point.get(v).copied()
            }
        })
    }

}

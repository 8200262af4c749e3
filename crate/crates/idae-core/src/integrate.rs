//! Exact reformulation of integral terms into auxiliary quadrature states and
//! segmented numerical integration of the regularized system.
//!
//! A term int (t-s)^k g(s) ds expands through the binomial theorem into
//! sum_p binom(k,p) (-1)^p t^(k-p) z_p with z_p = int s^p g(s) ds, so the
//! integro-differential system becomes an ordinary DAE in the original jets
//! plus the z states. The leading derivatives are solved from the top block
//! each evaluation; states advance with an adaptive embedded Runge-Kutta pair.

use crate::error::IdaeError;
use crate::expr::{rat_int, Expr, JetVar, VarKind};
use crate::ire::{Point, RegularizedSystem};
use crate::model::{IdaeSystem, IntegralTerm};
use crate::numrank;
use crate::witness::newton_project;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use num_traits::Zero;
use std::collections::BTreeMap;

/// One auxiliary quadrature state z = int_{t0}^t s^power * integrand ds.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxState {
    pub var: JetVar,
    pub integrand: Expr,
    pub power: usize,
    /// dz/dt = t^power * integrand restricted to s = t.
    pub rhs: Expr,
}

/// The regularized system with every integral term replaced by its exact
/// reconstruction over auxiliary states.
#[derive(Debug, Clone)]
pub struct MaterializedSystem {
    pub sys: IdaeSystem,
    /// Top-block equations, integrals reconstructed.
    pub top: Vec<Expr>,
    /// Symbolic Jacobian of the top block in the leading variables.
    pub jacobian: Vec<Vec<Expr>>,
    pub leading: Vec<JetVar>,
    pub d: Vec<i64>,
    pub aux: Vec<AuxState>,
    /// Constraint rows (pool plus final prolongation), reconstructed.
    pub constraints: Vec<Expr>,
    /// The original model equations, reconstructed, for residual monitoring.
    pub residual_equations: Vec<Expr>,
    pub residual_names: Vec<String>,
    /// (u state, replaced leading jet) pairs for segment re-lifting.
    pub u_registry: Vec<(JetVar, JetVar)>,
    pub xi_registry: Vec<(usize, JetVar)>,
    /// The unembedded system's top-block Jacobian and its rank on this
    /// component; initialization must stay on the matching branch.
    pub original_jacobian: Vec<Vec<Expr>>,
    pub original_rank: usize,
}

struct AuxRegistry {
    states: Vec<AuxState>,
    index: BTreeMap<(Expr, usize), usize>,
}

impl AuxRegistry {
    fn new() -> Self {
        AuxRegistry { states: Vec::new(), index: BTreeMap::new() }
    }

    fn state_for(&mut self, integrand: &Expr, power: usize) -> JetVar {
        if let Some(&i) = self.index.get(&(integrand.clone(), power)) {
            return self.states[i].var;
        }
        let var = JetVar::integral_state(self.states.len());
        let rhs = Expr::t()
            .powi(power as u32)
            .mul(&integrand.substitute_s_with_t());
        self.states.push(AuxState { var, integrand: integrand.clone(), power, rhs });
        self.index.insert((integrand.clone(), power), self.states.len() - 1);
        var
    }

    /// Binomial reconstruction of one integral term.
    fn reconstruct(&mut self, term: &IntegralTerm) -> Expr {
        let mut out = Expr::zero();
        for (k, a) in term.kernel.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for p in 0..=k {
                let z = self.state_for(&term.integrand, p);
                let sign = if p % 2 == 0 { 1 } else { -1 };
                let coeff = a * rat_int(sign * binom(k, p));
                out = out.add(
                    &Expr::t()
                        .powi((k - p) as u32)
                        .mul(&Expr::var(z))
                        .scale(&coeff),
                );
            }
        }
        out
    }
}

fn binom(n: usize, k: usize) -> i64 {
    let mut r = 1i64;
    for i in 0..k {
        r = r * (n - i) as i64 / (i + 1) as i64;
    }
    r
}

/// Replace every integral term in the regularized system (top block,
/// constraints, and the original equations used for residual monitoring) by
/// its auxiliary-state reconstruction.
pub fn materialize_integrals(
    reg: &RegularizedSystem,
    original: &IdaeSystem,
) -> Result<MaterializedSystem, IdaeError> {
    let mut registry = AuxRegistry::new();
    let recon =
        |registry: &mut AuxRegistry, dae: &Expr, integrals: &[IntegralTerm]| -> Expr {
            let mut e = dae.clone();
            for term in integrals {
                e = e.add(&registry.reconstruct(term));
            }
            e
        };

    let top: Vec<Expr> = reg
        .prolonged
        .top_block()
        .iter()
        .map(|row| recon(&mut registry, &row.dae, &row.integrals))
        .collect();
    let constraints: Vec<Expr> = reg
        .all_constraints()
        .iter()
        .map(|row| recon(&mut registry, &row.dae, &row.integrals))
        .collect();
    let residual_equations: Vec<Expr> = original
        .equations
        .iter()
        .map(|eq| recon(&mut registry, &eq.dae, &eq.integrals))
        .collect();
    let residual_names = (0..original.equations.len())
        .map(|i| format!("res_eq{}", i + 1))
        .collect();

    // the integrand of every z state must be computable from the solved jets
    for aux in &registry.states {
        for v in aux.rhs.jet_vars() {
            if v.kind == VarKind::EmbeddedXi {
                continue;
            }
            let d = reg.prolonged.d.get(v.index).copied().unwrap_or(0);
            if (v.order as i64) > d {
                return Err(IdaeError::Numeric(format!(
                    "integrand derivative {} exceeds the solved leading order {d}",
                    v
                )));
            }
        }
    }

    // rebuild the generation-0 top-block Jacobian from the recorded offsets
    let first = reg.iterations.first();
    let (original_jacobian, original_rank) = match first {
        Some(it) if it.c.len() == original.n() => {
            let offsets = crate::offsets::OffsetSolution {
                c: it.c.clone(),
                d: it.d.clone(),
                delta: it.delta,
                hvt: (0..original.n()).collect(),
                hvt_value: 0,
                exposure: None,
            };
            let prolonged = crate::prolong::prolong(original, &offsets)?;
            (crate::prolong::block_jacobian(&prolonged).entries, it.rank)
        }
        _ => (reg.jacobian.entries.clone(), reg.rank),
    };

    Ok(MaterializedSystem {
        sys: reg.system.clone(),
        top,
        jacobian: reg.jacobian.entries.clone(),
        leading: reg.prolonged.leading.clone(),
        d: reg.prolonged.d.clone(),
        aux: registry.states,
        constraints,
        residual_equations,
        residual_names,
        u_registry: reg.u_registry.clone(),
        xi_registry: reg.xi_registry.clone(),
        original_jacobian,
        original_rank,
    })
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    /// Local error tolerance per unit step.
    pub tol: f64,
    pub segment_len: f64,
    pub drift_tol: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub rank_tol: f64,
    pub refine_tol: f64,
    pub min_step: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            tol: 1e-9,
            segment_len: 0.5,
            drift_tol: 1e-6,
            newton_tol: 1e-12,
            newton_max: 25,
            rank_tol: numrank::DEFAULT_RANK_TOL,
            refine_tol: 1e-10,
            min_step: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SegmentRecord {
    pub t: f64,
    pub xi_values: Vec<f64>,
}

/// Time series of every tracked quantity plus per-equation residuals.
#[derive(Debug, Clone)]
pub struct SolutionTrace {
    pub column_names: Vec<String>,
    pub times: Vec<f64>,
    /// One row per accepted step: states, leading values, aux states.
    pub rows: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
    pub segments: Vec<SegmentRecord>,
    pub warnings: Vec<String>,
    /// Diagnostic when integration stopped before the end of the span.
    pub stopped: Option<String>,
    /// Column index of each named quantity.
    pub index: BTreeMap<String, usize>,
}

impl SolutionTrace {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.index.get(name).map(|&i| self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push('t');
        for name in &self.column_names {
            out.push_str(", ");
            out.push_str(name);
        }
        for name in 0..self.residuals.first().map_or(0, Vec::len) {
            out.push_str(&format!(", res_eq{}", name + 1));
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t:.15e}"));
            for v in &self.rows[i] {
                out.push_str(&format!(", {v:.15e}"));
            }
            for v in &self.residuals[i] {
                out.push_str(&format!(", {v:.15e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Internal fixed layout of the integrator state vector.
struct Layout {
    /// differential states: jets (var, order) with order < d_var
    states: Vec<JetVar>,
    aux_offset: usize,
    n_aux: usize,
}

impl Layout {
    fn new(mat: &MaterializedSystem) -> Self {
        let mut states = Vec::new();
        for (j, &dj) in mat.d.iter().enumerate() {
            for k in 0..dj {
                states.push(JetVar {
                    kind: mat.sys.variables[j].kind,
                    index: j,
                    order: k as u32,
                });
            }
        }
        let aux_offset = states.len();
        Layout { states, aux_offset, n_aux: mat.aux.len() }
    }

    fn len(&self) -> usize {
        self.aux_offset + self.n_aux
    }
}

struct Evaluator<'a> {
    mat: &'a MaterializedSystem,
    layout: Layout,
    xi: Vec<f64>,
    warm_leading: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(mat: &'a MaterializedSystem) -> Self {
        let xi = mat.sys.xi_values.iter().map(crate::expr::rat_to_f64).collect();
        Evaluator {
            layout: Layout::new(mat),
            mat,
            xi,
            warm_leading: vec![0.0; mat.leading.len()],
        }
    }

    fn jet_map(&self, y: &DVector<f64>, leading: &[f64]) -> BTreeMap<JetVar, f64> {
        let mut map = BTreeMap::new();
        for (i, v) in self.layout.states.iter().enumerate() {
            map.insert(*v, y[i]);
        }
        for (i, aux) in self.mat.aux.iter().enumerate() {
            map.insert(aux.var, y[self.layout.aux_offset + i]);
        }
        for (i, v) in self.mat.leading.iter().enumerate() {
            map.insert(*v, leading[i]);
        }
        map
    }

    fn eval(&self, e: &Expr, map: &BTreeMap<JetVar, f64>, t: f64) -> Result<f64, IdaeError> {
        let xi = &self.xi;
        e.eval(&t, None, &mut |v: &JetVar| {
            if v.kind == VarKind::EmbeddedXi {
                xi.get(v.index).copied()
            } else {
                map.get(v).copied()
            }
        })
        .map_err(|err| IdaeError::Numeric(format!("evaluation at t = {t}: {err}")))
    }

    /// Solve the top block for the leading derivatives at (t, y) by Newton
    /// iteration with the symbolic block Jacobian, warm-started.
    fn solve_leading(&mut self, t: f64, y: &DVector<f64>, opts: &IntegrateOptions) -> Result<Vec<f64>, IdaeError> {
        let n = self.mat.leading.len();
        let mut l = self.warm_leading.clone();
        for _ in 0..opts.newton_max {
            let map = self.jet_map(y, &l);
            let mut r = DVector::zeros(n);
            for (i, e) in self.mat.top.iter().enumerate() {
                r[i] = self.eval(e, &map, t)?;
            }
            let rn = r.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
            if rn < opts.newton_tol {
                self.warm_leading = l.clone();
                return Ok(l);
            }
            let mut jm = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    jm[(i, j)] = self.eval(&self.mat.jacobian[i][j], &map, t)?;
                }
            }
            let step = jm
                .lu()
                .solve(&r)
                .ok_or_else(|| IdaeError::Numeric(format!("singular top block at t = {t}")))?;
            for i in 0..n {
                l[i] -= step[i];
            }
        }
        // accept the last iterate if it is close enough for the step controller
        let map = self.jet_map(y, &l);
        let mut rn = 0.0f64;
        for e in &self.mat.top {
            rn = rn.max(self.eval(e, &map, t)?.abs());
        }
        if rn < opts.newton_tol * 1e4 {
            self.warm_leading = l.clone();
            Ok(l)
        } else {
            Err(IdaeError::Numeric(format!(
                "leading-derivative solve stalled at t = {t} (residual {rn:.3e})"
            )))
        }
    }

    /// dy/dt given the solved leading values.
    fn derivative(
        &self,
        t: f64,
        y: &DVector<f64>,
        leading: &[f64],
    ) -> Result<DVector<f64>, IdaeError> {
        let map = self.jet_map(y, leading);
        let mut dy = DVector::zeros(self.layout.len());
        for (i, v) in self.layout.states.iter().enumerate() {
            let next = JetVar { kind: v.kind, index: v.index, order: v.order + 1 };
            let dv = if (next.order as i64) < self.mat.d[v.index] {
                *map.get(&next).expect("chained state present")
            } else {
                leading[self
                    .mat
                    .leading
                    .iter()
                    .position(|lv| lv.index == v.index && lv.kind == v.kind)
                    .expect("leading position")]
            };
            dy[i] = dv;
        }
        for (i, aux) in self.mat.aux.iter().enumerate() {
            dy[self.layout.aux_offset + i] = self.eval(&aux.rhs, &map, t)?;
        }
        Ok(dy)
    }

    fn rhs(&mut self, t: f64, y: &DVector<f64>, opts: &IntegrateOptions) -> Result<DVector<f64>, IdaeError> {
        let l = self.solve_leading(t, y, opts)?;
        self.derivative(t, y, &l)
    }
}

/// Solve the initial state: project the point onto the full constraint set at
/// t0 (auxiliary states are zero there), then solve the top block for the
/// leading derivatives.
pub fn consistent_initialize(
    mat: &MaterializedSystem,
    point: &Point,
    opts: &IntegrateOptions,
) -> Result<(Point, f64), IdaeError> {
    let t0 = crate::expr::rat_to_f64(&mat.sys.t0);
    let zero_aux: BTreeMap<JetVar, Expr> = mat
        .aux
        .iter()
        .map(|a| (a.var, Expr::zero()))
        .collect();
    let at_t0: Vec<Expr> = mat
        .constraints
        .iter()
        .map(|e| {
            e.substitute(&zero_aux)
                .substitute_xi(&mat.sys.xi_values)
                .substitute_t(&mat.sys.t0)
        })
        .filter(|e| !e.is_zero())
        .collect();
    let mut vars: Vec<JetVar> = Vec::new();
    for e in &at_t0 {
        for v in e.jet_vars() {
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
    }
    let mut start = point.clone();
    for v in &vars {
        start.entry(*v).or_insert(0.0);
    }
    let (projected, res, ok) = newton_project(&at_t0, &vars, &start, opts.refine_tol, 80);
    if !ok {
        return Err(IdaeError::Numeric(format!(
            "consistent initialization failed: constraint residual {res:.3e} at t0"
        )));
    }
    Ok((projected, t0))
}

/// The projection must land on a smooth point of the constraint variety:
/// the constraint Jacobian needs full row rank there (component crossings are
/// singular points of the variety and start ill-posed trajectories).
fn constraint_point_is_smooth(
    mat: &MaterializedSystem,
    point: &Point,
    rank_tol: f64,
) -> Result<bool, IdaeError> {
    let zero_aux: BTreeMap<JetVar, Expr> =
        mat.aux.iter().map(|a| (a.var, Expr::zero())).collect();
    let rows: Vec<Expr> = mat
        .constraints
        .iter()
        .map(|e| {
            e.substitute(&zero_aux)
                .substitute_xi(&mat.sys.xi_values)
                .substitute_t(&mat.sys.t0)
        })
        .filter(|e| !e.is_zero())
        .collect();
    if rows.is_empty() {
        return Ok(true);
    }
    let mut vars: Vec<JetVar> = Vec::new();
    for e in &rows {
        for v in e.jet_vars() {
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
    }
    let mut jm = DMatrix::zeros(rows.len(), vars.len());
    for (i, e) in rows.iter().enumerate() {
        for (j, v) in vars.iter().enumerate() {
            jm[(i, j)] = e
                .partial(v)
                .eval_point(point, 0.0)
                .map_err(|err| IdaeError::Numeric(format!("constraint gradient: {err}")))?;
        }
    }
    let rank = numrank::numeric_rank(&jm, rank_tol.max(1e-4))?.rank;
    Ok(rank == rows.len())
}

/// The projected initial point must sit on the same branch the component was
/// analyzed on: the unembedded top-block Jacobian keeps its recorded rank.
/// Entries that need coordinates the point lacks leave the check inconclusive.
fn original_rank_matches(
    mat: &MaterializedSystem,
    point: &Point,
    rank_tol: f64,
) -> Result<bool, IdaeError> {
    let original = &mat.original_jacobian;
    let n = original.len();
    if n == 0 {
        return Ok(true);
    }
    let t0 = crate::expr::rat_to_f64(&mat.sys.t0);
    let xi = &mat.sys.xi_values;
    let mut jm = DMatrix::zeros(n, n);
    for (i, row) in original.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            match e.eval(&t0, None, &mut |v: &JetVar| {
                if v.kind == VarKind::EmbeddedXi {
                    xi.get(v.index).map(crate::expr::rat_to_f64)
                } else {
                    point.get(v).copied()
                }
            }) {
                Ok(v) if v.is_finite() => jm[(i, j)] = v,
                _ => return Ok(true),
            }
        }
    }
    Ok(numrank::numeric_rank(&jm, rank_tol.max(1e-6))?.rank == mat.original_rank)
}

/// Dormand-Prince 5(4) coefficients.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate the materialized system over the span. The span is split into
/// segments; at every boundary the embedding constants and u states are
/// reassigned from the current trajectory and the top-block rank is
/// re-checked.
pub fn integrate(
    mat: &MaterializedSystem,
    init: &Point,
    span: (f64, f64),
    opts: &IntegrateOptions,
) -> Result<SolutionTrace, IdaeError> {
    // The projection can land on a degenerate root of the constraint set
    // (component crossings satisfy it too); retry from perturbed starts until
    // the top block has full rank at the initial state.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xD1CE);
    let mut chosen: Option<(Point, f64)> = None;
    let mut start = init.clone();
    for attempt in 0..24 {
        match consistent_initialize(mat, &start, opts) {
            Ok((projected, t0)) => {
                let smooth = constraint_point_is_smooth(mat, &projected, opts.rank_tol)?
                    && original_rank_matches(mat, &projected, opts.rank_tol)?;
                let mut probe = Evaluator::new(mat);
                let mut y0 = DVector::zeros(probe.layout.len());
                for (i, v) in probe.layout.states.iter().enumerate() {
                    y0[i] = projected.get(v).copied().unwrap_or(0.0);
                }
                for (i, v) in mat.leading.iter().enumerate() {
                    if let Some(val) = projected.get(v) {
                        probe.warm_leading[i] = *val;
                    }
                }
                let full_rank = match probe.solve_leading(t0, &y0, opts) {
                    Ok(l0) => {
                        let n = mat.leading.len();
                        let map = probe.jet_map(&y0, &l0);
                        let mut jm = DMatrix::zeros(n, n);
                        let mut ok = true;
                        'fill: for i in 0..n {
                            for j in 0..n {
                                match probe.eval(&mat.jacobian[i][j], &map, t0) {
                                    Ok(v) => jm[(i, j)] = v,
                                    Err(_) => {
                                        ok = false;
                                        break 'fill;
                                    }
                                }
                            }
                        }
                        ok && numrank::numeric_rank(&jm, opts.rank_tol.max(1e-6))?.rank == n
                    }
                    Err(_) => false,
                };
                if full_rank && smooth {
                    chosen = Some((projected, t0));
                    break;
                }
                if chosen.is_none() {
                    chosen = Some((projected, t0));
                }
            }
            Err(e) => {
                if attempt == 23 {
                    return Err(e);
                }
            }
        }
        // perturb and retry
        let scale = 0.3 * (1 + attempt / 4) as f64;
        start = init.clone();
        for value in start.values_mut() {
            *value += (rng.random::<f64>() - 0.5) * 2.0 * scale;
        }
    }
    let (projected, t0) = chosen.ok_or_else(|| {
        IdaeError::Numeric("consistent initialization failed on every attempt".into())
    })?;
    if (span.0 - t0).abs() > 1e-12 {
        return Err(IdaeError::Numeric(format!(
            "integration must start at the system's initial time t0 = {t0}"
        )));
    }

    let mut ev = Evaluator::new(mat);
    let mut y = DVector::zeros(ev.layout.len());
    for (i, v) in ev.layout.states.iter().enumerate() {
        y[i] = projected.get(v).copied().unwrap_or(0.0);
    }
    // aux states start at zero: the integrals vanish at t0

    // seed the Newton warm start from the point's leading values when present
    for (i, v) in mat.leading.iter().enumerate() {
        if let Some(val) = projected.get(v) {
            ev.warm_leading[i] = *val;
        }
    }

    let mut trace = SolutionTrace {
        column_names: ev
            .layout
            .states
            .iter()
            .map(|v| mat.sys.var_name(v))
            .chain(mat.leading.iter().map(|v| mat.sys.var_name(v)))
            .chain(mat.aux.iter().map(|a| mat.sys.var_name(&a.var)))
            .collect(),
        times: Vec::new(),
        rows: Vec::new(),
        residuals: Vec::new(),
        segments: Vec::new(),
        warnings: Vec::new(),
        stopped: None,
        index: BTreeMap::new(),
    };
    for (i, name) in trace.column_names.iter().enumerate() {
        trace.index.insert(name.clone(), i);
    }

    let record =
        |ev: &Evaluator, trace: &mut SolutionTrace, t: f64, y: &DVector<f64>, l: &[f64]| -> Result<(), IdaeError> {
            let map = ev.jet_map(y, l);
            let mut row: Vec<f64> = Vec::with_capacity(trace.column_names.len());
            for (i, _) in ev.layout.states.iter().enumerate() {
                row.push(y[i]);
            }
            row.extend_from_slice(l);
            for i in 0..ev.layout.n_aux {
                row.push(y[ev.layout.aux_offset + i]);
            }
            let mut res = Vec::with_capacity(mat.residual_equations.len());
            for e in &mat.residual_equations {
                res.push(ev.eval(e, &map, t)?);
            }
            let worst = res.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            if worst > opts.drift_tol {
                trace
                    .warnings
                    .push(format!("residual drift {worst:.3e} above {:.1e} at t = {t:.6}", opts.drift_tol));
            }
            trace.times.push(t);
            trace.rows.push(row);
            trace.residuals.push(res);
            Ok(())
        };

    let mut t = span.0;
    let l0 = ev.solve_leading(t, &y, opts)?;
    record(&ev, &mut trace, t, &y, &l0)?;
    trace.segments.push(SegmentRecord { t, xi_values: ev.xi.clone() });

    let mut h = (opts.segment_len / 16.0).min(span.1 - span.0).max(opts.min_step);
    let mut segment_end = (span.0 + opts.segment_len).min(span.1);

    while t < span.1 - 1e-13 {
        if t > segment_end - 1e-13 {
            // segment boundary: reassign xi and u from the current trajectory
            let l = ev.solve_leading(t, &y, opts)?;
            let map = ev.jet_map(&y, &l);
            for (xi_id, replaced) in &mat.xi_registry {
                let v = *map.get(replaced).ok_or_else(|| {
                    IdaeError::Numeric(format!("segment reassignment: missing {replaced}"))
                })?;
                ev.xi[*xi_id] = v;
            }
            for (u_jet, replaced) in &mat.u_registry {
                let v = *map.get(replaced).ok_or_else(|| {
                    IdaeError::Numeric(format!("segment reassignment: missing {replaced}"))
                })?;
                if let Some(pos) = ev.layout.states.iter().position(|s| s == u_jet) {
                    y[pos] = v;
                }
            }
            // rank re-check with the reassigned constants
            let l = ev.solve_leading(t, &y, opts)?;
            let map = ev.jet_map(&y, &l);
            let n = mat.leading.len();
            let mut jm = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    jm[(i, j)] = ev.eval(&mat.jacobian[i][j], &map, t)?;
                }
            }
            let report = numrank::numeric_rank(&jm, opts.rank_tol)?;
            if report.rank < n {
                trace.stopped = Some(format!(
                    "top-block rank dropped to {} of {n} at segment boundary t = {t:.6}; the trajectory may have migrated between components",
                    report.rank
                ));
                break;
            }
            trace.segments.push(SegmentRecord { t, xi_values: ev.xi.clone() });
            segment_end = (t + opts.segment_len).min(span.1);
        }

        let h_try = h.min(segment_end - t).min(span.1 - t);
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        let mut step_err: Option<IdaeError> = None;
        for stage in 0..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                ys += kj * (DP_A[stage][j] * h_try);
            }
            match ev.rhs(t + DP_C[stage] * h_try, &ys, opts) {
                Ok(dy) => k.push(dy),
                Err(e) => {
                    step_err = Some(e);
                    break;
                }
            }
        }
        if let Some(err) = step_err {
            h *= 0.25;
            if h < opts.min_step {
                trace.stopped = Some(format!("step-size underflow at t = {t:.6}: {err}"));
                break;
            }
            continue;
        }

        let mut y5 = y.clone();
        let mut y4 = y.clone();
        for (j, kj) in k.iter().enumerate() {
            y5 += kj * (DP_B5[j] * h_try);
            y4 += kj * (DP_B4[j] * h_try);
        }
        let scale = 1.0 + y.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        let err = (&y5 - &y4).iter().map(|v| v.abs()).fold(0.0f64, f64::max) / scale;

        // error-per-unit-step control keeps the global error proportional to tol
        if err <= opts.tol * h_try {
            t += h_try;
            y = y5;
            let l = ev.solve_leading(t, &y, opts)?;
            record(&ev, &mut trace, t, &y, &l)?;
            let grow = if err > 0.0 {
                0.9 * (opts.tol * h_try / err).powf(0.25)
            } else {
                2.0
            };
            h = (h_try * grow.clamp(0.2, 2.0)).min(opts.segment_len);
        } else {
            let shrink = 0.9 * (opts.tol * h_try / err).powf(0.25);
            h = h_try * shrink.clamp(0.1, 0.9);
            if h < opts.min_step {
                trace.stopped = Some(format!("step-size underflow at t = {t:.6}"));
                break;
            }
        }
    }

    Ok(trace)
}

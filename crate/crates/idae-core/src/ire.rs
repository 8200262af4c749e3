//! Index reduction by embedding: replace the pivot leading variables of a
//! rank-deficient top block by fresh unknowns u and the non-pivot ones by
//! embedding constants xi in a copied block, then iterate the three-phase
//! relaxation loop until the top-block Jacobian has full rank at the
//! component's points. Termination is monitored through the degrees of
//! freedom, which drop by at least the rank deficiency each round.

use crate::error::IdaeError;
use crate::expr::{rat, Expr, JetVar, Rat, VarKind};
use crate::model::{IdaeEquation, IdaeSystem, VariableInfo};
use crate::numrank::{self, PointRank};
use crate::offsets::{self, OffsetSolution};
use crate::prolong::{block_jacobian, prolong, BlockJacobian, ProlongedEq, ProlongedSystem};
use crate::signature::{combined_signature, SignatureAnalysis, SmoothingOptions};
use crate::witness::newton_project;
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub type Point = BTreeMap<JetVar, f64>;

#[derive(Debug, Clone)]
pub struct RegularizeOptions {
    pub rank_tol: f64,
    pub refine_tol: f64,
    pub smoothing: SmoothingOptions,
    pub xi_seed: u64,
    pub max_iterations: Option<usize>,
}

impl Default for RegularizeOptions {
    fn default() -> Self {
        RegularizeOptions {
            rank_tol: numrank::DEFAULT_RANK_TOL,
            refine_tol: 1e-10,
            smoothing: SmoothingOptions::default(),
            xi_seed: 0,
            max_iterations: None,
        }
    }
}

/// How a component was regularized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Pryce,
    Embedding(usize),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Pryce => "Pryce".to_string(),
            Method::Embedding(_) => "IRE".to_string(),
        }
    }
}

/// One pass of the relaxation loop.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub c: Vec<i64>,
    pub d: Vec<i64>,
    pub delta: i64,
    pub dof: i64,
    pub rank: usize,
    pub size: usize,
    /// Leading variables replaced by u in this pass (empty on the final pass).
    pub replaced: Vec<String>,
    /// Source descriptions of the rows kept in original form.
    pub kept_rows: Vec<String>,
}

/// The outcome of per-component regularization.
#[derive(Debug, Clone)]
pub struct RegularizedSystem {
    /// The final square system (the original one on the Pryce path).
    pub system: IdaeSystem,
    pub analysis: SignatureAnalysis,
    pub offsets: OffsetSolution,
    pub prolonged: ProlongedSystem,
    pub jacobian: BlockJacobian,
    /// Constraint rows inherited from earlier generations.
    pub pool: Vec<ProlongedEq>,
    /// (u jet, replaced leading jet) across all generations.
    pub u_registry: Vec<(JetVar, JetVar)>,
    /// (xi id, replaced leading jet) across all generations.
    pub xi_registry: Vec<(usize, JetVar)>,
    pub iterations: Vec<IterationRecord>,
    pub augmentations: usize,
    pub dof: i64,
    pub rank: usize,
    pub method: Method,
    /// The component's points, lifted and extended into the final system.
    pub points: Vec<Point>,
}

impl RegularizedSystem {
    /// All constraint rows: the inherited pool plus the final prolongation's
    /// own lower blocks.
    pub fn all_constraints(&self) -> Vec<ProlongedEq> {
        let mut out = self.pool.clone();
        out.extend(self.prolonged.constraints().into_iter().cloned());
        out
    }
}

/// Result of one embedding step.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    pub system: IdaeSystem,
    /// (u jet at order 0, replaced leading jet), this generation only.
    pub u_map: Vec<(JetVar, JetVar)>,
    /// (xi id, replaced leading jet), this generation only.
    pub xi_map: Vec<(usize, JetVar)>,
    /// The generation's constraint rows, to be pooled.
    pub new_constraints: Vec<ProlongedEq>,
    pub f_rows: Vec<usize>,
    pub g_rows: Vec<usize>,
    pub s_vars: Vec<JetVar>,
    pub y_vars: Vec<JetVar>,
}

/// Partition equations and variables into independent blocks (connected
/// components of the equation-variable incidence graph, integrands included).
pub fn independent_blocks(sys: &IdaeSystem) -> Vec<Vec<usize>> {
    let n = sys.n();
    let mut parent: Vec<usize> = (0..2 * n).collect(); // equations then variables
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let union = |parent: &mut [usize], a: usize, b: usize| {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    };
    for (i, eq) in sys.equations.iter().enumerate() {
        for j in 0..n {
            if eq.leading_order_any(j).is_some() {
                union(&mut parent, i, n + j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Variables coupled to the given equations.
fn block_variables(sys: &IdaeSystem, eqs: &[usize]) -> Vec<usize> {
    let n = sys.n();
    let mut vars = Vec::new();
    for j in 0..n {
        if eqs.iter().any(|&i| sys.equations[i].leading_order_any(j).is_some()) {
            vars.push(j);
        }
    }
    vars
}

/// The Def.-style embedding applied per rank-deficient independent block.
/// Full-rank blocks pass through untouched. Substitution acts on the DAE
/// parts only; integral terms carry history and keep their integrands.
#[allow(clippy::too_many_arguments)]
pub fn augment(
    sys: &IdaeSystem,
    prolonged: &ProlongedSystem,
    jac_value: &DMatrix<f64>,
    rank_tol: f64,
    rng: &mut ChaCha8Rng,
    u_counter: &mut usize,
) -> Result<AugmentedSystem, IdaeError> {
    let n = sys.n();
    let top: Vec<&ProlongedEq> = prolonged.top_block();
    assert_eq!(top.len(), n, "top block carries one row per equation");

    let blocks = independent_blocks(sys);
    let mut new_vars = sys.variables.clone();
    let mut xi_values = sys.xi_values.clone();
    let mut equations: Vec<IdaeEquation> = Vec::new();
    let mut u_map = Vec::new();
    let mut xi_map = Vec::new();
    let mut f_rows = Vec::new();
    let mut g_rows = Vec::new();
    let mut s_vars = Vec::new();
    let mut y_vars = Vec::new();
    let mut any_deficient = false;

    for block_eqs in &blocks {
        let block_vars = block_variables(sys, block_eqs);
        let sub = DMatrix::from_fn(block_eqs.len(), block_vars.len(), |i, j| {
            jac_value[(block_eqs[i], block_vars[j])]
        });
        let report = numrank::numeric_rank(&sub, rank_tol)?;
        let nb = block_eqs.len();
        if report.rank == nb {
            for &i in block_eqs {
                equations.push(top[i].as_equation());
            }
            continue;
        }
        any_deficient = true;

        // pivot rows keep their original form; everything is also embedded
        let mut pivot_rows: Vec<usize> = report.row_pivots.iter().map(|&i| block_eqs[i]).collect();
        pivot_rows.sort_unstable();
        let mut pivot_cols: Vec<usize> = report.col_pivots.iter().map(|&j| block_vars[j]).collect();
        pivot_cols.sort_unstable();

        let mut subst: BTreeMap<JetVar, Expr> = BTreeMap::new();
        for &j in &pivot_cols {
            let u_index = new_vars.len();
            let u_jet = JetVar { kind: VarKind::EmbeddedU, index: u_index, order: 0 };
            *u_counter += 1;
            new_vars.push(VariableInfo {
                name: format!("u{}", *u_counter),
                kind: VarKind::EmbeddedU,
            });
            let replaced = prolonged.leading[j];
            subst.insert(replaced, Expr::var(u_jet));
            u_map.push((u_jet, replaced));
            s_vars.push(replaced);
        }
        for &j in block_vars.iter().filter(|j| !pivot_cols.contains(j)) {
            let xi_id = xi_values.len();
            // drawn away from zero; replaced by the lifted y value at use sites
            xi_values.push(rat(rng.random_range(512..=1536), 1024));
            let replaced = prolonged.leading[j];
            subst.insert(replaced, Expr::var(JetVar::xi(xi_id)));
            xi_map.push((xi_id, replaced));
            y_vars.push(replaced);
        }

        // f(s,y,z): pivot rows in original variables
        for &i in &pivot_rows {
            f_rows.push(i);
            equations.push(top[i].as_equation());
        }
        // embedded copies of the whole block: f(u,xi,z) then g(u,xi,z)
        for &i in &pivot_rows {
            equations.push(IdaeEquation::new(
                top[i].dae.substitute(&subst),
                top[i].integrals.clone(),
            ));
        }
        for &i in block_eqs.iter().filter(|i| !pivot_rows.contains(i)) {
            g_rows.push(i);
            equations.push(IdaeEquation::new(
                top[i].dae.substitute(&subst),
                top[i].integrals.clone(),
            ));
        }
    }

    if !any_deficient {
        return Err(IdaeError::Embedding(
            "top block already has full rank; nothing to embed".into(),
        ));
    }

    let system = IdaeSystem {
        name: format!("{}_aug", sys.name),
        variables: new_vars,
        t0: sys.t0.clone(),
        equations,
        parameters: sys.parameters.clone(),
        xi_values,
    };
    system.validate()?;

    Ok(AugmentedSystem {
        system,
        u_map,
        xi_map,
        new_constraints: prolonged.constraints().into_iter().cloned().collect(),
        f_rows,
        g_rows,
        s_vars,
        y_vars,
    })
}

/// Lift a point consistent for the pre-embedding system: u coordinates copy
/// the replaced leading coordinates, and each xi takes the value the replaced
/// y coordinate had at the point. The xi values are written into the
/// augmented system's constant table.
pub fn lift_point(point: &Point, aug: &mut AugmentedSystem) -> Result<Point, IdaeError> {
    let mut out = point.clone();
    for (u_jet, replaced) in &aug.u_map {
        let v = point.get(replaced).copied().ok_or_else(|| {
            IdaeError::Embedding(format!("point is missing the replaced coordinate {replaced}"))
        })?;
        out.insert(*u_jet, v);
    }
    for (xi_id, replaced) in &aug.xi_map {
        let v = point.get(replaced).copied().ok_or_else(|| {
            IdaeError::Embedding(format!("point is missing the replaced coordinate {replaced}"))
        })?;
        aug.system.xi_values[*xi_id] =
            Rat::from_float(v).unwrap_or_else(|| Rat::from_integer(0.into()));
    }
    Ok(out)
}

/// The embedding's certificate dual: zero prolongation for kept rows, one for
/// embedded copies; old variables keep d, u columns get one.
pub fn feasible_embedding_dual(
    old_d: &[i64],
    kept_rows: usize,
    embedded_rows: usize,
    u_vars: usize,
) -> (Vec<i64>, Vec<i64>) {
    let mut c = vec![0i64; kept_rows];
    c.extend(std::iter::repeat_n(1, embedded_rows));
    let mut d = old_d.to_vec();
    d.extend(std::iter::repeat_n(1, u_vars));
    (c, d)
}

/// Per-variable omega maxima over both the current system's analysis and the
/// pooled constraint rows.
fn omega_col_max_with_pool(
    analysis: &SignatureAnalysis,
    pool: &[ProlongedEq],
    opts: &SmoothingOptions,
) -> Result<Vec<u32>, IdaeError> {
    let mut max = analysis.omega_col_max();
    for eq in pool {
        if eq.integrals.is_empty() {
            continue;
        }
        for (j, slot) in max.iter_mut().enumerate() {
            let entry = crate::signature::smoothing_indices(&eq.integrals, j, &[], opts)?;
            *slot = (*slot).max(entry.omega);
        }
    }
    Ok(max)
}

/// Fill coordinates of the leading jets that the point does not carry, by a
/// minimum-norm Gauss-Newton solve of the top block at the initial time
/// (integral terms vanish there).
pub fn extend_point(
    sys: &IdaeSystem,
    prolonged: &ProlongedSystem,
    point: &Point,
    refine_tol: f64,
) -> Point {
    let missing: Vec<JetVar> = prolonged
        .leading
        .iter()
        .copied()
        .filter(|v| !point.contains_key(v))
        .collect();
    if missing.is_empty() {
        return point.clone();
    }
    let equations: Vec<Expr> = prolonged
        .top_block()
        .iter()
        .map(|row| row.dae.substitute_xi(&sys.xi_values).substitute_t(&sys.t0))
        .collect();
    let mut start = point.clone();
    for v in &missing {
        start.insert(*v, 0.0);
    }
    let (projected, _res, _ok) = newton_project(&equations, &missing, &start, refine_tol, 60);
    projected
}

/// The three-phase loop: offsets, rank at the component's points, embedding.
/// Returns the final full-rank system with its per-pass trace.
pub fn regularize(
    sys: &IdaeSystem,
    group_points: &[Point],
    opts: &RegularizeOptions,
) -> Result<RegularizedSystem, IdaeError> {
    let mut system = sys.clone();
    let mut points: Vec<Point> = group_points.to_vec();
    let mut pool: Vec<ProlongedEq> = Vec::new();
    let mut u_registry = Vec::new();
    let mut xi_registry = Vec::new();
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.xi_seed);
    let mut u_counter = 0usize;
    let mut prev: Option<(i64, usize, usize)> = None; // dof, n, rank
    let mut cap: Option<usize> = opts.max_iterations;

    for generation in 0.. {
        let eval_points: Vec<_> = points.clone();
        let analysis = combined_signature(&system, &eval_points, &opts.smoothing)?;
        let offsets = if generation == 0 {
            offsets::solve_offsets(&analysis)?
        } else {
            offsets::solve_offsets_sigma(&analysis.sigma)?
        };
        let omega_max = omega_col_max_with_pool(&analysis, &pool, &opts.smoothing)?;
        let dof = offsets::degrees_of_freedom_composite(offsets.delta, &omega_max, pool.len())?;
        if generation == 0 && cap.is_none() {
            cap = Some(1 + dof.max(0) as usize);
        }
        if let Some((prev_dof, prev_n, prev_rank)) = prev {
            let drop = (prev_n - prev_rank) as i64;
            if dof > prev_dof - drop {
                return Err(IdaeError::Embedding(format!(
                    "degrees of freedom did not decrease: {prev_dof} -> {dof} with deficiency {drop}"
                )));
            }
        }

        let prolonged = prolong(&system, &offsets)?;
        let jac = block_jacobian(&prolonged);

        // make sure every point carries the leading coordinates
        points = points
            .iter()
            .map(|p| extend_point(&system, &prolonged, p, opts.refine_tol))
            .collect();

        let t0 = crate::expr::rat_to_f64(&system.t0);
        let mut reports = Vec::new();
        for (idx, p) in points.iter().enumerate() {
            let value = jac.evaluate(&system, p, t0)?;
            reports.push(PointRank {
                point_index: idx,
                report: numrank::numeric_rank(&value, opts.rank_tol)?,
            });
        }
        numrank::check_group_consistency(&reports)?;
        let rank = reports.first().map(|r| r.report.rank).unwrap_or(system.n());
        let n = system.n();

        let record_base = IterationRecord {
            c: offsets.c.clone(),
            d: offsets.d.clone(),
            delta: offsets.delta,
            dof,
            rank,
            size: n,
            replaced: Vec::new(),
            kept_rows: Vec::new(),
        };

        if rank == n {
            iterations.push(record_base);
            return Ok(RegularizedSystem {
                system,
                analysis,
                offsets,
                prolonged,
                jacobian: jac,
                pool,
                u_registry,
                xi_registry,
                augmentations: generation,
                dof,
                rank,
                method: if generation == 0 { Method::Pryce } else { Method::Embedding(generation) },
                iterations,
                points,
            });
        }

        if generation >= cap.unwrap_or(usize::MAX) {
            return Err(IdaeError::IterationCap(generation));
        }

        // Phase 3: embed
        let jac_value = jac.evaluate(&system, &points[0], t0)?;
        let mut aug = augment(
            &system,
            &prolonged,
            &jac_value,
            opts.rank_tol,
            &mut rng,
            &mut u_counter,
        )?;
        let mut record = record_base;
        record.replaced = aug.s_vars.iter().map(|v| system.var_name(v)).collect();
        record.kept_rows = aug
            .f_rows
            .iter()
            .map(|&i| {
                let row = &prolonged.top_block()[i];
                format!("eq{}^({})", row.source + 1, row.order)
            })
            .collect();
        iterations.push(record);

        let lifted: Result<Vec<Point>, IdaeError> =
            points.iter().map(|p| lift_point(p, &mut aug)).collect();
        points = lifted?;
        pool.extend(aug.new_constraints.iter().cloned());
        u_registry.extend(aug.u_map.iter().copied());
        xi_registry.extend(aug.xi_map.iter().copied());
        prev = Some((dof, n, rank));
        system = aug.system;
    }
    unreachable!("the loop returns or errors")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{rat_int, UnaryFn};
    use crate::parse::parse_system;

    fn zolf() -> IdaeSystem {
        parse_system(
            r#"
system zolf {
  time t from 0;
  var x1, x2;
  eq exp(-x1 - x2) - exp(-t - 1) = 0;
  eq int(x1 + x2 + (t-s) * x1 * x2) - (t^2/2 + t + t^3/6) = 0;
}
"#,
        )
        .unwrap()
    }

    fn degenerate() -> IdaeSystem {
        parse_system(
            r#"
system deg {
  time t from 0;
  var x, y;
  eq 2 * y * der(x,2) - x * der(y,2) + 2 * x * der(x,1)^2 - der(x,1) + sin(t) = 0;
  eq int(y - x^2) = 0;
}
"#,
        )
        .unwrap()
    }

    fn zolf_point() -> Point {
        // x1 + x2 = 1 with x1 != x2 satisfies the equation at t0
        let mut p = Point::new();
        p.insert(JetVar::state(0, 0), 0.0);
        p.insert(JetVar::state(1, 0), 1.0);
        p
    }

    fn degenerate_point() -> Point {
        // on the constraints y = x^2, y' = 2 x x'
        let mut p = Point::new();
        p.insert(JetVar::state(0, 0), 1.0);
        p.insert(JetVar::state(1, 0), 1.0);
        p.insert(JetVar::state(0, 1), 0.5);
        p.insert(JetVar::state(1, 1), 1.0);
        p
    }

    fn degenerate_full_jet() -> Point {
        // a jet consistent with the whole top block at t = 0: with x' = 0 both
        // top rows hold for x'' = 1/2, y'' = 1
        let mut p = Point::new();
        p.insert(JetVar::state(0, 0), 1.0);
        p.insert(JetVar::state(1, 0), 1.0);
        p.insert(JetVar::state(0, 1), 0.0);
        p.insert(JetVar::state(1, 1), 0.0);
        p.insert(JetVar::state(0, 2), 0.5);
        p.insert(JetVar::state(1, 2), 1.0);
        p
    }

    #[test]
    fn zolf_augmentation_matches_printed_form() {
        let sys = zolf();
        let reg = regularize(&sys, &[zolf_point()], &RegularizeOptions::default()).unwrap();
        assert_eq!(reg.augmentations, 1);
        assert_eq!(reg.method, Method::Embedding(1));
        assert_eq!(reg.dof, 2);
        // post-embedding offsets (0,1,1) / (0,0,1)
        let last = reg.iterations.last().unwrap();
        assert_eq!(last.c, vec![0, 1, 1]);
        assert_eq!(last.d, vec![0, 0, 1]);
        assert_eq!(last.rank, 3);

        // F_aug rows: {DF2(s,y), DF2(u,xi), F1(u,xi)}
        let x1 = Expr::var(JetVar::state(0, 0));
        let x2 = Expr::var(JetVar::state(1, 0));
        let u = Expr::var(JetVar { kind: VarKind::EmbeddedU, index: 2, order: 0 });
        let xi = Expr::var(JetVar::xi(0));
        let g2dot = Expr::t()
            .add(&Expr::one())
            .add(&Expr::t().powi(2).scale(&crate::expr::rat(1, 2)));
        assert_eq!(reg.system.equations[0].dae, x1.add(&x2).sub(&g2dot));
        assert_eq!(reg.system.equations[1].dae, u.add(&xi).sub(&g2dot));
        let g1 = Expr::func(UnaryFn::Exp, Expr::t().neg().sub(&Expr::one()));
        assert_eq!(
            reg.system.equations[2].dae,
            Expr::func(UnaryFn::Exp, u.neg().sub(&xi)).sub(&g1)
        );
        // each of the three rows keeps the memory integral where the original had one
        assert_eq!(reg.system.equations[0].integrals.len(), 1);
        assert_eq!(reg.system.equations[1].integrals.len(), 1);
        assert!(reg.system.equations[2].integrals.is_empty());
        assert_eq!(
            reg.system.equations[1].integrals[0].integrand,
            x1.mul(&x2)
        );

        // replaced variable is x1 (pivot column), xi replaces x2
        assert_eq!(reg.u_registry.len(), 1);
        assert_eq!(reg.u_registry[0].1, JetVar::state(0, 0));
        assert_eq!(reg.xi_registry.len(), 1);
        assert_eq!(reg.xi_registry[0].1, JetVar::state(1, 0));

        // lifted point: u copies x1's value, xi takes x2's value
        let p = &reg.points[0];
        assert_eq!(p[&reg.u_registry[0].0], 0.0);
        assert_eq!(reg.system.xi_values[0], rat_int(1));
    }

    #[test]
    fn zolf_augmented_jacobian_and_determinant() {
        let sys = zolf();
        let reg = regularize(&sys, &[zolf_point()], &RegularizeOptions::default()).unwrap();
        let j = &reg.jacobian;
        // leading variables (x1, x2, u') after the second analysis
        let x1 = Expr::var(JetVar::state(0, 0));
        let x2 = Expr::var(JetVar::state(1, 0));
        let u = Expr::var(JetVar { kind: VarKind::EmbeddedU, index: 2, order: 0 });
        let xi = Expr::var(JetVar::xi(0));
        let expected = vec![
            vec![Expr::one(), Expr::one(), Expr::zero()],
            vec![x2.clone(), x1.clone(), Expr::one()],
            vec![
                Expr::zero(),
                Expr::zero(),
                Expr::func(UnaryFn::Exp, u.neg().sub(&xi)).neg(),
            ],
        ];
        assert_eq!(j.entries, expected);

        // determinant (x2 - x1) * exp(-u - xi): nonsingular when x1 != x2
        let t0 = 0.0;
        let m = j.evaluate(&reg.system, &reg.points[0], t0).unwrap();
        let det = m.determinant();
        // det = (x2 - x1) * exp(-u - xi) at x1 = 0, x2 = 1, u = 0, xi = 1
        let expected_det = (1.0 - 0.0) * (-1.0f64).exp();
        assert!((det - expected_det).abs() < 1e-12, "det = {det}");
        assert_eq!(reg.rank, 3);
    }

    #[test]
    fn degenerate_augmentation_matches_printed_jacobian() {
        let sys = degenerate();
        let reg = regularize(&sys, &[degenerate_point()], &RegularizeOptions::default()).unwrap();
        assert_eq!(reg.augmentations, 1);
        let x = |k| Expr::var(JetVar::state(0, k));
        let y = |k| Expr::var(JetVar::state(1, k));
        let two = rat_int(2);

        // s = {x''}, y = {y''}, f = {F1}, g = {D^3 F2}
        assert_eq!(reg.u_registry[0].1, JetVar::state(0, 2));
        assert_eq!(reg.xi_registry[0].1, JetVar::state(1, 2));

        // the augmented top-block Jacobian in (x'', y'', u') columns
        let expected = vec![
            vec![y(0).scale(&two), x(0).neg(), Expr::zero()],
            vec![
                x(0).mul(&x(1)).scale(&rat_int(4)).sub(&Expr::one()),
                Expr::zero(),
                y(0).scale(&two),
            ],
            vec![x(1).scale(&rat_int(-4)), Expr::zero(), x(0).scale(&rat_int(-2))],
        ];
        assert_eq!(reg.jacobian.entries, expected);
        assert_eq!(reg.rank, 3, "full rank n + r at the lifted point");
    }

    #[test]
    fn pryce_path_for_regular_system() {
        let sys = parse_system(
            r#"
system ok {
  time t from 0;
  var x, y;
  eq der(x,1) - y = 0;
  eq der(y,1) + x = 0;
}
"#,
        )
        .unwrap();
        let mut p = Point::new();
        p.insert(JetVar::state(0, 0), 1.0);
        p.insert(JetVar::state(1, 0), 0.0);
        let reg = regularize(&sys, &[p], &RegularizeOptions::default()).unwrap();
        assert_eq!(reg.method, Method::Pryce);
        assert_eq!(reg.augmentations, 0);
        assert_eq!(reg.rank, 2);
    }

    #[test]
    fn lift_preserves_projection_and_residual() {
        let sys = degenerate();
        let point = degenerate_full_jet();
        let reg = regularize(&sys, &[point.clone()], &RegularizeOptions::default()).unwrap();
        let lifted = &reg.points[0];
        // projection back to original coordinates equals the input exactly
        for (var, value) in &point {
            assert_eq!(lifted[var], *value);
        }
        // the embedded copies are satisfied at the lifted point
        let t0 = 0.0;
        for eq in &reg.system.equations {
            let r = reg.system.eval_equation_dae(&eq.dae, lifted, t0).unwrap();
            assert!(r.abs() < 1e-8, "residual {r}");
        }
    }

    #[test]
    fn embedding_dual_is_feasible_for_the_augmented_signature() {
        let sys = degenerate();
        let reg = regularize(&sys, &[degenerate_point()], &RegularizeOptions::default()).unwrap();
        // the certificate dual for the final system: kept rows 1, embedded 2, one u
        let (c_bar, d_bar) = feasible_embedding_dual(&[2, 2], 1, 2, 1);
        let analysis =
            combined_signature(&reg.system, &[], &SmoothingOptions::default()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if let Some(s) = analysis.sigma.get(i, j) {
                    assert!(d_bar[j] - c_bar[i] >= s, "entry ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn pendulum_first_pass_embedded_copies() {
        // the five embedded equations of the first pendulum pass, built by
        // hand: each top-block row with the pivot leading variables renamed
        // to u and the non-pivot one frozen to xi
        let sys = parse_system(
            r#"
system pendulum {
  time t from 0;
  var x1, x2, x3, x4, x5;
  param g = 49/5;
  eq x4 - int(x1 * x2 * cos(x3)) = 0;
  eq x5 - int(x2^2 * cos(x3) * sin(x3) - g) = 0;
  eq x1^2 + x2^2 * sin(x3)^2 - 1 = 0;
  eq tanh(der(x1,1) - x4) = 0;
  eq der(x2,1) * sin(x3) + x2 * der(x3,1) * cos(x3) - x5 = 0;
}
"#,
        )
        .unwrap();
        let analysis =
            combined_signature(&sys, &[], &SmoothingOptions::default()).unwrap();
        let offsets = offsets::solve_offsets(&analysis).unwrap();
        let prolonged = prolong(&sys, &offsets).unwrap();
        let jac = block_jacobian(&prolonged);
        let x3 = 0.5f64;
        let mut p = Point::new();
        p.insert(JetVar::state(0, 0), x3.cos());
        p.insert(JetVar::state(1, 0), 1.0);
        p.insert(JetVar::state(2, 0), x3);
        p.insert(JetVar::state(3, 0), 0.0);
        p.insert(JetVar::state(4, 0), 0.0);
        p.insert(JetVar::state(0, 1), 0.0);
        p.insert(JetVar::state(1, 1), -0.2 * x3.cos() / x3.sin());
        p.insert(JetVar::state(2, 1), 0.2);
        p.insert(JetVar::state(3, 1), x3.cos() * x3.cos());
        let value = jac.evaluate(&sys, &p, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counter = 0;
        let aug = augment(&sys, &prolonged, &value, 1e-10, &mut rng, &mut counter).unwrap();

        // one block, rank 4: four u variables and one xi
        assert_eq!(aug.u_map.len(), 4);
        assert_eq!(aug.xi_map.len(), 1);
        assert_eq!(aug.xi_map[0].1, JetVar::state(1, 1), "xi replaces x2'");
        let u_for = |replaced: JetVar| -> Expr {
            Expr::var(
                aug.u_map
                    .iter()
                    .find(|(_, r)| *r == replaced)
                    .map(|(u, _)| *u)
                    .unwrap_or_else(|| panic!("no u for {replaced}")),
            )
        };
        let xi = Expr::var(JetVar::xi(aug.xi_map[0].0));
        let xv = |i: usize| Expr::var(JetVar::state(i, 0));
        let sin3 = Expr::func(UnaryFn::Sin, xv(2));
        let cos3 = Expr::func(UnaryFn::Cos, xv(2));
        let two = rat_int(2);

        let expected_daes = vec![
            // embedded eq1': u(x4') - x1 x2 cos x3
            u_for(JetVar::state(3, 1)).sub(&xv(0).mul(&xv(1)).mul(&cos3)),
            // embedded eq2: u(x5) (the integral term rides along unchanged)
            u_for(JetVar::state(4, 0)),
            // embedded eq3': 2 x1 u(x1') + 2 x2 xi sin^2 + 2 x2^2 sin cos u(x3')
            xv(0)
                .mul(&u_for(JetVar::state(0, 1)))
                .scale(&two)
                .add(&xv(1).mul(&xi).mul(&sin3.powi(2)).scale(&two))
                .add(
                    &xv(1)
                        .powi(2)
                        .mul(&sin3)
                        .mul(&cos3)
                        .mul(&u_for(JetVar::state(2, 1)))
                        .scale(&two),
                ),
            // embedded eq4: tanh(u(x1') - x4)
            Expr::func(UnaryFn::Tanh, u_for(JetVar::state(0, 1)).sub(&xv(3))),
            // embedded eq5: xi sin x3 + x2 u(x3') cos x3 - u(x5)
            xi.mul(&sin3)
                .add(&xv(1).mul(&u_for(JetVar::state(2, 1))).mul(&cos3))
                .sub(&u_for(JetVar::state(4, 0))),
        ];
        // the embedded copies are the last five equations of the new system
        let embedded: Vec<&Expr> = aug.system.equations[4..].iter().map(|e| &e.dae).collect();
        for expect in &expected_daes {
            assert!(
                embedded.contains(&expect),
                "missing embedded row {}",
                aug.system.expr_string(expect)
            );
        }
        // the embedded quadrature equation keeps its original integrand
        let quad = aug.system.equations[4..]
            .iter()
            .find(|e| e.dae == expected_daes[1])
            .unwrap();
        assert_eq!(quad.integrals, sys.equations[1].integrals);
    }

    #[test]
    fn independent_blocks_of_drive() {
        let sys = parse_system(
            r#"
system drive2 {
  time t from 0;
  var w1, w2, w3, w4;
  eq der(w1,1) + der(w2,1) + int(w1 - w2) + w1 - w2 + 2 - sin(t) = 0;
  eq int(w1^2 - w2^2) = 0;
  eq der(w3,1) + der(w4,1) + int(w3 - w4) + w3 - w4 + sin(t) - 1 = 0;
  eq int(w3^2 - w4^2) = 0;
}
"#,
        )
        .unwrap();
        let blocks = independent_blocks(&sys);
        assert_eq!(blocks, vec![vec![0, 1], vec![2, 3]]);
    }
}

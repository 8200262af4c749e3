//! End-to-end wiring: signature analysis, witness points on the constraint
//! variety, per-component regularization, and numerical solution.

use crate::error::IdaeError;
use crate::expr::{rat_to_f64, Expr, JetVar};
use crate::integrate::{self, IntegrateOptions, MaterializedSystem, SolutionTrace};
use crate::ire::{self, Point, RegularizeOptions, RegularizedSystem};
use crate::model::IdaeSystem;
use crate::numrank::{self, PointRank};
use crate::offsets::{self, OffsetSolution};
use crate::prolong::{block_jacobian, prolong, BlockJacobian, ProlongedSystem};
use crate::signature::{combined_signature, SignatureAnalysis, SmoothingOptions};
use crate::witness::{self, WitnessOptions, WitnessPoint, WitnessSummary};

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub seed: u64,
    pub rank_tol: f64,
    pub refine_tol: f64,
    pub smoothing: SmoothingOptions,
    pub max_iterations: Option<usize>,
    pub segment_len: f64,
    pub tol: f64,
    pub drift_tol: f64,
    /// Consistent points supplied by the caller; they substitute for homotopy
    /// witness points (required for transcendental constraint varieties).
    pub user_points: Vec<Point>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            seed: 0,
            rank_tol: numrank::DEFAULT_RANK_TOL,
            refine_tol: 1e-10,
            smoothing: SmoothingOptions::default(),
            max_iterations: None,
            segment_len: 0.5,
            tol: 1e-9,
            drift_tol: 1e-6,
            user_points: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComponentResult {
    pub id: usize,
    /// Rank of the original top-block Jacobian on this component.
    pub initial_rank: usize,
    pub method: String,
    pub augmentations: usize,
    pub dof: i64,
    /// Union of leading variables replaced by u across all passes.
    pub replaced: Vec<String>,
    /// Rows kept in original form in the final embedding pass.
    pub kept_rows: Vec<String>,
    pub witness_residual: f64,
    pub regularized: RegularizedSystem,
}

#[derive(Debug)]
pub struct PipelineResult {
    pub system: IdaeSystem,
    pub analysis: SignatureAnalysis,
    pub offsets: OffsetSolution,
    pub dof: i64,
    pub prolonged: ProlongedSystem,
    pub jacobian: BlockJacobian,
    pub witness: Option<(Vec<WitnessPoint>, WitnessSummary)>,
    pub components: Vec<ComponentResult>,
    pub warnings: Vec<String>,
}

/// Constraint expressions at the initial time: lower-block rows with integral
/// terms dropped (they vanish at t0), embedding constants inlined, and
/// identically-zero rows removed.
pub fn constraints_at_t0(sys: &IdaeSystem, prolonged: &ProlongedSystem) -> Vec<Expr> {
    prolonged
        .constraints()
        .iter()
        .map(|row| row.dae.substitute_xi(&sys.xi_values).substitute_t(&sys.t0))
        .filter(|e| !e.is_zero())
        .collect()
}

/// Full structural analysis plus per-component regularization.
pub fn analyze(sys: &IdaeSystem, opts: &PipelineOptions) -> Result<PipelineResult, IdaeError> {
    let mut warnings = Vec::new();

    // Phase 1 on the whole system. User points participate in the
    // degeneration test right away.
    let analysis = combined_signature(sys, &opts.user_points, &opts.smoothing)?;
    let offsets = offsets::solve_offsets(&analysis)?;
    let dof = offsets::degrees_of_freedom(offsets.delta, &analysis.omega_col_max())?;
    let prolonged = prolong(sys, &offsets)?;
    let jacobian = block_jacobian(&prolonged);

    // Witness points on the constraint variety at t0, unless the caller
    // supplied consistent points.
    let mut points: Vec<Point> = opts.user_points.clone();
    let mut witness_out = None;
    let constraints = constraints_at_t0(sys, &prolonged);
    if points.is_empty() {
        let mut vars: Vec<JetVar> = Vec::new();
        for e in &constraints {
            for v in e.jet_vars() {
                if !vars.contains(&v) {
                    vars.push(v);
                }
            }
        }
        if vars.is_empty() {
            // unconstrained at t0: sample a generic point in the variables the
            // Jacobian entries read
            for row in &jacobian.entries {
                for e in row {
                    for v in e.jet_vars() {
                        if v.kind != crate::expr::VarKind::EmbeddedXi && !vars.contains(&v) {
                            vars.push(v);
                        }
                    }
                }
            }
        }
        if vars.is_empty() {
            points.push(Point::new());
        } else {
            let wopts = WitnessOptions {
                seed: opts.seed,
                refine_tol: opts.refine_tol,
                ..Default::default()
            };
            match witness::witness_points(&constraints, &vars, &wopts) {
                Ok((pts, summary)) => {
                    if pts.is_empty() {
                        return Err(IdaeError::Numeric(
                            "no real witness points found on the constraint variety".into(),
                        ));
                    }
                    points.extend(pts.iter().map(|p| p.coords.clone()));
                    witness_out = Some((pts, summary));
                }
                Err(e) => {
                    warnings.push(format!(
                        "witness computation unavailable: {e}; supply consistent points to analyze components"
                    ));
                }
            }
        }
    }

    // group points by the rank signature of the top-block Jacobian
    let mut components = Vec::new();
    if !points.is_empty() {
        let t0 = rat_to_f64(&sys.t0);
        let mut extended: Vec<Point> = Vec::new();
        let mut reports: Vec<PointRank> = Vec::new();
        for (i, p) in points.iter().enumerate() {
            let ext = ire::extend_point(sys, &prolonged, p, opts.refine_tol);
            let m = jacobian.evaluate(sys, &ext, t0)?;
            reports.push(PointRank { point_index: i, report: numrank::numeric_rank(&m, opts.rank_tol)? });
            extended.push(ext);
        }
        let keys: Vec<(usize, Vec<usize>)> = reports.iter().map(PointRank::key).collect();
        let mut wpoints: Vec<WitnessPoint> = points
            .iter()
            .map(|p| WitnessPoint {
                coords: p.clone(),
                residual: constraint_residual(&constraints, p),
                component_id: usize::MAX,
                refined: true,
            })
            .collect();
        let wopts = WitnessOptions { seed: opts.seed, refine_tol: opts.refine_tol, ..Default::default() };
        let group_vars: Vec<JetVar> = {
            let mut vars = Vec::new();
            for e in &constraints {
                for v in e.jet_vars() {
                    if !vars.contains(&v) {
                        vars.push(v);
                    }
                }
            }
            vars
        };
        let n_groups = witness::group_components(&mut wpoints, &keys, &constraints, &group_vars, &wopts);

        for id in 0..n_groups {
            let member_indices: Vec<usize> = wpoints
                .iter()
                .enumerate()
                .filter(|(_, p)| p.component_id == id)
                .map(|(i, _)| i)
                .collect();
            let group_points: Vec<Point> =
                member_indices.iter().map(|&i| extended[i].clone()).collect();
            let group_reports: Vec<PointRank> = member_indices
                .iter()
                .map(|&i| reports[i].clone())
                .collect();
            numrank::check_group_consistency(&group_reports)?;
            let initial_rank = group_reports[0].report.rank;
            let witness_residual = member_indices
                .iter()
                .map(|&i| wpoints[i].residual)
                .fold(0.0f64, f64::max);

            let reg_opts = RegularizeOptions {
                rank_tol: opts.rank_tol,
                refine_tol: opts.refine_tol,
                smoothing: opts.smoothing.clone(),
                xi_seed: opts.seed.wrapping_add(id as u64).wrapping_mul(0x9e3779b97f4a7c15),
                max_iterations: opts.max_iterations,
            };
            let reg = ire::regularize(sys, &group_points, &reg_opts)?;
            let mut replaced: Vec<String> = Vec::new();
            for it in &reg.iterations {
                for r in &it.replaced {
                    if !replaced.contains(r) {
                        replaced.push(r.clone());
                    }
                }
            }
            let kept_rows = reg
                .iterations
                .iter()
                .rev()
                .find(|it| !it.kept_rows.is_empty())
                .map(|it| it.kept_rows.clone())
                .unwrap_or_default();
            components.push(ComponentResult {
                id,
                initial_rank,
                method: reg.method.label(),
                augmentations: reg.augmentations,
                dof: reg.dof,
                replaced,
                kept_rows,
                witness_residual,
                regularized: reg,
            });
        }
        witness_out = witness_out.map(|(mut pts, summary)| {
            for (p, w) in pts.iter_mut().zip(&wpoints) {
                p.component_id = w.component_id;
                p.residual = w.residual;
            }
            (pts, summary)
        });
        if witness_out.is_none() {
            // user-supplied points still get reported
            witness_out = Some((wpoints, WitnessSummary::default()));
        }
    }

    if !components.is_empty() {
        warnings.push(
            "constant rank and smoothness are verified only at the sampled points; \
             the groups are candidate components, not certified irreducible ones"
                .to_string(),
        );
    }

    Ok(PipelineResult {
        system: sys.clone(),
        analysis,
        offsets,
        dof,
        prolonged,
        jacobian,
        witness: witness_out,
        components,
        warnings,
    })
}

fn constraint_residual(constraints: &[Expr], point: &Point) -> f64 {
    constraints
        .iter()
        .map(|e| e.eval_point(point, 0.0).map(f64::abs).unwrap_or(f64::INFINITY))
        .fold(0.0f64, f64::max)
}

/// Materialize and integrate one regularized component.
pub fn solve_component(
    original: &IdaeSystem,
    component: &ComponentResult,
    span: (f64, f64),
    opts: &PipelineOptions,
) -> Result<(MaterializedSystem, SolutionTrace), IdaeError> {
    let mat = integrate::materialize_integrals(&component.regularized, original)?;
    let int_opts = IntegrateOptions {
        tol: opts.tol,
        segment_len: opts.segment_len,
        drift_tol: opts.drift_tol,
        rank_tol: opts.rank_tol,
        refine_tol: opts.refine_tol,
        ..Default::default()
    };
    let init = component.regularized.points.first().cloned().unwrap_or_default();
    let trace = integrate::integrate(&mat, &init, span, &int_opts)?;
    Ok((mat, trace))
}

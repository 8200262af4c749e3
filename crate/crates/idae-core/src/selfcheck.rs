//! Built-in oracle suite: independent cross-checks of the assignment solver,
//! the symbolic differentiation, and the integral reconstruction. Exposed to
//! the command line as `check` and reused by the acceptance tests.

use crate::expr::{rat, rat_int, Expr, JetVar, Rat, UnaryFn};
use crate::model::IntegralTerm;
use crate::offsets;
use crate::parse::parse_system;
use crate::prolong::{block_jacobian, prolong};
use crate::signature::{combined_signature, SigEntry, SignatureMatrix, SmoothingOptions};
use num_traits::{ToPrimitive, Zero};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn pass(name: &str, detail: String) -> Self {
        CheckReport { name: name.to_string(), passed: true, detail }
    }
    fn fail(name: &str, detail: String) -> Self {
        CheckReport { name: name.to_string(), passed: false, detail }
    }
}

/// Exhaustive permutation search for the highest-value transversal, with the
/// same lexicographic tie-break as the production solver.
pub fn brute_force_hvt(sigma: &SignatureMatrix) -> Option<(Vec<usize>, i64)> {
    let n = sigma.rows;
    let mut best: Option<(Vec<usize>, i64)> = None;
    let mut perm: Vec<usize> = (0..n).collect();
    fn recurse(
        perm: &mut Vec<usize>,
        k: usize,
        sigma: &SignatureMatrix,
        best: &mut Option<(Vec<usize>, i64)>,
    ) {
        let n = perm.len();
        if k == n {
            let mut v = 0i64;
            for (i, &j) in perm.iter().enumerate() {
                match sigma.get(i, j) {
                    Some(s) => v += s,
                    None => return,
                }
            }
            match best {
                Some((bp, bv)) if *bv > v || (*bv == v && &*bp <= perm) => {}
                _ => *best = Some((perm.clone(), v)),
            }
            return;
        }
        for i in k..n {
            perm.swap(k, i);
            recurse(perm, k + 1, sigma, best);
            perm.swap(k, i);
        }
    }
    recurse(&mut perm, 0, sigma, &mut best);
    best
}

/// Assignment solver vs. permutation enumeration on random matrices.
pub fn check_hvt_against_brute_force(cases: usize, max_n: usize, seed: u64) -> CheckReport {
    let name = "hvt-brute-force";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let n = rng.random_range(2..=max_n);
        let sigma = SignatureMatrix::from_rows(
            (0..n)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            if rng.random_bool(0.3) {
                                None::<i64>
                            } else {
                                Some(rng.random_range(-4..=6))
                            }
                        })
                        .collect::<Vec<SigEntry>>()
                })
                .collect(),
        );
        let expected = brute_force_hvt(&sigma);
        let got = offsets::hvt(&sigma).ok();
        match (&got, &expected) {
            (Some((t, v)), Some((bt, bv))) if t == bt && v == bv => {}
            (None, None) => {}
            _ => {
                return CheckReport::fail(
                    name,
                    format!("case {case}: solver {got:?} vs brute force {expected:?}"),
                );
            }
        }
    }
    CheckReport::pass(name, format!("{cases} random matrices up to {max_n}x{max_n}"))
}

fn random_expression(rng: &mut ChaCha8Rng, vars: usize, allow_analytic: bool) -> Expr {
    let mut e = Expr::zero();
    let terms = rng.random_range(2..=5);
    for _ in 0..terms {
        let mut m = Expr::constant(rat(rng.random_range(-8i64..=8).max(1), rng.random_range(1..=4)));
        let factors = rng.random_range(1..=3);
        for _ in 0..factors {
            let v = JetVar::state(rng.random_range(0..vars), 0);
            m = m.mul(&Expr::var(v).powi(rng.random_range(1..=2)));
        }
        e = e.add(&m);
    }
    if allow_analytic && rng.random_bool(0.4) {
        let f = match rng.random_range(0..4) {
            0 => UnaryFn::Sin,
            1 => UnaryFn::Cos,
            2 => UnaryFn::Exp,
            _ => UnaryFn::Tanh,
        };
        let inner = Expr::var(JetVar::state(rng.random_range(0..vars), 0));
        e = e.add(&Expr::func(f, inner).mul(&Expr::var(JetVar::state(0, 0))));
    }
    e
}

/// Symbolic partial derivatives vs. central finite differences.
pub fn check_partials_against_finite_differences(cases: usize, seed: u64) -> CheckReport {
    let name = "finite-difference-jacobian";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let vars = 3;
        let e = random_expression(&mut rng, vars, case % 2 == 0);
        for _ in 0..20 {
            let mut point: BTreeMap<JetVar, f64> = BTreeMap::new();
            for j in 0..vars {
                point.insert(JetVar::state(j, 0), rng.random_range(-1.5..1.5));
            }
            for j in 0..vars {
                let v = JetVar::state(j, 0);
                let sym = e.partial(&v).eval_point(&point, 0.3).unwrap();
                let mut plus = point.clone();
                plus.insert(v, point[&v] + h);
                let mut minus = point.clone();
                minus.insert(v, point[&v] - h);
                let fd = (e.eval_point(&plus, 0.3).unwrap() - e.eval_point(&minus, 0.3).unwrap())
                    / (2.0 * h);
                let err = (sym - fd).abs() / sym.abs().max(1.0);
                worst = worst.max(err);
                if err > 1e-6 {
                    return CheckReport::fail(
                        name,
                        format!("case {case}, var {j}: symbolic {sym} vs fd {fd} (rel err {err:.3e})"),
                    );
                }
            }
        }
    }
    CheckReport::pass(name, format!("{cases} expressions, worst relative error {worst:.3e}"))
}

/// Integrate a polynomial in the dummy symbol s from 0 to `upper`, exactly.
fn integrate_s_polynomial(e: &Expr, upper: &Rat) -> Rat {
    let mut total = Rat::zero();
    for m in e.terms() {
        let mut power = 0u32;
        let mut ok = true;
        for (atom, p) in &m.factors {
            match atom {
                crate::expr::Atom::S => power += p,
                _ => {
                    ok = false;
                }
            }
        }
        assert!(ok, "integrand must be a pure polynomial in s");
        let q = power + 1;
        let term = &m.coeff * upper.clone().pow(q as i32) / rat_int(q as i64);
        total += term;
    }
    total
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    let whole = simpson(f, a, b);
    let mid = 0.5 * (a + b);
    let left = simpson(f, a, mid);
    let right = simpson(f, mid, b);
    if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
        left + right + (left + right - whole) / 15.0
    } else {
        adaptive_simpson(f, a, mid, tol / 2.0, depth - 1)
            + adaptive_simpson(f, mid, b, tol / 2.0, depth - 1)
    }
}

/// The binomial reconstruction of int (t-s)^k g ds against adaptive
/// quadrature along random polynomial trajectories.
pub fn check_reconstruction_against_quadrature(cases: usize, seed: u64) -> CheckReport {
    let name = "integral-reconstruction-quadrature";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        // random polynomial trajectory x(s) of degree <= 3 and its derivative
        let coeffs: Vec<Rat> = (0..4)
            .map(|_| rat(rng.random_range(-6i64..=6), rng.random_range(1..=3)))
            .collect();
        let mut traj = Expr::zero();
        for (k, c) in coeffs.iter().enumerate() {
            traj = traj.add(&Expr::s().powi(k as u32).scale(c));
        }
        let dtraj = {
            let mut d = Expr::zero();
            for (k, c) in coeffs.iter().enumerate().skip(1) {
                d = d.add(&Expr::s().powi((k - 1) as u32).scale(&(c * rat_int(k as i64))));
            }
            d
        };

        // random integrand in (s, x(s), x'(s)), polynomial
        let x = Expr::var(JetVar::state(0, 0));
        let xd = Expr::var(JetVar::state(0, 1));
        let mut g = Expr::zero();
        for _ in 0..rng.random_range(1..=3) {
            let mut term = Expr::constant(rat(rng.random_range(-4i64..=4).max(1), 1));
            for _ in 0..rng.random_range(1..=2) {
                term = match rng.random_range(0..3) {
                    0 => term.mul(&x),
                    1 => term.mul(&xd),
                    _ => term.mul(&Expr::s()),
                };
            }
            g = g.add(&term);
        }
        let degree = rng.random_range(0..=2usize);
        let coeff = rat(rng.random_range(1..=3), 1);
        let term = IntegralTerm::monomial(coeff.clone(), degree, g.clone());

        // substitute the trajectory into the integrand: a pure s-polynomial
        let mut subst = BTreeMap::new();
        subst.insert(JetVar::state(0, 0), traj.clone());
        subst.insert(JetVar::state(0, 1), dtraj.clone());
        let g_of_s = g.substitute(&subst);

        let upper = rat(13, 10);
        let t_value = rat_to_f64(&upper);

        // exact moments z_p = int_0^T s^p g(s) ds and the reconstruction
        let mut recon = 0.0f64;
        for p in 0..=degree {
            let moment = integrate_s_polynomial(&Expr::s().powi(p as u32).mul(&g_of_s), &upper);
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            let b = binom_f(degree, p);
            recon += rat_to_f64(&coeff)
                * b
                * sign
                * t_value.powi((degree - p) as i32)
                * rat_to_f64(&moment);
        }
        let _ = &term;

        // independent oracle: adaptive quadrature of kernel * integrand
        let g_fn = |s: f64| -> f64 {
            let mut pt = BTreeMap::new();
            let _ = &pt;
            pt.insert(JetVar::state(0, 0), eval_s_poly(&traj, s));
            pt.insert(JetVar::state(0, 1), eval_s_poly(&dtraj, s));
            let gval = g
                .eval(&0.0, Some(&s), &mut |v: &JetVar| pt.get(v).copied())
                .unwrap();
            rat_to_f64(&coeff) * (t_value - s).powi(degree as i32) * gval
        };
        let quad = adaptive_simpson(&g_fn, 0.0, t_value, 1e-12, 30);
        let err = (recon - quad).abs();
        worst = worst.max(err);
        if err > 1e-8 {
            return CheckReport::fail(
                name,
                format!("case {case}: reconstruction {recon} vs quadrature {quad} (err {err:.3e})"),
            );
        }
    }
    CheckReport::pass(name, format!("{cases} kernels/integrands, worst error {worst:.3e}"))
}

fn binom_f(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

fn eval_s_poly(e: &Expr, s: f64) -> f64 {
    e.eval(&0.0, Some(&s), &mut |_| None).unwrap()
}

fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap()
}

/// Griewank zero-pattern: every top-block Jacobian entry with slack in the
/// offset inequality vanishes identically; spot-checked at random points.
pub fn check_griewank_zero_pattern(dsl_text: &str, seed: u64) -> CheckReport {
    let name = "griewank-zero-pattern";
    let sys = match parse_system(dsl_text) {
        Ok(s) => s,
        Err(e) => return CheckReport::fail(name, format!("parse: {e}")),
    };
    let analysis = match combined_signature(&sys, &[], &SmoothingOptions::default()) {
        Ok(a) => a,
        Err(e) => return CheckReport::fail(name, format!("signature: {e}")),
    };
    let sol = match offsets::solve_offsets(&analysis) {
        Ok(s) => s,
        Err(e) => return CheckReport::fail(name, format!("offsets: {e}")),
    };
    let prolonged = match prolong(&sys, &sol) {
        Ok(p) => p,
        Err(e) => return CheckReport::fail(name, format!("prolongation: {e}")),
    };
    let jac = block_jacobian(&prolonged);
    let n = sys.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0usize;
    for i in 0..n {
        for j in 0..n {
            let slack = match analysis.sigma.get(i, j) {
                Some(s) => sol.d[j] - sol.c[i] > s,
                None => true,
            };
            if !slack {
                continue;
            }
            checked += 1;
            if !jac.entries[i][j].is_zero() {
                return CheckReport::fail(
                    name,
                    format!("{}: entry ({i},{j}) is not identically zero", sys.name),
                );
            }
            // spot-check the evaluation path as well
            for _ in 0..10 {
                let mut pt = BTreeMap::new();
                for var in 0..n {
                    for ord in 0..=(sol.d[var].max(2) as u32) {
                        pt.insert(
                            JetVar { kind: sys.variables[var].kind, index: var, order: ord },
                            rng.random_range(-2.0..2.0),
                        );
                    }
                }
                match sys.eval_equation_dae(&jac.entries[i][j], &pt, 0.7) {
                    Ok(0.0) => {}
                    Ok(v) => {
                        return CheckReport::fail(
                            name,
                            format!("{}: slack entry ({i},{j}) evaluated to {v}", sys.name),
                        );
                    }
                    Err(e) => return CheckReport::fail(name, format!("evaluation: {e}")),
                }
            }
        }
    }
    CheckReport::pass(name, format!("{}: {checked} slack entries vanish", sys.name))
}

/// Run every oracle; model texts feed the zero-pattern check.
pub fn run_all(models: &[(String, String)], seed: u64) -> Vec<CheckReport> {
    let mut out = vec![
        check_hvt_against_brute_force(200, 6, seed),
        check_partials_against_finite_differences(50, seed.wrapping_add(1)),
        check_reconstruction_against_quadrature(20, seed.wrapping_add(2)),
    ];
    for (name, text) in models {
        let mut report = check_griewank_zero_pattern(text, seed.wrapping_add(3));
        report.name = format!("griewank-zero-pattern[{name}]");
        out.push(report);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_suite_is_green() {
        for report in run_all(&[], 42) {
            assert!(report.passed, "{}: {}", report.name, report.detail);
        }
    }

    #[test]
    fn exponential_pair_reconstruction_matches_quadrature() {
        // the mixed-kernel integral int (x1 + x2 + (t-s) x1 x2) ds along the
        // trajectory x1(s) = s, x2(s) = 1 - s^2/4: reconstruction from exact
        // moments vs adaptive quadrature
        let x1 = Expr::var(JetVar::state(0, 0));
        let x2 = Expr::var(JetVar::state(1, 0));
        let terms = [
            IntegralTerm::monomial(rat_int(1), 0, x1.add(&x2)),
            IntegralTerm::monomial(rat_int(1), 1, x1.mul(&x2)),
        ];
        let traj1 = Expr::s();
        let traj2 = Expr::one().sub(&Expr::s().powi(2).scale(&rat(1, 4)));
        let mut subst = BTreeMap::new();
        subst.insert(JetVar::state(0, 0), traj1.clone());
        subst.insert(JetVar::state(1, 0), traj2.clone());

        let upper = rat(17, 10);
        let t_value = rat_to_f64(&upper);
        let mut recon = 0.0;
        for term in &terms {
            let g_of_s = term.integrand.substitute(&subst);
            for (k, a) in term.kernel.iter().enumerate() {
                for p in 0..=k {
                    let moment =
                        integrate_s_polynomial(&Expr::s().powi(p as u32).mul(&g_of_s), &upper);
                    let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                    recon += rat_to_f64(a)
                        * binom_f(k, p)
                        * sign
                        * t_value.powi((k - p) as i32)
                        * rat_to_f64(&moment);
                }
            }
        }
        let quad = adaptive_simpson(
            &|s: f64| {
                let x1v = s;
                let x2v = 1.0 - s * s / 4.0;
                (x1v + x2v) + (t_value - s) * x1v * x2v
            },
            0.0,
            t_value,
            1e-12,
            30,
        );
        assert!(
            (recon - quad).abs() < 1e-8,
            "reconstruction {recon} vs quadrature {quad}"
        );
    }

    #[test]
    fn zero_pattern_on_inline_system() {
        let text = r#"
system deg {
  time t from 0;
  var x, y;
  eq 2 * y * der(x,2) - x * der(y,2) + 2 * x * der(x,1)^2 - der(x,1) + sin(t) = 0;
  eq int(y - x^2) = 0;
}
"#;
        let report = check_griewank_zero_pattern(text, 9);
        assert!(report.passed, "{}", report.detail);
    }
}

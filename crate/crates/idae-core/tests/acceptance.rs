//! Acceptance suite: one test per criterion, each printing a pass line with
//! the checked quantities. Tolerances are pinned in the assertions.

use idae_core::expr::{Expr, JetVar, UnaryFn, VarKind};
use idae_core::ire::{regularize, Point, RegularizeOptions};
use idae_core::offsets::{degrees_of_freedom, solve_offsets};
use idae_core::parse_system;
use idae_core::pipeline::{analyze, solve_component, PipelineOptions};
use idae_core::signature::{combined_signature, SmoothingOptions, Upsilon};
use idae_core::{selfcheck, IdaeSystem};
use std::time::Instant;

fn model(name: &str) -> IdaeSystem {
    let path = format!("{}/../../models/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {path}: {e}"));
    parse_system(&text).unwrap_or_else(|e| panic!("parse {path}: {e}"))
}

fn model_text(name: &str) -> String {
    let path = format!("{}/../../models/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap()
}

fn fin(v: i64) -> Option<i64> {
    Some(v)
}

fn inf() -> Option<i64> {
    None
}

fn pendulum_point() -> Point {
    let mut p = Point::new();
    let x3 = 0.5f64;
    p.insert(JetVar::state(0, 0), x3.cos());
    p.insert(JetVar::state(1, 0), 1.0);
    p.insert(JetVar::state(2, 0), x3);
    p.insert(JetVar::state(3, 0), 0.0);
    p.insert(JetVar::state(4, 0), 0.0);
    p.insert(JetVar::state(0, 1), 0.0);
    p.insert(JetVar::state(1, 1), -0.2 * x3.cos() / x3.sin());
    p.insert(JetVar::state(2, 1), 0.2);
    p.insert(JetVar::state(3, 1), x3.cos() * x3.cos());
    p
}

#[test]
fn criterion_1_signature_reproduction() {
    let start = Instant::now();
    let sys = model("zolf.idae");
    let a = combined_signature(&sys, &[], &SmoothingOptions::default()).unwrap();
    assert_eq!(a.sigma_dae.to_vecs(), vec![vec![fin(0), fin(0)], vec![inf(), inf()]]);
    assert_eq!(a.sigma_iae.to_vecs(), vec![vec![inf(), inf()], vec![fin(-1), fin(-1)]]);
    assert_eq!(a.sigma.to_vecs(), vec![vec![fin(0), fin(0)], vec![fin(-1), fin(-1)]]);
    assert_eq!(a.omega, vec![vec![0, 0], vec![2, 2]]);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("[criterion 1] PASS - signature matrices and omega match exactly ({elapsed:?})");
}

#[test]
fn criterion_2_offset_reproduction() {
    let cases: [(&str, Option<Point>, Vec<i64>, Vec<i64>); 4] = [
        ("zolf.idae", None, vec![0, 1], vec![0, 0]),
        ("nonlinear-degenerate.idae", None, vec![0, 3], vec![2, 2]),
        ("pendulum.idae", None, vec![1, 0, 1, 0, 0], vec![1, 1, 1, 1, 0]),
        ("drive2.idae", None, vec![0, 2, 0, 2], vec![1, 1, 1, 1]),
    ];
    for (name, _, c, d) in cases {
        let start = Instant::now();
        let sys = model(name);
        let a = combined_signature(&sys, &[], &SmoothingOptions::default()).unwrap();
        let sol = solve_offsets(&a).unwrap();
        assert_eq!(sol.c, c, "{name} offsets c");
        assert_eq!(sol.d, d, "{name} offsets d");
        let elapsed = start.elapsed();
        assert!(elapsed.as_secs_f64() < 1.0, "{name} took {elapsed:?}");
        println!("[criterion 2] PASS - {name}: c = {:?}, d = {:?} ({elapsed:?})", sol.c, sol.d);
    }
}

#[test]
fn criterion_3_dof_reproduction() {
    // delta + sum_j max_i omega_ij on the original systems
    let zolf = model("zolf.idae");
    let a = combined_signature(&zolf, &[], &SmoothingOptions::default()).unwrap();
    let sol = solve_offsets(&a).unwrap();
    let dof_zolf = degrees_of_freedom(sol.delta, &a.omega_col_max()).unwrap();
    assert_eq!(dof_zolf, 3);

    let pendulum = model("pendulum.idae");
    let a = combined_signature(&pendulum, &[], &SmoothingOptions::default()).unwrap();
    let sol = solve_offsets(&a).unwrap();
    let dof_pend = degrees_of_freedom(sol.delta, &a.omega_col_max()).unwrap();
    assert_eq!(dof_pend, 5);

    // post-embedding accounting
    let mut p = Point::new();
    p.insert(JetVar::state(0, 0), 0.0);
    p.insert(JetVar::state(1, 0), 1.0);
    let reg = regularize(&zolf, &[p], &RegularizeOptions::default()).unwrap();
    assert_eq!(reg.dof, 2, "embedded exponential/integral pair");

    let reg_pend = regularize(&pendulum, &[pendulum_point()], &RegularizeOptions::default()).unwrap();
    assert_eq!(reg_pend.dof, 3, "pendulum after the second embedding pass");

    println!("[criterion 3] PASS - DOF 3 (zolf), 5 (pendulum), 2 (post-embedding), 3 (pendulum final)");
}

#[test]
fn criterion_4_degeneration_detection() {
    let sys = parse_system(
        r#"
system smoothing {
  time t from 0;
  var x, y;
  eq y - der(x,2) = 0;
  eq int((t-s)^1 * (y(s)/2 - der(x,2)(s)) * y(s)) = 0;
}
"#,
    )
    .unwrap();
    let opts = SmoothingOptions::default();

    // without an evaluation point: upsilon = 2 for y
    let plain = combined_signature(&sys, &[], &opts).unwrap();
    assert_eq!(plain.upsilon[1][1], Upsilon::Finite(2));
    assert!(!plain.degenerate[1][1]);

    // with a consistent point (y = x'' within 1e-8): upsilon = infinity
    let mut pt = Point::new();
    pt.insert(JetVar::state(1, 0), 1.2);
    pt.insert(JetVar::state(0, 2), 1.2 + 5e-9);
    pt.insert(JetVar::state(0, 0), 0.4);
    let degen = combined_signature(&sys, &[pt], &opts).unwrap();
    assert_eq!(degen.upsilon[1][1], Upsilon::Infinite);
    assert!(degen.degenerate[1][1]);
    // the x column keeps its finite smoothing index at the same point
    assert_eq!(degen.upsilon[1][0], Upsilon::Finite(2));

    println!("[criterion 4] PASS - upsilon(y) = infinity at a consistent point, 2 without");
}

#[test]
fn criterion_5_drive_component_table() {
    let start = Instant::now();
    let sys = model("drive2.idae");
    let opts = PipelineOptions { seed: 7, ..Default::default() };
    let result = analyze(&sys, &opts).unwrap();
    assert_eq!(result.components.len(), 4, "exactly four component groups");
    let mut ranks: Vec<usize> = result.components.iter().map(|c| c.initial_rank).collect();
    ranks.sort_unstable();
    assert_eq!(ranks, vec![2, 3, 3, 4]);
    let mut methods: Vec<&str> = result.components.iter().map(|c| c.method.as_str()).collect();
    methods.sort_unstable();
    assert_eq!(methods, vec!["IRE", "IRE", "IRE", "Pryce"]);
    for c in &result.components {
        assert!(c.witness_residual < 1e-8, "membership residual {}", c.witness_residual);
        let expected: Vec<Vec<String>> = match c.initial_rank {
            4 => vec![vec![]],
            3 => vec![vec!["der(w1,1)".into()], vec!["der(w3,1)".into()]],
            2 => vec![vec!["der(w1,1)".into(), "der(w3,1)".into()]],
            r => panic!("unexpected rank {r}"),
        };
        assert!(
            expected.contains(&c.replaced),
            "rank {} component replaced {:?}",
            c.initial_rank,
            c.replaced
        );
    }
    // the two rank-3 groups embed different blocks
    let rank3: Vec<&Vec<String>> = result
        .components
        .iter()
        .filter(|c| c.initial_rank == 3)
        .map(|c| &c.replaced)
        .collect();
    assert_ne!(rank3[0], rank3[1]);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "pipeline took {elapsed:?}");
    println!(
        "[criterion 5] PASS - 4 groups, ranks (4,3,3,2), replaced sets match, methods Pryce/IRE ({elapsed:?})"
    );
}

#[test]
fn criterion_6_embedding_correctness() {
    // exponential/integral pair: s = {x1}, y = {x2}, f = {eq2'}, g = {eq1}
    let zolf = model("zolf.idae");
    let mut p = Point::new();
    p.insert(JetVar::state(0, 0), 0.0);
    p.insert(JetVar::state(1, 0), 1.0);
    let reg = regularize(&zolf, &[p], &RegularizeOptions::default()).unwrap();
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
    assert_eq!(reg.jacobian.entries, expected, "augmented Jacobian of the exponential pair");
    assert_eq!(reg.rank, 3, "n + r = 2 + 1 at the lifted point");

    // nonlinear degenerate system: s = {x''}, y = {y''}, f = {eq1}, g = {eq2'''}
    let deg = model("nonlinear-degenerate.idae");
    let mut q = Point::new();
    q.insert(JetVar::state(0, 0), 1.0);
    q.insert(JetVar::state(1, 0), 1.0);
    q.insert(JetVar::state(0, 1), 0.5);
    q.insert(JetVar::state(1, 1), 1.0);
    let reg = regularize(&deg, &[q], &RegularizeOptions::default()).unwrap();
    let x = |k| Expr::var(JetVar::state(0, k));
    let y = |k| Expr::var(JetVar::state(1, k));
    let two = idae_core::expr::rat_int(2);
    let expected = vec![
        vec![y(0).scale(&two), x(0).neg(), Expr::zero()],
        vec![
            x(0).mul(&x(1)).scale(&idae_core::expr::rat_int(4)).sub(&Expr::one()),
            Expr::zero(),
            y(0).scale(&two),
        ],
        vec![
            x(1).scale(&idae_core::expr::rat_int(-4)),
            Expr::zero(),
            x(0).scale(&idae_core::expr::rat_int(-2)),
        ],
    ];
    assert_eq!(reg.jacobian.entries, expected, "augmented Jacobian of the degenerate system");
    assert_eq!(reg.rank, 3, "n + r = 2 + 1 at the lifted point");

    println!("[criterion 6] PASS - augmented Jacobians match symbolically; rank n + r at lifted points");
}

#[test]
fn criterion_7_pendulum_termination() {
    let sys = model("pendulum.idae");
    let reg = regularize(&sys, &[pendulum_point()], &RegularizeOptions::default()).unwrap();
    assert_eq!(reg.augmentations, 2, "exactly two embedding iterations");
    assert_eq!(reg.iterations[0].rank, 4);
    assert_eq!(reg.iterations[0].size, 5);
    assert_eq!(reg.iterations[1].rank, 8, "first pass after embedding: rank 8 of 9");
    assert_eq!(reg.iterations[1].size, 9);
    let last = reg.iterations.last().unwrap();
    assert_eq!(last.rank, last.size, "final pass has full rank");
    // DOF(G) <= DOF(F) - (n - r) at every step
    for w in reg.iterations.windows(2) {
        let drop = (w[0].size - w[0].rank) as i64;
        assert!(
            w[1].dof <= w[0].dof - drop,
            "DOF bound violated: {} -> {} with deficiency {drop}",
            w[0].dof,
            w[1].dof
        );
    }
    assert_eq!(reg.iterations[0].dof, 5);
    assert_eq!(reg.iterations[1].dof, 4);
    assert_eq!(last.dof, 3);
    println!("[criterion 7] PASS - two passes (rank 8 of 9 in between), DOF 5 -> 4 -> 3");
}

#[test]
fn criterion_8_drive_closed_forms() {
    let sys = model("drive2.idae");
    let opts = PipelineOptions { seed: 7, ..Default::default() };
    let result = analyze(&sys, &opts).unwrap();

    // component (a): w1 = w2 and w3 = w4 everywhere
    let start = Instant::now();
    let comp_a = result
        .components
        .iter()
        .find(|c| c.initial_rank == 4)
        .expect("full-rank component");
    let (_, trace) = solve_component(&sys, comp_a, (0.0, 5.0), &opts).unwrap();
    assert!(trace.stopped.is_none(), "component (a) covers the span: {:?}", trace.stopped);
    let w1_0 = trace.rows[0][trace.index["w1"]];
    let w1d_0 = trace.rows[0][trace.index["der(w1,1)"]];
    let w3_0 = trace.rows[0][trace.index["w3"]];
    let w3d_0 = trace.rows[0][trace.index["der(w3,1)"]];
    // w1 = -(1/2) cos t + C1 t + C2 and w3 = (1/2) cos t + C4 t + C5,
    // constants fitted from the initial state
    let c1 = w1d_0;
    let c2 = w1_0 + 0.5;
    let c4 = w3d_0;
    let c5 = w3_0 - 0.5;
    let mut max_err_a: f64 = 0.0;
    for (i, t) in trace.times.iter().enumerate() {
        let e1 = -0.5 * t.cos() + c1 * t + c2;
        let e3 = 0.5 * t.cos() + c4 * t + c5;
        max_err_a = max_err_a
            .max((trace.rows[i][trace.index["w1"]] - e1).abs())
            .max((trace.rows[i][trace.index["w2"]] - e1).abs())
            .max((trace.rows[i][trace.index["w3"]] - e3).abs())
            .max((trace.rows[i][trace.index["w4"]] - e3).abs());
    }
    assert!(max_err_a < 1e-6, "component (a) max error {max_err_a}");
    assert!(trace.max_residual() < 1e-6, "component (a) drift {}", trace.max_residual());
    let elapsed_a = start.elapsed();
    assert!(elapsed_a.as_secs_f64() < 10.0);

    // component (b): w1 = -w2 with w1(0) = -1 pinned by consistency
    let start = Instant::now();
    let comp_b = result
        .components
        .iter()
        .find(|c| c.initial_rank == 3 && c.replaced == vec!["der(w1,1)".to_string()])
        .expect("component embedding the first block");
    let (_, trace) = solve_component(&sys, comp_b, (0.0, 5.0), &opts).unwrap();
    assert!(trace.stopped.is_none(), "component (b) covers the span: {:?}", trace.stopped);
    let w1_0 = trace.rows[0][trace.index["w1"]];
    assert!((w1_0 + 1.0).abs() < 1e-8);
    let w3_0 = trace.rows[0][trace.index["w3"]];
    let w3d_0 = trace.rows[0][trace.index["der(w3,1)"]];
    let c3 = w1_0 - 0.25 * (0.0f64.sin() + 0.0f64.cos()); // = w1(0) - 1/4
    let c4 = w3d_0;
    let c5 = w3_0 - 0.5;
    let mut max_err_b: f64 = 0.0;
    for (i, t) in trace.times.iter().enumerate() {
        let e1 = 0.25 * (t.sin() + t.cos()) + c3 * (-t).exp();
        let e3 = 0.5 * t.cos() + c4 * t + c5;
        max_err_b = max_err_b
            .max((trace.rows[i][trace.index["w1"]] - e1).abs())
            .max((trace.rows[i][trace.index["w2"]] + e1).abs())
            .max((trace.rows[i][trace.index["w3"]] - e3).abs())
            .max((trace.rows[i][trace.index["w4"]] - e3).abs());
    }
    assert!(max_err_b < 1e-6, "component (b) max error {max_err_b}");
    assert!(trace.max_residual() < 1e-6, "component (b) drift {}", trace.max_residual());
    let elapsed_b = start.elapsed();
    assert!(elapsed_b.as_secs_f64() < 10.0);

    println!(
        "[criterion 8] PASS - closed forms matched: (a) err {max_err_a:.2e} in {elapsed_a:?}, (b) err {max_err_b:.2e} in {elapsed_b:?}"
    );
}

#[test]
fn criterion_9_property_suites() {
    let report = selfcheck::check_hvt_against_brute_force(200, 6, 17);
    assert!(report.passed, "{}", report.detail);
    println!("[criterion 9] PASS - {}: {}", report.name, report.detail);

    let report = selfcheck::check_partials_against_finite_differences(50, 18);
    assert!(report.passed, "{}", report.detail);
    println!("[criterion 9] PASS - {}: {}", report.name, report.detail);

    let report = selfcheck::check_reconstruction_against_quadrature(20, 19);
    assert!(report.passed, "{}", report.detail);
    println!("[criterion 9] PASS - {}: {}", report.name, report.detail);

    for name in [
        "zolf.idae",
        "nonlinear-degenerate.idae",
        "pendulum.idae",
        "drive1.idae",
        "drive2.idae",
    ] {
        let report = selfcheck::check_griewank_zero_pattern(&model_text(name), 20);
        assert!(report.passed, "{name}: {}", report.detail);
        println!("[criterion 9] PASS - zero pattern on {name}: {}", report.detail);
    }
}

use std::sync::OnceLock;

use duhamel_core::bump::profile;
use duhamel_core::dual::{solve_dual, BumpSpec, MollifierSpec};
use duhamel_core::*;
use proptest::prelude::*;

fn pair(flux: FluxSpec, phi: PhiSpec, op: OperatorKind, height: f64, base: f64) -> ScenarioPair {
    let v = ProblemSpec {
        flux,
        phi,
        op,
        source: SourceSpec::Zero,
        initial: InitialProfile::Constant { value: base },
        x_min: -5.0,
        x_max: 5.0,
        horizon: 0.5,
    };
    let u = ProblemSpec {
        initial: InitialProfile::Bump {
            center: 0.0,
            radius: 0.5,
            height,
            base,
        },
        ..v.clone()
    };
    ScenarioPair {
        problem_u: u,
        problem_v: v,
        relationship: "bump over constant".into(),
    }
}

fn all_steps() -> SolveOptions {
    SolveOptions {
        record_all_steps: true,
        ..Default::default()
    }
}

fn hyperbolic(n: usize) -> SolvedPair {
    let p = pair(FluxSpec::Burgers, PhiSpec::Zero, OperatorKind::LocalLaplacian, 1.0, 0.2);
    SolvedPair::solve(&p, n, None, &[0.25, 0.5], SolveOptions::default()).unwrap()
}

fn tempered() -> OperatorKind {
    OperatorKind::nonlocal(LevyMeasure::tempered(1.0, 2.0, 1.0).unwrap())
}

struct Degenerate {
    sp: SolvedPair,
    dual: DualSolution,
}

// Stefan plateau, tempered jumps, Burgers; shared by several tests
fn degenerate() -> &'static Degenerate {
    static D: OnceLock<Degenerate> = OnceLock::new();
    D.get_or_init(|| {
        let p = pair(FluxSpec::Burgers, PhiSpec::Stefan { a: -0.1, b: 0.1 }, tempered(), 1.0, 0.3);
        let sp = SolvedPair::solve(&p, 500, None, &[0.5], all_steps()).unwrap();
        let dual = solve_dual(BumpSpec::unit_mass(0.0, 0.5), &tempered().adjoint(), sp.u.grid, 0.5, 40).unwrap();
        Degenerate { sp, dual }
    })
}

#[test]
fn finite_speed_cut_ball_holds() {
    for n in [500, 1000] {
        let sp = hyperbolic(n);
        for x0 in [0.0, 1.3, 2.1] {
            let r = verify_finite_speed(&sp, x0, 1.0, 0.5).unwrap();
            assert!(r.pass, "n={n} x0={x0}: {r:?}");
        }
    }
}

#[test]
fn finite_speed_is_linear_in_the_gap_for_linear_flux() {
    let run = |scale: f64| {
        let p = pair(
            FluxSpec::Linear { a: 1.0 },
            PhiSpec::Zero,
            OperatorKind::LocalLaplacian,
            scale,
            0.2 * scale,
        );
        let sp = SolvedPair::solve(&p, 400, None, &[0.5], SolveOptions::default()).unwrap();
        verify_finite_speed(&sp, 0.7, 0.6, 0.5).unwrap()
    };
    let (a, b) = (run(1.0), run(2.0));
    assert!((b.lhs - 2.0 * a.lhs).abs() <= 1e-12 * (1.0 + a.lhs), "{} {}", a.lhs, b.lhs);
    assert!((b.rhs - 2.0 * a.rhs).abs() <= 1e-12 * (1.0 + a.rhs), "{} {}", a.rhs, b.rhs);
}

#[test]
fn finite_speed_rejects_diffusion_and_wide_balls() {
    let sp = hyperbolic(200);
    assert!(matches!(
        verify_finite_speed(&sp, 4.0, 1.0, 0.5),
        Err(Error::BallExceedsDomain { .. })
    ));
    let p = pair(FluxSpec::Burgers, PhiSpec::Identity, OperatorKind::LocalLaplacian, 1.0, 0.2);
    let sp = SolvedPair::solve(&p, 200, None, &[0.5], SolveOptions::default()).unwrap();
    assert!(verify_finite_speed(&sp, 0.0, 1.0, 0.5).is_err());
}

// ∫_a^b of the heat evolution of `height * profile(y / radius)`, with
// `∫_a^b G_t(x - y) dx` in closed form and Simpson's rule in y.
fn gaussian_evolution_l1(height: f64, radius: f64, (a, b): (f64, f64), t: f64) -> f64 {
    use statrs::function::erf::erf;
    let s = (4.0 * t).sqrt();
    let inner = |y: f64| 0.5 * (erf((b - y) / s) - erf((a - y) / s));
    let k = 20_000;
    let dy = 2.0 * radius / k as f64;
    let mut acc = 0.0;
    for j in 0..=k {
        let y = -radius + j as f64 * dy;
        let w = if j == 0 || j == k {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * height * profile(y / radius) * inner(y);
    }
    acc * dy / 3.0
}

#[test]
fn linear_duhamel_heat_matches_gaussian_evolution() {
    let p = pair(FluxSpec::Linear { a: 0.0 }, PhiSpec::Identity, OperatorKind::LocalLaplacian, 1.0, 0.2);
    let sp = SolvedPair::solve(&p, 1001, None, &[0.25], SolveOptions::default()).unwrap();
    let r = verify_duhamel_linear(&sp, 2.0, 0.0, 0.8, 0.25, KernelOptions::default()).unwrap();
    // the ball is the union of cells whose centres lie in it
    let g = sp.u.grid;
    let cells = g.ball_cells(0.0, 0.8).unwrap();
    let span = (g.x(cells.start) - 0.5 * g.h(), g.x(cells.end - 1) + 0.5 * g.h());
    let exact = gaussian_evolution_l1(1.0, 0.5, span, 0.25);
    assert!(r.pass, "{r:?}");
    assert!((r.lhs - exact).abs() < 1e-3, "{} vs {exact}", r.lhs);
    assert!((r.rhs - exact).abs() < 1e-3, "{} vs {exact}", r.rhs);
}

#[test]
fn linear_duhamel_fractional_burgers() {
    let op = OperatorKind::nonlocal(LevyMeasure::fractional_laplacian(1.0).unwrap());
    let p = pair(FluxSpec::Burgers, PhiSpec::Identity, op, 1.0, 0.2);
    let sp = SolvedPair::solve(&p, 500, None, &[0.5], SolveOptions::default()).unwrap();
    let opts = KernelOptions {
        outside_mass_tol: 0.05,
        ..Default::default()
    };
    let r = verify_duhamel_linear(&sp, 1.0, 0.0, 1.0, 0.5, opts).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.constants["kernel_tail"] > 0.0);
    // the order must match the operator
    assert!(verify_duhamel_linear(&sp, 1.5, 0.0, 1.0, 0.5, opts).is_err());
}

#[test]
fn dual_kernel_dominates_heat_kernel() {
    let p = pair(FluxSpec::Burgers, PhiSpec::Identity, OperatorKind::LocalLaplacian, 1.0, 0.2);
    let sp = SolvedPair::solve(&p, 401, None, &[0.5], SolveOptions::default()).unwrap();
    let dual = solve_dual(BumpSpec::unit_mass(0.0, 0.5), &OperatorKind::LocalLaplacian, sp.u.grid, 0.5, 40).unwrap();
    let lin = verify_duhamel_linear(&sp, 2.0, 0.0, 1.0, 0.5, KernelOptions::default()).unwrap();
    let non = verify_duhamel_nonlinear(&sp, &dual, 0.0, 1.0, 0.5).unwrap();
    assert!(lin.pass && non.pass);
    assert!((lin.lhs - non.lhs).abs() < 1e-15);
    assert!(non.rhs >= lin.rhs - lin.tolerance, "{} < {}", non.rhs, lin.rhs);
}

#[test]
fn degenerate_nonlocal_pair_passes_every_ball_inequality() {
    let d = degenerate();
    let r = verify_duhamel_nonlinear(&d.sp, &d.dual, 0.0, 1.0, 0.5).unwrap();
    assert!(r.pass && r.margin > 0.0, "{r:?}");
    for key in ["h", "dt", "L_f", "L_phi", "S_op", "G0", "BV0", "leakage"] {
        assert!(r.constants.contains_key(key), "{key}");
    }
    let c = verify_contraction(&d.sp, &d.dual, 0.0, 1.0, 0.5).unwrap();
    assert!(c.pass);
    let rd = reduced_dual_check(&d.sp, &d.dual, &MollifierSpec { epsilon: 0.1, delta: 0.1 }, 0.5, 0.0, 1.0).unwrap();
    assert!(rd.pass, "{rd:?}");
}

#[test]
fn swapping_the_pair_rebuilds_the_absolute_value_bound() {
    let d = degenerate();
    let a = verify_duhamel_nonlinear(&d.sp, &d.dual, 0.3, 1.0, 0.5).unwrap();
    let b = verify_duhamel_nonlinear(&d.sp.swapped(), &d.dual, 0.3, 1.0, 0.5).unwrap();
    let c = verify_contraction(&d.sp, &d.dual, 0.3, 1.0, 0.5).unwrap();
    assert!((a.lhs + b.lhs - c.lhs).abs() < 1e-12);
    assert!((a.rhs + b.rhs - c.rhs).abs() < 1e-12);
}

#[test]
fn untempered_measures_are_refused() {
    let op = OperatorKind::nonlocal(LevyMeasure::stable(1.0, 1.0).unwrap());
    let p = pair(FluxSpec::Burgers, PhiSpec::Identity, op.clone(), 1.0, 0.2);
    let sp = SolvedPair::solve(&p, 200, None, &[0.5], SolveOptions::default()).unwrap();
    let dual = solve_dual(BumpSpec::unit_mass(0.0, 0.5), &op, sp.u.grid, 0.5, 4).unwrap();
    assert!(matches!(
        verify_duhamel_nonlinear(&sp, &dual, 0.0, 1.0, 0.5),
        Err(Error::NotTempered { .. })
    ));
}

#[test]
fn equal_data_give_vanishing_left_sides() {
    let d = degenerate();
    let same = SolvedPair {
        pair: ScenarioPair {
            problem_u: d.sp.pair.problem_u.clone(),
            problem_v: d.sp.pair.problem_u.clone(),
            relationship: "identical".into(),
        },
        u: d.sp.u.clone(),
        v: d.sp.u.clone(),
    };
    let r = verify_duhamel_nonlinear(&same, &d.dual, 0.0, 1.0, 0.5).unwrap();
    assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    let psi = TestFunction {
        x_center: 0.0,
        x_radius: 1.0,
        t_center: 0.25,
        t_radius: 0.2,
        amplitude: 1.0,
    };
    assert_eq!(kato_residual(&same, &psi).unwrap().rhs, 0.0);
    let rd = reduced_dual_check(&same, &d.dual, &MollifierSpec { epsilon: 0.1, delta: 0.1 }, 0.5, 0.0, 1.0).unwrap();
    assert_eq!(rd.lhs, 0.0);
}

#[test]
fn kato_against_a_constant_is_the_entropy_residual() {
    let d = degenerate();
    let k = 0.3;
    let psi = TestFunction {
        x_center: 0.2,
        x_radius: 0.8,
        t_center: 0.25,
        t_radius: 0.2,
        amplitude: 1.0,
    };
    let kato = kato_residual(&d.sp, &psi).unwrap();
    let ent = entropy_residual(&d.sp.u, k, &psi, &d.sp.pair.problem_u).unwrap();
    assert!((kato.rhs - ent.value).abs() < 1e-12, "{} vs {}", kato.rhs, ent.value);
    assert!(kato.pass);
}

#[test]
fn order_properties_hold_exactly() {
    let sp = hyperbolic(300);
    let ordered = SolvedPair::solve(&sp.pair.swapped(), 300, None, &[0.1, 0.3, 0.5], SolveOptions::default()).unwrap();
    let c = verify_comparison(&ordered).unwrap();
    assert!(c.pass && c.lhs == 0.0);
    let m = verify_max_principle(&sp.pair.problem_u, &sp.u).unwrap();
    assert!(m.pass && m.lhs == 0.0, "{m:?}");
}

#[test]
fn bv_and_local_l1_bounds() {
    let d = degenerate();
    let p = &d.sp.pair.problem_u;
    let bv = verify_bv_bound(p, &d.sp.u, &d.dual, 0.0, 1.0, 0.5).unwrap();
    assert!(bv.pass, "{bv:?}");
    assert!(bv.constants["whole_line_bound"] >= bv.lhs);
    let l1 = verify_local_l1_bound(p, &d.sp.u, &d.dual, 0.0, 1.0, 0.5).unwrap();
    assert!(l1.pass, "{l1:?}");
}

#[test]
fn reduced_dual_far_from_the_data_is_zero() {
    let mut p = pair(FluxSpec::Burgers, PhiSpec::Identity, OperatorKind::LocalLaplacian, 1.0, 0.3);
    for q in [&mut p.problem_u, &mut p.problem_v] {
        q.x_min = -10.0;
        q.x_max = 10.0;
    }
    let sp = SolvedPair::solve(&p, 1600, None, &[0.2], all_steps()).unwrap();
    let dual = solve_dual(BumpSpec::unit_mass(0.0, 0.2), &OperatorKind::LocalLaplacian, sp.u.grid, 0.2, 20).unwrap();
    let rd = reduced_dual_check(&sp, &dual, &MollifierSpec { epsilon: 0.1, delta: 0.05 }, 0.2, -5.0, 0.2).unwrap();
    assert!(rd.lhs < 1e-4 && rd.rhs < 1e-4, "{rd:?}");
}

fn ball_sweep_pair() -> &'static SolvedPair {
    static S: OnceLock<SolvedPair> = OnceLock::new();
    S.get_or_init(|| hyperbolic(400))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn both_sides_grow_with_the_ball(x0 in -1.0f64..1.0, m in 0.1f64..1.5, dm in 0.0f64..1.0) {
        let sp = ball_sweep_pair();
        let a = verify_finite_speed(sp, x0, m, 0.5).unwrap();
        let b = verify_finite_speed(sp, x0, m + dm, 0.5).unwrap();
        prop_assert!(b.lhs >= a.lhs && b.rhs >= a.rhs);
        prop_assert!(a.pass && b.pass);
    }
}

//! Both sides of the contraction, comparison and regularity inequalities on
//! discrete solutions, with explicit first-order tolerances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dual::{gamma_cutoff, heat_kernel, k_delta, DualSolution, ExpBoundReport, GammaSpec, KernelOptions, MollifierSpec};
use crate::entropy::{pair_residual, solve_pair, ProblemSpec, SolveOptions, TestFunction, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{bv_seminorm, convolve, l1_norm, Grid, GridFunction, OperatorBoundReport};
use crate::levy::{
    assert_tempered, drift_correction, fractional_laplacian_constant, second_moment_near, tail_mass, LevyMeasure,
    OperatorKind,
};
use crate::PhiSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityId {
    FiniteSpeed,
    LinearDuhamel,
    NonlinearDuhamel,
    Contraction,
    LocalL1Bound,
    Comparison,
    MaxPrinciple,
    BvBound,
    Kato,
    OperatorBounds,
    ExpBound,
    ReducedDual,
}

impl InequalityId {
    pub fn as_str(&self) -> &'static str {
        match self {
            InequalityId::FiniteSpeed => "finite_speed",
            InequalityId::LinearDuhamel => "linear_duhamel",
            InequalityId::NonlinearDuhamel => "nonlinear_duhamel",
            InequalityId::Contraction => "contraction",
            InequalityId::LocalL1Bound => "local_l1_bound",
            InequalityId::Comparison => "comparison",
            InequalityId::MaxPrinciple => "max_principle",
            InequalityId::BvBound => "bv_bound",
            InequalityId::Kato => "kato",
            InequalityId::OperatorBounds => "operator_bounds",
            InequalityId::ExpBound => "exp_bound",
            InequalityId::ReducedDual => "reduced_dual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub id: InequalityId,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`
    pub margin: f64,
    pub tolerance: f64,
    pub tolerance_formula: String,
    pub constants: BTreeMap<String, f64>,
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub x0: Option<f64>,
    pub ball_radius: Option<f64>,
    pub t: Option<f64>,
    pub pass: bool,
}

impl ContractionReport {
    #[allow(clippy::too_many_arguments)]
    fn new(
        id: InequalityId,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
        tolerance_formula: impl Into<String>,
        constants: BTreeMap<String, f64>,
        grid: (usize, f64, f64),
        ball: Option<(f64, f64, f64)>,
    ) -> Self {
        let margin = rhs - lhs;
        Self {
            id,
            lhs,
            rhs,
            margin,
            tolerance,
            tolerance_formula: tolerance_formula.into(),
            constants,
            n: grid.0,
            h: grid.1,
            dt: grid.2,
            x0: ball.map(|b| b.0),
            ball_radius: ball.map(|b| b.1),
            t: ball.map(|b| b.2),
            pass: margin >= -tolerance,
        }
    }

    /// `max(0, -margin)`
    pub fn violation(&self) -> f64 {
        (-self.margin).max(0.0)
    }

    pub const CSV_HEADER: &'static str = "id,lhs,rhs,margin,tolerance,pass,n,h,dt,x0,ball_radius,t";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        format!(
            "{},{:e},{:e},{:e},{:e},{},{},{:e},{:e},{},{},{}",
            self.id.as_str(),
            self.lhs,
            self.rhs,
            self.margin,
            self.tolerance,
            self.pass,
            self.n,
            self.h,
            self.dt,
            opt(self.x0),
            opt(self.ball_radius),
            opt(self.t)
        )
    }
}

/// Two problems sharing flux, diffusion and operator; only data and sources differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPair {
    pub problem_u: ProblemSpec,
    pub problem_v: ProblemSpec,
    #[serde(default)]
    pub relationship: String,
}

impl ScenarioPair {
    pub fn validate(&self) -> Result<()> {
        let (u, v) = (&self.problem_u, &self.problem_v);
        u.validate()?;
        v.validate()?;
        if u.flux != v.flux || u.phi != v.phi || u.op != v.op {
            return Err(Error::InvalidArgument(
                "paired problems must share flux, phi and operator".into(),
            ));
        }
        if u.horizon != v.horizon || u.x_min != v.x_min || u.x_max != v.x_max {
            return Err(Error::InvalidArgument("paired problems must share domain and horizon".into()));
        }
        Ok(())
    }

    /// Lipschitz constants valid on both data ranges.
    pub fn lipschitz(&self) -> (f64, f64) {
        let (fu, pu) = self.problem_u.lipschitz();
        let (fv, pv) = self.problem_v.lipschitz();
        (fu.max(fv), pu.max(pv))
    }

    pub fn swapped(&self) -> Self {
        Self {
            problem_u: self.problem_v.clone(),
            problem_v: self.problem_u.clone(),
            relationship: self.relationship.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolvedPair {
    pub pair: ScenarioPair,
    pub u: Trajectory,
    pub v: Trajectory,
}

impl SolvedPair {
    pub fn solve(pair: &ScenarioPair, n: usize, split_r: Option<f64>, times: &[f64], opts: SolveOptions) -> Result<Self> {
        pair.validate()?;
        let (u, v) = solve_pair(&pair.problem_u, &pair.problem_v, n, split_r, times, opts)?;
        Ok(Self {
            pair: pair.clone(),
            u,
            v,
        })
    }

    pub fn swapped(&self) -> Self {
        Self {
            pair: self.pair.swapped(),
            u: self.v.clone(),
            v: self.u.clone(),
        }
    }

    fn grid(&self) -> Grid {
        self.u.grid
    }
}

fn snapshot_at(traj: &Trajectory, t: f64) -> Result<&GridFunction> {
    let tol = 1e-12 * traj.snapshots.last().map_or(1.0, |s| s.0.max(1.0));
    traj.snapshots
        .iter()
        .find(|s| (s.0 - t).abs() <= tol)
        .map(|s| &s.1)
        .ok_or_else(|| Error::SnapshotMismatch(format!("no snapshot at t = {t}")))
}

fn source_gap(pu: &ProblemSpec, pv: Option<&ProblemSpec>, grid: Grid, s: f64, abs: bool) -> Result<GridFunction> {
    let f = |x: f64| {
        let d = pu.source.eval(x, s) - pv.map_or(0.0, |p| p.source.eval(x, s));
        if abs {
            d.abs()
        } else {
            d.max(0.0)
        }
    };
    GridFunction::from_fn(grid, f, f(grid.x_min), f(grid.x_max))
}

fn sources_vanish(pu: &ProblemSpec, pv: Option<&ProblemSpec>, abs: bool) -> bool {
    match pv {
        Some(pv) => pu.source == pv.source || (!abs && pu.source.sup() <= pv.source.inf()),
        None => matches!(pu.source, crate::SourceSpec::Zero),
    }
}

// at most this many rectangles in the time quadrature of source terms
const SOURCE_RECTANGLES: usize = 64;

/// Left-endpoint rectangles `(s_k, ds_k)` on the snapshot times before `t`.
fn rectangles(traj: &Trajectory, t: f64) -> Vec<(f64, f64)> {
    let min_gap = t / SOURCE_RECTANGLES as f64;
    let mut kept: Vec<f64> = Vec::new();
    for (s, _) in &traj.snapshots {
        if *s >= t {
            break;
        }
        if kept.last().is_none_or(|&last| s - last >= min_gap) {
            kept.push(*s);
        }
    }
    (0..kept.len())
        .map(|k| (kept[k], kept.get(k + 1).copied().unwrap_or(t) - kept[k]))
        .collect()
}

/// Size of the operator away from the grid scale: `1` for the Laplacian,
/// `∫_{|z|<=1} z^2 dmu + mu(|z| > 1) + |b|` otherwise.
fn operator_size(op: &OperatorKind) -> f64 {
    match op.effective_measure() {
        None => 1.0,
        Some(mu) => second_moment_near(&mu, 1.0) + tail_mass(&mu, 1.0) + drift_correction(&mu, 1.0).abs(),
    }
}

struct Budget {
    h: f64,
    dt: f64,
    extra_dt: f64,
    t: f64,
    l_f: f64,
    l_phi: f64,
    s_op: f64,
    g0: f64,
    bv0: f64,
    gs: f64,
    leakage: f64,
    kernel_tail: f64,
}

const BUDGET_FORMULA: &str =
    "(h + dt + s) * (2 + t*(L_f + L_phi*S_op)) * (G0 + BV0 + t*Gs) + leakage + kernel_tail";

impl Budget {
    fn value(&self) -> f64 {
        (self.h + self.dt + self.extra_dt)
            * (2.0 + self.t * (self.l_f + self.l_phi * self.s_op))
            * (self.g0 + self.bv0 + self.t * self.gs)
            + self.leakage
            + self.kernel_tail
            + 1e-12
    }

    fn constants(&self) -> BTreeMap<String, f64> {
        [
            ("h", self.h),
            ("dt", self.dt),
            ("s", self.extra_dt),
            ("t", self.t),
            ("L_f", self.l_f),
            ("L_phi", self.l_phi),
            ("S_op", self.s_op),
            ("G0", self.g0),
            ("BV0", self.bv0),
            ("Gs", self.gs),
            ("leakage", self.leakage),
            ("kernel_tail", self.kernel_tail),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

fn sup_abs(f: &GridFunction) -> f64 {
    f.max_value().abs().max(f.min_value().abs())
}

fn pair_budget(sp: &SolvedPair, gap0: &GridFunction, t: f64, abs_src: bool) -> Budget {
    let (l_f, l_phi) = sp.pair.lipschitz();
    let (pu, pv) = (&sp.pair.problem_u, &sp.pair.problem_v);
    let gs = if sources_vanish(pu, Some(pv), abs_src) {
        0.0
    } else {
        pu.source.sup_abs() + pv.source.sup_abs() + pu.source.bv() + pv.source.bv()
    };
    Budget {
        h: sp.grid().h(),
        dt: sp.u.dt_used.max(sp.v.dt_used),
        extra_dt: 0.0,
        t,
        l_f,
        l_phi,
        s_op: operator_size(&pu.op),
        g0: sup_abs(gap0),
        bv0: bv_seminorm(gap0),
        gs,
        leakage: sp.u.leakage_bound + sp.v.leakage_bound,
        kernel_tail: 0.0,
    }
}

fn grid_info(sp: &SolvedPair) -> (usize, f64, f64) {
    (sp.grid().n, sp.grid().h(), sp.u.dt_used.max(sp.v.dt_used))
}

fn positive_gap(u: &GridFunction, v: &GridFunction) -> Result<GridFunction> {
    u.zip_map(v, |a, b| (a - b).max(0.0))
}

/// Finite speed of propagation for the purely hyperbolic equation:
/// `∫_{B(x0,M)} (u-v)^+(t) <= ∫_{B(x0,M+L_f t)} (u0-v0)^+ + ∫_0^t ∫_{B(x0,M+L_f(t-s))} (g-h)^+`.
pub fn verify_finite_speed(sp: &SolvedPair, x0: f64, ball_radius: f64, t: f64) -> Result<ContractionReport> {
    if !sp.pair.problem_u.phi.is_zero() {
        return Err(Error::InvalidArgument("finite speed needs phi = 0".into()));
    }
    let grid = sp.grid();
    let (l_f, _) = sp.pair.lipschitz();
    grid.check_ball(x0, ball_radius + l_f * t)?;
    let gap0 = positive_gap(&sp.u.snapshots[0].1, &sp.v.snapshots[0].1)?;
    let gap_t = positive_gap(snapshot_at(&sp.u, t)?, snapshot_at(&sp.v, t)?)?;
    let lhs = l1_norm(&gap_t, Some((x0, ball_radius)))?;
    let mut rhs = l1_norm(&gap0, Some((x0, ball_radius + l_f * t)))?;
    let (pu, pv) = (&sp.pair.problem_u, &sp.pair.problem_v);
    if !sources_vanish(pu, Some(pv), false) {
        for (s, ds) in rectangles(&sp.u, t) {
            let g = source_gap(pu, Some(pv), grid, s, false)?;
            rhs += ds * l1_norm(&g, Some((x0, ball_radius + l_f * (t - s))))?;
        }
    }
    let b = pair_budget(sp, &gap0, t, false);
    Ok(ContractionReport::new(
        InequalityId::FiniteSpeed,
        lhs,
        rhs,
        b.value(),
        BUDGET_FORMULA,
        b.constants(),
        grid_info(sp),
        Some((x0, ball_radius, t)),
    ))
}

/// `∫_{B(x0, r(t))} [K(t) * gap0] + ∑ ds ∫_{B(x0, r(t-s))} [K(t-s) * gap(s)]`
/// where `kernel(elapsed)` returns the (already reflected) kernel.
fn duhamel_rhs<K, G>(
    kernel: K,
    gap0: &GridFunction,
    source: Option<G>,
    traj: &Trajectory,
    x0: f64,
    radius: impl Fn(f64) -> f64,
    t: f64,
) -> Result<f64>
where
    K: Fn(f64) -> Result<GridFunction>,
    G: Fn(f64) -> Result<GridFunction>,
{
    let mut rhs = l1_norm(&convolve(gap0, &kernel(t)?)?, Some((x0, radius(t))))?;
    if let Some(src) = source {
        for (s, ds) in rectangles(traj, t) {
            let g = src(s)?;
            rhs += ds * l1_norm(&convolve(&g, &kernel(t - s)?)?, Some((x0, radius(t - s))))?;
        }
    }
    Ok(rhs)
}

/// Kernel grid: cells of width `h` centred at `j h`, covering twice the domain width.
pub fn kernel_grid(grid: &Grid) -> Result<Grid> {
    let h = grid.h();
    let m = grid.n as f64;
    Grid::new(-(m + 0.5) * h, (m + 0.5) * h, 2 * grid.n + 1)
}

/// Partial Duhamel bound with the fractional heat kernel (`phi(u) = u`):
/// `∫_{B(x0,M)} (u-v)^+(t) <= ∫_{B(x0,M+L_f t)} K(t) * (u0-v0)^+ + source term`.
pub fn verify_duhamel_linear(
    sp: &SolvedPair,
    alpha: f64,
    x0: f64,
    ball_radius: f64,
    t: f64,
    kernel_opts: KernelOptions,
) -> Result<ContractionReport> {
    let pu = &sp.pair.problem_u;
    if pu.phi != PhiSpec::Identity {
        return Err(Error::InvalidArgument("the linear Duhamel bound needs phi(u) = u".into()));
    }
    let ok = match &pu.op {
        OperatorKind::LocalLaplacian => alpha == 2.0,
        OperatorKind::Nonlocal {
            measure: LevyMeasure::Stable { alpha: a, c },
            ..
        } => *a == alpha && ((c - fractional_laplacian_constant(alpha)) / c).abs() < 1e-9,
        _ => false,
    };
    if !ok {
        return Err(Error::InvalidArgument(format!(
            "operator {:?} is not the fractional Laplacian of order {alpha}",
            pu.op
        )));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time {t} must be positive")));
    }
    let grid = sp.grid();
    let (l_f, _) = sp.pair.lipschitz();
    grid.check_ball(x0, ball_radius + l_f * t)?;
    let gap0 = positive_gap(&sp.u.snapshots[0].1, &sp.v.snapshots[0].1)?;
    let gap_t = positive_gap(snapshot_at(&sp.u, t)?, snapshot_at(&sp.v, t)?)?;
    let lhs = l1_norm(&gap_t, Some((x0, ball_radius)))?;
    let kgrid = kernel_grid(&grid)?;
    let outside = std::cell::Cell::new(0.0f64);
    let kernel = |tau: f64| -> Result<GridFunction> {
        let k = heat_kernel(alpha, tau, kgrid, kernel_opts)?;
        outside.set(outside.get().max(k.outside_mass));
        Ok(k.kernel)
    };
    let pv = &sp.pair.problem_v;
    let src = (!sources_vanish(pu, Some(pv), false)).then_some(|s: f64| source_gap(pu, Some(pv), grid, s, false));
    let rhs = duhamel_rhs(kernel, &gap0, src, &sp.u, x0, |e| ball_radius + l_f * e, t)?;
    let mut b = pair_budget(sp, &gap0, t, false);
    let src_sup = if b.gs > 0.0 { t * (pu.source.sup_abs() + pv.source.sup_abs()) } else { 0.0 };
    // mass of the kernel beyond its grid is missing from the right-hand side
    b.kernel_tail = outside.get() * (sup_abs(&gap0) + src_sup) * 2.0 * (ball_radius + l_f * t);
    Ok(ContractionReport::new(
        InequalityId::LinearDuhamel,
        lhs,
        rhs,
        b.value(),
        BUDGET_FORMULA,
        b.constants(),
        grid_info(sp),
        Some((x0, ball_radius, t)),
    ))
}

/// Checks that the dual solution may be used for the pair's operator and returns `L_phi`.
fn check_dual(op: &OperatorKind, dual: &DualSolution, grid: &Grid) -> Result<()> {
    let expected = op.adjoint();
    let same = dual.op == expected || (op.is_self_adjoint() && dual.op == *op);
    if !same {
        return Err(Error::InvalidArgument(format!(
            "dual solved with {:?}, expected the adjoint {:?}",
            dual.op, expected
        )));
    }
    if let Some(mu) = op.effective_measure() {
        let tempered = [1.0, 0.5, 0.25, 0.1, 0.01]
            .iter()
            .any(|&m| assert_tempered(&mu.reflected(), m).is_ok());
        if !tempered {
            return Err(Error::NotTempered {
                rate: 0.01,
                reason: format!("{mu:?} has no exponential moment at infinity"),
            });
        }
    }
    let b = dual.bump;
    if b.center != 0.0 || !(b.radius < 1.0) || (b.mass() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "dual initial bump {b:?} must be centred at 0 with unit mass and radius < 1"
        )));
    }
    if ((dual.grid.h() - grid.h()) / grid.h()).abs() > 1e-9 {
        return Err(Error::GridMismatch(format!(
            "dual cell width {} differs from {}",
            dual.grid.h(),
            grid.h()
        )));
    }
    Ok(())
}

fn reflected_dual(dual: &DualSolution, s: f64) -> Result<GridFunction> {
    Ok(dual.at_time(s)?.reflect())
}

fn nonlinear_rhs(
    sp_traj: &Trajectory,
    dual: &DualSolution,
    gap0: &GridFunction,
    source: Option<&dyn Fn(f64) -> Result<GridFunction>>,
    x0: f64,
    ball_radius: f64,
    l_f: f64,
    l_phi: f64,
    t: f64,
) -> Result<f64> {
    let kernel = |e: f64| reflected_dual(dual, l_phi * e);
    duhamel_rhs(kernel, gap0, source, sp_traj, x0, |e| ball_radius + 1.0 + l_f * e, t)
}

fn dual_budget(mut b: Budget, dual: &DualSolution) -> Budget {
    b.extra_dt = dual.snapshot_spacing + dual.dt;
    b
}

/// Partial Duhamel bound with the dual solution:
/// `∫_{B(x0,M)} (u-v)^+(t) <= ∫_{B(x0,M+1+L_f t)} Phi(-., L_phi t) * (u0-v0)^+ + source term`.
pub fn verify_duhamel_nonlinear(
    sp: &SolvedPair,
    dual: &DualSolution,
    x0: f64,
    ball_radius: f64,
    t: f64,
) -> Result<ContractionReport> {
    let grid = sp.grid();
    let (pu, pv) = (&sp.pair.problem_u, &sp.pair.problem_v);
    check_dual(&pu.op, dual, &grid)?;
    let (l_f, l_phi) = sp.pair.lipschitz();
    grid.check_ball(x0, ball_radius + 1.0 + l_f * t)?;
    let gap0 = positive_gap(&sp.u.snapshots[0].1, &sp.v.snapshots[0].1)?;
    let gap_t = positive_gap(snapshot_at(&sp.u, t)?, snapshot_at(&sp.v, t)?)?;
    let lhs = l1_norm(&gap_t, Some((x0, ball_radius)))?;
    let src = |s: f64| source_gap(pu, Some(pv), grid, s, false);
    let source: Option<&dyn Fn(f64) -> Result<GridFunction>> =
        if sources_vanish(pu, Some(pv), false) { None } else { Some(&src) };
    let rhs = nonlinear_rhs(&sp.u, dual, &gap0, source, x0, ball_radius, l_f, l_phi, t)?;
    let b = dual_budget(pair_budget(sp, &gap0, t, false), dual);
    Ok(ContractionReport::new(
        InequalityId::NonlinearDuhamel,
        lhs,
        rhs,
        b.value(),
        BUDGET_FORMULA,
        b.constants(),
        grid_info(sp),
        Some((x0, ball_radius, t)),
    ))
}

/// Local L¹ contraction with absolute values on both sides.
pub fn verify_contraction(
    sp: &SolvedPair,
    dual: &DualSolution,
    x0: f64,
    ball_radius: f64,
    t: f64,
) -> Result<ContractionReport> {
    let grid = sp.grid();
    let (pu, pv) = (&sp.pair.problem_u, &sp.pair.problem_v);
    check_dual(&pu.op, dual, &grid)?;
    let (l_f, l_phi) = sp.pair.lipschitz();
    grid.check_ball(x0, ball_radius + 1.0 + l_f * t)?;
    let gap0 = sp.u.snapshots[0].1.zip_map(&sp.v.snapshots[0].1, |a, b| (a - b).abs())?;
    let gap_t = snapshot_at(&sp.u, t)?.zip_map(snapshot_at(&sp.v, t)?, |a, b| (a - b).abs())?;
    let lhs = l1_norm(&gap_t, Some((x0, ball_radius)))?;
    let src = |s: f64| source_gap(pu, Some(pv), grid, s, true);
    let source: Option<&dyn Fn(f64) -> Result<GridFunction>> =
        if sources_vanish(pu, Some(pv), true) { None } else { Some(&src) };
    let rhs = nonlinear_rhs(&sp.u, dual, &gap0, source, x0, ball_radius, l_f, l_phi, t)?;
    let b = dual_budget(pair_budget(sp, &gap0, t, true), dual);
    Ok(ContractionReport::new(
        InequalityId::Contraction,
        lhs,
        rhs,
        b.value(),
        BUDGET_FORMULA,
        b.constants(),
        grid_info(sp),
        Some((x0, ball_radius, t)),
    ))
}

fn single_budget(problem: &ProblemSpec, traj: &Trajectory, data: &GridFunction, t: f64, bv: bool) -> Budget {
    let (l_f, l_phi) = problem.lipschitz();
    Budget {
        h: traj.grid.h(),
        dt: traj.dt_used,
        extra_dt: 0.0,
        t,
        l_f,
        l_phi,
        s_op: operator_size(&problem.op),
        g0: sup_abs(data),
        bv0: if bv { bv_seminorm(data) } else { 0.0 },
        gs: problem.source.sup_abs() + problem.source.bv(),
        leakage: traj.leakage_bound,
        kernel_tail: 0.0,
    }
}

/// `‖u(t)‖_{L¹(B(x0,M))} <= ‖Phi(-., L_phi t) * |u0|‖_{L¹(B(x0,M+1+L_f t))} + source term`.
pub fn verify_local_l1_bound(
    problem: &ProblemSpec,
    traj: &Trajectory,
    dual: &DualSolution,
    x0: f64,
    ball_radius: f64,
    t: f64,
) -> Result<ContractionReport> {
    let grid = traj.grid;
    check_dual(&problem.op, dual, &grid)?;
    let (l_f, l_phi) = problem.lipschitz();
    grid.check_ball(x0, ball_radius + 1.0 + l_f * t)?;
    let u0 = traj.snapshots[0].1.map(f64::abs);
    let lhs = l1_norm(snapshot_at(traj, t)?, Some((x0, ball_radius)))?;
    let src = |s: f64| source_gap(problem, None, grid, s, true);
    let source: Option<&dyn Fn(f64) -> Result<GridFunction>> =
        if sources_vanish(problem, None, true) { None } else { Some(&src) };
    let rhs = nonlinear_rhs(traj, dual, &u0, source, x0, ball_radius, l_f, l_phi, t)?;
    let b = dual_budget(single_budget(problem, traj, &u0, t, true), dual);
    Ok(ContractionReport::new(
        InequalityId::LocalL1Bound,
        lhs,
        rhs,
        b.value(),
        BUDGET_FORMULA,
        b.constants(),
        (grid.n, grid.h(), traj.dt_used),
        Some((x0, ball_radius, t)),
    ))
}

const EXACT_FORMULA: &str = "1e-12 * (1 + data scale)";

/// Ordered data stay ordered: `lhs = max_{k,i} (u - v)^+`, `rhs = 0`.
pub fn verify_comparison(sp: &SolvedPair) -> Result<ContractionReport> {
    let (pu, pv) = (&sp.pair.problem_u, &sp.pair.problem_v);
    let grid = sp.grid();
    let (u0, v0) = (&sp.u.snapshots[0].1, &sp.v.snapshots[0].1);
    let ordered = u0.values.iter().zip(&v0.values).all(|(a, b)| a <= b)
        && u0.far_left <= v0.far_left
        && u0.far_right <= v0.far_right;
    let sources_ordered = (0..grid.n).all(|i| {
        let x = grid.x(i);
        pu.source.eval(x, 0.0) <= pv.source.eval(x, 0.0)
    }) && pu.source.eval(grid.x_min, 0.0) <= pv.source.eval(grid.x_min, 0.0)
        && pu.source.eval(grid.x_max, 0.0) <= pv.source.eval(grid.x_max, 0.0);
    if !ordered || !sources_ordered {
        return Err(Error::InvalidArgument("comparison needs u0 <= v0 and g <= h".into()));
    }
    if sp.u.times() != sp.v.times() {
        return Err(Error::SnapshotMismatch("pair recorded at different times".into()));
    }
    let mut lhs = 0.0f64;
    let mut scale = 0.0f64;
    for ((_, u), (_, v)) in sp.u.snapshots.iter().zip(&sp.v.snapshots) {
        for (a, b) in u.values.iter().zip(&v.values) {
            lhs = lhs.max(a - b);
            scale = scale.max(a.abs()).max(b.abs());
        }
    }
    let tol = 1e-12 * (1.0 + scale);
    let t = sp.u.snapshots.last().map(|s| s.0);
    let mut r = ContractionReport::new(
        InequalityId::Comparison,
        lhs.max(0.0),
        0.0,
        tol,
        EXACT_FORMULA,
        BTreeMap::new(),
        grid_info(sp),
        None,
    );
    r.t = t;
    Ok(r)
}

/// `inf u0 + t inf g <= u(t) <= sup u0 + t sup g` at every snapshot;
/// `lhs` is the largest excursion outside these bounds.
pub fn verify_max_principle(problem: &ProblemSpec, traj: &Trajectory) -> Result<ContractionReport> {
    let u0 = &traj.snapshots[0].1;
    let (lo0, hi0) = (u0.min_value(), u0.max_value());
    let (gi, gs) = (problem.source.inf(), problem.source.sup());
    let mut excursion = f64::NEG_INFINITY;
    let mut scale = lo0.abs().max(hi0.abs());
    for (t, u) in &traj.snapshots {
        let (lo, hi) = (lo0 + t * gi, hi0 + t * gs);
        excursion = excursion.max(lo - u.min_value()).max(u.max_value() - hi);
        scale = scale.max(lo.abs()).max(hi.abs());
    }
    let mut constants = BTreeMap::new();
    constants.insert("inf_u0".into(), lo0);
    constants.insert("sup_u0".into(), hi0);
    let g = traj.grid;
    let mut r = ContractionReport::new(
        InequalityId::MaxPrinciple,
        excursion.max(0.0),
        0.0,
        1e-12 * (1.0 + scale),
        EXACT_FORMULA,
        constants,
        (g.n, g.h(), traj.dt_used),
        None,
    );
    r.t = traj.snapshots.last().map(|s| s.0);
    Ok(r)
}

fn bv_in_ball(f: &GridFunction, x0: f64, radius: f64) -> Result<f64> {
    let r = f.grid.ball_cells(x0, radius)?;
    if r.len() < 2 {
        return Ok(0.0);
    }
    Ok(f.values[r].windows(2).map(|w| (w[1] - w[0]).abs()).sum())
}

fn shifted_difference(f: &GridFunction, shift: isize) -> Result<GridFunction> {
    let vals = (0..f.grid.n as isize).map(|i| (f.at(i + shift) - f.at(i)).abs()).collect();
    GridFunction::new(f.grid, vals, 0.0, 0.0)
}

/// `|u(t)|_{BV(B(x0,M))}` against the largest shifted-difference quotient over
/// shifts of 1, 2 and 4 cells. The whole-line bound `‖Phi(L_phi t)‖_1 |u0|_BV`
/// is recorded as the constant `whole_line_bound`.
pub fn verify_bv_bound(
    problem: &ProblemSpec,
    traj: &Trajectory,
    dual: &DualSolution,
    x0: f64,
    ball_radius: f64,
    t: f64,
) -> Result<ContractionReport> {
    let grid = traj.grid;
    check_dual(&problem.op, dual, &grid)?;
    let (l_f, l_phi) = problem.lipschitz();
    grid.check_ball(x0, ball_radius + 1.0 + l_f * t)?;
    let u0 = &traj.snapshots[0].1;
    let lhs = bv_in_ball(snapshot_at(traj, t)?, x0, ball_radius)?;
    let h = grid.h();
    let mut rhs = 0.0f64;
    for shift in [1isize, 2, 4] {
        let d0 = shifted_difference(u0, shift)?;
        let src = |s: f64| -> Result<GridFunction> {
            let g = GridFunction::from_fn(grid, |x| problem.source.eval(x, s), 0.0, 0.0)?;
            shifted_difference(&g, shift)
        };
        let source: Option<&dyn Fn(f64) -> Result<GridFunction>> =
            if problem.source.bv() == 0.0 { None } else { Some(&src) };
        let q = nonlinear_rhs(traj, dual, &d0, source, x0, ball_radius, l_f, l_phi, t)? / (shift as f64 * h);
        rhs = rhs.max(q);
    }
    let mut b = dual_budget(single_budget(problem, traj, u0, t, true), dual);
    // the quotients carry the data's variation in place of its size
    b.g0 = bv_seminorm(u0);
    let mut constants = b.constants();
    let whole = dual.at_time(l_phi * t)?.integral() * bv_seminorm(u0) + t * dual.at_time(l_phi * t)?.integral() * problem.source.bv();
    constants.insert("whole_line_bound".into(), whole);
    Ok(ContractionReport::new(
        InequalityId::BvBound,
        lhs,
        rhs,
        b.value(),
        BUDGET_FORMULA,
        constants,
        (grid.n, grid.h(), traj.dt_used),
        Some((x0, ball_radius, t)),
    ))
}

/// Discrete Kato inequality against `psi`: `rhs` is the residual, `lhs = 0`.
pub fn kato_residual(sp: &SolvedPair, psi: &TestFunction) -> Result<ContractionReport> {
    let r = pair_residual(&sp.u, &sp.v, &sp.pair.problem_u, &sp.pair.problem_v, psi)?;
    let mut constants = BTreeMap::new();
    constants.insert("time_term".into(), r.time_term);
    constants.insert("flux_term".into(), r.flux_term);
    constants.insert("diffusion_term".into(), r.diffusion_term);
    constants.insert("source_term".into(), r.source_term);
    constants.insert("psi_x_center".into(), psi.x_center);
    constants.insert("psi_x_radius".into(), psi.x_radius);
    constants.insert("psi_t_center".into(), psi.t_center);
    constants.insert("psi_t_radius".into(), psi.t_radius);
    Ok(ContractionReport::new(
        InequalityId::Kato,
        0.0,
        r.value,
        r.tolerance,
        "(h + dt) |supp psi| [R (|psi_t| + L_f |psi_x|) + P (c |psi_xx| + |b| |psi_x| + 2 W |psi|) + G |psi|]",
        constants,
        grid_info(sp),
        None,
    ))
}

/// `∫ (u-v)^+(tau) Gamma(tau) <= ∫ (u0-v0)^+ Gamma(0) + ∫∫ (g-h)^+ Gamma` with
/// `Gamma = K_delta * gamma` and `gamma` the cutoff of radius `M + 1 + L_f tau`.
pub fn reduced_dual_check(
    sp: &SolvedPair,
    dual: &DualSolution,
    moll: &MollifierSpec,
    tau: f64,
    x0: f64,
    ball_radius: f64,
) -> Result<ContractionReport> {
    let grid = sp.grid();
    let (pu, pv) = (&sp.pair.problem_u, &sp.pair.problem_v);
    check_dual(&pu.op, dual, &grid)?;
    let (l_f, l_phi) = sp.pair.lipschitz();
    let spec = GammaSpec {
        x0,
        radius: ball_radius + 1.0 + l_f * tau,
        l_f,
        eps: moll.epsilon,
        tilde_delta: 0.0,
        horizon: tau,
    };
    grid.check_ball(x0, spec.radius + spec.eps)?;
    let gamma_at = |t: f64| -> Result<GridFunction> {
        let kd = k_delta(dual, tau, l_phi, t, moll)?;
        convolve(&gamma_cutoff(&spec, t, grid)?, &kd)
    };
    let weighted = |f: &GridFunction, g: &GridFunction| -> f64 {
        grid.h() * f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<f64>()
    };
    let gap0 = positive_gap(&sp.u.snapshots[0].1, &sp.v.snapshots[0].1)?;
    let gap_t = positive_gap(snapshot_at(&sp.u, tau)?, snapshot_at(&sp.v, tau)?)?;
    let lhs = weighted(&gap_t, &gamma_at(tau)?);
    let mut rhs = weighted(&gap0, &gamma_at(0.0)?);
    if !sources_vanish(pu, Some(pv), false) {
        for (s, ds) in rectangles(&sp.u, tau) {
            rhs += ds * weighted(&source_gap(pu, Some(pv), grid, s, false)?, &gamma_at(s)?);
        }
    }
    let mut b = dual_budget(pair_budget(sp, &gap0, tau, false), dual);
    b.extra_dt += moll.delta;
    let mut constants = b.constants();
    constants.insert("delta".into(), moll.delta);
    constants.insert("epsilon".into(), moll.epsilon);
    constants.insert("gamma_radius".into(), spec.radius);
    Ok(ContractionReport::new(
        InequalityId::ReducedDual,
        lhs,
        rhs,
        b.value(),
        "(h + dt + s + delta) * (2 + t*(L_f + L_phi*S_op)) * (G0 + BV0 + t*Gs) + leakage",
        constants,
        grid_info(sp),
        Some((x0, ball_radius, tau)),
    ))
}

/// The small- and large-jump L¹ bounds as reports.
pub fn operator_bound_reports(r: &OperatorBoundReport, n: usize) -> Vec<ContractionReport> {
    let mut out = Vec::new();
    let mut push = |part: f64, (lhs, rhs): (f64, f64)| {
        let mut c = BTreeMap::new();
        c.insert("r".into(), r.r);
        c.insert("large_jumps".into(), part);
        out.push(ContractionReport::new(
            InequalityId::OperatorBounds,
            lhs,
            rhs,
            r.tolerance,
            "10 h (rhs_small + rhs_large) + 1e-12",
            c,
            (n, r.h, 0.0),
            None,
        ));
    };
    if let Some(s) = r.small {
        push(0.0, s);
    }
    push(1.0, r.large);
    out
}

pub fn exp_bound_report(r: &ExpBoundReport, dual: &DualSolution) -> ContractionReport {
    let c: BTreeMap<String, f64> = [
        ("k", r.k),
        ("K", r.K),
        ("C", r.C),
        ("C_k", r.C_k),
        ("consistency_defect", r.consistency_defect),
        ("at_x", r.at_x),
        ("at_t", r.at_t),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let mut rep = ContractionReport::new(
        InequalityId::ExpBound,
        r.max_excess,
        0.0,
        r.tolerance,
        "T C e^{K T} max(A_h E - K E)^+ + 1e-12",
        c,
        (dual.grid.n, dual.grid.h(), dual.dt),
        None,
    );
    rep.t = Some(dual.t_tilde);
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{solve_dual, BumpSpec};
    use crate::entropy::{FluxSpec, InitialProfile};
    use crate::SourceSpec;

    fn burgers_pair(bump: f64) -> ScenarioPair {
        let v = ProblemSpec {
            flux: FluxSpec::Burgers,
            phi: PhiSpec::Zero,
            op: OperatorKind::LocalLaplacian,
            source: SourceSpec::Zero,
            initial: InitialProfile::Constant { value: 0.2 },
            x_min: -4.0,
            x_max: 4.0,
            horizon: 0.5,
        };
        let u = ProblemSpec {
            initial: InitialProfile::Bump {
                center: 0.0,
                radius: 0.5,
                height: bump,
                base: 0.2,
            },
            ..v.clone()
        };
        ScenarioPair {
            problem_u: u,
            problem_v: v,
            relationship: "bump over constant".into(),
        }
    }

    #[test]
    fn identical_data_give_zero_lhs() {
        let sp = SolvedPair::solve(&burgers_pair(0.0), 400, None, &[0.5], SolveOptions::default()).unwrap();
        let r = verify_finite_speed(&sp, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.pass && r.rhs == 0.0);
    }

    #[test]
    fn finite_speed_bump_pair() {
        let sp = SolvedPair::solve(&burgers_pair(1.0), 800, None, &[0.5], SolveOptions::default()).unwrap();
        for x0 in [0.0, 1.0, 2.1] {
            let r = verify_finite_speed(&sp, x0, 1.0, 0.5).unwrap();
            assert!(r.pass, "{r:?}");
        }
        assert!(matches!(
            verify_finite_speed(&sp, 3.0, 1.0, 0.5),
            Err(Error::BallExceedsDomain { .. })
        ));
    }

    #[test]
    fn ordered_pair_compares_exactly() {
        let sp = SolvedPair::solve(&burgers_pair(1.0).swapped(), 200, None, &[0.1, 0.2], SolveOptions::default())
            .unwrap();
        let r = verify_comparison(&sp).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.pass);
        let wrong = SolvedPair::solve(&burgers_pair(1.0), 200, None, &[], SolveOptions::default()).unwrap();
        assert!(verify_comparison(&wrong).is_err());
    }

    #[test]
    fn nonlinear_rejects_untempered_and_wrong_dual() {
        let mut pair = burgers_pair(1.0);
        let op = OperatorKind::nonlocal(LevyMeasure::stable(1.0, 1.0).unwrap());
        pair.problem_u.op = op.clone();
        pair.problem_v.op = op.clone();
        pair.problem_u.phi = PhiSpec::Identity;
        pair.problem_v.phi = PhiSpec::Identity;
        let sp = SolvedPair::solve(&pair, 200, None, &[0.5], SolveOptions::default()).unwrap();
        let dual = solve_dual(BumpSpec::unit_mass(0.0, 0.5), &op.adjoint(), sp.u.grid, 0.5, 4).unwrap();
        assert!(matches!(
            verify_duhamel_nonlinear(&sp, &dual, 0.0, 1.0, 0.5),
            Err(Error::NotTempered { .. })
        ));
        let local = solve_dual(BumpSpec::unit_mass(0.0, 0.5), &OperatorKind::LocalLaplacian, sp.u.grid, 0.5, 4).unwrap();
        assert!(verify_duhamel_nonlinear(&sp, &local, 0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn report_csv_row_has_every_column() {
        let sp = SolvedPair::solve(&burgers_pair(1.0), 200, None, &[0.5], SolveOptions::default()).unwrap();
        let r = verify_finite_speed(&sp, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(
            r.csv_row().split(',').count(),
            ContractionReport::CSV_HEADER.split(',').count()
        );
        assert!(r.csv_row().starts_with("finite_speed,"));
    }
}

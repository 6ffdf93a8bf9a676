//! The dual equation `Phi_t - (L* Phi)^+ = 0`, the spectral fractional heat
//! kernel, and the mollified test functions built from them.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma;

use crate::bump::{omega, omega_cdf, profile, profile_mass};
use crate::error::{Error, Result};
use crate::grid::{convolve, default_split, discretize, DriftMode, Grid, GridFunction, OperatorWeights};
use crate::levy::{OperatorKind, SupersolutionConstants};

/// `height * profile((x - center)/radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub center: f64,
    pub radius: f64,
    pub height: f64,
}

impl BumpSpec {
    /// The bump with unit integral.
    pub fn unit_mass(center: f64, radius: f64) -> Self {
        Self {
            center,
            radius,
            height: 1.0 / (radius * profile_mass()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.center.is_finite() && self.radius > 0.0 && self.radius.is_finite() && self.height >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bump {self:?}")))
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.height * profile((x - self.center) / self.radius)
    }

    pub fn mass(&self) -> f64 {
        self.height * self.radius * profile_mass()
    }

    pub fn sample(&self, grid: Grid) -> Result<GridFunction> {
        GridFunction::from_fn(grid, |x| self.eval(x), 0.0, 0.0)
    }
}

/// Widths of the spatial mollifier `omega_eps` and the space-time mollifier `rho_delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub epsilon: f64,
    pub delta: f64,
}

impl MollifierSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.delta > 0.0 && self.epsilon.is_finite() && self.delta.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("mollifier {self:?}")))
        }
    }
}

/// `omega_width` sampled on cells of width `h` centred at 0 and normalized to unit
/// discrete mass. Returned on the grid `[-(m+1/2)h, (m+1/2)h]`.
pub fn discrete_mollifier(width: f64, h: f64) -> Result<GridFunction> {
    if !(width > 0.0 && h > 0.0) {
        return Err(Error::InvalidArgument(format!("mollifier width {width}, cell {h}")));
    }
    let m = (width / h).floor() as usize;
    let grid = Grid::new(-(m as f64 + 0.5) * h, (m as f64 + 0.5) * h, 2 * m + 1)?;
    let mut vals: Vec<f64> = (0..=2 * m).map(|i| omega((i as f64 - m as f64) * h / width)).collect();
    let s: f64 = h * vals.iter().sum::<f64>();
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mollifier width {width} does not cover a cell of width {h}"
        )));
    }
    for v in vals.iter_mut() {
        *v /= s;
    }
    // keep the stencil exactly even
    for i in 0..m {
        vals[2 * m - i] = vals[i];
    }
    GridFunction::new(grid, vals, 0.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    /// The transform runs on a periodic domain this many times wider than the grid.
    pub widen: usize,
    /// Largest admissible kernel mass outside the grid.
    pub outside_mass_tol: f64,
    /// Negative values above `-clamp` are spectral ringing and set to zero.
    pub clamp: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            widen: 4,
            outside_mass_tol: 1e-8,
            clamp: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatKernel {
    pub alpha: f64,
    pub t: f64,
    pub kernel: GridFunction,
    /// `h * sum` over the whole periodic domain of the transform.
    pub computed_mass: f64,
    /// Kernel mass outside the grid from the known tail.
    pub outside_mass: f64,
}

/// Mass of the `alpha`-stable kernel at time `t` outside `[lo, hi]`: exact for
/// `alpha = 2` and `alpha = 1`, leading tail term otherwise.
pub fn kernel_outside_mass(alpha: f64, t: f64, lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 || hi <= 0.0 {
        return 1.0;
    }
    let (a, b) = (-lo, hi);
    if alpha == 2.0 {
        let s = (4.0 * t).sqrt();
        0.5 * (erfc(a / s) + erfc(b / s))
    } else if alpha == 1.0 {
        let tail = |r: f64| 0.5 - (r / t).atan() / std::f64::consts::PI;
        tail(a) + tail(b)
    } else {
        let c = gamma(1.0 + alpha) * (std::f64::consts::FRAC_PI_2 * alpha).sin() / std::f64::consts::PI;
        c * t / alpha * (a.powf(-alpha) + b.powf(-alpha))
    }
}

/// `F^{-1}(e^{-t |2 pi xi|^alpha})` sampled at the cell centres of `grid`.
pub fn heat_kernel(alpha: f64, t: f64, grid: Grid, opts: KernelOptions) -> Result<HeatKernel> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} out of (0,2]")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("kernel time {t} must be positive")));
    }
    if opts.widen < 1 {
        return Err(Error::InvalidArgument("widen factor must be at least 1".into()));
    }
    let outside = kernel_outside_mass(alpha, t, grid.x_min, grid.x_max);
    if outside > opts.outside_mass_tol {
        return Err(Error::DomainTooSmall {
            outside_mass: outside,
            allowed: opts.outside_mass_tol,
        });
    }
    let h = grid.h();
    let n = grid.n;
    let big = opts.widen * n;
    let len = big as f64 * h;
    let pad = (opts.widen - 1) * n / 2;
    // the periodic samples sit at x0 + j h with the grid's centres at j = pad..pad+n
    let x0 = grid.x(0) - pad as f64 * h;
    let mut coeffs = vec![Complex::new(0.0, 0.0); big];
    for (j, c) in coeffs.iter_mut().enumerate() {
        let k = if j <= big / 2 { j as f64 } else { j as f64 - big as f64 };
        let xi = k / len;
        let s = (-t * (2.0 * std::f64::consts::PI * xi.abs()).powf(alpha)).exp() / len;
        let phase = 2.0 * std::f64::consts::PI * k * x0 / len;
        *c = if big % 2 == 0 && j == big / 2 {
            // the Nyquist mode is real
            Complex::new(s * phase.cos(), 0.0)
        } else {
            Complex::new(s * phase.cos(), s * phase.sin())
        };
    }
    FftPlanner::new().plan_fft_inverse(big).process(&mut coeffs);
    let mut full: Vec<f64> = coeffs.iter().map(|c| c.re).collect();
    for v in full.iter_mut() {
        if *v < 0.0 {
            if *v < -opts.clamp {
                return Err(Error::SpectralNegativity { value: *v });
            }
            *v = 0.0;
        }
    }
    let computed_mass = h * full.iter().sum::<f64>();
    let mut vals = full[pad..pad + n].to_vec();
    if (grid.x_min + grid.x_max).abs() <= 1e-12 * grid.width() {
        for i in 0..n / 2 {
            let m = 0.5 * (vals[i] + vals[n - 1 - i]);
            vals[i] = m;
            vals[n - 1 - i] = m;
        }
    }
    Ok(HeatKernel {
        alpha,
        t,
        kernel: GridFunction::new(grid, vals, 0.0, 0.0)?,
        computed_mass,
        outside_mass: outside,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualOptions {
    pub safety: f64,
    pub split_r: Option<f64>,
    /// Fixed step; checked against the stability bound.
    pub dt: Option<f64>,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            safety: 0.9,
            split_r: None,
            dt: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub grid: Grid,
    pub snapshots: Vec<(f64, GridFunction)>,
    /// The operator in the dual equation (already the adjoint).
    pub op: OperatorKind,
    pub bump: BumpSpec,
    pub t_tilde: f64,
    pub dt: f64,
    pub steps: usize,
    pub snapshot_spacing: f64,
    pub weights: OperatorWeights,
}

impl DualSolution {
    /// `Phi(., s)` by linear interpolation between snapshots.
    pub fn at_time(&self, s: f64) -> Result<GridFunction> {
        if !(s >= 0.0 && s <= self.t_tilde * (1.0 + 1e-12)) {
            return Err(Error::TimeOutOfRange {
                t: s,
                lo: 0.0,
                hi: self.t_tilde,
            });
        }
        let snaps = &self.snapshots;
        let k = snaps.partition_point(|p| p.0 <= s);
        if k == 0 {
            return Ok(snaps[0].1.clone());
        }
        if k == snaps.len() {
            return Ok(snaps[k - 1].1.clone());
        }
        let (t0, f0) = (&snaps[k - 1].0, &snaps[k - 1].1);
        let (t1, f1) = (&snaps[k].0, &snaps[k].1);
        if s == *t0 {
            return Ok(f0.clone());
        }
        let th = (s - t0) / (t1 - t0);
        f0.zip_map(f1, |a, b| a + th * (b - a))
    }

    /// `Phi(., s)` with `Phi(., s) = Phi_0` for `s < 0`.
    fn at_time_extended(&self, s: f64) -> Result<GridFunction> {
        if s <= 0.0 {
            Ok(self.snapshots[0].1.clone())
        } else {
            self.at_time(s)
        }
    }
}

fn dual_step(phi: &GridFunction, dt: f64, weights: &OperatorWeights) -> GridFunction {
    let a = weights.apply_with(phi, DriftMode::Upwind);
    GridFunction {
        grid: phi.grid,
        values: phi.values.iter().zip(&a.values).map(|(p, q)| p + dt * q.max(0.0)).collect(),
        far_left: phi.far_left,
        far_right: phi.far_right,
    }
}

pub fn solve_dual(bump: BumpSpec, op: &OperatorKind, grid: Grid, t_tilde: f64, n_snapshots: usize) -> Result<DualSolution> {
    solve_dual_with(bump, op, grid, t_tilde, n_snapshots, DualOptions::default())
}

/// Explicit scheme `Phi^{k+1} = Phi^k + dt (A Phi^k)^+` with snapshots at
/// `n_snapshots` equally spaced times after 0.
pub fn solve_dual_with(
    bump: BumpSpec,
    op: &OperatorKind,
    grid: Grid,
    t_tilde: f64,
    n_snapshots: usize,
    opts: DualOptions,
) -> Result<DualSolution> {
    bump.validate()?;
    grid.check_ball(bump.center, bump.radius)?;
    if !(t_tilde >= 0.0 && t_tilde.is_finite()) {
        return Err(Error::InvalidArgument(format!("dual horizon {t_tilde}")));
    }
    if n_snapshots == 0 {
        return Err(Error::InvalidArgument("at least one dual snapshot is needed".into()));
    }
    let h = grid.h();
    let weights = discretize(op, &grid, opts.split_r.unwrap_or_else(|| default_split(h)))?;
    let rate = weights.diagonal_bound();
    let bound = if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
    let dt = match opts.dt {
        Some(dt) if dt > bound * (1.0 + 1e-12) => return Err(Error::CflViolation { dt, bound }),
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::InvalidArgument(format!("dual step {dt}"))),
        None => (opts.safety * bound).min(t_tilde.max(f64::MIN_POSITIVE)),
    };
    let mut phi = bump.sample(grid)?;
    let spacing = t_tilde / n_snapshots as f64;
    let mut snapshots = vec![(0.0, phi.clone())];
    let mut t = 0.0;
    let mut steps = 0;
    if t_tilde > 0.0 {
        for s in 1..=n_snapshots {
            let target = if s == n_snapshots { t_tilde } else { s as f64 * spacing };
            while t < target {
                let step = if t + dt >= target * (1.0 - 1e-14) { target - t } else { dt };
                phi = dual_step(&phi, step, &weights);
                t = if step == target - t { target } else { t + step };
                steps += 1;
            }
            if let Some(i) = phi.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("dual cell {i} at t = {t}")));
            }
            snapshots.push((t, phi.clone()));
        }
    }
    Ok(DualSolution {
        grid,
        snapshots,
        op: op.clone(),
        bump,
        t_tilde,
        dt,
        steps,
        snapshot_spacing: spacing,
        weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ExpBoundReport {
    pub k: f64,
    pub K: f64,
    pub C: f64,
    pub C_k: f64,
    /// `max (Phi - w)` over every snapshot and cell.
    pub max_excess: f64,
    pub at_x: f64,
    pub at_t: f64,
    /// `max (A_h E - K E)^+` with `E = e^{-k|x - center|}`: the discrete operator's
    /// consistency defect on the barrier.
    pub consistency_defect: f64,
    /// `T * C e^{K T} * consistency_defect + 1e-12`
    pub tolerance: f64,
    pub pass: bool,
}

impl ExpBoundReport {
    pub fn violation(&self) -> f64 {
        self.max_excess.max(0.0)
    }
}

/// Compares the dual solution with `C e^{Kt} e^{-k|x - center|}`. By discrete
/// comparison the scheme can exceed the barrier by at most the accumulated
/// consistency defect of the barrier, which is the tolerance.
pub fn exp_supersolution_check(sol: &DualSolution, consts: &SupersolutionConstants) -> Result<ExpBoundReport> {
    let c0 = sol.bump.center;
    let barrier = GridFunction::from_fn(sol.grid, |x| (-consts.k * (x - c0).abs()).exp(), 0.0, 0.0)?;
    let ab = sol.weights.apply_with(&barrier, DriftMode::Upwind);
    let defect = ab
        .values
        .iter()
        .zip(&barrier.values)
        .map(|(a, e)| (a - consts.K * e).max(0.0))
        .fold(0.0, f64::max);
    let mut max_excess = f64::NEG_INFINITY;
    let (mut at_x, mut at_t) = (c0, 0.0);
    for (t, phi) in &sol.snapshots {
        let amp = consts.C * (consts.K * t).exp();
        for (i, (&p, &e)) in phi.values.iter().zip(&barrier.values).enumerate() {
            let d = p - amp * e;
            if d > max_excess {
                max_excess = d;
                at_x = sol.grid.x(i);
                at_t = *t;
            }
        }
    }
    let tt = sol.t_tilde;
    let tolerance = tt * consts.C * (consts.K * tt).exp() * defect + 1e-12;
    Ok(ExpBoundReport {
        k: consts.k,
        K: consts.K,
        C: consts.C,
        C_k: consts.C_k,
        max_excess,
        at_x,
        at_t,
        consistency_defect: defect,
        tolerance,
        pass: max_excess <= tolerance,
    })
}

// nodes of the time part of rho_delta on (0, delta^2)
const TIME_NODES: usize = 32;

/// `Phi_delta(., s) = [Phi * rho_delta](., s)` with `rho_delta` the product of
/// `omega_delta` in space and `delta^{-2} omega(2 sigma/delta^2 - 1)` on
/// `sigma in (0, delta^2)` in time; `Phi` is continued by `Phi_0` for negative times.
pub fn mollified_dual(sol: &DualSolution, s: f64, delta: f64) -> Result<GridFunction> {
    if !(s >= 0.0 && s <= sol.t_tilde * (1.0 + 1e-12)) {
        return Err(Error::TimeOutOfRange {
            t: s,
            lo: 0.0,
            hi: sol.t_tilde,
        });
    }
    let d2 = delta * delta;
    let raw: Vec<f64> = (0..TIME_NODES)
        .map(|q| omega(2.0 * (q as f64 + 0.5) / TIME_NODES as f64 - 1.0))
        .collect();
    let total: f64 = raw.iter().sum();
    let mut acc = vec![0.0; sol.grid.n];
    for (q, w) in raw.iter().enumerate() {
        let sigma = d2 * (q as f64 + 0.5) / TIME_NODES as f64;
        let f = sol.at_time_extended(s - sigma)?;
        for (a, v) in acc.iter_mut().zip(&f.values) {
            *a += w / total * v;
        }
    }
    let avg = GridFunction::new(sol.grid, acc, 0.0, 0.0)?;
    let moll = discrete_mollifier(delta, sol.grid.h())?;
    convolve(&avg, &moll)
}

/// `K_delta(., t) = Phi_delta(., L_phi (tau - t))` for `0 <= t <= tau`.
pub fn k_delta(sol: &DualSolution, tau: f64, l_phi: f64, t: f64, moll: &MollifierSpec) -> Result<GridFunction> {
    moll.validate()?;
    if !(tau > 0.0) || !(0.0..=tau).contains(&t) {
        return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: tau });
    }
    if l_phi * tau > sol.t_tilde * (1.0 + 1e-12) {
        return Err(Error::TimeOutOfRange {
            t: l_phi * tau,
            lo: 0.0,
            hi: sol.t_tilde,
        });
    }
    mollified_dual(sol, (l_phi * (tau - t)).max(0.0), moll.delta)
}

/// The shrinking cutoff `G(sqrt(tilde_delta^2 + |x - x0|^2) + L_f t)` with
/// `G = 1_{(-inf, R]} * omega_eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSpec {
    pub x0: f64,
    pub radius: f64,
    pub l_f: f64,
    pub eps: f64,
    pub tilde_delta: f64,
    pub horizon: f64,
}

impl GammaSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.l_f >= 0.0 && self.eps > 0.0 && self.tilde_delta >= 0.0 && self.horizon >= 0.0) {
            return Err(Error::InvalidArgument(format!("cutoff {self:?}")));
        }
        if !(self.eps < 1.0) {
            return Err(Error::InvalidArgument(format!("cutoff smoothing {} must be < 1", self.eps)));
        }
        if !(self.radius > self.l_f * self.horizon + 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cutoff radius {} must exceed L_f T + 1 = {}",
                self.radius,
                self.l_f * self.horizon + 1.0
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let d = x - self.x0;
        let s = (self.tilde_delta * self.tilde_delta + d * d).sqrt() + self.l_f * t;
        1.0 - omega_cdf((s - self.radius) / self.eps)
    }
}

pub fn gamma_cutoff(spec: &GammaSpec, t: f64, grid: Grid) -> Result<GridFunction> {
    spec.validate()?;
    GridFunction::from_fn(grid, |x| spec.eval(x, t), 0.0, 0.0)
}

/// `max_i [ (gamma(x_i, t + dt) - gamma(x_i, t))/dt + L_f |gamma(x_i + s h, t) - gamma(x_i, t)|/h ]`
/// with `dt = h / L_f` and `s` pointing away from `x0`.
pub fn gamma_transport_residual(spec: &GammaSpec, t: f64, grid: Grid) -> Result<f64> {
    spec.validate()?;
    let h = grid.h();
    let dt = if spec.l_f > 0.0 { h / spec.l_f } else { h };
    let mut worst = f64::NEG_INFINITY;
    for i in 0..grid.n {
        let x = grid.x(i);
        let out = if x >= spec.x0 { h } else { -h };
        let g = spec.eval(x, t);
        let r = (spec.eval(x, t + dt) - g) / dt + spec.l_f * (spec.eval(x + out, t) - g).abs() / h;
        worst = worst.max(r);
    }
    Ok(worst)
}

/// `Gamma(., t) = K_delta(., t) * gamma(., t)` on `gamma`'s grid.
pub fn gamma_test_function(
    kd: &[(f64, GridFunction)],
    gamma: &[(f64, GridFunction)],
) -> Result<Vec<(f64, GridFunction)>> {
    if kd.len() != gamma.len() || kd.iter().zip(gamma).any(|(a, b)| a.0 != b.0) {
        return Err(Error::SnapshotMismatch("K_delta and gamma use different times".into()));
    }
    kd.iter()
        .zip(gamma)
        .map(|((t, k), (_, g))| Ok((*t, convolve(g, k)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionReport {
    /// `max (Gamma^{k+1} - Gamma^k)/dt + L_f |D Gamma^{k+1}| + L_phi (A* Gamma^{k+1})^+`
    pub residual: f64,
    /// `(h + dt + delta) (|Gamma_t| + L_f |D Gamma| + L_phi |A* Gamma|)`, sup norms
    pub budget: f64,
    pub pass: bool,
}

/// Discrete residual of `Gamma_t + L_f |D Gamma| + L_phi (L* Gamma)^+ <= 0`.
pub fn gamma_subsolution_residual(
    gamma: &[(f64, GridFunction)],
    dual_weights: &OperatorWeights,
    l_f: f64,
    l_phi: f64,
    delta: f64,
) -> Result<SubsolutionReport> {
    if gamma.len() < 2 {
        return Err(Error::SnapshotMismatch("need at least two time levels".into()));
    }
    let h = gamma[0].1.h();
    let (mut res, mut st, mut sx, mut sa, mut dt_max) = (f64::NEG_INFINITY, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for w in gamma.windows(2) {
        let dt = w[1].0 - w[0].0;
        if !(dt > 0.0) {
            return Err(Error::SnapshotMismatch("times must increase".into()));
        }
        dt_max = dt_max.max(dt);
        let (g0, g1) = (&w[0].1, &w[1].1);
        let a = dual_weights.apply_with(g1, DriftMode::Upwind);
        for i in 0..g1.grid.n {
            let ii = i as isize;
            let gt = (g1.values[i] - g0.values[i]) / dt;
            let dx = ((g1.at(ii + 1) - g1.values[i]).abs()).max((g1.values[i] - g1.at(ii - 1)).abs()) / h;
            let r = gt + l_f * dx + l_phi * a.values[i].max(0.0);
            res = res.max(r);
            st = st.max(gt.abs());
            sx = sx.max(dx);
            sa = sa.max(a.values[i].abs());
        }
    }
    let budget = (h + dt_max + delta) * (st + l_f * sx + l_phi * sa) + 1e-12;
    Ok(SubsolutionReport {
        residual: res,
        budget,
        pass: res <= budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{supersolution_constants, LevyMeasure};

    fn sym(n: usize, w: f64) -> Grid {
        Grid::symmetric(w, n).unwrap()
    }

    #[test]
    fn gaussian_and_poisson_oracles() {
        let g = sym(4096, 10.0);
        let k = heat_kernel(2.0, 0.1, g, KernelOptions::default()).unwrap();
        let err = (0..g.n)
            .map(|i| {
                let x = g.x(i);
                (k.kernel.values[i] - (-x * x / 0.4).exp() / (0.4 * std::f64::consts::PI).sqrt()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        let opts = KernelOptions {
            outside_mass_tol: 0.05,
            ..Default::default()
        };
        let k = heat_kernel(1.0, 0.5, g, opts).unwrap();
        let err = (0..g.n)
            .map(|i| {
                let x = g.x(i);
                (k.kernel.values[i] - 0.5 / (std::f64::consts::PI * (0.25 + x * x))).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
        for i in 0..g.n {
            assert_eq!(k.kernel.values[i], k.kernel.values[g.n - 1 - i]);
        }
        assert!((k.computed_mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn narrow_domain_is_rejected() {
        let g = sym(512, 1.0);
        assert!(matches!(
            heat_kernel(2.0, 1.0, g, KernelOptions::default()),
            Err(Error::DomainTooSmall { .. })
        ));
        assert!(heat_kernel(2.5, 1.0, g, KernelOptions::default()).is_err());
    }

    #[test]
    fn outside_mass_tails() {
        // exact Cauchy tail against the series term at large radius
        let exact = kernel_outside_mass(1.0, 0.1, -1e4, 1e4);
        assert!((exact - 2.0 * 0.1 / (std::f64::consts::PI * 1e4)).abs() < 1e-12);
        let near = kernel_outside_mass(0.999_999, 0.1, -1e4, 1e4);
        assert!((near - exact).abs() / exact < 1e-4);
    }

    #[test]
    fn semigroup_spot_check() {
        // odd n puts 0 on a cell centre so the convolution needs no interpolation
        let g = sym(4001, 10.0);
        let opts = KernelOptions {
            outside_mass_tol: 1e-2,
            ..Default::default()
        };
        for (alpha, t1, t2) in [(1.0, 0.05, 0.1), (2.0, 0.01, 0.02)] {
            let a = heat_kernel(alpha, t1, g, opts).unwrap().kernel;
            let b = heat_kernel(alpha, t2, g, opts).unwrap().kernel;
            let c = heat_kernel(alpha, t1 + t2, g, opts).unwrap().kernel;
            let ab = convolve(&a, &b).unwrap();
            let err = (0..g.n)
                .filter(|&i| g.x(i).abs() <= 5.0)
                .map(|i| (ab.values[i] - c.values[i]).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-5, "alpha {alpha}: {err}");
        }
    }

    #[test]
    fn discrete_mollifier_is_even_with_unit_mass() {
        let m = discrete_mollifier(0.1, 0.004).unwrap();
        assert!((m.integral() - 1.0).abs() < 1e-12);
        let n = m.grid.n;
        for i in 0..n {
            assert_eq!(m.values[i], m.values[n - 1 - i]);
        }
    }

    #[test]
    fn dual_solution_monotone_in_time_and_zero_for_zero_bump() {
        let g = sym(400, 4.0);
        let op = OperatorKind::nonlocal(LevyMeasure::tempered(1.0, 2.0, 1.0).unwrap()).adjoint();
        let sol = solve_dual(BumpSpec::unit_mass(0.0, 0.5), &op, g, 0.5, 10).unwrap();
        for w in sol.snapshots.windows(2) {
            for (a, b) in w[0].1.values.iter().zip(&w[1].1.values) {
                assert!(b >= a);
            }
        }
        let zero = BumpSpec {
            height: 0.0,
            ..BumpSpec::unit_mass(0.0, 0.5)
        };
        let sol = solve_dual(zero, &op, g, 0.5, 5).unwrap();
        assert!(sol.snapshots.iter().all(|s| s.1.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn local_dual_mass_grows() {
        let g = sym(1000, 5.0);
        let sol = solve_dual(BumpSpec::unit_mass(0.0, 0.3), &OperatorKind::LocalLaplacian, g, 0.2, 8).unwrap();
        let masses: Vec<f64> = sol.snapshots.iter().map(|s| s.1.integral()).collect();
        assert!(masses.windows(2).all(|w| w[1] > w[0]), "{masses:?}");
    }

    #[test]
    fn exp_barrier_holds() {
        let g = sym(1000, 8.0);
        let primal = OperatorKind::nonlocal(LevyMeasure::tempered(1.0, 2.0, 1.0).unwrap());
        let bump = BumpSpec::unit_mass(0.0, 0.5);
        let c = supersolution_constants(&primal, 1.0, bump.height, bump.radius).unwrap();
        let sol = solve_dual(bump, &primal.adjoint(), g, 1.0, 10).unwrap();
        let r = exp_supersolution_check(&sol, &c).unwrap();
        assert!(r.pass, "{r:?}");
        let t0 = exp_supersolution_check(
            &DualSolution {
                snapshots: vec![sol.snapshots[0].clone()],
                ..sol.clone()
            },
            &c,
        )
        .unwrap();
        assert!(t0.max_excess <= 0.0);
    }

    #[test]
    fn dual_cfl_is_enforced() {
        let g = sym(200, 2.0);
        let opts = DualOptions {
            dt: Some(1.0),
            ..Default::default()
        };
        let r = solve_dual_with(BumpSpec::unit_mass(0.0, 0.5), &OperatorKind::LocalLaplacian, g, 0.1, 2, opts);
        assert!(matches!(r, Err(Error::CflViolation { .. })));
    }

    #[test]
    fn gamma_cutoff_values_and_transport() {
        let spec = GammaSpec {
            x0: 0.0,
            radius: 2.0,
            l_f: 1.0,
            eps: 0.1,
            tilde_delta: 0.0,
            horizon: 0.5,
        };
        let g = sym(2000, 4.0);
        assert_eq!(spec.eval(0.0, 0.0), 1.0);
        assert_eq!(spec.eval(2.1, 0.0), 0.0);
        for t in [0.0, 0.2, 0.45] {
            assert!(gamma_transport_residual(&spec, t, g).unwrap() <= 1e-10);
            let c = gamma_cutoff(&spec, t, g).unwrap();
            assert!(c.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        let smoothed = GammaSpec { tilde_delta: 0.05, ..spec };
        assert!(gamma_transport_residual(&smoothed, 0.1, g).unwrap() <= 1e-10);
        let bad = GammaSpec { radius: 1.2, ..spec };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn k_delta_zero_and_endpoint() {
        let g = sym(800, 4.0);
        let op = OperatorKind::LocalLaplacian;
        let zero = BumpSpec {
            height: 0.0,
            ..BumpSpec::unit_mass(0.0, 0.5)
        };
        let sol = solve_dual(zero, &op, g, 1.0, 20).unwrap();
        let moll = MollifierSpec {
            epsilon: 0.1,
            delta: 0.1,
        };
        assert!(k_delta(&sol, 0.5, 1.0, 0.2, &moll)
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));
        assert!(k_delta(&sol, 0.5, 1.0, 0.7, &moll).is_err());
        assert!(k_delta(&sol, 0.5, 3.0, 0.2, &moll).is_err());
    }

    #[test]
    fn gamma_of_zero_cutoff_is_zero() {
        let g = sym(400, 4.0);
        let kd = vec![(0.0, BumpSpec::unit_mass(0.0, 0.5).sample(g).unwrap())];
        let zero = vec![(0.0, GridFunction::zeros(g))];
        let out = gamma_test_function(&kd, &zero).unwrap();
        assert!(out[0].1.values.iter().all(|&v| v == 0.0));
        let shifted = vec![(0.1, GridFunction::zeros(g))];
        assert!(matches!(
            gamma_test_function(&kd, &shifted),
            Err(Error::SnapshotMismatch(_))
        ));
    }
}

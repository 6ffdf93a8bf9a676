//! Batch execution: solves, verifies and writes every artifact of a run.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use duhamel_core::dual::{solve_dual_with, BumpSpec, DualOptions, MollifierSpec};
use duhamel_core::{
    default_split, exp_bound_report, exp_supersolution_check, heat_kernel, kato_residual, kernel_grid,
    operator_bound_reports, operator_l1_bound_check, reduced_dual_check, supersolution_constants, verify_bv_bound,
    verify_comparison, verify_contraction, verify_duhamel_linear, verify_duhamel_nonlinear, verify_finite_speed,
    verify_local_l1_bound, verify_max_principle, ContractionReport, DualSolution, Error, GridFunction, InequalityId,
    KernelOptions, SolveOptions, SolvedPair, SupersolutionConstants, TestFunction,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Ball, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Dual,
    Kernel,
    Verify,
    Sweep,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Dual => "dual",
            Command::Kernel => "kernel",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }
}

pub const EXIT_PASS: u8 = 0;
pub const EXIT_VERIFICATION: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub enum RunError {
    Core(Error),
    Io(io::Error),
    Config(String),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o: {e}"),
            RunError::Config(m) => write!(f, "configuration: {m}"),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Core(
                Error::InvalidArgument(_)
                | Error::BallExceedsDomain { .. }
                | Error::NotTempered { .. }
                | Error::SplitTooSmall { .. }
                | Error::TestFunctionTouchesBoundary(_)
                | Error::Parse(_),
            ) => EXIT_CONFIG,
            RunError::Core(_) | RunError::Io(_) => EXIT_NUMERICAL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_CONFIG => "configuration",
            _ => "numerical",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: u8,
    pub reports: Vec<ContractionReport>,
    pub files: Vec<String>,
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write<F>(&mut self, name: &str, body: F) -> io::Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        body(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }

    /// Written last, through a temporary file, so a manifest on disk always
    /// describes a finished run.
    fn manifest(&mut self, mut manifest: Value) -> io::Result<()> {
        let mut files = self.files.clone();
        files.sort();
        manifest["files"] = json!(files);
        let tmp = self.dir.join("manifest.json.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            serde_json::to_writer_pretty(&mut w, &manifest)?;
            writeln!(w)?;
            w.flush()?;
        }
        fs::rename(tmp, self.dir.join("manifest.json"))
    }
}

/// Writes a machine-readable record of a failed run.
pub fn write_failure(dir: &Path, command: &str, exit_code: u8, kind: &str, message: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let rec = json!({
        "command": command,
        "exit_code": exit_code,
        "kind": kind,
        "message": message,
    });
    let mut w = BufWriter::new(File::create(dir.join("failure.json"))?);
    serde_json::to_writer_pretty(&mut w, &rec)?;
    writeln!(w)?;
    w.flush()
}

fn solve_pair(cfg: &RunConfig, n: usize) -> Result<SolvedPair, RunError> {
    let opts = SolveOptions {
        record_all_steps: cfg.has(InequalityId::Kato),
        ..Default::default()
    };
    let sp = SolvedPair::solve(&cfg.pair, n, cfg.split_r, &cfg.snapshot_times(), opts)?;
    for traj in [&sp.u, &sp.v] {
        if traj.snapshots.iter().any(|(_, f)| f.values.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("solution".into()).into());
        }
    }
    Ok(sp)
}

struct DualRun {
    sol: DualSolution,
    consts: SupersolutionConstants,
}

fn solve_dual_for(cfg: &RunConfig, sp_grid: duhamel_core::Grid) -> Result<DualRun, RunError> {
    let op = &cfg.pair.problem_u.op;
    let (_, l_phi) = cfg.pair.lipschitz();
    let t_tilde = cfg.pair.problem_u.horizon * l_phi.max(1.0);
    let bump = BumpSpec::unit_mass(0.0, cfg.dual.bump_radius);
    let opts = DualOptions {
        split_r: cfg.split_r,
        ..Default::default()
    };
    let sol = solve_dual_with(bump, &op.adjoint(), sp_grid, t_tilde, cfg.dual.snapshots, opts)?;
    let consts = supersolution_constants(op, cfg.dual.exp_rate, bump.height, bump.radius)?;
    Ok(DualRun { sol, consts })
}

enum Task {
    Ball(InequalityId, Ball),
    Comparison,
    MaxPrinciple { second: bool },
    Kato(TestFunction),
    OperatorBounds(f64),
    ExpBound,
}

/// Random test functions strictly inside the space-time domain.
pub fn kato_test_functions(cfg: &RunConfig) -> Vec<TestFunction> {
    let p = &cfg.pair.problem_u;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let horizon = p.horizon;
    (0..cfg.kato_samples)
        .map(|_| {
            let t_radius = rng.random_range(0.1 * horizon..0.45 * horizon);
            let t_center = rng.random_range(t_radius..horizon - t_radius);
            let x_radius = rng.random_range(0.25..1.0);
            let margin = x_radius + 0.25 * (p.x_max - p.x_min);
            let x_center = rng.random_range(p.x_min + margin..p.x_max - margin);
            TestFunction {
                x_center,
                x_radius,
                t_center,
                t_radius,
                amplitude: 1.0,
            }
        })
        .collect()
}

fn tasks(cfg: &RunConfig, h: f64) -> Vec<Task> {
    let mut out = Vec::new();
    for &id in &cfg.checks {
        match id {
            InequalityId::Comparison => out.push(Task::Comparison),
            InequalityId::MaxPrinciple => {
                out.push(Task::MaxPrinciple { second: false });
                out.push(Task::MaxPrinciple { second: true });
            }
            InequalityId::Kato => out.extend(kato_test_functions(cfg).into_iter().map(Task::Kato)),
            InequalityId::OperatorBounds => {
                let mut rs = vec![cfg.split_r.unwrap_or_else(|| default_split(h)), 0.5, 1.0];
                rs.dedup();
                out.extend(rs.into_iter().map(Task::OperatorBounds));
            }
            InequalityId::ExpBound => out.push(Task::ExpBound),
            _ => out.extend(cfg.balls.iter().map(|&b| Task::Ball(id, b))),
        }
    }
    out
}

fn run_task(
    cfg: &RunConfig,
    sp: &SolvedPair,
    dual: Option<&DualRun>,
    task: &Task,
) -> Result<Vec<ContractionReport>, RunError> {
    let need_dual = || {
        dual.ok_or_else(|| RunError::Config("this check needs the dual solution".into()))
    };
    let pu = &sp.pair.problem_u;
    let kopts = KernelOptions {
        outside_mass_tol: cfg.kernel_outside_mass_tol,
        ..Default::default()
    };
    let moll = MollifierSpec {
        epsilon: cfg.dual.epsilon,
        delta: cfg.dual.delta,
    };
    Ok(match task {
        Task::Ball(id, b) => vec![match id {
            InequalityId::FiniteSpeed => verify_finite_speed(sp, b.x0, b.radius, b.t)?,
            InequalityId::LinearDuhamel => {
                let alpha = cfg.alpha.ok_or_else(|| RunError::Config("alpha missing".into()))?;
                verify_duhamel_linear(sp, alpha, b.x0, b.radius, b.t, kopts)?
            }
            InequalityId::NonlinearDuhamel => verify_duhamel_nonlinear(sp, &need_dual()?.sol, b.x0, b.radius, b.t)?,
            InequalityId::Contraction => verify_contraction(sp, &need_dual()?.sol, b.x0, b.radius, b.t)?,
            InequalityId::LocalL1Bound => verify_local_l1_bound(pu, &sp.u, &need_dual()?.sol, b.x0, b.radius, b.t)?,
            InequalityId::BvBound => verify_bv_bound(pu, &sp.u, &need_dual()?.sol, b.x0, b.radius, b.t)?,
            InequalityId::ReducedDual => reduced_dual_check(sp, &need_dual()?.sol, &moll, b.t, b.x0, b.radius)?,
            other => return Err(RunError::Config(format!("{} is not a ball check", other.as_str()))),
        }],
        Task::Comparison => {
            let (u0, v0) = (&sp.u.snapshots[0].1, &sp.v.snapshots[0].1);
            if u0.values.iter().zip(&v0.values).all(|(a, b)| a <= b) {
                vec![verify_comparison(sp)?]
            } else {
                vec![verify_comparison(&sp.swapped())?]
            }
        }
        Task::MaxPrinciple { second } => {
            let (p, t) = if *second {
                (&sp.pair.problem_v, &sp.v)
            } else {
                (&sp.pair.problem_u, &sp.u)
            };
            vec![verify_max_principle(p, t)?]
        }
        Task::Kato(psi) => vec![kato_residual(sp, psi)?],
        Task::OperatorBounds(r) => {
            let f = BumpSpec::unit_mass(0.0, 0.5).sample(sp.u.grid)?;
            let rep = operator_l1_bound_check(&pu.op, &f, *r)?;
            operator_bound_reports(&rep, sp.u.grid.n)
        }
        Task::ExpBound => {
            let d = need_dual()?;
            let r = exp_supersolution_check(&d.sol, &d.consts)?;
            vec![exp_bound_report(&r, &d.sol)]
        }
    })
}

fn reports_at(cfg: &RunConfig, sp: &SolvedPair, dual: Option<&DualRun>) -> Result<Vec<ContractionReport>, RunError> {
    let tasks = tasks(cfg, sp.u.grid.h());
    let nested: Vec<Result<Vec<ContractionReport>, RunError>> =
        tasks.par_iter().map(|t| run_task(cfg, sp, dual, t)).collect();
    let mut out = Vec::new();
    for r in nested {
        out.extend(r?);
    }
    Ok(out)
}

fn write_trajectory(w: &mut impl Write, snapshots: &[(f64, GridFunction)], keep: &[f64]) -> io::Result<()> {
    writeln!(w, "t,x,value")?;
    for (t, f) in snapshots {
        if *t != 0.0 && !keep.iter().any(|k| (k - t).abs() <= 1e-12 * k.max(1.0)) {
            continue;
        }
        for (i, v) in f.values.iter().enumerate() {
            writeln!(w, "{t},{},{v}", f.grid.x(i))?;
        }
    }
    Ok(())
}

fn write_reports(art: &mut Artifacts, stem: &str, reports: &[ContractionReport]) -> io::Result<()> {
    art.write(&format!("{stem}.jsonl"), |w| {
        for r in reports {
            serde_json::to_writer(&mut *w, r)?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    art.write(&format!("{stem}.csv"), |w| {
        writeln!(w, "{}", ContractionReport::CSV_HEADER)?;
        for r in reports {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    })
}

fn tolerance_formulas(reports: &[ContractionReport]) -> BTreeMap<&'static str, String> {
    reports
        .iter()
        .map(|r| (r.id.as_str(), r.tolerance_formula.clone()))
        .collect()
}

fn pair_constants(sp: &SolvedPair) -> Value {
    let (l_f, l_phi) = sp.pair.lipschitz();
    json!({
        "n": sp.u.grid.n,
        "h": sp.u.grid.h(),
        "L_f": l_f,
        "L_phi": l_phi,
        "cfl_u": sp.u.cfl,
        "cfl_v": sp.v.cfl,
        "dt_u": sp.u.dt_used,
        "dt_v": sp.v.dt_used,
        "steps_u": sp.u.steps,
        "steps_v": sp.v.steps,
        "split_r": sp.u.weights.split_r,
        "local_coeff": sp.u.weights.local_coeff,
        "jump_mass": sp.u.weights.total_jump_mass,
        "drift": sp.u.weights.drift,
        "neglected_jump_mass": sp.u.weights.neglected_mass,
        "leakage_bound": sp.u.leakage_bound + sp.v.leakage_bound,
    })
}

fn dual_constants(d: &DualRun) -> Value {
    json!({
        "t_tilde": d.sol.t_tilde,
        "dt": d.sol.dt,
        "steps": d.sol.steps,
        "snapshot_spacing": d.sol.snapshot_spacing,
        "bump": d.sol.bump,
        "op": d.sol.op,
        "k": d.consts.k,
        "K": d.consts.K,
        "C": d.consts.C,
        "C_k": d.consts.C_k,
        "C_k_formula": "0.5 e^k k^2 ∫_{|z|<=1} z^2 dmu* + ∫_{|z|>1} e^{k|z|} dmu*  (Laplacian: k^2)",
    })
}

fn write_dual(art: &mut Artifacts, d: &DualRun) -> Result<bool, RunError> {
    let exp = exp_supersolution_check(&d.sol, &d.consts)?;
    art.write("dual.csv", |w| {
        writeln!(w, "t,x,value")?;
        for (t, f) in &d.sol.snapshots {
            for (i, v) in f.values.iter().enumerate() {
                writeln!(w, "{t},{},{v}", f.grid.x(i))?;
            }
        }
        Ok(())
    })?;
    let cert = json!({
        "constants": dual_constants(d),
        "exp_bound": exp,
        "mass_final": d.sol.snapshots.last().map(|s| s.1.integral()),
    });
    art.json("certificate.json", &cert)?;
    Ok(exp.pass)
}

fn exact_kernel(alpha: f64, t: f64, x: f64) -> Option<f64> {
    use std::f64::consts::PI;
    if alpha == 2.0 {
        Some((-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt())
    } else if alpha == 1.0 {
        Some(t / (PI * (x * x + t * t)))
    } else {
        None
    }
}

fn write_kernels(art: &mut Artifacts, cfg: &RunConfig, grid: duhamel_core::Grid, times: &[f64]) -> Result<Value, RunError> {
    let alpha = cfg
        .alpha
        .ok_or_else(|| RunError::Config("the kernel needs alpha".into()))?;
    let kg = kernel_grid(&grid)?;
    let opts = KernelOptions {
        outside_mass_tol: cfg.kernel_outside_mass_tol,
        ..Default::default()
    };
    let kernels = times
        .iter()
        .map(|&t| heat_kernel(alpha, t, kg, opts))
        .collect::<duhamel_core::Result<Vec<_>>>()?;
    let mut summary = Vec::new();
    art.write("kernel.csv", |w| {
        writeln!(w, "t,x,value")?;
        for k in &kernels {
            for (i, v) in k.kernel.values.iter().enumerate() {
                writeln!(w, "{},{},{v}", k.t, kg.x(i))?;
            }
        }
        Ok(())
    })?;
    let oracle = exact_kernel(alpha, 1.0, 0.0).is_some();
    if oracle {
        art.write("kernel_oracle.csv", |w| {
            writeln!(w, "t,x,computed,exact,abs_diff")?;
            for k in &kernels {
                for (i, v) in k.kernel.values.iter().enumerate() {
                    let x = kg.x(i);
                    let e = exact_kernel(alpha, k.t, x).expect("oracle exists");
                    writeln!(w, "{},{x},{v},{e},{}", k.t, (v - e).abs())?;
                }
            }
            Ok(())
        })?;
    }
    for k in &kernels {
        let max_err = oracle.then(|| {
            k.kernel
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| (v - exact_kernel(alpha, k.t, kg.x(i)).expect("oracle exists")).abs())
                .fold(0.0, f64::max)
        });
        summary.push(json!({
            "alpha": alpha,
            "t": k.t,
            "computed_mass": k.computed_mass,
            "outside_mass": k.outside_mass,
            "max_abs_error": max_err,
        }));
    }
    let summary = Value::Array(summary);
    art.json("kernel.json", &summary)?;
    Ok(summary)
}

fn base_manifest(cfg: &RunConfig, cmd: Command) -> Value {
    json!({
        "command": cmd.as_str(),
        "name": cfg.name,
        "seed": cfg.seed,
        "config": cfg,
    })
}

fn verdict(reports: &[ContractionReport]) -> u8 {
    if reports.iter().all(|r| r.pass) {
        EXIT_PASS
    } else {
        EXIT_VERIFICATION
    }
}

/// Runs one command and writes its artifacts into `out`.
pub fn run(cfg: &RunConfig, cmd: Command, out: &Path) -> Result<Outcome, RunError> {
    let mut art = Artifacts::new(out)?;
    let mut manifest = base_manifest(cfg, cmd);
    let mut reports = Vec::new();
    let mut exit_code = EXIT_PASS;
    let keep = cfg.snapshot_times();
    match cmd {
        Command::Solve => {
            let sp = solve_pair(cfg, cfg.n)?;
            art.write("trajectory_u.csv", |w| write_trajectory(w, &sp.u.snapshots, &keep))?;
            art.write("trajectory_v.csv", |w| write_trajectory(w, &sp.v.snapshots, &keep))?;
            manifest["derived"] = pair_constants(&sp);
        }
        Command::Dual => {
            let grid = cfg.pair.problem_u.grid(cfg.n)?;
            let d = solve_dual_for(cfg, grid)?;
            if !write_dual(&mut art, &d)? {
                exit_code = EXIT_VERIFICATION;
            }
            manifest["derived"] = json!({ "dual": dual_constants(&d) });
        }
        Command::Kernel => {
            let grid = cfg.pair.problem_u.grid(cfg.n)?;
            manifest["derived"] = json!({ "kernels": write_kernels(&mut art, cfg, grid, &cfg.times)? });
        }
        Command::Verify => {
            let sp = solve_pair(cfg, cfg.n)?;
            let dual = if cfg.uses_dual() {
                Some(solve_dual_for(cfg, sp.u.grid)?)
            } else {
                None
            };
            reports = reports_at(cfg, &sp, dual.as_ref())?;
            art.write("trajectory_u.csv", |w| write_trajectory(w, &sp.u.snapshots, &keep))?;
            art.write("trajectory_v.csv", |w| write_trajectory(w, &sp.v.snapshots, &keep))?;
            let mut derived = pair_constants(&sp);
            if let Some(d) = &dual {
                write_dual(&mut art, d)?;
                derived["dual"] = dual_constants(d);
            }
            if cfg.has(InequalityId::LinearDuhamel) {
                let mut ts: Vec<f64> = cfg.balls.iter().map(|b| b.t).collect();
                ts.sort_by(f64::total_cmp);
                ts.dedup();
                derived["kernels"] = write_kernels(&mut art, cfg, sp.u.grid, &ts)?;
            }
            write_reports(&mut art, "reports", &reports)?;
            derived["tolerance_formulas"] = json!(tolerance_formulas(&reports));
            manifest["derived"] = derived;
            exit_code = verdict(&reports);
        }
        Command::Sweep => {
            let ns = if cfg.sweep_n.is_empty() {
                vec![cfg.n]
            } else {
                cfg.sweep_n.clone()
            };
            let mut per_n = Vec::new();
            let mut derived = Vec::new();
            for &n in &ns {
                let sp = solve_pair(cfg, n)?;
                let dual = if cfg.uses_dual() {
                    Some(solve_dual_for(cfg, sp.u.grid)?)
                } else {
                    None
                };
                let r = reports_at(cfg, &sp, dual.as_ref())?;
                derived.push(pair_constants(&sp));
                per_n.push((n, r));
            }
            let rows = sweep_rows(&per_n);
            art.write("sweep.csv", |w| {
                writeln!(w, "key,id,n,x0,ball_radius,t,lhs,rhs,margin,tolerance,violation,ratio,observed_order,pass")?;
                for row in &rows {
                    writeln!(w, "{}", row.csv())?;
                }
                Ok(())
            })?;
            reports = per_n.into_iter().flat_map(|(_, r)| r).collect();
            write_reports(&mut art, "reports", &reports)?;
            manifest["derived"] = json!({
                "per_n": derived,
                "tolerance_formulas": tolerance_formulas(&reports),
            });
            exit_code = verdict(&reports);
        }
    }
    manifest["summary"] = json!({
        "reports": reports.len(),
        "failed": reports.iter().filter(|r| !r.pass).count(),
        "exit_code": exit_code,
    });
    art.manifest(manifest)?;
    Ok(Outcome {
        exit_code,
        reports,
        files: art.files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Position of the report within its run; identical across `n`.
    pub key: usize,
    pub n: usize,
    pub report: ContractionReport,
    /// `max(0, -margin)`
    pub violation: f64,
    /// Previous violation over this one, when both are positive.
    pub ratio: Option<f64>,
    pub observed_order: Option<f64>,
}

impl SweepRow {
    fn csv(&self) -> String {
        let r = &self.report;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.key,
            r.id.as_str(),
            self.n,
            opt(r.x0),
            opt(r.ball_radius),
            opt(r.t),
            r.lhs,
            r.rhs,
            r.margin,
            r.tolerance,
            self.violation,
            opt(self.ratio),
            opt(self.observed_order),
            r.pass
        )
    }
}

/// Matches reports across grids by position and computes successive ratios of
/// the violation term.
pub fn sweep_rows(per_n: &[(usize, Vec<ContractionReport>)]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    let Some((_, first)) = per_n.first() else {
        return rows;
    };
    for key in 0..first.len() {
        let mut prev: Option<(usize, f64)> = None;
        for (n, reps) in per_n {
            let Some(r) = reps.get(key) else { continue };
            let violation = r.violation();
            let (ratio, order) = match prev {
                Some((pn, pv)) if pv > 0.0 && violation > 0.0 => {
                    let q = pv / violation;
                    (Some(q), Some(q.ln() / (*n as f64 / pn as f64).ln()))
                }
                _ => (None, None),
            };
            rows.push(SweepRow {
                key,
                n: *n,
                report: r.clone(),
                violation,
                ratio,
                observed_order: order,
            });
            prev = Some((*n, violation));
        }
    }
    rows
}

//! Run configuration: TOML files, optionally layered over a named preset.

use std::fmt;
use std::path::Path;

use duhamel_core::{
    assert_tempered, fractional_laplacian_constant, Grid, InequalityId, InitialProfile, LevyMeasure, OperatorKind,
    PhiSpec, ProblemSpec, ScenarioPair, SourceSpec,
};
use serde::{Deserialize, Serialize};

use crate::presets;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ball {
    pub x0: f64,
    pub radius: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDual {
    pub bump_radius: Option<f64>,
    pub snapshots: Option<usize>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub exp_rate: Option<f64>,
}

/// The file format. Every field is optional so that a file can override a preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub n: Option<usize>,
    pub split_r: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub balls: Option<Vec<Ball>>,
    pub checks: Option<Vec<InequalityId>>,
    pub alpha: Option<f64>,
    pub kernel_outside_mass_tol: Option<f64>,
    pub kato_samples: Option<usize>,
    pub sweep_n: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub dual: Option<RawDual>,
    /// The first problem; the second shares everything but its data.
    pub problem: Option<ProblemSpec>,
    pub initial_v: Option<InitialProfile>,
    pub source_v: Option<SourceSpec>,
    pub relationship: Option<String>,
}

impl RawConfig {
    /// Fields set here win over those of `base`.
    fn over(self, base: RawConfig) -> RawConfig {
        let dual = match (self.dual, base.dual) {
            (Some(d), Some(b)) => Some(RawDual {
                bump_radius: d.bump_radius.or(b.bump_radius),
                snapshots: d.snapshots.or(b.snapshots),
                delta: d.delta.or(b.delta),
                epsilon: d.epsilon.or(b.epsilon),
                exp_rate: d.exp_rate.or(b.exp_rate),
            }),
            (d, b) => d.or(b),
        };
        RawConfig {
            preset: self.preset.or(base.preset),
            name: self.name.or(base.name),
            n: self.n.or(base.n),
            split_r: self.split_r.or(base.split_r),
            times: self.times.or(base.times),
            balls: self.balls.or(base.balls),
            checks: self.checks.or(base.checks),
            alpha: self.alpha.or(base.alpha),
            kernel_outside_mass_tol: self.kernel_outside_mass_tol.or(base.kernel_outside_mass_tol),
            kato_samples: self.kato_samples.or(base.kato_samples),
            sweep_n: self.sweep_n.or(base.sweep_n),
            seed: self.seed.or(base.seed),
            dual,
            problem: self.problem.or(base.problem),
            initial_v: self.initial_v.or(base.initial_v),
            source_v: self.source_v.or(base.source_v),
            relationship: self.relationship.or(base.relationship),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualConfig {
    pub bump_radius: f64,
    pub snapshots: usize,
    pub delta: f64,
    pub epsilon: f64,
    /// Exponential rate `M` of the supersolution; ignored for the Laplacian.
    pub exp_rate: f64,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            bump_radius: 0.5,
            snapshots: 50,
            delta: 0.1,
            epsilon: 0.1,
            exp_rate: 1.0,
        }
    }
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub pair: ScenarioPair,
    pub n: usize,
    pub split_r: Option<f64>,
    pub times: Vec<f64>,
    pub balls: Vec<Ball>,
    pub checks: Vec<InequalityId>,
    pub alpha: Option<f64>,
    pub kernel_outside_mass_tol: f64,
    pub kato_samples: usize,
    pub sweep_n: Vec<usize>,
    pub seed: u64,
    pub dual: DualConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Parse { line: usize, column: usize, message: String },
    Validation(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse { line, column, message } => {
                write!(f, "parse error at line {line}, column {column}: {message}")
            }
            ConfigError::Validation(errs) => {
                writeln!(f, "{} validation error(s):", errs.len())?;
                for e in errs {
                    writeln!(f, "  - {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| {
                let before = &text[..s.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
                (line, column)
            })
            .unwrap_or((0, 0));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    resolve(parse_raw(text)?)
}

pub fn preset_config(name: &str) -> Result<RunConfig, ConfigError> {
    resolve(RawConfig {
        preset: Some(name.to_string()),
        ..Default::default()
    })
}

fn resolve(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let raw = match &raw.preset {
        Some(p) => {
            let text = presets::text(p).ok_or_else(|| {
                ConfigError::Validation(vec![format!(
                    "unknown preset '{p}' (known: {})",
                    presets::NAMES.join(", ")
                )])
            })?;
            raw.over(parse_raw(text)?)
        }
        None => raw,
    };
    let mut errs = Vec::new();
    let Some(problem) = raw.problem.clone() else {
        return Err(ConfigError::Validation(vec!["missing [problem] (or a preset)".into()]));
    };
    let pair = ScenarioPair {
        problem_v: ProblemSpec {
            initial: raw.initial_v.clone().unwrap_or_else(|| problem.initial.clone()),
            source: raw.source_v.clone().unwrap_or_else(|| problem.source.clone()),
            ..problem.clone()
        },
        problem_u: problem,
        relationship: raw.relationship.clone().unwrap_or_default(),
    };
    let horizon = pair.problem_u.horizon;
    let d = raw.dual.clone().unwrap_or_default();
    let dd = DualConfig::default();
    let cfg = RunConfig {
        name: raw.name.clone().or(raw.preset.clone()).unwrap_or_else(|| "run".into()),
        n: raw.n.unwrap_or(1000),
        split_r: raw.split_r,
        times: raw.times.clone().unwrap_or_else(|| vec![horizon]),
        balls: raw.balls.clone().unwrap_or_default(),
        checks: raw.checks.clone().unwrap_or_default(),
        alpha: raw.alpha,
        kernel_outside_mass_tol: raw.kernel_outside_mass_tol.unwrap_or(1e-8),
        kato_samples: raw.kato_samples.unwrap_or(20),
        sweep_n: raw.sweep_n.clone().unwrap_or_default(),
        seed: raw.seed.unwrap_or(0),
        dual: DualConfig {
            bump_radius: d.bump_radius.unwrap_or(dd.bump_radius),
            snapshots: d.snapshots.unwrap_or(dd.snapshots),
            delta: d.delta.unwrap_or(dd.delta),
            epsilon: d.epsilon.unwrap_or(dd.epsilon),
            exp_rate: d.exp_rate.unwrap_or(dd.exp_rate),
        },
        pair,
    };
    validate(&cfg, raw.dual.as_ref().and_then(|d| d.exp_rate), &mut errs);
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Validation(errs))
    }
}

fn needs_dual(id: InequalityId) -> bool {
    matches!(
        id,
        InequalityId::NonlinearDuhamel
            | InequalityId::Contraction
            | InequalityId::LocalL1Bound
            | InequalityId::BvBound
            | InequalityId::ReducedDual
            | InequalityId::ExpBound
    )
}

impl RunConfig {
    pub fn uses_dual(&self) -> bool {
        self.checks.iter().any(|&c| needs_dual(c))
    }

    pub fn has(&self, id: InequalityId) -> bool {
        self.checks.contains(&id)
    }

    /// Requested snapshot times together with the ball times, sorted.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.times.iter().copied().chain(self.balls.iter().map(|b| b.t)).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

fn validate(cfg: &RunConfig, explicit_rate: Option<f64>, errs: &mut Vec<String>) {
    let pu = &cfg.pair.problem_u;
    if let Err(e) = cfg.pair.validate() {
        errs.push(format!("problem: {e}"));
        return;
    }
    if !(10..=65_536).contains(&cfg.n) {
        errs.push(format!("n = {} must lie in [10, 65536]", cfg.n));
    }
    for &n in &cfg.sweep_n {
        if !(10..=65_536).contains(&n) {
            errs.push(format!("sweep n = {n} must lie in [10, 65536]"));
        }
    }
    if cfg.sweep_n.windows(2).any(|w| w[0] >= w[1]) {
        errs.push("sweep_n must be strictly ascending".into());
    }
    if let Some(r) = cfg.split_r {
        if !(r > 0.0) {
            errs.push(format!("split_r = {r} must be positive"));
        }
    }
    if let Some(a) = cfg.alpha {
        if !(a > 0.0 && a <= 2.0) {
            errs.push(format!("alpha = {a} out of (0,2]"));
        }
    }
    if !(cfg.kernel_outside_mass_tol > 0.0 && cfg.kernel_outside_mass_tol < 1.0) {
        errs.push(format!(
            "kernel_outside_mass_tol = {} must lie in (0, 1)",
            cfg.kernel_outside_mass_tol
        ));
    }
    let horizon = pu.horizon;
    if cfg.times.is_empty() {
        errs.push("times must not be empty".into());
    }
    for &t in &cfg.times {
        if !(t > 0.0 && t <= horizon) {
            errs.push(format!("time {t} outside (0, {horizon}]"));
        }
    }

    let (l_f, _) = cfg.pair.lipschitz();
    let grid = Grid::new(pu.x_min, pu.x_max, cfg.n.max(2)).expect("validated domain");
    let dual_margin = if cfg.uses_dual() { 1.0 } else { 0.0 };
    for (k, b) in cfg.balls.iter().enumerate() {
        if !(b.radius > 0.0) {
            errs.push(format!("balls[{k}]: radius {} must be positive", b.radius));
        }
        if !(b.t > 0.0 && b.t <= horizon) {
            errs.push(format!("balls[{k}]: time {} outside (0, {horizon}]", b.t));
            continue;
        }
        let mut reach = b.radius + dual_margin + l_f * b.t;
        if cfg.has(InequalityId::ReducedDual) {
            reach = reach.max(b.radius + 1.0 + l_f * b.t + cfg.dual.epsilon);
        }
        if let Err(e) = grid.check_ball(b.x0, reach) {
            errs.push(format!("balls[{k}]: {e}"));
        }
    }
    let ball_checks = cfg.checks.iter().any(|c| {
        !matches!(
            c,
            InequalityId::Comparison
                | InequalityId::MaxPrinciple
                | InequalityId::Kato
                | InequalityId::OperatorBounds
                | InequalityId::ExpBound
        )
    });
    if ball_checks && cfg.balls.is_empty() {
        errs.push("the requested checks need at least one entry in balls".into());
    }

    let d = &cfg.dual;
    if let Some(LevyMeasure::Stable { .. }) = pu.op.effective_measure() {
        if explicit_rate.is_some_and(|m| m > 0.0) {
            errs.push(format!(
                "dual.exp_rate = {}: a stable measure has no exponential moment at infinity",
                d.exp_rate
            ));
        }
    }
    if cfg.uses_dual() {
        if !(d.bump_radius > 0.0 && d.bump_radius < 1.0) {
            errs.push(format!("dual.bump_radius = {} must lie in (0, 1)", d.bump_radius));
        }
        if d.snapshots < 2 {
            errs.push(format!("dual.snapshots = {} must be at least 2", d.snapshots));
        }
        if !(d.delta > 0.0) {
            errs.push(format!("dual.delta = {} must be positive", d.delta));
        }
        if !(d.epsilon > 0.0 && d.epsilon < 1.0) {
            errs.push(format!("dual.epsilon = {} must lie in (0, 1)", d.epsilon));
        }
        if let Some(mu) = pu.op.effective_measure() {
            if matches!(mu, LevyMeasure::Stable { .. }) {
                errs.push(format!(
                    "checks {:?} need a tempered measure (∫_{{|z|>1}} e^{{M|z|}} dmu < inf for some M > 0); the stable measure diverges for every M",
                    cfg.checks.iter().filter(|&&c| needs_dual(c)).map(|c| c.as_str()).collect::<Vec<_>>()
                ));
            } else if !(d.exp_rate > 0.0) {
                errs.push(format!("dual.exp_rate = {} must be positive", d.exp_rate));
            } else if let Err(e) = assert_tempered(&mu.reflected(), d.exp_rate) {
                errs.push(format!("dual.exp_rate = {}: {e}", d.exp_rate));
            }
        }
    }

    for &c in &cfg.checks {
        match c {
            InequalityId::FiniteSpeed if !pu.phi.is_zero() => {
                errs.push("finite_speed needs phi = zero".into());
            }
            InequalityId::LinearDuhamel => {
                if pu.phi != PhiSpec::Identity {
                    errs.push("linear_duhamel needs phi = identity".into());
                }
                match (cfg.alpha, &pu.op) {
                    (None, _) => errs.push("linear_duhamel needs alpha".into()),
                    (Some(a), OperatorKind::LocalLaplacian) if a != 2.0 => {
                        errs.push(format!("linear_duhamel: alpha = {a} but the operator is the Laplacian"));
                    }
                    (
                        Some(a),
                        OperatorKind::Nonlocal {
                            measure: LevyMeasure::Stable { alpha, c },
                            ..
                        },
                    ) => {
                        let want = fractional_laplacian_constant(*alpha);
                        if a != *alpha || ((c - want) / want).abs() > 1e-9 {
                            errs.push(format!(
                                "linear_duhamel: operator must be the fractional Laplacian of order {a} (stable, alpha = {a}, c = {})",
                                fractional_laplacian_constant(a)
                            ));
                        }
                    }
                    (_, OperatorKind::LocalLaplacian) => {}
                    _ => errs.push("linear_duhamel needs the Laplacian or a stable measure".into()),
                }
            }
            InequalityId::OperatorBounds if pu.op.effective_measure().is_none() => {
                errs.push("operator_bounds needs a non-local operator".into());
            }
            InequalityId::Comparison => {
                let (u, v) = (
                    pu.initial.sample(grid).expect("validated"),
                    cfg.pair.problem_v.initial.sample(grid).expect("validated"),
                );
                let le = |a: &duhamel_core::GridFunction, b: &duhamel_core::GridFunction| {
                    a.values.iter().zip(&b.values).all(|(x, y)| x <= y)
                        && a.far_left <= b.far_left
                        && a.far_right <= b.far_right
                };
                let (gu, gv) = (&pu.source, &cfg.pair.problem_v.source);
                let src_le = |a: &SourceSpec, b: &SourceSpec| a == b || a.sup() <= b.inf();
                if !((le(&u, &v) && src_le(gu, gv)) || (le(&v, &u) && src_le(gv, gu))) {
                    errs.push("comparison needs ordered initial data and sources".into());
                }
            }
            InequalityId::Kato if cfg.kato_samples == 0 => {
                errs.push("kato needs kato_samples >= 1".into());
            }
            _ => {}
        }
    }
    if cfg.has(InequalityId::Kato) && horizon <= 0.0 {
        errs.push("kato needs a positive horizon".into());
    }
}

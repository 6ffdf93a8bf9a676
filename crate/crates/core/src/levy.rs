//! Lévy measures on the punctured line, their moments, and the constants of
//! the exponential supersolution for the dual problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};

const QUAD: QuadOptions = QuadOptions {
    abs_tol: 1e-18,
    rel_tol: 1e-13,
    max_intervals: 4000,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevyMeasure {
    /// `c |z|^{-1-alpha} dz`
    Stable { alpha: f64, c: f64 },
    /// `c e^{-lambda |z|} |z|^{-1-alpha} dz`
    #[serde(rename = "tempered")]
    TemperedStable { alpha: f64, lambda: f64, c: f64 },
    /// Finite sum of point masses `(offset, weight)`.
    Atomic { atoms: Vec<(f64, f64)> },
    /// Piecewise-linear density between same-sign nodes, zero between the
    /// origin and the innermost node, and `rho_last * e^{-decay_rate (|z| - |z_last|)}`
    /// beyond the outermost node on each side.
    #[serde(rename = "table")]
    TabulatedDensity {
        nodes: Vec<f64>,
        densities: Vec<f64>,
        decay_rate: f64,
    },
}

/// Weight functions integrated against the measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Mass,
    /// signed `z`
    First,
    Second,
    /// `e^{rate |z|}`
    ExpAbs(f64),
}

impl Moment {
    fn eval(self, z: f64) -> f64 {
        match self {
            Moment::Mass => 1.0,
            Moment::First => z,
            Moment::Second => z * z,
            Moment::ExpAbs(m) => (m * z.abs()).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Pos,
    Neg,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Pos => 1.0,
            Side::Neg => -1.0,
        }
    }
}

/// `∫_a^b c e^{k z} z^p dz` for `0 <= a < b <= inf`, via `z = e^s`.
/// Returns infinity when the integral diverges at either end.
fn power_exp_integral(c: f64, k: f64, p: f64, a: f64, b: f64) -> f64 {
    if c == 0.0 || a >= b {
        return 0.0;
    }
    if a == 0.0 && p + 1.0 <= 0.0 {
        return f64::INFINITY;
    }
    if b.is_infinite() && (k > 0.0 || (k == 0.0 && p + 1.0 >= 0.0)) {
        return f64::INFINITY;
    }
    let r = integrate(
        |s: f64| {
            let z = s.exp();
            let e = k * z + (p + 1.0) * s;
            if e.is_nan() {
                0.0
            } else {
                e.exp()
            }
        },
        a.ln(),
        b.ln(),
        QUAD,
    );
    c * r.value
}

/// `∫_A^B z^j e^{-q z} dz` for `j <= 2`, `q > 0`, `B` possibly infinite.
fn poly_exp_integral(j: u32, q: f64, a: f64, b: f64) -> f64 {
    let anti = |z: f64| -> f64 {
        if z.is_infinite() {
            return 0.0;
        }
        let e = (-q * z).exp();
        let poly = match j {
            0 => 1.0 / q,
            1 => z / q + 1.0 / (q * q),
            _ => z * z / q + 2.0 * z / (q * q) + 2.0 / (q * q * q),
        };
        -e * poly
    };
    anti(b) - anti(a)
}

impl LevyMeasure {
    pub fn stable(alpha: f64, c: f64) -> Result<Self> {
        let m = LevyMeasure::Stable { alpha, c };
        m.validate()?;
        Ok(m)
    }

    /// The stable measure of the fractional Laplacian `-(-Δ)^{alpha/2}`, `alpha in (0, 2)`.
    pub fn fractional_laplacian(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} out of (0,2)")));
        }
        Self::stable(alpha, fractional_laplacian_constant(alpha))
    }

    pub fn tempered(alpha: f64, lambda: f64, c: f64) -> Result<Self> {
        let m = LevyMeasure::TemperedStable { alpha, lambda, c };
        m.validate()?;
        Ok(m)
    }

    pub fn atomic(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let m = LevyMeasure::Atomic { atoms };
        m.validate()?;
        Ok(m)
    }

    pub fn tabulated(nodes: Vec<f64>, densities: Vec<f64>, decay_rate: f64) -> Result<Self> {
        let m = LevyMeasure::TabulatedDensity {
            nodes,
            densities,
            decay_rate,
        };
        m.validate()?;
        Ok(m)
    }

    /// Checks the type invariants. Every constructor calls this; measures
    /// deserialized from config must be validated explicitly.
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidArgument(s));
        match self {
            LevyMeasure::Stable { alpha, c } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return bad(format!("stable alpha {alpha} outside (0,2)"));
                }
                if !(*c > 0.0 && c.is_finite()) {
                    return bad(format!("stable c {c} must be positive"));
                }
            }
            LevyMeasure::TemperedStable { alpha, lambda, c } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return bad(format!("tempered alpha {alpha} outside (0,2)"));
                }
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return bad(format!("tempered lambda {lambda} must be positive"));
                }
                if !(*c > 0.0 && c.is_finite()) {
                    return bad(format!("tempered c {c} must be positive"));
                }
            }
            LevyMeasure::Atomic { atoms } => {
                for &(z, w) in atoms {
                    if z == 0.0 || !z.is_finite() {
                        return bad(format!("atom offset {z} must be finite and non-zero"));
                    }
                    if !(w > 0.0 && w.is_finite()) {
                        return bad(format!("atom weight {w} must be positive"));
                    }
                }
            }
            LevyMeasure::TabulatedDensity {
                nodes,
                densities,
                decay_rate,
            } => {
                if nodes.is_empty() || nodes.len() != densities.len() {
                    return bad("table needs equally many (non-zero count) nodes and densities".into());
                }
                if nodes.iter().any(|z| *z == 0.0 || !z.is_finite()) {
                    return bad("table nodes must be finite and exclude 0".into());
                }
                if nodes.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("table nodes must be strictly increasing".into());
                }
                if densities.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
                    return bad("table densities must be finite and nonnegative".into());
                }
                if !(*decay_rate >= 0.0 && decay_rate.is_finite()) {
                    return bad(format!("table decay_rate {decay_rate} must be >= 0"));
                }
                if *decay_rate == 0.0 && (densities[0] > 0.0 || densities[densities.len() - 1] > 0.0) {
                    return bad("decay_rate 0 requires zero density at the outermost nodes".into());
                }
            }
        }
        Ok(())
    }

    /// The reflected measure `mu*(B) = mu(-B)`.
    pub fn reflected(&self) -> Self {
        match self {
            LevyMeasure::Atomic { atoms } => LevyMeasure::Atomic {
                atoms: atoms.iter().map(|&(z, w)| (-z, w)).collect(),
            },
            LevyMeasure::TabulatedDensity {
                nodes,
                densities,
                decay_rate,
            } => LevyMeasure::TabulatedDensity {
                nodes: nodes.iter().rev().map(|z| -z).collect(),
                densities: densities.iter().rev().copied().collect(),
                decay_rate: *decay_rate,
            },
            other => other.clone(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            LevyMeasure::Stable { .. } | LevyMeasure::TemperedStable { .. } => true,
            _ => *self == self.reflected() || self.same_as_reflection(),
        }
    }

    fn same_as_reflection(&self) -> bool {
        if let LevyMeasure::Atomic { atoms } = self {
            let mut a: Vec<(f64, f64)> = atoms.clone();
            let mut b: Vec<(f64, f64)> = atoms.iter().map(|&(z, w)| (-z, w)).collect();
            a.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
            b.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
            return a == b;
        }
        false
    }

    /// Integral of `w` over `{z : a < side*z <= b}` (or `a <= side*z < b` when
    /// `upper_closed` is false; only atoms can tell the difference).
    fn side_integral(&self, w: Moment, side: Side, a: f64, b: f64, upper_closed: bool) -> f64 {
        if a >= b {
            return 0.0;
        }
        let sgn = side.sign();
        match self {
            LevyMeasure::Atomic { atoms } => atoms
                .iter()
                .filter(|&&(z, _)| {
                    let s = sgn * z;
                    if upper_closed {
                        s > a && s <= b
                    } else {
                        s >= a && s < b
                    }
                })
                .map(|&(z, wt)| wt * w.eval(z))
                .sum(),
            LevyMeasure::Stable { alpha, c } => stable_side(*alpha, *c, w, a, b) * first_sign(w, sgn),
            LevyMeasure::TemperedStable { alpha, lambda, c } => {
                let (k, p) = match w {
                    Moment::Mass => (-lambda, -1.0 - alpha),
                    Moment::First => (-lambda, -alpha),
                    Moment::Second => (-lambda, 1.0 - alpha),
                    Moment::ExpAbs(m) => (m - lambda, -1.0 - alpha),
                };
                power_exp_integral(*c, k, p, a, b) * first_sign(w, sgn)
            }
            LevyMeasure::TabulatedDensity {
                nodes,
                densities,
                decay_rate,
            } => {
                // |z| ascending on this side
                let pts: Vec<(f64, f64)> = match side {
                    Side::Pos => nodes
                        .iter()
                        .zip(densities)
                        .filter(|(z, _)| **z > 0.0)
                        .map(|(z, d)| (*z, *d))
                        .collect(),
                    Side::Neg => nodes
                        .iter()
                        .zip(densities)
                        .rev()
                        .filter(|(z, _)| **z < 0.0)
                        .map(|(z, d)| (-*z, *d))
                        .collect(),
                };
                table_side(&pts, *decay_rate, w, a, b) * first_sign(w, sgn)
            }
        }
    }

    /// `∫_{a < |z| <= b} w(z) dmu(z)` for `0 <= a < b <= inf`.
    pub fn shell(&self, w: Moment, a: f64, b: f64) -> f64 {
        // [-b, -a) on the negative side is {a < |z| <= b}
        self.side_integral(w, Side::Pos, a, b, true) + self.side_integral(w, Side::Neg, a, b, true)
    }

    /// `∫_{a < |z| <= b} w dmu` restricted to one sign of `z`.
    pub fn half_shell(&self, w: Moment, positive: bool, a: f64, b: f64) -> f64 {
        let side = if positive { Side::Pos } else { Side::Neg };
        self.side_integral(w, side, a, b, true)
    }

    /// `mu((lo, hi])` for an interval not containing the origin in its interior.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        self.interval_integral(Moment::Mass, lo, hi)
    }

    /// `∫_{(lo, hi]} w dmu` for an interval not containing the origin in its interior.
    pub fn interval_integral(&self, w: Moment, lo: f64, hi: f64) -> f64 {
        assert!(lo <= hi, "interval ({lo}, {hi}] is reversed");
        if lo >= 0.0 {
            self.side_integral(w, Side::Pos, lo, hi, true)
        } else if hi <= 0.0 {
            // (lo, hi] = {z : -hi <= -z < -lo}
            self.side_integral(w, Side::Neg, -hi, -lo, false)
        } else {
            panic!("interval ({lo}, {hi}] straddles the origin");
        }
    }
}

// First moments change sign on the negative side; all other weights are even.
fn first_sign(w: Moment, sgn: f64) -> f64 {
    if w == Moment::First {
        sgn
    } else {
        1.0
    }
}

/// One-sided integral of an even weight (|z| for First) against `c z^{-1-alpha}` on `(a, b]`.
fn stable_side(alpha: f64, c: f64, w: Moment, a: f64, b: f64) -> f64 {
    // ∫_a^b z^q dz in closed form
    let pow_int = |q: f64| -> f64 {
        if (q + 1.0).abs() < 1e-15 {
            if a == 0.0 || b.is_infinite() {
                f64::INFINITY
            } else {
                (b / a).ln()
            }
        } else {
            let e = q + 1.0;
            let fb = if b.is_infinite() {
                if e < 0.0 {
                    0.0
                } else {
                    return f64::INFINITY;
                }
            } else {
                b.powf(e)
            };
            let fa = if a == 0.0 {
                if e > 0.0 {
                    0.0
                } else {
                    return f64::INFINITY;
                }
            } else {
                a.powf(e)
            };
            (fb - fa) / e
        }
    };
    match w {
        Moment::Mass => c * pow_int(-1.0 - alpha),
        Moment::First => c * pow_int(-alpha),
        Moment::Second => c * pow_int(1.0 - alpha),
        Moment::ExpAbs(m) if m == 0.0 => c * pow_int(-1.0 - alpha),
        Moment::ExpAbs(m) => power_exp_integral(c, m, -1.0 - alpha, a, b),
    }
}

/// One-sided integral for a tabulated density given `(|z|, density)` pairs in ascending `|z|`.
fn table_side(pts: &[(f64, f64)], decay: f64, w: Moment, a: f64, b: f64) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    let wabs = |z: f64| match w {
        Moment::Mass => 1.0,
        Moment::First => z,
        Moment::Second => z * z,
        Moment::ExpAbs(m) => (m * z).exp(),
    };
    let mut total = 0.0;
    for seg in pts.windows(2) {
        let (z0, d0) = seg[0];
        let (z1, d1) = seg[1];
        let lo = z0.max(a);
        let hi = z1.min(b);
        if lo >= hi {
            continue;
        }
        let slope = (d1 - d0) / (z1 - z0);
        total += integrate(|z| (d0 + slope * (z - z0)) * wabs(z), lo, hi, QUAD).value;
    }
    let (zn, dn) = pts[pts.len() - 1];
    let lo = zn.max(a);
    if dn > 0.0 && lo < b {
        // dn e^{-decay (z - zn)} times the weight
        let scale = dn * (decay * zn).exp();
        total += match w {
            Moment::Mass => scale * poly_exp_integral(0, decay, lo, b),
            Moment::First => scale * poly_exp_integral(1, decay, lo, b),
            Moment::Second => scale * poly_exp_integral(2, decay, lo, b),
            Moment::ExpAbs(m) => {
                let q = decay - m;
                if q > 0.0 {
                    scale * poly_exp_integral(0, q, lo, b)
                } else if b.is_infinite() {
                    f64::INFINITY
                } else if q == 0.0 {
                    scale * (b - lo)
                } else {
                    // growing exponential on a finite range
                    scale * ((-q * b).exp() - (-q * lo).exp()) / (-q)
                }
            }
        };
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    LocalLaplacian,
    Nonlocal {
        measure: LevyMeasure,
        #[serde(default)]
        adjoint: bool,
    },
}

impl OperatorKind {
    pub fn nonlocal(measure: LevyMeasure) -> Self {
        OperatorKind::Nonlocal {
            measure,
            adjoint: false,
        }
    }

    /// The adjoint operator. The Laplacian is self-adjoint.
    pub fn adjoint(&self) -> Self {
        match self {
            OperatorKind::LocalLaplacian => OperatorKind::LocalLaplacian,
            OperatorKind::Nonlocal { measure, adjoint } => OperatorKind::Nonlocal {
                measure: measure.clone(),
                adjoint: !adjoint,
            },
        }
    }

    pub fn is_adjoint(&self) -> bool {
        matches!(self, OperatorKind::Nonlocal { adjoint: true, .. })
    }

    /// The measure the operator actually integrates against (`mu*` for the adjoint).
    pub fn effective_measure(&self) -> Option<LevyMeasure> {
        match self {
            OperatorKind::LocalLaplacian => None,
            OperatorKind::Nonlocal { measure, adjoint } => Some(if *adjoint {
                measure.reflected()
            } else {
                measure.clone()
            }),
        }
    }

    pub fn is_self_adjoint(&self) -> bool {
        match self {
            OperatorKind::LocalLaplacian => true,
            OperatorKind::Nonlocal { measure, .. } => measure.is_symmetric(),
        }
    }
}

/// Constants of `w(x, t) = C e^{K t} e^{-k |x - x0|}` dominating the dual solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SupersolutionConstants {
    pub k: f64,
    pub K: f64,
    pub C: f64,
    pub C_k: f64,
}

/// Density constant `c` for which `c |z|^{-1-alpha} dz` generates `-(-Δ)^{alpha/2}`.
pub fn fractional_laplacian_constant(alpha: f64) -> f64 {
    use statrs::function::gamma::gamma;
    alpha * 2f64.powf(alpha - 1.0) * gamma(0.5 * (1.0 + alpha))
        / (std::f64::consts::PI.sqrt() * gamma(1.0 - 0.5 * alpha))
}

pub fn second_moment_near(mu: &LevyMeasure, r: f64) -> f64 {
    assert!(r > 0.0, "radius must be positive");
    mu.shell(Moment::Second, 0.0, r)
}

pub fn tail_mass(mu: &LevyMeasure, r: f64) -> f64 {
    assert!(r > 0.0, "radius must be positive");
    mu.shell(Moment::Mass, r, f64::INFINITY)
}

/// `-∫_{r<|z|<=1} z dmu`; exactly zero for symmetric measures and for `r >= 1`.
pub fn drift_correction(mu: &LevyMeasure, r: f64) -> f64 {
    assert!(r > 0.0, "radius must be positive");
    if r >= 1.0 || mu.is_symmetric() {
        return 0.0;
    }
    -mu.shell(Moment::First, r, 1.0)
}

/// `∫_{|z|>1} e^{M|z|} dmu`, or `Divergent` when the measure is not tempered at rate `M`.
pub fn assert_tempered(mu: &LevyMeasure, m: f64) -> Result<f64> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::InvalidArgument(format!("exp rate {m} must be >= 0")));
    }
    if let LevyMeasure::TemperedStable { lambda, .. } = mu {
        if m > *lambda {
            return Err(Error::Divergent(format!(
                "tempered measure with lambda = {lambda} has no exponential moment at rate {m}"
            )));
        }
    }
    let v = mu.shell(Moment::ExpAbs(m), 1.0, f64::INFINITY);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergent(format!(
            "∫_{{|z|>1}} e^{{{m}|z|}} dmu is infinite for {mu:?}"
        )))
    }
}

/// Constants for the exponential supersolution of the dual equation with initial
/// bump bounded by `phi0_sup` and supported in a ball of radius `phi0_radius`.
pub fn supersolution_constants(
    op: &OperatorKind,
    exp_rate: f64,
    phi0_sup: f64,
    phi0_radius: f64,
) -> Result<SupersolutionConstants> {
    if !(phi0_sup >= 0.0 && phi0_radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bump sup {phi0_sup} / radius {phi0_radius} invalid"
        )));
    }
    match op {
        OperatorKind::LocalLaplacian => {
            let k = 1.0;
            Ok(SupersolutionConstants {
                k,
                K: k * k,
                C: phi0_sup * (k * phi0_radius).exp(),
                C_k: k * k,
            })
        }
        OperatorKind::Nonlocal { .. } => {
            if !(exp_rate > 0.0) {
                return Err(Error::NotTempered {
                    rate: exp_rate,
                    reason: "a positive exponential rate is required".into(),
                });
            }
            // the dual equation is driven by the adjoint of the operator it is built for
            let mu_star = op.adjoint().effective_measure().expect("non-local");
            let tail = assert_tempered(&mu_star, exp_rate).map_err(|e| Error::NotTempered {
                rate: exp_rate,
                reason: e.to_string(),
            })?;
            let k = exp_rate;
            let c_k = 0.5 * k.exp() * k * k * second_moment_near(&mu_star, 1.0) + tail;
            Ok(SupersolutionConstants {
                k,
                K: c_k,
                C: phi0_sup * (k * phi0_radius).exp(),
                C_k: c_k,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractional_laplacian_normalization() {
        assert!((fractional_laplacian_constant(1.0) - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        // alpha = 1/2: (1/2) 2^{-1/2} Γ(3/4) / (√π Γ(3/4))
        let c = fractional_laplacian_constant(0.5);
        assert!((c - 0.5 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    // Composite Simpson on a fixed fine grid, independent of the Gauss–Kronrod code.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn atomic_examples() {
        let mu = LevyMeasure::atomic(vec![(0.5, 2.0)]).unwrap();
        assert_eq!(second_moment_near(&mu, 1.0), 0.5);
        let far = LevyMeasure::atomic(vec![(2.0, 1.0)]).unwrap();
        assert_eq!(second_moment_near(&far, 1.0), 0.0);
        let two = LevyMeasure::atomic(vec![(0.5, 2.0), (2.0, 1.0)]).unwrap();
        assert_eq!(tail_mass(&two, 1.0), 1.0);
        let one = LevyMeasure::atomic(vec![(0.8, 1.0)]).unwrap();
        assert_eq!(drift_correction(&one, 0.5), -0.8);
        assert_eq!(drift_correction(&one, 1.0), 0.0);
    }

    #[test]
    fn stable_closed_forms_match_oracle() {
        let mu = LevyMeasure::stable(0.5, 1.0).unwrap();
        let m2 = second_moment_near(&mu, 1.0);
        assert!(rel(m2, 4.0 / 3.0) < 1e-12);
        // z^{1/2} on (0,1], substitute z = y^2 to remove the endpoint cusp
        let oracle = 2.0 * simpson(|y| 2.0 * y * y, 0.0, 1.0, 2000);
        assert!(rel(m2, oracle) < 1e-10);

        let cauchy = LevyMeasure::stable(1.0, 1.0).unwrap();
        assert!(rel(tail_mass(&cauchy, 1.0), 2.0) < 1e-12);
        assert_eq!(drift_correction(&cauchy, 0.5), 0.0);
    }

    #[test]
    fn tempered_matches_incomplete_gamma() {
        use statrs::function::gamma::gamma_li;
        // ∫_0^1 e^{-λz} z^{1-α} dz = λ^{α-2} γ(2-α, λ)
        for &(alpha, lambda) in &[(0.5, 1.0), (1.0, 2.0), (1.5, 0.7)] {
            let mu = LevyMeasure::tempered(alpha, lambda, 1.3).unwrap();
            let want = 2.0 * 1.3 * lambda.powf(alpha - 2.0) * gamma_li(2.0 - alpha, lambda);
            assert!(rel(second_moment_near(&mu, 1.0), want) < 1e-10, "{alpha} {lambda}");
        }
    }

    #[test]
    fn tempered_tail_matches_exponential_integral() {
        // 2∫_1^∞ e^{-z} z^{-2} dz = 2(e^{-1} - E1(1))
        let e1 = 0.219_383_934_395_520_27;
        let mu = LevyMeasure::tempered(1.0, 1.0, 1.0).unwrap();
        let want = 2.0 * ((-1f64).exp() - e1);
        assert!(rel(tail_mass(&mu, 1.0), want) < 1e-10);
    }

    #[test]
    fn exponential_moment_and_divergence() {
        let cauchy = LevyMeasure::stable(1.0, 1.0).unwrap();
        assert!(rel(assert_tempered(&cauchy, 0.0).unwrap(), 2.0) < 1e-12);
        assert!(matches!(assert_tempered(&cauchy, 0.1), Err(Error::Divergent(_))));

        let mu = LevyMeasure::tempered(1.0, 2.0, 1.0).unwrap();
        let e1 = 0.219_383_934_395_520_27;
        // 2∫_1^∞ e^{-z} z^{-2} dz again
        let want = 2.0 * ((-1f64).exp() - e1);
        assert!(rel(assert_tempered(&mu, 1.0).unwrap(), want) < 1e-10);
        assert!(matches!(assert_tempered(&mu, 2.5), Err(Error::Divergent(_))));
    }

    #[test]
    fn supersolution_examples() {
        let local = supersolution_constants(&OperatorKind::LocalLaplacian, 0.0, 1.0, 1.0).unwrap();
        assert_eq!((local.k, local.K), (1.0, 1.0));
        assert!((local.C - std::f64::consts::E).abs() < 1e-15);

        let atoms = LevyMeasure::atomic(vec![(1.5, 1.0), (-1.5, 1.0)]).unwrap();
        let s = supersolution_constants(&OperatorKind::nonlocal(atoms), 1.0, 1.0, 1.0).unwrap();
        assert!(rel(s.C_k, 2.0 * 1.5f64.exp()) < 1e-14);
        assert_eq!(s.K, s.C_k);

        let untempered = OperatorKind::nonlocal(LevyMeasure::stable(1.0, 1.0).unwrap());
        assert!(matches!(
            supersolution_constants(&untempered, 1.0, 1.0, 1.0),
            Err(Error::NotTempered { .. })
        ));
    }

    #[test]
    fn headline_constant() {
        use statrs::function::gamma::gamma_li;
        let mu = LevyMeasure::tempered(1.0, 2.0, 1.0).unwrap();
        let s = supersolution_constants(&OperatorKind::nonlocal(mu), 1.0, 1.0, 0.5).unwrap();
        let e1 = 0.219_383_934_395_520_27;
        // (e/2)·2∫_0^1 e^{-2z} dz + 2∫_1^∞ e^{-z} z^{-2} dz
        let near = 2.0 * 0.5 * gamma_li(1.0, 2.0);
        let want = 0.5 * 1f64.exp() * near + 2.0 * ((-1f64).exp() - e1);
        assert!(rel(s.C_k, want) < 1e-10, "{} vs {}", s.C_k, want);
        assert!(rel(s.C, 0.5f64.exp()) < 1e-15);
    }

    #[test]
    fn asymmetric_atomic_reflection() {
        let mu = LevyMeasure::atomic(vec![(0.3, 1.0), (0.7, 2.0), (-1.4, 0.5)]).unwrap();
        let star = mu.reflected();
        for r in [0.1, 0.5, 1.0] {
            assert_eq!(second_moment_near(&mu, r), second_moment_near(&star, r));
            assert_eq!(tail_mass(&mu, r), tail_mass(&star, r));
            assert_eq!(drift_correction(&mu, r), -drift_correction(&star, r));
        }
        assert!(!mu.is_symmetric());
        assert!(LevyMeasure::atomic(vec![(0.3, 1.0), (-0.3, 1.0)]).unwrap().is_symmetric());
    }

    #[test]
    fn table_integrates_trapezoid_plus_tail() {
        // flat density 1 on [0.5, 2] with e^{-(z-2)} tail on both sides
        let mu = LevyMeasure::tabulated(vec![-2.0, -0.5, 0.5, 2.0], vec![1.0, 1.0, 1.0, 1.0], 1.0).unwrap();
        let mass = mu.shell(Moment::Mass, 0.0, f64::INFINITY);
        assert!(rel(mass, 2.0 * (1.5 + 1.0)) < 1e-13);
        assert!(rel(tail_mass(&mu, 3.0), 2.0 * (-1f64).exp()) < 1e-13);
        // ∫ z^2 on [0.5, 1] both sides
        assert!(rel(second_moment_near(&mu, 1.0), 2.0 * (1.0 - 0.125) / 3.0) < 1e-13);
        assert!(assert_tempered(&mu, 1.5).is_err());
        assert!(assert_tempered(&mu, 0.5).unwrap().is_finite());
        assert!(mu.is_symmetric());
    }

    #[test]
    fn invalid_measures_rejected() {
        assert!(LevyMeasure::stable(2.5, 1.0).is_err());
        assert!(LevyMeasure::stable(1.0, 0.0).is_err());
        assert!(LevyMeasure::tempered(1.0, -1.0, 1.0).is_err());
        assert!(LevyMeasure::atomic(vec![(0.0, 1.0)]).is_err());
        assert!(LevyMeasure::atomic(vec![(1.0, 0.0)]).is_err());
        assert!(LevyMeasure::tabulated(vec![1.0, 0.5], vec![1.0, 1.0], 1.0).is_err());
        assert!(LevyMeasure::tabulated(vec![0.5, 1.0], vec![1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn interval_mass_partitions_shell() {
        let mu = LevyMeasure::tempered(1.5, 0.5, 1.0).unwrap();
        let h = 0.1;
        let mut sum = 0.0;
        for m in 1..30 {
            let c = m as f64 * h;
            sum += mu.interval_mass(c - h / 2.0, c + h / 2.0);
            sum += mu.interval_mass(-c - h / 2.0, -c + h / 2.0);
        }
        let want = mu.shell(Moment::Mass, 0.5 * h, 29.5 * h);
        assert!(rel(sum, want) < 1e-11);
    }
}

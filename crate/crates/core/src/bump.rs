//! The standard smooth bump `exp(1 - 1/(1 - s^2))` on `(-1, 1)`, its unit-mass
//! mollifier, and the mollifier's cumulative distribution.

use std::sync::OnceLock;

use crate::quad::{integrate, QuadOptions};

/// `exp(1 - 1/(1 - s^2))` for `|s| < 1`, else 0. Peak value 1 at `s = 0`.
#[inline]
pub fn profile(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / q).exp()
    }
}

pub fn profile_d1(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        profile(s) * (-2.0 * s / (q * q))
    }
}

pub fn profile_d2(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        let q2 = q * q;
        profile(s) * (4.0 * s * s / (q2 * q2) - 2.0 / q2 - 8.0 * s * s / (q2 * q))
    }
}

struct Tables {
    mass: f64,
    d1_sup: f64,
    d2_sup: f64,
    cdf: Vec<f64>,
}

const CDF_CELLS: usize = 20_000;

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let opts = QuadOptions::default();
        let mass = integrate(profile, -1.0, 1.0, opts).value;
        let mut cdf = Vec::with_capacity(CDF_CELLS + 1);
        cdf.push(0.0);
        let ds = 2.0 / CDF_CELLS as f64;
        let mut acc = 0.0;
        for k in 0..CDF_CELLS {
            let a = -1.0 + k as f64 * ds;
            acc += integrate(profile, a, a + ds, opts).value;
            cdf.push(acc / mass);
        }
        // pin the end exactly so the CDF is a distribution function
        *cdf.last_mut().expect("non-empty") = 1.0;
        let samples = 200_000;
        let (mut d1, mut d2) = (0.0f64, 0.0f64);
        for k in 0..=samples {
            let s = -1.0 + 2.0 * k as f64 / samples as f64;
            d1 = d1.max(profile_d1(s).abs());
            d2 = d2.max(profile_d2(s).abs());
        }
        Tables {
            mass,
            d1_sup: d1,
            d2_sup: d2,
            cdf,
        }
    })
}

/// `∫_{-1}^{1} profile`.
pub fn profile_mass() -> f64 {
    tables().mass
}

/// `sup |profile'|`
pub fn profile_d1_sup() -> f64 {
    tables().d1_sup
}

/// `sup |profile''|`
pub fn profile_d2_sup() -> f64 {
    tables().d2_sup
}

/// Unit-mass mollifier `omega = profile / mass`, supported in `[-1, 1]`.
pub fn omega(s: f64) -> f64 {
    profile(s) / profile_mass()
}

/// `∫_{-inf}^{s} omega`, piecewise linear between table nodes (hence monotone).
pub fn omega_cdf(s: f64) -> f64 {
    if s <= -1.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let t = tables();
    let pos = (s + 1.0) * 0.5 * CDF_CELLS as f64;
    let k = (pos.floor() as usize).min(CDF_CELLS - 1);
    let theta = pos - k as f64;
    t.cdf[k] + theta * (t.cdf[k + 1] - t.cdf[k])
}

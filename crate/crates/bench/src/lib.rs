//! Shared inputs for the benchmarks.

use duhamel_core::{FluxSpec, InitialProfile, LevyMeasure, OperatorKind, PhiSpec, ProblemSpec, SourceSpec};

/// Stefan diffusion, Burgers flux and a tempered alpha = 1 measure on [-6, 6].
pub fn headline() -> ProblemSpec {
    ProblemSpec {
        flux: FluxSpec::Burgers,
        phi: PhiSpec::Stefan { a: -0.1, b: 0.1 },
        op: OperatorKind::nonlocal(LevyMeasure::tempered(1.0, 2.0, 1.0).unwrap()),
        source: SourceSpec::Zero,
        initial: InitialProfile::Bump {
            center: 0.0,
            radius: 0.5,
            height: 1.0,
            base: 0.3,
        },
        x_min: -6.0,
        x_max: 6.0,
        horizon: 0.5,
    }
}

//! Pressureless damped Euler with the kernel `W(x) = −|x| + x²/2`, which maps
//! onto the Euler–Poisson setting with `ν = 1`, `k = 2`, `c = M₀/2`.

mod field;
mod simulate;

pub use field::{
    centered_differences, compute_e0, compute_e0_direct, parse_field_csv, trapezoid_weights,
    AggregationField, DecayCertificate, FieldRows,
};
pub use simulate::{
    audit_frame, deformation, simulate, AuditTolerances, BreakdownCause, FrameAudit, SimOptions,
    SimStatus, SimulationFrame, SimulationRun,
};

use crate::error::{CtError, Result};
use crate::explicit;
use crate::model::{EPParams, RegimeTag, Verdict};

pub fn ep_params_of_mass(m0: f64) -> Result<EPParams> {
    if !(m0 > 0.0 && m0.is_finite()) {
        return Err(CtError::NonpositiveMass(m0));
    }
    EPParams::new(1.0, 2.0, m0 / 2.0)
}

/// `γ = (2/M₀)(1 + e^{π/√(4M₀−1)})` for supercritical mass.
pub fn gamma(m0: f64) -> Result<f64> {
    let params = ep_params_of_mass(m0)?;
    params.expect_regime(RegimeTag::Weak)?;
    let root = (4.0 * m0 - 1.0).sqrt();
    Ok(2.0 / m0 * (1.0 + (std::f64::consts::PI / root).exp()))
}

pub fn classify_aggregation(m0: f64, rho0: f64, d0: f64) -> Result<Verdict> {
    explicit::classify(&ep_params_of_mass(m0)?, rho0, d0)
}

//! Parameters, damping regimes, the `(ρ, d) ↔ (r, s)` change of variables
//! and the verdict types shared by every classifier.

use serde::{Deserialize, Serialize};

use crate::error::{CtError, Result};

/// Relative band around a sharp threshold inside which a verdict is reported
/// as [`Outcome::Boundary`].
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;

/// Damping coefficient `nu`, forcing constant `k` and background density `c`.
///
/// An optional forced regime overrides the floating-point regime test; this
/// lets callers treat a parameter set as exactly borderline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EPParams {
    pub nu: f64,
    pub k: f64,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced: Option<RegimeTag>,
}

impl EPParams {
    pub fn new(nu: f64, k: f64, c: f64) -> Result<Self> {
        for (name, v) in [("nu", nu), ("k", k), ("c", c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CtError::InvalidParams(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(Self {
            nu,
            k,
            c,
            forced: None,
        })
    }

    pub fn with_forced_regime(mut self, tag: RegimeTag) -> Self {
        self.forced = Some(tag);
        self
    }

    /// `ν² − 4kc`; its sign selects the regime.
    pub fn discriminant(&self) -> f64 {
        self.nu * self.nu - 4.0 * self.k * self.c
    }

    pub fn tag(&self) -> RegimeTag {
        if let Some(t) = self.forced {
            return t;
        }
        let nu2 = self.nu * self.nu;
        let four_kc = 4.0 * self.k * self.c;
        let disc = nu2 - four_kc;
        if disc.abs() <= 8.0 * f64::EPSILON * nu2.max(four_kc) {
            RegimeTag::Borderline
        } else if disc > 0.0 {
            RegimeTag::Strong
        } else {
            RegimeTag::Weak
        }
    }

    pub fn regime(&self) -> DampingRegime {
        regime(self)
    }

    /// Fails with `RegimeMismatch` unless the parameters are in `expected`.
    pub fn expect_regime(&self, expected: RegimeTag) -> Result<DampingRegime> {
        let r = self.regime();
        if r.tag() != expected {
            return Err(CtError::RegimeMismatch {
                expected,
                actual: r.tag(),
            });
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeTag {
    Strong,
    Borderline,
    Weak,
}

impl std::fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RegimeTag::Strong => "Strong",
            RegimeTag::Borderline => "Borderline",
            RegimeTag::Weak => "Weak",
        };
        f.write_str(s)
    }
}

/// Spectral constants of the linearised characteristic system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DampingRegime {
    /// `ν > 2√(kc)`: stable node.
    Strong {
        /// `(ν − √(ν²−4kc)) / 2c`
        lambda1: f64,
        /// `(ν + √(ν²−4kc)) / 2c`
        lambda2: f64,
        /// `(−ν − √(ν²−4kc)) / 2`
        lambda_minus: f64,
        /// `(−ν + √(ν²−4kc)) / 2`
        lambda_plus: f64,
    },
    /// `ν = 2√(kc)`: improper node with double eigenvalue `−ν/2`.
    Borderline { lambda: f64 },
    /// `ν < 2√(kc)`: stable spiral with frequency `μ = √(kc − ν²/4)`.
    Weak { mu: f64 },
}

impl DampingRegime {
    pub fn tag(&self) -> RegimeTag {
        match self {
            DampingRegime::Strong { .. } => RegimeTag::Strong,
            DampingRegime::Borderline { .. } => RegimeTag::Borderline,
            DampingRegime::Weak { .. } => RegimeTag::Weak,
        }
    }
}

pub fn regime(params: &EPParams) -> DampingRegime {
    let EPParams { nu, k, c, .. } = *params;
    match params.tag() {
        RegimeTag::Strong => {
            // clamp so a forced Strong on a near-borderline set stays real
            let root = params.discriminant().max(0.0).sqrt();
            // stable evaluation of the smaller root via Vieta
            let lambda2 = (nu + root) / (2.0 * c);
            let lambda1 = k / (c * lambda2);
            let lambda_minus = -(nu + root) / 2.0;
            let lambda_plus = k * c / lambda_minus;
            DampingRegime::Strong {
                lambda1,
                lambda2,
                lambda_minus,
                lambda_plus,
            }
        }
        RegimeTag::Borderline => DampingRegime::Borderline { lambda: -nu / 2.0 },
        RegimeTag::Weak => DampingRegime::Weak {
            mu: (k * c - nu * nu / 4.0).max(0.0).sqrt(),
        },
    }
}

/// A point of the `(ρ, d)` plane: density and velocity slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoD {
    pub rho: f64,
    pub d: f64,
}

/// A point of the linearised `(r, s)` plane, `r = −d/ρ`, `s = 1/ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rs {
    pub r: f64,
    pub s: f64,
}

pub fn to_rs(p: RhoD) -> Result<Rs> {
    if !(p.rho > 0.0) {
        return Err(CtError::NonpositiveDensity(p.rho));
    }
    Ok(Rs {
        r: -p.d / p.rho,
        s: 1.0 / p.rho,
    })
}

pub fn from_rs(p: Rs) -> Result<RhoD> {
    if !(p.s > 0.0) {
        return Err(CtError::NonpositiveS(p.s));
    }
    Ok(RhoD {
        rho: 1.0 / p.s,
        d: -p.r / p.s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    GlobalSmooth,
    FiniteTimeBreakdown,
    /// Within the boundary band of a non-strict threshold inequality. The
    /// inequalities count equality as breakdown, see [`Verdict::breaks_down`].
    Boundary,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Outcome::GlobalSmooth => "GlobalSmooth",
            Outcome::FiniteTimeBreakdown => "FiniteTimeBreakdown",
            Outcome::Boundary => "Boundary",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extremum_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakdown_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub regime: RegimeTag,
    pub diagnostics: Diagnostics,
}

impl Verdict {
    pub fn new(outcome: Outcome, regime: RegimeTag) -> Self {
        Self {
            outcome,
            regime,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn with_diagnostics(mut self, diagnostics: Diagnostics) -> Self {
        self.diagnostics = diagnostics;
        self
    }

    /// Literal reading of the non-strict breakdown inequalities: boundary
    /// points break down.
    pub fn breaks_down(&self) -> bool {
        matches!(
            self.outcome,
            Outcome::FiniteTimeBreakdown | Outcome::Boundary
        )
    }
}

/// Three-way decision for `lhs` vs `rhs` where `lhs ≥ rhs` means breakdown.
pub(crate) fn decide(lhs: f64, rhs: f64, scale: f64, boundary_tol: f64) -> Outcome {
    if (lhs - rhs).abs() <= boundary_tol * scale {
        Outcome::Boundary
    } else if lhs >= rhs {
        Outcome::FiniteTimeBreakdown
    } else {
        Outcome::GlobalSmooth
    }
}

//! Three-way agreement between the closed-form thresholds, curve membership
//! and direct simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristic::{oracle_classify, OracleOptions};
use crate::curves::{classify_by_curve_tol, CurveSet};
use crate::error::Result;
use crate::explicit::classify_tol;
use crate::grid::GridSpec;
use crate::model::{EPParams, Outcome, DEFAULT_BOUNDARY_TOL};

pub const DEFAULT_GEOMETRIC_BAND: f64 = 1e-4;
/// Largest fraction of grid points the exclusion bands may remove.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub boundary_tol: f64,
    /// Points closer than this (in `r`) to a bounding curve are excluded.
    pub geometric_band: f64,
    pub oracle: OracleOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            geometric_band: DEFAULT_GEOMETRIC_BAND,
            oracle: OracleOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointStatus {
    Agree,
    Excluded,
    Disagree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointCheck {
    pub rho0: f64,
    pub d0: f64,
    pub formula: Option<Outcome>,
    pub curve: Option<Outcome>,
    pub oracle: Option<Outcome>,
    /// Signed `r`-distance to the curves, positive outside the region.
    pub gap: Option<f64>,
    pub status: PointStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub n_points: usize,
    pub n_agree: usize,
    pub n_boundary_excluded: usize,
    pub n_disagree: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_disagreement_location: Option<PointCheck>,
}

impl VerifyReport {
    pub fn excluded_fraction(&self) -> f64 {
        self.n_boundary_excluded as f64 / self.n_points.max(1) as f64
    }

    /// Full agreement outside bands that remove less than 2% of the grid.
    pub fn passed(&self) -> bool {
        self.n_disagree == 0 && self.excluded_fraction() < MAX_EXCLUDED_FRACTION
    }
}

fn check_point(
    params: &EPParams,
    curves: &CurveSet,
    rho0: f64,
    d0: f64,
    opts: &VerifyOptions,
) -> PointCheck {
    let formula = classify_tol(params, rho0, d0, opts.boundary_tol).ok().map(|v| v.outcome);
    let curve = classify_by_curve_tol(params, rho0, d0, curves, opts.boundary_tol)
        .ok()
        .map(|v| v.outcome);
    let oracle = oracle_classify(params, rho0, d0, &OracleOptions {
        boundary_tol: opts.boundary_tol,
        ..opts.oracle
    })
    .ok()
    .map(|v| v.outcome);
    let gap = curves.signed_gap(1.0 / rho0, -d0 / rho0).ok();
    let in_band = match (curves.upper.s_star, gap) {
        // beyond s* the region is empty and no curve is nearby
        (Some(st), _) if 1.0 / rho0 >= st => false,
        (_, Some(g)) => g.abs() <= opts.geometric_band,
        (_, None) => true,
    };
    let verdicts = [formula, curve, oracle];
    let status = if in_band
        || verdicts
            .iter()
            .any(|v| v.is_none_or(|o| o == Outcome::Boundary))
    {
        PointStatus::Excluded
    } else {
        let first = formula == Some(Outcome::FiniteTimeBreakdown);
        if verdicts
            .iter()
            .all(|v| (*v == Some(Outcome::FiniteTimeBreakdown)) == first)
        {
            PointStatus::Agree
        } else {
            PointStatus::Disagree
        }
    };
    PointCheck {
        rho0,
        d0,
        formula,
        curve,
        oracle,
        gap,
        status,
    }
}

/// Check every grid point; points run in parallel and come back in grid order.
pub fn verify_grid(
    params: &EPParams,
    curves: &CurveSet,
    grid: &GridSpec,
    opts: &VerifyOptions,
) -> Result<(VerifyReport, Vec<PointCheck>)> {
    let checks: Vec<PointCheck> = grid
        .points()
        .into_par_iter()
        .map(|(rho0, d0)| check_point(params, curves, rho0, d0, opts))
        .collect();
    let count = |s: PointStatus| checks.iter().filter(|c| c.status == s).count();
    // report the disagreement farthest from the curves
    let max_disagreement_location = checks
        .iter()
        .filter(|c| c.status == PointStatus::Disagree)
        .max_by(|a, b| {
            let ga = a.gap.map_or(f64::INFINITY, f64::abs);
            let gb = b.gap.map_or(f64::INFINITY, f64::abs);
            ga.total_cmp(&gb)
        })
        .copied();
    let report = VerifyReport {
        n_points: checks.len(),
        n_agree: count(PointStatus::Agree),
        n_boundary_excluded: count(PointStatus::Excluded),
        n_disagree: count(PointStatus::Disagree),
        max_disagreement_location,
    };
    Ok((report, checks))
}

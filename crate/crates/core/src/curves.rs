//! Threshold curves `r = Q(s)` through the singular point at the origin of
//! the `(r, s)` plane, and classification by curve membership.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{CtError, Result};
use crate::model::{
    decide, DampingRegime, EPParams, Outcome, RegimeTag, Verdict, DEFAULT_BOUNDARY_TOL,
};
use crate::ode::{Dopri5, OdeOptions};

pub const DEFAULT_CURVE_TOL: f64 = 1e-10;
/// Distance from the singular start at which the series seed is placed.
pub const SEED_S: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Qa,
    Qb,
    Q1,
    Q2,
}

impl Branch {
    pub fn regime(self) -> RegimeTag {
        match self {
            Branch::Qa => RegimeTag::Strong,
            Branch::Qb => RegimeTag::Borderline,
            Branch::Q1 | Branch::Q2 => RegimeTag::Weak,
        }
    }

    /// The branch leaving the origin into `r > 0` for a regime.
    pub fn upper_for(regime: RegimeTag) -> Branch {
        match regime {
            RegimeTag::Strong => Branch::Qa,
            RegimeTag::Borderline => Branch::Qb,
            RegimeTag::Weak => Branch::Q1,
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Branch {
    type Err = CtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Qa" | "qa" => Ok(Branch::Qa),
            "Qb" | "qb" => Ok(Branch::Qb),
            "Q1" | "q1" => Ok(Branch::Q1),
            "Q2" | "q2" => Ok(Branch::Q2),
            other => Err(CtError::InvalidParams(format!("unknown branch {other:?}"))),
        }
    }
}

/// `s* = (e^{νπ/(2μ)} + 1)/c`, where the weak-damping trajectory through the
/// origin last crosses `r = 0`.
pub fn s_star(params: &EPParams) -> Result<f64> {
    let DampingRegime::Weak { mu } = params.expect_regime(RegimeTag::Weak)? else {
        unreachable!()
    };
    Ok(((params.nu * std::f64::consts::PI / (2.0 * mu)).exp() + 1.0) / params.c)
}

/// `r` on the line `νr + k(1 − cs) = 0`.
pub fn nullcline(params: &EPParams, s: f64) -> f64 {
    params.k * (params.c * s - 1.0) / params.nu
}

/// Right-hand side and seed of one branch: `dQ/dx = σν + (k/Q)(K/k − c x)`
/// with `K = k` for the upper branches and `K = k(cs* − 1)` for `Q2`.
#[derive(Debug, Clone, Copy)]
struct BranchOde {
    sigma: f64,
    nu: f64,
    k: f64,
    c: f64,
    big_k: f64,
}

impl BranchOde {
    fn slope(&self, x: f64, q: f64) -> f64 {
        self.sigma * self.nu + (self.big_k - self.k * self.c * x) / q
    }

    /// Three-term series `a x^{1/2} + b x + e x^{3/2}` with `a² = 2K`.
    fn seed(&self, x: f64) -> (f64, f64) {
        let a = self.sigma * (2.0 * self.big_k).sqrt();
        let b = 2.0 * self.sigma * self.nu / 3.0;
        let e = (self.sigma * self.nu * b - self.k * self.c - b * b) / (2.0 * a);
        let r = x.sqrt();
        let q = r * (a + r * (b + r * e));
        // ∫₀ˣ dx/|Q| to second order
        let time = (2.0 * r / a - b * x / (a * a)) * self.sigma;
        (q, time)
    }
}

/// One stored point of a curve with the ODE slope used for interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub s: f64,
    pub q: f64,
    pub dq: f64,
}

/// Sampled `Q` on `[0, s_max]`. For `Q2` the abscissa is `τ = s* − s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCurve {
    pub branch: Branch,
    pub params: EPParams,
    pub samples: Vec<CurveSample>,
    pub s_max: f64,
    pub s_star: Option<f64>,
    pub asymptotic_slope: Option<f64>,
    pub tol: f64,
}

fn branch_ode(params: &EPParams, branch: Branch, s_star_v: Option<f64>) -> BranchOde {
    let EPParams { nu, k, c, .. } = *params;
    match branch {
        Branch::Q2 => BranchOde {
            sigma: -1.0,
            nu,
            k,
            c,
            big_k: k * (c * s_star_v.unwrap_or(0.0) - 1.0),
        },
        _ => BranchOde {
            sigma: 1.0,
            nu,
            k,
            c,
            big_k: k,
        },
    }
}

struct Integrated {
    samples: Vec<CurveSample>,
    /// `(x, Q, elapsed trajectory time)` at requested probe abscissae.
    probes: Vec<(f64, f64, f64)>,
    end: f64,
}

/// Integrate `(Q, T)` from the seed at `SEED_S` to `x_end`. Stops early when
/// `|Q|` drops back into the seed band.
fn integrate_branch(ode: BranchOde, x_end: f64, tol: f64, probes: &[f64]) -> Result<Integrated> {
    let (q0, t0) = ode.seed(SEED_S);
    let band = 0.5 * q0.abs();
    let sys = move |x: f64, y: &[f64; 2], dy: &mut [f64; 2]| {
        dy[0] = ode.slope(x, y[0]);
        dy[1] = 1.0 / y[0].abs();
    };
    let opts = OdeOptions {
        rtol: tol,
        atol: tol * 1e-3,
        h_max: (x_end - SEED_S) / 1024.0,
        h_init: Some(SEED_S * 1e-2),
        ..OdeOptions::default()
    };
    let mut solver = Dopri5::new(&sys, SEED_S, [q0, t0], x_end, opts);
    let mut samples = vec![
        CurveSample {
            s: 0.0,
            q: 0.0,
            dq: f64::INFINITY * ode.sigma,
        },
        CurveSample {
            s: SEED_S,
            q: q0,
            dq: ode.slope(SEED_S, q0),
        },
    ];
    let mut probe_out = Vec::with_capacity(probes.len());
    let mut end = x_end;
    while !solver.finished() {
        let step = solver.step().map_err(|e| match e {
            CtError::StepFailure { t, .. } if t < 100.0 * SEED_S => CtError::SingularityStall { s: t },
            other => other,
        })?;
        for &p in probes {
            if p > step.t0 && p <= step.t1 {
                let y = step.interpolate(p);
                probe_out.push((p, y[0], y[1]));
            }
        }
        if step.y1[0].abs() <= band || step.y1[0] * ode.sigma < 0.0 {
            let (a, _) = step.locate(|y| y[0].abs() - band, 1e-15);
            let y = step.interpolate(a);
            samples.push(CurveSample {
                s: a,
                q: y[0],
                dq: ode.slope(a, y[0]),
            });
            end = a;
            break;
        }
        samples.push(CurveSample {
            s: step.t1,
            q: step.y1[0],
            dq: step.f1[0],
        });
    }
    Ok(Integrated {
        samples,
        probes: probe_out,
        end,
    })
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve<const N: usize>(mut m: [[f64; N]; N], mut v: [f64; N]) -> [f64; N] {
    for col in 0..N {
        let piv = (col..N)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        v.swap(col, piv);
        for row in col + 1..N {
            let f = m[row][col] / m[col][col];
            for j in col..N {
                m[row][j] -= f * m[col][j];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut acc = v[row];
        for j in row + 1..N {
            acc -= m[row][j] * x[j];
        }
        x[row] = acc / m[row][row];
    }
    x
}

/// Limit of `Q(s)/s` for the strong branch: fit
/// `Q/s = L + C₁ s^{p−1} + C₂/s` with `p = λ₊/λ₋` through three tail points.
fn strong_slope(p: f64, probes: &[(f64, f64, f64)]) -> f64 {
    let mut m = [[0.0; 3]; 3];
    let mut v = [0.0; 3];
    for (i, &(s, q, _)) in probes.iter().take(3).enumerate() {
        m[i] = [1.0, s.powf(p - 1.0), 1.0 / s];
        v[i] = q / s;
    }
    solve::<3>(m, v)[0]
}

/// Limit of `Q(s)/s` for the borderline branch, fitting a polynomial in
/// `1/τ` with `τ = νT/2` the scaled trajectory time to the origin.
fn borderline_slope(nu: f64, probes: &[(f64, f64, f64)]) -> f64 {
    let mut m = [[0.0; 4]; 4];
    let mut v = [0.0; 4];
    for (i, &(s, q, time)) in probes.iter().take(4).enumerate() {
        let inv = 2.0 / (nu * time);
        m[i] = [1.0, inv, inv * inv, inv * inv * inv];
        v[i] = q / s;
    }
    solve::<4>(m, v)[0]
}

/// Integrate `Qa`, `Qb` or `Q1` from the origin.
///
/// `s_max` defaults to `10³/c` for `Qa`/`Qb` and to `s* − 10⁻⁸` for `Q1`.
pub fn integrate_q(
    params: &EPParams,
    branch: Branch,
    s_max: Option<f64>,
    tol: f64,
) -> Result<ThresholdCurve> {
    if branch == Branch::Q2 {
        return integrate_q2(params, s_star(params)?, s_max, tol);
    }
    let regime = params.expect_regime(branch.regime())?;
    check_tol(tol)?;
    let star = if branch == Branch::Q1 {
        Some(s_star(params)?)
    } else {
        None
    };
    let s_max = match (s_max, star) {
        (Some(s), Some(st)) if s > st => {
            return Err(CtError::CurveRangeExceeded { s, s_max: st });
        }
        (Some(s), Some(st)) => s.min(st - SEED_S),
        (Some(s), None) => s,
        (None, Some(st)) => st - SEED_S,
        (None, None) => 1e3 / params.c,
    };
    if !(s_max > SEED_S) || !s_max.is_finite() {
        return Err(CtError::InvalidParams(format!("s_max must exceed {SEED_S}, got {s_max}")));
    }
    let probes: Vec<f64> = match branch {
        Branch::Qa => vec![s_max, s_max / 2.0, s_max / 4.0],
        Branch::Qb => vec![s_max, s_max / 4.0, s_max / 16.0, s_max / 64.0],
        _ => vec![],
    };
    let ode = branch_ode(params, branch, None);
    let run = integrate_branch(ode, s_max, tol, &probes)?;
    let asymptotic_slope = match regime {
        DampingRegime::Strong {
            lambda_minus,
            lambda_plus,
            ..
        } if run.probes.len() == 3 => Some(strong_slope(lambda_plus / lambda_minus, &run.probes)),
        DampingRegime::Borderline { .. } if run.probes.len() == 4 => {
            Some(borderline_slope(params.nu, &run.probes))
        }
        _ => None,
    };
    Ok(ThresholdCurve {
        branch,
        params: *params,
        samples: run.samples,
        s_max: run.end,
        s_star: star,
        asymptotic_slope,
        tol,
    })
}

/// Integrate `Q2` in `τ = s* − s` on `[0, s_max]`, `s_max ≤ s*`.
pub fn integrate_q2(
    params: &EPParams,
    s_star_v: f64,
    s_max: Option<f64>,
    tol: f64,
) -> Result<ThresholdCurve> {
    params.expect_regime(RegimeTag::Weak)?;
    check_tol(tol)?;
    if !(s_star_v * params.c > 1.0) || !s_star_v.is_finite() {
        return Err(CtError::InvalidParams(format!(
            "s* must exceed 1/c, got {s_star_v}"
        )));
    }
    let s_max = s_max.unwrap_or(s_star_v);
    if s_max > s_star_v {
        return Err(CtError::CurveRangeExceeded {
            s: s_max,
            s_max: s_star_v,
        });
    }
    if !(s_max > SEED_S) {
        return Err(CtError::InvalidParams(format!("s_max must exceed {SEED_S}, got {s_max}")));
    }
    let mut ode = branch_ode(params, Branch::Q2, Some(s_star_v));
    // written in τ: dQ/dτ = −ν + (k/Q)(c(s* − τ) − 1)
    ode.big_k = params.k * (params.c * s_star_v - 1.0);
    let run = integrate_branch(ode, s_max, tol, &[])?;
    Ok(ThresholdCurve {
        branch: Branch::Q2,
        params: *params,
        samples: run.samples,
        s_max: run.end,
        s_star: Some(s_star_v),
        asymptotic_slope: None,
        tol,
    })
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(CtError::InvalidParams(format!("tol must lie in (0, 1), got {tol}")))
    }
}

/// Cubic Hermite interpolation on one interval with slopes limited so the
/// interpolant stays monotone wherever the data are.
fn hermite(a: &CurveSample, b: &CurveSample, x: f64) -> f64 {
    let h = b.s - a.s;
    let delta = (b.q - a.q) / h;
    let (mut m0, mut m1) = (a.dq, b.dq);
    if !m0.is_finite() {
        m0 = delta;
    }
    if !m1.is_finite() {
        m1 = delta;
    }
    if delta == 0.0 {
        if m0 * m1 >= 0.0 {
            m0 = 0.0;
            m1 = 0.0;
        }
    } else {
        let (al, be) = (m0 / delta, m1 / delta);
        if al >= 0.0 && be >= 0.0 {
            let r2 = al * al + be * be;
            if r2 > 9.0 {
                let tau = 3.0 / r2.sqrt();
                m0 = tau * al * delta;
                m1 = tau * be * delta;
            }
        }
    }
    let t = (x - a.s) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * a.q
        + (t3 - 2.0 * t2 + t) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * b.q
        + (t3 - t2) * h * m1
}

impl ThresholdCurve {
    pub fn regime(&self) -> RegimeTag {
        self.branch.regime()
    }

    /// `Q(x)` for `x` in `[0, s_max]`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let first = self.samples.first().map_or(0.0, |p| p.s);
        if !(x >= first && x <= self.s_max) {
            return Err(CtError::CurveRangeExceeded {
                s: x,
                s_max: self.s_max,
            });
        }
        let i = self.samples.partition_point(|p| p.s <= x);
        if i == 0 {
            return Ok(self.samples[0].q);
        }
        if i >= self.samples.len() {
            return Ok(self.samples[self.samples.len() - 1].q);
        }
        let (a, b) = (&self.samples[i - 1], &self.samples[i]);
        if a.s == 0.0 {
            // square-root departure from the singular start
            return Ok(b.q * (x / b.s).sqrt());
        }
        Ok(hermite(a, b, x))
    }

    /// The curve in the `(ρ, d)` plane by increasing `ρ`, skipping `s = 0`.
    /// Unbounded branches start at their `ρ → 0` limit `(0, −L)`, with `L`
    /// the asymptotic slope.
    pub fn to_rho_d(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self
            .samples
            .iter()
            .filter_map(|p| {
                let s = match (self.branch, self.s_star) {
                    (Branch::Q2, Some(st)) => st - p.s,
                    _ => p.s,
                };
                (s > 0.0).then(|| (1.0 / s, -p.q / s))
            })
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(l) = self.asymptotic_slope {
            pts.insert(0, (0.0, -l));
        }
        pts
    }

    pub fn sidecar(&self) -> CurveSidecar {
        CurveSidecar {
            regime: self.regime(),
            nu: self.params.nu,
            k: self.params.k,
            c: self.params.c,
            s_star: self.s_star,
            asymptotic_slope: self.asymptotic_slope,
            tol: self.tol,
            branch: self.branch,
        }
    }

    /// CSV `s,Q` with 15 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,Q\n");
        for p in &self.samples {
            let _ = writeln!(out, "{:.14e},{:.14e}", p.s, p.q);
        }
        out
    }

    /// CSV `rho,d` of [`ThresholdCurve::to_rho_d`], 17 significant digits.
    pub fn to_rho_d_csv(&self) -> String {
        let mut out = String::from("rho,d\n");
        for (rho, d) in self.to_rho_d() {
            let _ = writeln!(out, "{rho:.16e},{d:.16e}");
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Rebuild a curve from its CSV samples and sidecar metadata. Slopes are
    /// recomputed from the curve's differential equation.
    pub fn from_parts(csv_text: &str, sidecar: &CurveSidecar) -> Result<Self> {
        let params = EPParams::new(sidecar.nu, sidecar.k, sidecar.c)?;
        if params.tag() != sidecar.regime || sidecar.branch.regime() != sidecar.regime {
            return Err(CtError::InvalidParams(format!(
                "sidecar regime {} does not match branch {} and parameters",
                sidecar.regime, sidecar.branch
            )));
        }
        if sidecar.branch == Branch::Q2 && sidecar.s_star.is_none() {
            return Err(CtError::InvalidParams("Q2 curve needs s_star".into()));
        }
        let pts = parse_curve_csv(csv_text.as_bytes())?;
        let ode = branch_ode(&params, sidecar.branch, sidecar.s_star);
        let samples: Vec<CurveSample> = pts
            .into_iter()
            .map(|(s, q)| CurveSample {
                s,
                q,
                dq: if q == 0.0 {
                    f64::INFINITY * ode.sigma
                } else {
                    ode.slope(s, q)
                },
            })
            .collect();
        Ok(Self {
            branch: sidecar.branch,
            params,
            s_max: samples[samples.len() - 1].s,
            samples,
            s_star: sidecar.s_star,
            asymptotic_slope: sidecar.asymptotic_slope,
            tol: sidecar.tol,
        })
    }
}

/// Metadata written next to a curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSidecar {
    pub regime: RegimeTag,
    pub nu: f64,
    pub k: f64,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymptotic_slope: Option<f64>,
    pub tol: f64,
    pub branch: Branch,
}

impl CurveSidecar {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Parse `s,Q` rows; `s` must be finite and strictly increasing.
pub fn parse_curve_csv<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "s" || &headers[1] != "Q" {
        return Err(CtError::Parse(format!("expected header s,Q, got {headers:?}")));
    }
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(CtError::Parse(format!("row {}: expected 2 fields", i + 1)));
        }
        let s: f64 = parse_num(&rec[0], i)?;
        let q: f64 = parse_num(&rec[1], i)?;
        if let Some(&(prev, _)) = out.last() {
            if !(s > prev) {
                return Err(CtError::Parse(format!("row {}: s not increasing", i + 1)));
            }
        }
        out.push((s, q));
    }
    if out.len() < 2 {
        return Err(CtError::Parse("curve needs at least two samples".into()));
    }
    Ok(out)
}

fn parse_num(field: &str, row: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| CtError::Parse(format!("row {}: bad number {field:?}", row + 1)))?;
    if !v.is_finite() {
        return Err(CtError::Parse(format!("row {}: non-finite value", row + 1)));
    }
    Ok(v)
}

/// The curves bounding the region of global regularity for one parameter
/// set: the upper branch, plus `Q2` in the weak regime.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub upper: ThresholdCurve,
    pub lower: Option<ThresholdCurve>,
}

impl CurveSet {
    /// Build both branches; for the weak regime `Q1` and `Q2` run in parallel.
    pub fn build(params: &EPParams, tol: f64, s_max: Option<f64>) -> Result<Self> {
        let tag = params.tag();
        let branch = Branch::upper_for(tag);
        if tag == RegimeTag::Weak {
            let st = s_star(params)?;
            let (upper, lower) = rayon::join(
                || integrate_q(params, branch, None, tol),
                || integrate_q2(params, st, None, tol),
            );
            Ok(Self {
                upper: upper?,
                lower: Some(lower?),
            })
        } else {
            Ok(Self {
                upper: integrate_q(params, branch, s_max, tol)?,
                lower: None,
            })
        }
    }

    /// Signed distance in `r` from `(r₀, s₀)` to the nearest bounding curve
    /// over the same `s`; positive outside the region of regularity.
    pub fn signed_gap(&self, s0: f64, r0: f64) -> Result<f64> {
        let upper = self.upper_value(s0)?;
        match (&self.lower, self.upper.s_star) {
            (Some(lower), Some(st)) => {
                let lo = lower.eval((st - s0).clamp(0.0, lower.s_max))?;
                Ok((r0 - upper).max(lo - r0))
            }
            _ => Ok(r0 - upper),
        }
    }

    fn upper_value(&self, s0: f64) -> Result<f64> {
        let c = &self.upper;
        match c.s_star {
            // Q₁ vanishes at s*; its stored range stops in the seed band
            Some(st) if s0 > c.s_max && s0 < st => Ok(0.0),
            _ => c.eval(s0),
        }
    }
}

pub fn classify_by_curve(
    params: &EPParams,
    rho0: f64,
    d0: f64,
    curves: &CurveSet,
) -> Result<Verdict> {
    classify_by_curve_tol(params, rho0, d0, curves, DEFAULT_BOUNDARY_TOL)
}

pub fn classify_by_curve_tol(
    params: &EPParams,
    rho0: f64,
    d0: f64,
    curves: &CurveSet,
    tol: f64,
) -> Result<Verdict> {
    if !(rho0 > 0.0) {
        return Err(CtError::NonpositiveDensity(rho0));
    }
    let tag = params.tag();
    if curves.upper.regime() != tag {
        return Err(CtError::RegimeMismatch {
            expected: tag,
            actual: curves.upper.regime(),
        });
    }
    let s0 = 1.0 / rho0;
    let r0 = -d0 / rho0;
    if let Some(st) = curves.upper.s_star {
        if s0 >= st {
            return Ok(Verdict::new(Outcome::FiniteTimeBreakdown, tag));
        }
    }
    let gap = curves.signed_gap(s0, r0)?;
    let scale = 1f64.max(r0.abs());
    Ok(Verdict::new(decide(gap, 0.0, scale, tol), tag))
}

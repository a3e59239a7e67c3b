//! Brute-force ground truth along a single particle path.
//!
//! The linear `(r, s)` system is propagated with the exact 2×2 matrix
//! exponential; the nonlinear `(ρ, d)` system is integrated adaptively until
//! `d` falls below a floor.

use serde::{Deserialize, Serialize};

use crate::error::{CtError, Result};
use crate::model::{Diagnostics, EPParams, Outcome, RegimeTag, Rs, Verdict, DEFAULT_BOUNDARY_TOL};
use crate::ode::{Dopri5, OdeOptions};

pub const DEFAULT_EVENT_TOL: f64 = 1e-12;
pub const DEFAULT_D_FLOOR: f64 = -1e6;

/// Exact flow of `r' = −νr − k(1 − cs)`, `s' = −r`, written for the deviation
/// `(r, s − 1/c)` from the critical point `(0, 1/c)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearFlow {
    params: EPParams,
    kind: FlowKind,
}

#[derive(Debug, Clone, Copy)]
enum FlowKind {
    /// real eigenvalues `a ± delta`
    Node { a: f64, delta: f64 },
    Improper { a: f64 },
    /// complex eigenvalues `a ± i omega`
    Spiral { a: f64, omega: f64 },
}

impl LinearFlow {
    pub fn new(params: EPParams) -> Self {
        let a = -params.nu / 2.0;
        let d2 = params.nu * params.nu / 4.0 - params.k * params.c;
        let kind = match params.tag() {
            RegimeTag::Strong => FlowKind::Node {
                a,
                delta: d2.max(0.0).sqrt(),
            },
            RegimeTag::Borderline => FlowKind::Improper { a },
            RegimeTag::Weak => FlowKind::Spiral {
                a,
                omega: (-d2).max(0.0).sqrt(),
            },
        };
        Self { params, kind }
    }

    pub fn params(&self) -> &EPParams {
        &self.params
    }

    /// `(e^{at} φ₀(t), e^{at} φ₁(t))` with `e^{Mt} = e^{at}[φ₀ I + φ₁ (M − aI)]`.
    fn phi(&self, t: f64) -> (f64, f64) {
        match self.kind {
            FlowKind::Node { a, delta } => {
                let lo = ((a - delta) * t).exp();
                let diff = (2.0 * delta * t).exp_m1();
                let phi0 = lo * (1.0 + 0.5 * diff);
                let phi1 = if delta == 0.0 {
                    t * (a * t).exp()
                } else {
                    lo * diff / (2.0 * delta)
                };
                (phi0, phi1)
            }
            FlowKind::Improper { a } => {
                let e = (a * t).exp();
                (e, t * e)
            }
            FlowKind::Spiral { a, omega } => {
                let e = (a * t).exp();
                let (sn, cs) = (omega * t).sin_cos();
                let phi1 = if omega == 0.0 { t } else { sn / omega };
                (e * cs, e * phi1)
            }
        }
    }

    /// Propagate `p` by time `t` (negative `t` runs backwards).
    pub fn propagate(&self, p: Rs, t: f64) -> Rs {
        let EPParams { nu, k, c, .. } = self.params;
        let a = -nu / 2.0;
        let (phi0, phi1) = self.phi(t);
        let x = p.r;
        let y = p.s - 1.0 / c;
        // M − aI = [[−ν − a, ck], [−1, −a]]
        let mx = (-nu - a) * x + c * k * y;
        let my = -x - a * y;
        Rs {
            r: phi0 * x + phi1 * mx,
            s: 1.0 / c + phi0 * y + phi1 * my,
        }
    }

    /// Upper bound on `sup_{t ≥ 0} |s(t) − 1/c|` for the forward flow from `p`.
    pub fn tail_bound(&self, p: Rs) -> f64 {
        let c = self.params.c;
        let y0 = p.s - 1.0 / c;
        let v0 = -p.r;
        match self.kind {
            FlowKind::Node { a, delta } => {
                let (lp, lm) = (a + delta, a - delta);
                if delta == 0.0 {
                    return y0.abs() + (v0 - a * y0).abs() * 2.0 / (-a * std::f64::consts::E);
                }
                let alpha = (v0 - lm * y0) / (lp - lm);
                let beta = y0 - alpha;
                alpha.abs() + beta.abs()
            }
            FlowKind::Improper { a } => {
                y0.abs() + (v0 - a * y0).abs() / (-a * std::f64::consts::E)
            }
            FlowKind::Spiral { a, omega } => {
                let c2 = (v0 - a * y0) / omega;
                (y0 * y0 + c2 * c2).sqrt()
            }
        }
    }

    /// Characteristic time scale used for sampling.
    pub fn time_scale(&self) -> f64 {
        match self.kind {
            FlowKind::Node { a, delta } => 1.0 / (-(a + delta)).max((a - delta).abs()),
            FlowKind::Improper { a } => 1.0 / (-a),
            FlowKind::Spiral { a, omega } => (1.0 / omega).min(1.0 / (-a)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum Terminal {
    Completed {
        horizon: f64,
    },
    /// `s` reached zero; the root lies in `[bracket_lo, bracket_hi]`.
    SCrossedZero {
        t_c: f64,
        bracket_lo: f64,
        bracket_hi: f64,
    },
    /// `d` fell below `d_floor` at `t_floor`; `t_c` extrapolates to `d = −∞`.
    DBlewDown {
        t_c: f64,
        t_floor: f64,
        d_floor: f64,
    },
}

impl Terminal {
    pub fn breakdown_time(&self) -> Option<f64> {
        match *self {
            Terminal::Completed { .. } => None,
            Terminal::SCrossedZero { t_c, .. } | Terminal::DBlewDown { t_c, .. } => Some(t_c),
        }
    }
}

/// One sample of a particle path; both coordinate pairs are stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub rho: f64,
    pub d: f64,
    pub r: f64,
    pub s: f64,
}

impl PathSample {
    fn from_rs(t: f64, p: Rs) -> Self {
        let (rho, d) = if p.s > 0.0 {
            (1.0 / p.s, -p.r / p.s)
        } else {
            (f64::INFINITY, f64::NEG_INFINITY)
        };
        Self {
            t,
            rho,
            d,
            r: p.r,
            s: p.s,
        }
    }

    fn from_rho_d(t: f64, rho: f64, d: f64) -> Self {
        Self {
            t,
            rho,
            d,
            r: -d / rho,
            s: 1.0 / rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub samples: Vec<PathSample>,
    pub terminal: Terminal,
    /// Smallest `s` seen on `[0, end]`, including interior minima.
    pub s_min: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearOptions {
    pub event_tol: f64,
    /// Samples per characteristic time (see [`LinearFlow::time_scale`]).
    pub samples_per_scale: usize,
    pub max_samples: usize,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self {
            event_tol: DEFAULT_EVENT_TOL,
            samples_per_scale: 64,
            max_samples: 200_000,
        }
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut fa = f(a);
    for _ in 0..300 {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm != 0.0 && (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    (a, b)
}

/// Trajectory of the linear system from `(r0, s0)` over `[0, horizon]`,
/// stopping at the first time `s` reaches zero.
pub fn integrate_linear(
    params: &EPParams,
    r0: f64,
    s0: f64,
    horizon: f64,
    opts: &LinearOptions,
) -> TrajectoryResult {
    let flow = LinearFlow::new(*params);
    let p0 = Rs { r: r0, s: s0 };
    let dt = (flow.time_scale() / opts.samples_per_scale as f64)
        .max(horizon / opts.max_samples as f64)
        .min(horizon);
    let n = (horizon / dt).ceil().max(1.0) as usize;
    let at = |t: f64| flow.propagate(p0, t);

    let mut samples = vec![PathSample::from_rs(0.0, p0)];
    let mut s_min = s0;
    let mut prev = p0;
    let mut t_prev = 0.0;
    for i in 1..=n {
        let t = if i == n { horizon } else { i as f64 * dt };
        let cur = at(t);
        // interior minimum of s: r changes sign from + to −
        let mut crossing: Option<(f64, f64)> = None;
        if prev.r > 0.0 && cur.r < 0.0 {
            let (a, b) = bisect(|t| at(t).r, t_prev, t, opts.event_tol * 1e-3);
            let t_m = 0.5 * (a + b);
            let s_m = at(t_m).s;
            s_min = s_min.min(s_m);
            if s_m <= 0.0 && prev.s > 0.0 {
                crossing = Some(bisect(|t| at(t).s, t_prev, t_m, opts.event_tol));
            }
        }
        if crossing.is_none() && prev.s > 0.0 && cur.s <= 0.0 {
            crossing = Some(bisect(|t| at(t).s, t_prev, t, opts.event_tol));
        }
        if let Some((lo, hi)) = crossing {
            let t_c = 0.5 * (lo + hi);
            s_min = s_min.min(0.0);
            samples.push(PathSample::from_rs(t_c, at(t_c)));
            return TrajectoryResult {
                samples,
                terminal: Terminal::SCrossedZero {
                    t_c,
                    bracket_lo: lo,
                    bracket_hi: hi,
                },
                s_min,
            };
        }
        s_min = s_min.min(cur.s);
        samples.push(PathSample::from_rs(t, cur));
        prev = cur;
        t_prev = t;
    }
    TrajectoryResult {
        samples,
        terminal: Terminal::Completed { horizon },
        s_min,
    }
}

/// Follow the linear flow backwards from the origin `(0, 0)` to its next
/// `r = 0` crossing. Returns `(t, s)` with `t < 0`; only the weak regime
/// recrosses.
pub fn backward_recrossing(params: &EPParams, event_tol: f64) -> Result<(f64, f64)> {
    params.expect_regime(RegimeTag::Weak)?;
    let flow = LinearFlow::new(*params);
    let origin = Rs { r: 0.0, s: 0.0 };
    let dt = flow.time_scale() / 64.0;
    // r > 0 just after leaving the origin backwards
    let mut t_prev = -dt;
    let mut prev = flow.propagate(origin, t_prev);
    for i in 2..1_000_000 {
        let t = -(i as f64) * dt;
        let cur = flow.propagate(origin, t);
        if prev.r > 0.0 && cur.r <= 0.0 {
            let (a, b) = bisect(|t| flow.propagate(origin, t).r, t_prev, t, event_tol);
            let t_star = 0.5 * (a + b);
            return Ok((t_star, flow.propagate(origin, t_star).s));
        }
        prev = cur;
        t_prev = t;
    }
    Err(CtError::StepFailure { t: t_prev, h: dt })
}

#[derive(Debug, Clone, Copy)]
pub struct NonlinearOptions {
    pub ode: OdeOptions,
    pub d_floor: f64,
    pub event_tol: f64,
}

impl Default for NonlinearOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::with_tol(1e-13, 1e-14),
            d_floor: DEFAULT_D_FLOOR,
            event_tol: DEFAULT_EVENT_TOL,
        }
    }
}

/// Integrate `ρ' = −ρd`, `d' = −d² − νd + k(ρ − c)` until `horizon` or until
/// `d ≤ d_floor`.
pub fn integrate_nonlinear(
    params: &EPParams,
    rho0: f64,
    d0: f64,
    horizon: f64,
    opts: &NonlinearOptions,
) -> Result<TrajectoryResult> {
    if !(rho0 > 0.0) {
        return Err(CtError::NonpositiveDensity(rho0));
    }
    if !(opts.d_floor < 0.0) {
        return Err(CtError::InvalidParams(format!(
            "d_floor must be negative, got {}",
            opts.d_floor
        )));
    }
    let EPParams { nu, k, c, .. } = *params;
    // state: ln ρ, d
    let sys = move |_t: f64, y: &[f64; 2], dy: &mut [f64; 2]| {
        dy[0] = -y[1];
        dy[1] = -y[1] * y[1] - nu * y[1] + k * (y[0].exp() - c);
    };
    let mut solver = Dopri5::new(&sys, 0.0, [rho0.ln(), d0], horizon, opts.ode);
    let mut samples = vec![PathSample::from_rho_d(0.0, rho0, d0)];
    let mut s_min = 1.0 / rho0;
    if d0 <= opts.d_floor {
        return Ok(TrajectoryResult {
            samples,
            terminal: Terminal::DBlewDown {
                t_c: -1.0 / d0,
                t_floor: 0.0,
                d_floor: opts.d_floor,
            },
            s_min,
        });
    }
    while !solver.finished() {
        let step = solver.step()?;
        if step.y1[1] <= opts.d_floor {
            let floor = opts.d_floor;
            let (a, b) = step.locate(|y| y[1] - floor, opts.event_tol);
            let t_floor = 0.5 * (a + b);
            let y = step.interpolate(t_floor);
            let rho = y[0].exp();
            let t_c = t_floor + extrapolated_time_to_blowup(params, rho, y[1]);
            samples.push(PathSample::from_rho_d(t_floor, rho, y[1]));
            s_min = s_min.min(1.0 / rho);
            return Ok(TrajectoryResult {
                samples,
                terminal: Terminal::DBlewDown {
                    t_c,
                    t_floor,
                    d_floor: floor,
                },
                s_min,
            });
        }
        let rho = step.y1[0].exp();
        s_min = s_min.min(1.0 / rho);
        samples.push(PathSample::from_rho_d(step.t1, rho, step.y1[1]));
    }
    Ok(TrajectoryResult {
        samples,
        terminal: Terminal::Completed { horizon },
        s_min,
    })
}

/// Time left until `s = 1/ρ` vanishes, from a second-order Taylor expansion
/// of `s` at a state close to blowup.
pub(crate) fn extrapolated_time_to_blowup(params: &EPParams, rho: f64, d: f64) -> f64 {
    let s = 1.0 / rho;
    let r = -d / rho;
    // s(τ) ≈ s − rτ + s''τ²/2,  s'' = νr + k(1 − cs)
    let s2 = params.nu * r + params.k * (1.0 - params.c * s);
    let tau0 = s / r;
    tau0 + 0.5 * s2 * tau0 * tau0 / r
}

/// How long [`oracle_classify`] watches a trajectory before certifying it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HorizonPolicy {
    /// Regime default: weak `4π/μ` (covers `t* + 2π/μ`), strong
    /// `10/(λ₁c)`, borderline `20/ν`; extended until the tail bound
    /// certifies that `s` stays positive.
    Regime,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub horizon: HorizonPolicy,
    pub boundary_tol: f64,
    pub linear: LinearOptions,
    /// Maximum number of horizon doublings while the tail is uncertified.
    pub max_extensions: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            horizon: HorizonPolicy::Regime,
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            linear: LinearOptions::default(),
            max_extensions: 12,
        }
    }
}

pub fn regime_horizon(params: &EPParams) -> f64 {
    use crate::model::DampingRegime::*;
    match params.regime() {
        Weak { mu } => 4.0 * std::f64::consts::PI / mu,
        Strong { lambda1, .. } => 10.0 / (lambda1 * params.c),
        Borderline { .. } => 20.0 / params.nu,
    }
}

/// Classify by direct simulation of the linear system.
pub fn oracle_classify(
    params: &EPParams,
    rho0: f64,
    d0: f64,
    opts: &OracleOptions,
) -> Result<Verdict> {
    if !(rho0 > 0.0) {
        return Err(CtError::NonpositiveDensity(rho0));
    }
    let tag = params.tag();
    let s0 = 1.0 / rho0;
    let r0 = -d0 / rho0;
    let flow = LinearFlow::new(*params);
    let mut horizon = match opts.horizon {
        HorizonPolicy::Regime => regime_horizon(params),
        HorizonPolicy::Fixed(h) => h,
    };
    let mut extensions = 0;
    loop {
        let traj = integrate_linear(params, r0, s0, horizon, &opts.linear);
        if let Terminal::SCrossedZero { t_c, .. } = traj.terminal {
            return Ok(Verdict::new(Outcome::FiniteTimeBreakdown, tag).with_diagnostics(
                Diagnostics {
                    breakdown_time: Some(t_c),
                    s_min: Some(traj.s_min),
                    ..Diagnostics::default()
                },
            ));
        }
        let last = traj.samples.last().expect("trajectory has samples");
        let end = Rs {
            r: last.r,
            s: last.s,
        };
        let certified = 1.0 / params.c - flow.tail_bound(end) > 0.0;
        if traj.s_min < opts.boundary_tol * s0 {
            return Err(CtError::Inconclusive { s_min: traj.s_min });
        }
        if certified || matches!(opts.horizon, HorizonPolicy::Fixed(_)) {
            return Ok(Verdict::new(Outcome::GlobalSmooth, tag).with_diagnostics(Diagnostics {
                s_min: Some(traj.s_min),
                ..Diagnostics::default()
            }));
        }
        if extensions >= opts.max_extensions {
            return Err(CtError::Inconclusive { s_min: traj.s_min });
        }
        extensions += 1;
        horizon *= 2.0;
    }
}

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ep_params_of_mass;
use super::field::{centered_differences, AggregationField};
use crate::characteristic::{extrapolated_time_to_blowup, LinearFlow, DEFAULT_D_FLOOR};
use crate::error::{CtError, Result};
use crate::model::{EPParams, Rs};
use crate::ode::{Dopri5, OdeOptions};

pub const DEFAULT_CROSS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    /// Frame times in `[0, horizon]`; sorted on use.
    pub output_times: Vec<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub d_floor: f64,
    pub cross_tol: f64,
}

impl SimOptions {
    /// `frames` equally spaced output times on `[0, horizon]`.
    pub fn uniform(horizon: f64, frames: usize) -> Self {
        let n = frames.max(2);
        Self {
            horizon,
            output_times: (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect(),
            rtol: 1e-12,
            atol: 1e-14,
            d_floor: DEFAULT_D_FLOOR,
            cross_tol: DEFAULT_CROSS_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BreakdownCause {
    /// `d` fell below the floor
    SlopeBlowup,
    /// `∂x/∂α` fell below the crossing tolerance
    CharacteristicCrossing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum SimStatus {
    Completed,
    BreakdownDetected {
        t_c: f64,
        alpha_star: f64,
        index: usize,
        cause: BreakdownCause,
        /// `d` at the detection point.
        d_detected: f64,
    },
}

/// Lagrangian state of every particle at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationFrame {
    pub t: f64,
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub z: Vec<f64>,
    pub d: Vec<f64>,
    pub q: Vec<f64>,
    pub dxdalpha: Vec<f64>,
}

impl SimulationFrame {
    /// CSV `alpha,x,f,z,d,Q`, 17 significant digits.
    pub fn to_csv(&self, alpha: &[f64]) -> String {
        let mut out = String::from("alpha,x,f,z,d,Q\n");
        for i in 0..alpha.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                alpha[i], self.x[i], self.f[i], self.z[i], self.d[i], self.q[i]
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub frames: Vec<SimulationFrame>,
    pub status: SimStatus,
    /// Per-particle breakdown time, if the particle broke down before the
    /// horizon.
    pub particle_tc: Vec<Option<f64>>,
}

/// `(∂x/∂α, a)` at time `t` for particle `i`, where `a = ∂z/∂α` solves
/// `a'' + a' + M₀a = 0`.
pub fn deformation(field: &AggregationField, i: usize, t: f64) -> Result<(f64, f64)> {
    let params = ep_params_of_mass(field.m0)?;
    Ok(deformation_with(&LinearFlow::new(params), &params, field, i, t))
}

fn deformation_with(
    flow: &LinearFlow,
    params: &EPParams,
    field: &AggregationField,
    i: usize,
    t: f64,
) -> (f64, f64) {
    let m0 = field.m0;
    let a0 = field.d0[i];
    let da0 = -a0 + 2.0 * field.rho0[i] - m0;
    // a plays the role of s − 1/c and a' of −r
    let p = flow.propagate(
        Rs {
            r: -da0,
            s: 1.0 / params.c + a0,
        },
        t,
    );
    let a = p.s - 1.0 / params.c;
    let da = -p.r;
    (1.0 + (da0 + a0 - da - a) / m0, a)
}

struct Track {
    states: Vec<[f64; 5]>,
    breakdown: Option<(f64, BreakdownCause, f64)>,
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn track_particle(
    field: &AggregationField,
    params: &EPParams,
    flow: &LinearFlow,
    i: usize,
    times: &[f64],
    opts: &SimOptions,
) -> Result<Track> {
    let (m0, m1) = (field.m0, field.m1);
    // state: x, ln f, z, d, Q
    let sys = move |t: f64, y: &[f64; 5], dy: &mut [f64; 5]| {
        dy[0] = y[2];
        dy[1] = -y[3];
        dy[2] = -y[2] - y[4];
        dy[3] = -y[3] * y[3] - y[3] + 2.0 * y[1].exp() - m0;
        dy[4] = -m1 * (-t).exp() + m0 * y[2];
    };
    let y0 = [
        field.alpha[i],
        field.rho0[i].ln(),
        field.u0[i],
        field.d0[i],
        field.e0[i],
    ];
    let ode = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        ..OdeOptions::default()
    };
    let mut solver = Dopri5::new(&sys, 0.0, y0, opts.horizon, ode);
    let mut states = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && times[next] <= 0.0 {
        states.push(y0);
        next += 1;
    }
    let to_phys = |y: [f64; 5]| [y[0], y[1].exp(), y[2], y[3], y[4]];
    let states_phys = |v: Vec<[f64; 5]>| v.into_iter().map(to_phys).collect();
    if y0[3] <= opts.d_floor {
        let t_c = extrapolated_time_to_blowup(params, field.rho0[i], y0[3]);
        return Ok(Track {
            states: vec![],
            breakdown: Some((t_c, BreakdownCause::SlopeBlowup, y0[3])),
        });
    }
    while !solver.finished() {
        let step = solver.step()?;
        let jac = |t: f64| deformation_with(flow, params, field, i, t).0 - opts.cross_tol;
        let mut event: Option<(f64, BreakdownCause, f64)> = None;
        if jac(step.t1) <= 0.0 {
            let t_x = bisect(jac, step.t0, step.t1);
            event = Some((t_x, BreakdownCause::CharacteristicCrossing, step.interpolate(t_x)[3]));
        }
        if step.y1[3] <= opts.d_floor {
            let floor = opts.d_floor;
            // right end of the bracket, where d is already past the floor
            let t_floor = step.locate(|y| y[3] - floor, 1e-13).1;
            if event.is_none_or(|(t_x, _, _)| t_floor < t_x) {
                let y = step.interpolate(t_floor);
                let t_c = t_floor + extrapolated_time_to_blowup(params, y[1].exp(), y[3]);
                event = Some((t_c, BreakdownCause::SlopeBlowup, y[3]));
            }
        }
        let stop = event.map(|(t, _, _)| t);
        while next < times.len() && times[next] <= step.t1 && stop.is_none_or(|tc| times[next] < tc)
        {
            states.push(step.interpolate(times[next]));
            next += 1;
        }
        if event.is_some() {
            return Ok(Track {
                states: states_phys(states),
                breakdown: event,
            });
        }
    }
    Ok(Track {
        states: states_phys(states),
        breakdown: None,
    })
}

/// Integrate every particle path in parallel and assemble frames up to the
/// first breakdown.
pub fn simulate(field: &AggregationField, opts: &SimOptions) -> Result<SimulationRun> {
    if !(opts.horizon > 0.0 && opts.horizon.is_finite()) {
        return Err(CtError::InvalidParams(format!(
            "horizon must be positive, got {}",
            opts.horizon
        )));
    }
    if !(opts.d_floor < 0.0) || !(opts.cross_tol > 0.0) {
        return Err(CtError::InvalidParams("d_floor < 0 and cross_tol > 0 required".into()));
    }
    let mut times: Vec<f64> = opts
        .output_times
        .iter()
        .copied()
        .filter(|t| (0.0..=opts.horizon).contains(t))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let params = ep_params_of_mass(field.m0)?;
    let flow = LinearFlow::new(params);
    let tracks: Vec<Track> = (0..field.len())
        .into_par_iter()
        .map(|i| track_particle(field, &params, &flow, i, &times, opts))
        .collect::<Result<_>>()?;

    let particle_tc: Vec<Option<f64>> =
        tracks.iter().map(|t| t.breakdown.map(|b| b.0)).collect();
    let first = tracks
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.breakdown.map(|b| (i, b)))
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0));
    let status = match first {
        None => SimStatus::Completed,
        Some((index, (t_c, cause, d_detected))) => SimStatus::BreakdownDetected {
            t_c,
            alpha_star: field.alpha[index],
            index,
            cause,
            d_detected,
        },
    };
    let n_frames = tracks.iter().map(|t| t.states.len()).min().unwrap_or(0);
    let frames = (0..n_frames)
        .map(|k| {
            let t = times[k];
            let col = |j: usize| tracks.iter().map(|tr| tr.states[k][j]).collect::<Vec<f64>>();
            SimulationFrame {
                t,
                x: col(0),
                f: col(1),
                z: col(2),
                d: col(3),
                q: col(4),
                dxdalpha: (0..field.len())
                    .map(|i| deformation_with(&flow, &params, field, i, t).0)
                    .collect(),
            }
        })
        .collect();
    Ok(SimulationRun {
        frames,
        status,
        particle_tc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditTolerances {
    /// relative
    pub mass: f64,
    /// absolute, for `∫zρ₀ − M₁e^{−t}` and `∫Qρ₀`
    pub moment: f64,
    /// absolute, for `d − (∂z/∂α)/(∂x/∂α)`
    pub slope: f64,
}

impl AuditTolerances {
    pub fn for_field(field: &AggregationField) -> Self {
        Self {
            mass: 1e-8,
            moment: 10.0 * field.certificate.quad_tol,
            slope: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameAudit {
    pub t: f64,
    /// `|∫f ∂x/∂α − M₀| / M₀`
    pub mass: f64,
    /// `max |f ∂x/∂α − ρ₀| / ρ₀`
    pub mass_transport: f64,
    /// `|∫zρ₀ − M₁e^{−t}|`
    pub momentum: f64,
    /// `|∫Qρ₀|`
    pub e_moment: f64,
    /// `max |d − (∂z/∂α)/(∂x/∂α)|` over interior nodes
    pub slope_consistency: f64,
    pub mass_ok: bool,
    pub momentum_ok: bool,
    pub e_moment_ok: bool,
    pub slope_ok: bool,
}

impl FrameAudit {
    pub fn passed(&self) -> bool {
        self.mass_ok && self.momentum_ok && self.e_moment_ok && self.slope_ok
    }
}

pub fn audit_frame(
    frame: &SimulationFrame,
    field: &AggregationField,
    tol: &AuditTolerances,
) -> FrameAudit {
    let n = field.len();
    let mass = (field.integrate(|i| frame.f[i] * frame.dxdalpha[i]) - field.m0).abs() / field.m0;
    let mass_transport = (0..n)
        .map(|i| (frame.f[i] * frame.dxdalpha[i] - field.rho0[i]).abs() / field.rho0[i])
        .fold(0.0, f64::max);
    let momentum =
        (field.integrate(|i| frame.z[i] * field.rho0[i]) - field.m1 * (-frame.t).exp()).abs();
    let e_moment = field.integrate(|i| frame.q[i] * field.rho0[i]).abs();
    let z_a = centered_differences(&field.alpha, &frame.z);
    let x_a = centered_differences(&field.alpha, &frame.x);
    let slope_consistency = (1..n - 1)
        .map(|i| (frame.d[i] - z_a[i] / x_a[i]).abs())
        .fold(0.0, f64::max);
    FrameAudit {
        t: frame.t,
        mass,
        mass_transport,
        momentum,
        e_moment,
        slope_consistency,
        mass_ok: mass <= tol.mass && mass_transport <= tol.mass,
        momentum_ok: momentum <= tol.moment,
        e_moment_ok: e_moment <= tol.moment,
        slope_ok: slope_consistency <= tol.slope,
    }
}

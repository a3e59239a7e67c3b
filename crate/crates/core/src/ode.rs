//! Dormand–Prince 5(4) stepper with the standard 4th-order continuous
//! extension. Callers drive it one accepted step at a time so they can run
//! their own event checks on each step's dense output.

use crate::error::{CtError, Result};

pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N], dydt: &mut [f64; N]);
}

impl<const N: usize, F> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N], &mut [f64; N]),
{
    fn rhs(&self, t: f64, y: &[f64; N], dydt: &mut [f64; N]) {
        self(t, y, dydt)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step magnitude; picked automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    /// Step magnitudes below this (relative to |t| + 1) fail with `StepFailure`.
    pub h_min_rel: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: None,
            h_max: f64::INFINITY,
            h_min_rel: 1e-15,
            max_steps: 1_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

// Butcher tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// 5th minus embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its dense-output polynomial.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    /// Derivative at the end of the step.
    pub f1: [f64; N],
    rcont: [[f64; N]; 4],
}

impl<const N: usize> Step<N> {
    pub fn h(&self) -> f64 {
        self.t1 - self.t0
    }

    /// State at `t` in `[t0, t1]` (either order when integrating backwards).
    pub fn interpolate(&self, t: f64) -> [f64; N] {
        let h = self.h();
        let theta = if h == 0.0 { 0.0 } else { (t - self.t0) / h };
        let theta1 = 1.0 - theta;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = self.y0[i]
                + theta
                    * (self.rcont[0][i]
                        + theta1
                            * (self.rcont[1][i]
                                + theta * (self.rcont[2][i] + theta1 * self.rcont[3][i])));
        }
        out
    }

    /// First component-wise root of `g` inside the step, refined by bisection
    /// on the dense output until the bracket is narrower than `tol`.
    /// `g(t0)` and `g(t1)` must have opposite signs (or `g(t1) == 0`).
    pub fn locate<G: Fn(&[f64; N]) -> f64>(&self, g: G, tol: f64) -> (f64, f64) {
        let (mut a, mut b) = (self.t0, self.t1);
        let mut ga = g(&self.y0);
        for _ in 0..200 {
            if (b - a).abs() <= tol {
                break;
            }
            let m = 0.5 * (a + b);
            if m == a || m == b {
                break;
            }
            let gm = g(&self.interpolate(m));
            if (gm > 0.0) == (ga > 0.0) && gm != 0.0 {
                a = m;
                ga = gm;
            } else {
                b = m;
            }
        }
        (a, b)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
}

pub struct Dopri5<'a, S: OdeSystem<N>, const N: usize> {
    sys: &'a S,
    t: f64,
    y: [f64; N],
    f: [f64; N],
    h: f64,
    t_end: f64,
    dir: f64,
    opts: OdeOptions,
    pub stats: Stats,
}

impl<'a, S: OdeSystem<N>, const N: usize> Dopri5<'a, S, N> {
    pub fn new(sys: &'a S, t0: f64, y0: [f64; N], t_end: f64, opts: OdeOptions) -> Self {
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let mut f = [0.0; N];
        sys.rhs(t0, &y0, &mut f);
        let mut me = Self {
            sys,
            t: t0,
            y: y0,
            f,
            h: 0.0,
            t_end,
            dir,
            opts,
            stats: Stats {
                evals: 1,
                ..Stats::default()
            },
        };
        me.h = match opts.h_init {
            Some(h) => h.abs().min(opts.h_max),
            None => me.initial_step(),
        };
        me
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn finished(&self) -> bool {
        (self.t_end - self.t) * self.dir <= 0.0
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.opts.atol + self.opts.rtol * a.abs().max(b.abs())
    }

    // Hairer–Nørsett–Wanner starting step heuristic.
    fn initial_step(&mut self) -> f64 {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = self.scale(self.y[i], self.y[i]);
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.f[i] / sc).powi(2);
        }
        let n = N as f64;
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h0 = h0.min((self.t_end - self.t).abs()).min(self.opts.h_max);
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = self.y[i] + self.dir * h0 * self.f[i];
        }
        let mut f1 = [0.0; N];
        self.sys.rhs(self.t + self.dir * h0, &y1, &mut f1);
        self.stats.evals += 1;
        let mut d2 = 0.0;
        for i in 0..N {
            let sc = self.scale(self.y[i], self.y[i]);
            d2 += ((f1[i] - self.f[i]) / sc).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        let h = (100.0 * h0).min(h1).min(self.opts.h_max);
        if h.is_finite() && h > 0.0 {
            h
        } else {
            1e-6
        }
    }

    /// Advance by one accepted step, never past `t_end`.
    pub fn step(&mut self) -> Result<Step<N>> {
        let sys = self.sys;
        loop {
            if self.stats.accepted + self.stats.rejected >= self.opts.max_steps {
                return Err(CtError::StepFailure {
                    t: self.t,
                    h: self.h,
                });
            }
            let remaining = (self.t_end - self.t).abs();
            let mut h = self.h.min(remaining).min(self.opts.h_max);
            // avoid leaving a sliver at the end
            if remaining - h < 1e-12 * remaining {
                h = remaining;
            }
            let h_min = self.opts.h_min_rel * (self.t.abs() + 1.0);
            if h < h_min {
                return Err(CtError::StepFailure { t: self.t, h });
            }
            let hs = h * self.dir;
            let t = self.t;
            let y = &self.y;
            let k1 = self.f;
            let mut k2 = [0.0; N];
            let mut k3 = [0.0; N];
            let mut k4 = [0.0; N];
            let mut k5 = [0.0; N];
            let mut k6 = [0.0; N];
            let mut k7 = [0.0; N];
            let mut tmp = [0.0; N];

            for i in 0..N {
                tmp[i] = y[i] + hs * A21 * k1[i];
            }
            sys.rhs(t + C2 * hs, &tmp, &mut k2);
            for i in 0..N {
                tmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
            }
            sys.rhs(t + C3 * hs, &tmp, &mut k3);
            for i in 0..N {
                tmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            sys.rhs(t + C4 * hs, &tmp, &mut k4);
            for i in 0..N {
                tmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            sys.rhs(t + C5 * hs, &tmp, &mut k5);
            for i in 0..N {
                tmp[i] = y[i]
                    + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            sys.rhs(t + hs, &tmp, &mut k6);
            let mut y_new = [0.0; N];
            for i in 0..N {
                y_new[i] = y[i]
                    + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            let t_new = if h == remaining { self.t_end } else { t + hs };
            sys.rhs(t_new, &y_new, &mut k7);
            self.stats.evals += 6;

            let mut err = 0.0;
            let mut finite = true;
            for i in 0..N {
                let e = hs
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                let sc = self.scale(y[i], y_new[i]);
                err += (e / sc).powi(2);
                finite &= y_new[i].is_finite() && k7[i].is_finite();
            }
            let err = (err / N as f64).sqrt();

            if finite && err <= 1.0 {
                let mut rcont = [[0.0; N]; 4];
                for i in 0..N {
                    let ydiff = y_new[i] - y[i];
                    let bspl = hs * k1[i] - ydiff;
                    rcont[0][i] = ydiff;
                    rcont[1][i] = bspl;
                    rcont[2][i] = ydiff - hs * k7[i] - bspl;
                    rcont[3][i] = hs
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                            + D7 * k7[i]);
                }
                let step = Step {
                    t0: t,
                    t1: t_new,
                    y0: *y,
                    y1: y_new,
                    f1: k7,
                    rcont,
                };
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                self.h = (h * fac).min(self.opts.h_max);
                self.t = t_new;
                self.y = y_new;
                self.f = k7;
                self.stats.accepted += 1;
                return Ok(step);
            }
            self.stats.rejected += 1;
            let fac = if finite {
                (0.9 * err.powf(-0.2)).clamp(0.1, 1.0)
            } else {
                0.25
            };
            self.h = h * fac;
        }
    }

    /// Integrate to `t_end`, returning the final state.
    pub fn run(&mut self) -> Result<[f64; N]> {
        while !self.finished() {
            self.step()?;
        }
        Ok(self.y)
    }
}

/// Convenience: integrate `sys` from `t0` to `t1`.
pub fn integrate<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    opts: OdeOptions,
) -> Result<[f64; N]> {
    Dopri5::new(sys, t0, y0, t1, opts).run()
}

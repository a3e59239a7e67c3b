//! Closed-form solutions of `s'' + νs' + kcs = k`, `s(0) = 1/ρ₀`,
//! `s'(0) = d₀/ρ₀`, and the threshold classifiers built on them.

use std::f64::consts::PI;

use crate::error::{CtError, Result};
use crate::model::{
    decide, DampingRegime, Diagnostics, EPParams, Outcome, RegimeTag, Verdict,
    DEFAULT_BOUNDARY_TOL,
};

fn check_rho(rho0: f64) -> Result<()> {
    if rho0 > 0.0 && rho0.is_finite() {
        Ok(())
    } else {
        Err(CtError::NonpositiveDensity(rho0))
    }
}

/// `s(t) = (1/c)[1 + A e^{−λ₁ct} + B e^{−λ₂ct}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongSolution {
    pub a: f64,
    pub b: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    c: f64,
}

impl StrongSolution {
    pub fn new(params: &EPParams, rho0: f64, d0: f64) -> Result<Self> {
        check_rho(rho0)?;
        let DampingRegime::Strong {
            lambda1, lambda2, ..
        } = params.expect_regime(RegimeTag::Strong)?
        else {
            unreachable!()
        };
        let c = params.c;
        let gap = (lambda2 - lambda1) * rho0;
        Ok(Self {
            a: (d0 + lambda2 * (c - rho0)) / gap,
            b: -(d0 + lambda1 * (c - rho0)) / gap,
            lambda1,
            lambda2,
            c,
        })
    }

    pub fn s(&self, t: f64) -> f64 {
        let c = self.c;
        (1.0 + self.a * (-self.lambda1 * c * t).exp() + self.b * (-self.lambda2 * c * t).exp()) / c
    }

    pub fn ds(&self, t: f64) -> f64 {
        let c = self.c;
        -(self.a * self.lambda1 * (-self.lambda1 * c * t).exp()
            + self.b * self.lambda2 * (-self.lambda2 * c * t).exp())
    }

    pub fn d2s(&self, t: f64) -> f64 {
        let c = self.c;
        c * (self.a * self.lambda1 * self.lambda1 * (-self.lambda1 * c * t).exp()
            + self.b * self.lambda2 * self.lambda2 * (-self.lambda2 * c * t).exp())
    }

    /// First positive local minimum; requires `A < 0 < B`.
    pub fn extremum_time(&self) -> Option<f64> {
        if !(self.a < 0.0 && self.b > 0.0) {
            return None;
        }
        let ratio = -self.b * self.lambda2 / (self.a * self.lambda1);
        let t = ratio.ln() / ((self.lambda2 - self.lambda1) * self.c);
        (t > 0.0).then_some(t)
    }
}

/// `s(t) = 1/c + [D + (d₀/ρ₀ + Dν/2)t] e^{−νt/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BorderlineSolution {
    /// `1/ρ₀ − 1/c`
    pub d_coef: f64,
    /// Linear coefficient `d₀/ρ₀ + Dν/2`.
    pub e_coef: f64,
    pub t_star: Option<f64>,
    nu: f64,
    c: f64,
}

impl BorderlineSolution {
    pub fn new(params: &EPParams, rho0: f64, d0: f64) -> Result<Self> {
        check_rho(rho0)?;
        params.expect_regime(RegimeTag::Borderline)?;
        let EPParams { nu, c, .. } = *params;
        let d_coef = 1.0 / rho0 - 1.0 / c;
        let e_coef = d0 / rho0 + d_coef * nu / 2.0;
        let denom = 2.0 * d0 + nu * d_coef * rho0;
        let t_star = if d0 < 0.0 && denom < 0.0 {
            Some(4.0 * d0 / (nu * denom))
        } else {
            None
        };
        Ok(Self {
            d_coef,
            e_coef,
            t_star,
            nu,
            c,
        })
    }

    pub fn s(&self, t: f64) -> f64 {
        1.0 / self.c + (self.d_coef + self.e_coef * t) * (-self.nu * t / 2.0).exp()
    }

    pub fn ds(&self, t: f64) -> f64 {
        let h = self.nu / 2.0;
        (self.e_coef - h * (self.d_coef + self.e_coef * t)) * (-h * t).exp()
    }

    pub fn d2s(&self, t: f64) -> f64 {
        let h = self.nu / 2.0;
        (-2.0 * h * self.e_coef + h * h * (self.d_coef + self.e_coef * t)) * (-h * t).exp()
    }
}

/// `s(t) = 1/c + (e^{−νt/2}/c)[c₁ cos μt + c₂ sin μt]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakSolution {
    pub c1: f64,
    pub c2: f64,
    pub mu: f64,
    nu: f64,
    c: f64,
    k: f64,
    d0: f64,
    rho0: f64,
}

/// First local minimum of the weak-damping solution, written as
/// `μt* = β + atan(2μd₀ / (νd₀ + 2k(c − ρ₀)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakExtremum {
    pub t_star: f64,
    pub beta: f64,
    pub mu: f64,
}

impl WeakSolution {
    pub fn new(params: &EPParams, rho0: f64, d0: f64) -> Result<Self> {
        check_rho(rho0)?;
        let DampingRegime::Weak { mu } = params.expect_regime(RegimeTag::Weak)? else {
            unreachable!()
        };
        let EPParams { nu, k, c, .. } = *params;
        let c1 = (c - rho0) / rho0;
        let c2 = (c * d0 / rho0 + nu * (c - rho0) / (2.0 * rho0)) / mu;
        Ok(Self {
            c1,
            c2,
            mu,
            nu,
            c,
            k,
            d0,
            rho0,
        })
    }

    pub fn s(&self, t: f64) -> f64 {
        let (sn, cs) = (self.mu * t).sin_cos();
        1.0 / self.c + (-self.nu * t / 2.0).exp() / self.c * (self.c1 * cs + self.c2 * sn)
    }

    pub fn ds(&self, t: f64) -> f64 {
        let (sn, cs) = (self.mu * t).sin_cos();
        let h = self.nu / 2.0;
        let p = -h * self.c1 + self.mu * self.c2;
        let q = -h * self.c2 - self.mu * self.c1;
        (-h * t).exp() / self.c * (p * cs + q * sn)
    }

    pub fn d2s(&self, t: f64) -> f64 {
        // from the equation itself
        self.k - self.k * self.c * self.s(t) - self.nu * self.ds(t)
    }

    /// `νd₀ + 2k(c − ρ₀)`
    fn q_denominator(&self) -> f64 {
        self.nu * self.d0 + 2.0 * self.k * (self.c - self.rho0)
    }

    /// `None` only at the equilibrium `ρ₀ = c`, `d₀ = 0`.
    pub fn extremum(&self) -> Option<WeakExtremum> {
        if self.c1 == 0.0 && self.c2 == 0.0 {
            return None;
        }
        let qd = self.q_denominator();
        let d0 = self.d0;
        let (beta, atan) = if qd == 0.0 {
            (PI, (PI / 2.0).copysign(d0))
        } else {
            let atan = (2.0 * self.mu * d0 / qd).atan();
            let beta = if qd > 0.0 {
                PI
            } else if d0 < 0.0 {
                0.0
            } else {
                // d₀ > 0, or d₀ = 0 where t = 0 is itself a minimum and the
                // next one is a full period later
                2.0 * PI
            };
            (beta, atan)
        };
        Some(WeakExtremum {
            t_star: (beta + atan) / self.mu,
            beta,
            mu: self.mu,
        })
    }

    /// Value of `s` at a local minimum `τ`, from the amplitude of the
    /// oscillation.
    pub fn min_value(&self, tau: f64) -> f64 {
        let amp = self.mu * self.c1.hypot(self.c2) / (self.k * self.c).sqrt();
        1.0 / self.c - (-self.nu * tau / 2.0).exp() * amp / self.c
    }
}

/// Closed-form solution for any regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactSolution {
    Strong(StrongSolution),
    Borderline(BorderlineSolution),
    Weak(WeakSolution),
}

impl ExactSolution {
    pub fn new(params: &EPParams, rho0: f64, d0: f64) -> Result<Self> {
        Ok(match params.tag() {
            RegimeTag::Strong => Self::Strong(StrongSolution::new(params, rho0, d0)?),
            RegimeTag::Borderline => Self::Borderline(BorderlineSolution::new(params, rho0, d0)?),
            RegimeTag::Weak => Self::Weak(WeakSolution::new(params, rho0, d0)?),
        })
    }

    pub fn s(&self, t: f64) -> f64 {
        match self {
            Self::Strong(x) => x.s(t),
            Self::Borderline(x) => x.s(t),
            Self::Weak(x) => x.s(t),
        }
    }

    pub fn ds(&self, t: f64) -> f64 {
        match self {
            Self::Strong(x) => x.ds(t),
            Self::Borderline(x) => x.ds(t),
            Self::Weak(x) => x.ds(t),
        }
    }

    pub fn d2s(&self, t: f64) -> f64 {
        match self {
            Self::Strong(x) => x.d2s(t),
            Self::Borderline(x) => x.d2s(t),
            Self::Weak(x) => x.d2s(t),
        }
    }

    /// First positive local minimum of `s`.
    pub fn extremum_time(&self) -> Option<f64> {
        match self {
            Self::Strong(x) => x.extremum_time(),
            Self::Borderline(x) => x.t_star,
            Self::Weak(x) => x.extremum().map(|e| e.t_star),
        }
    }

    /// First root of `s` when `s(t*) ≤ 0`, by bisection on `[0, t*]`.
    pub fn breakdown_time(&self) -> Option<f64> {
        let t_star = self.extremum_time()?;
        if self.s(t_star) > 0.0 {
            return None;
        }
        // s stays above s(0) until its last maximum before t*, then falls
        // monotonically, so [0, t*] holds exactly one sign change
        let (mut a, mut b) = (0.0, t_star);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.s(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }
}

/// Solution of the initial value problem at time `t`.
pub fn s_exact(params: &EPParams, rho0: f64, d0: f64, t: f64) -> Result<f64> {
    Ok(ExactSolution::new(params, rho0, d0)?.s(t))
}

pub fn extremum_time(params: &EPParams, rho0: f64, d0: f64) -> Result<Option<f64>> {
    Ok(ExactSolution::new(params, rho0, d0)?.extremum_time())
}

fn with_times(outcome: Outcome, tag: RegimeTag, sol: &ExactSolution) -> Verdict {
    let t_star = sol.extremum_time();
    let diagnostics = Diagnostics {
        extremum_time: t_star,
        s_min: t_star.map(|t| sol.s(t)),
        breakdown_time: if outcome == Outcome::GlobalSmooth {
            None
        } else {
            sol.breakdown_time()
        },
    };
    Verdict::new(outcome, tag).with_diagnostics(diagnostics)
}

pub fn classify_strong(params: &EPParams, rho0: f64, d0: f64) -> Result<Verdict> {
    classify_strong_tol(params, rho0, d0, DEFAULT_BOUNDARY_TOL)
}

pub fn classify_strong_tol(params: &EPParams, rho0: f64, d0: f64, tol: f64) -> Result<Verdict> {
    let sol = StrongSolution::new(params, rho0, d0)?;
    let EPParams { k, c, .. } = *params;
    let (l1, l2) = (sol.lambda1, sol.lambda2);
    let outcome = if d0.max(d0 + l2 * (c - rho0)) >= 0.0 {
        Outcome::GlobalSmooth
    } else {
        // |Y|^λ₁ ≤ |X|^λ₂, compared in logs
        let x = -(c * l1 * d0 + k * (c - rho0)) / (k * rho0);
        let y = -(c * l2 * d0 + k * (c - rho0)) / (k * rho0);
        let lhs = l2 * x.abs().ln();
        let rhs = l1 * y.abs().ln();
        decide(lhs, rhs, 1f64.max(lhs.abs()).max(rhs.abs()), tol)
    };
    Ok(with_times(outcome, RegimeTag::Strong, &ExactSolution::Strong(sol)))
}

pub fn classify_borderline(params: &EPParams, rho0: f64, d0: f64) -> Result<Verdict> {
    classify_borderline_tol(params, rho0, d0, DEFAULT_BOUNDARY_TOL)
}

pub fn classify_borderline_tol(
    params: &EPParams,
    rho0: f64,
    d0: f64,
    tol: f64,
) -> Result<Verdict> {
    let sol = BorderlineSolution::new(params, rho0, d0)?;
    let EPParams { nu, c, .. } = *params;
    let outcome = if d0.max(d0 + nu / (2.0 * c) * (c - rho0)) >= 0.0 {
        Outcome::GlobalSmooth
    } else {
        let w = 2.0 * c * d0 + nu * (c - rho0);
        let lhs = (-w / (nu * rho0)).ln();
        let rhs = 2.0 * c * d0 / w;
        decide(lhs, rhs, 1f64.max(lhs.abs()).max(rhs.abs()), tol)
    };
    Ok(with_times(outcome, RegimeTag::Borderline, &ExactSolution::Borderline(sol)))
}

pub fn classify_weak(params: &EPParams, rho0: f64, d0: f64) -> Result<Verdict> {
    classify_weak_tol(params, rho0, d0, DEFAULT_BOUNDARY_TOL)
}

pub fn classify_weak_tol(params: &EPParams, rho0: f64, d0: f64, tol: f64) -> Result<Verdict> {
    let sol = WeakSolution::new(params, rho0, d0)?;
    let EPParams { nu, k, c, .. } = *params;
    let outcome = match sol.extremum() {
        None => Outcome::GlobalSmooth,
        Some(ext) => {
            let mu2 = sol.mu * sol.mu;
            let dev = d0 + nu * (c - rho0) / (2.0 * c);
            let lhs = dev * dev;
            let rhs = mu2
                * ((rho0 * rho0 / (c * c)) * (k * c * (nu * ext.t_star).exp() / mu2 - 1.0)
                    + (2.0 * rho0 - c) / c);
            decide(lhs, rhs, lhs.abs().max(rhs.abs()), tol)
        }
    };
    Ok(with_times(outcome, RegimeTag::Weak, &ExactSolution::Weak(sol)))
}

pub fn classify(params: &EPParams, rho0: f64, d0: f64) -> Result<Verdict> {
    classify_tol(params, rho0, d0, DEFAULT_BOUNDARY_TOL)
}

pub fn classify_tol(params: &EPParams, rho0: f64, d0: f64, tol: f64) -> Result<Verdict> {
    match params.tag() {
        RegimeTag::Strong => classify_strong_tol(params, rho0, d0, tol),
        RegimeTag::Borderline => classify_borderline_tol(params, rho0, d0, tol),
        RegimeTag::Weak => classify_weak_tol(params, rho0, d0, tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(nu: f64, k: f64, c: f64) -> EPParams {
        EPParams::new(nu, k, c).unwrap()
    }

    #[test]
    fn strong_examples() {
        let params = p(3.0, 1.0, 1.0);
        let v = classify_strong(&params, 1.0, 0.5).unwrap();
        assert_eq!(v.outcome, Outcome::GlobalSmooth);
        let v = classify_strong(&params, 1.0, -10.0).unwrap();
        assert_eq!(v.outcome, Outcome::FiniteTimeBreakdown);
        let t_c = v.diagnostics.breakdown_time.unwrap();
        assert!(t_c > 0.0 && s_exact(&params, 1.0, -10.0, t_c).unwrap().abs() < 1e-12);
        let v = classify_strong(&params, 1.0, 0.0).unwrap();
        assert_eq!(v.outcome, Outcome::GlobalSmooth);
    }

    #[test]
    fn strong_example_magnitudes() {
        // ρ₀ = c: X = −λ₁d₀, Y = −λ₂d₀
        let DampingRegime::Strong { lambda1, lambda2, .. } = p(3.0, 1.0, 1.0).regime() else {
            panic!()
        };
        let lhs = (10.0 * lambda2).powf(lambda1);
        let rhs = (10.0 * lambda1).powf(lambda2);
        assert!((lhs - 3.48).abs() < 5e-3, "{lhs}");
        assert!((rhs - 33.4).abs() < 5e-2, "{rhs}");
    }

    #[test]
    fn strong_coefficients_match_initial_data() {
        let params = p(3.0, 1.0, 1.0);
        for (rho0, d0) in [(0.3, -2.0), (2.5, 1.0), (1.0, -10.0)] {
            let sol = StrongSolution::new(&params, rho0, d0).unwrap();
            assert!((sol.s(0.0) - 1.0 / rho0).abs() < 1e-12);
            assert!((-(sol.a * sol.lambda1 + sol.b * sol.lambda2) - d0 / rho0).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_second_derivative_at_extremum() {
        let params = p(3.0, 1.0, 1.0);
        let sol = StrongSolution::new(&params, 1.0, -10.0).unwrap();
        let t = sol.extremum_time().unwrap();
        let c = params.c;
        let expect =
            -(sol.lambda2 - sol.lambda1) * sol.a * c * sol.lambda1 * (-sol.lambda1 * c * t).exp();
        assert!((sol.d2s(t) - expect).abs() <= 1e-8 * expect.abs());
        assert!(sol.ds(t).abs() < 1e-12);
    }

    #[test]
    fn borderline_examples() {
        let params = p(2.0, 1.0, 1.0);
        assert_eq!(
            classify_borderline(&params, 1.0, 0.0).unwrap().outcome,
            Outcome::GlobalSmooth
        );
        // d₀ = −ν/2 is the threshold only as ρ₀ → 0; at ρ₀ = c the solution
        // is 1 − te^{−t} with minimum 1 − 1/e
        let v = classify_borderline(&params, 1.0, -1.0).unwrap();
        assert_eq!(v.outcome, Outcome::GlobalSmooth);
        assert!((v.diagnostics.s_min.unwrap() - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert!(classify_borderline(&params, 1e-3, -1.5).unwrap().breaks_down());
        assert_eq!(
            classify_borderline(&params, 2.0, -0.1).unwrap().outcome,
            Outcome::GlobalSmooth
        );
    }

    #[test]
    fn borderline_extremum() {
        let params = p(2.0, 1.0, 1.0);
        let sol = BorderlineSolution::new(&params, 2.0, -0.4).unwrap();
        let t = sol.t_star.unwrap();
        // 4d₀/(ν(2d₀ + νDρ₀)) with D = −1/2
        assert!((t - (-1.6) / (2.0 * (-0.8 - 2.0))).abs() < 1e-15);
        assert!(sol.ds(t).abs() < 1e-14);
        assert!(sol.d2s(t) > 0.0);
        assert_eq!(sol.s(0.0), 1.0 / 2.0);
    }

    #[test]
    fn weak_examples() {
        let params = p(1.0, 1.0, 1.0);
        assert_eq!(classify_weak(&params, 1.0, 0.0).unwrap().outcome, Outcome::GlobalSmooth);
        let mu = 3f64.sqrt() / 2.0;
        let s_star = (PI / (2.0 * mu)).exp() + 1.0;
        assert_eq!(
            classify_weak(&params, 1.0 / s_star, 0.0).unwrap().outcome,
            Outcome::Boundary
        );
        assert_eq!(
            classify_weak(&params, 0.05, 0.0).unwrap().outcome,
            Outcome::FiniteTimeBreakdown
        );
    }

    #[test]
    fn weak_extremum_satisfies_tangent_relation() {
        let params = p(1.0, 1.0, 1.0);
        let sol = WeakSolution::new(&params, 2.0, -0.5).unwrap();
        let ext = sol.extremum().unwrap();
        let mu = ext.mu;
        let qd = -0.5 + 2.0 * (1.0 - 2.0);
        assert!(((mu * ext.t_star).tan() - 2.0 * mu * -0.5 / qd).abs() < 1e-9);
        assert!(sol.ds(ext.t_star).abs() < 1e-12);
        assert!(sol.d2s(ext.t_star) > 0.0);
        assert!((sol.min_value(ext.t_star) - sol.s(ext.t_star)).abs() < 1e-12);
    }

    #[test]
    fn weak_beta_table() {
        let params = p(1.0, 1.0, 1.0);
        let beta = |rho0: f64, d0: f64| WeakSolution::new(&params, rho0, d0).unwrap().extremum().unwrap().beta;
        // νd₀ + 2k(c − ρ₀) with ν = k = c = 1
        assert_eq!(beta(2.0, -0.5), 0.0);
        assert_eq!(beta(0.5, -0.5), PI);
        assert_eq!(beta(2.0, 0.5), 2.0 * PI);
        assert_eq!(beta(2.0, 0.0), 2.0 * PI);
        assert_eq!(beta(0.5, 0.0), PI);
        // degenerate denominator
        let e = WeakSolution::new(&params, 1.5, 1.0).unwrap().extremum().unwrap();
        assert_eq!(e.beta, PI);
        assert!((e.t_star * e.mu - 1.5 * PI).abs() < 1e-15);
        let e = WeakSolution::new(&params, 0.5, -1.0).unwrap().extremum().unwrap();
        assert!((e.t_star * e.mu - 0.5 * PI).abs() < 1e-15);
        assert!(WeakSolution::new(&params, 1.0, 0.0).unwrap().extremum().is_none());
    }

    #[test]
    fn initial_values() {
        for params in [p(3.0, 1.0, 1.0), p(2.0, 1.0, 1.0), p(1.0, 1.0, 1.0)] {
            for (rho0, d0) in [(0.4, -1.0), (3.0, 2.0)] {
                let sol = ExactSolution::new(&params, rho0, d0).unwrap();
                assert!((sol.s(0.0) - 1.0 / rho0).abs() < 1e-14);
                assert!((sol.ds(0.0) - d0 / rho0).abs() < 1e-13);
            }
            for t in [0.0, 1.0, 50.0] {
                assert!((s_exact(&params, params.c, 0.0, t).unwrap() - 1.0 / params.c).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dispatch_and_errors() {
        assert_eq!(
            classify(&p(2.0, 1.0, 1.0), 1.0, 1.0).unwrap().outcome,
            Outcome::GlobalSmooth
        );
        assert!(matches!(
            classify_weak(&p(3.0, 1.0, 1.0), 1.0, 0.0),
            Err(CtError::RegimeMismatch { .. })
        ));
        assert!(matches!(
            classify(&p(3.0, 1.0, 1.0), 0.0, 0.0),
            Err(CtError::NonpositiveDensity(_))
        ));
        assert_eq!(extremum_time(&p(3.0, 1.0, 1.0), 1.0, 0.5).unwrap(), None);
    }
}

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{CtError, Result};

/// Far-field decay hypothesis `⟨α⟩^{2+δ} ρ₀(α) ≤ decay_bound`, used to bound
/// the mass and moments outside the sampled grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayCertificate {
    pub delta: f64,
    pub decay_bound: f64,
    pub quad_tol: f64,
}

impl DecayCertificate {
    pub fn from_json(text: &str) -> Result<Self> {
        let cert: Self = serde_json::from_str(text)?;
        cert.validate()?;
        Ok(cert)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta", self.delta),
            ("decay_bound", self.decay_bound),
            ("quad_tol", self.quad_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CtError::InvalidField(format!("{name} must be finite and > 0")));
            }
        }
        Ok(())
    }
}

/// Columns of a field CSV before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldRows {
    pub alpha: Vec<f64>,
    pub rho0: Vec<f64>,
    pub u0: Vec<f64>,
    pub d0: Option<Vec<f64>>,
}

/// Parse `alpha,rho0,u0[,d0]`.
pub fn parse_field_csv<R: Read>(r: R) -> Result<FieldRows> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_d0 = match names.as_slice() {
        ["alpha", "rho0", "u0"] => false,
        ["alpha", "rho0", "u0", "d0"] => true,
        _ => {
            return Err(CtError::Parse(format!(
                "expected header alpha,rho0,u0[,d0], got {names:?}"
            )))
        }
    };
    let mut rows = FieldRows {
        d0: has_d0.then(Vec::new),
        ..FieldRows::default()
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(CtError::Parse(format!("row {}: wrong field count", i + 1)));
        }
        let mut vals = [0.0; 4];
        for (j, f) in rec.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| CtError::Parse(format!("row {}: bad number {f:?}", i + 1)))?;
            if !v.is_finite() {
                return Err(CtError::Parse(format!("row {}: non-finite value", i + 1)));
            }
            vals[j] = v;
        }
        rows.alpha.push(vals[0]);
        rows.rho0.push(vals[1]);
        rows.u0.push(vals[2]);
        if let Some(d) = rows.d0.as_mut() {
            d.push(vals[3]);
        }
    }
    Ok(rows)
}

/// Trapezoid weights on a strictly increasing grid.
pub fn trapezoid_weights(alpha: &[f64]) -> Vec<f64> {
    let n = alpha.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = alpha[i + 1] - alpha[i];
        w[i] += h / 2.0;
        w[i + 1] += h / 2.0;
    }
    w
}

/// Second-order derivative estimate: three-point centred formula for a
/// nonuniform grid, one-sided three-point formulas at the ends.
pub fn centered_differences(alpha: &[f64], u: &[f64]) -> Vec<f64> {
    let n = alpha.len();
    assert!(n >= 3 && u.len() == n);
    let three = |x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64, at: f64| {
        // derivative of the quadratic through three points, evaluated at `at`
        let l0 = (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1));
        l0 * y0 + l1 * y1 + l2 * y2
    };
    (0..n)
        .map(|i| {
            let j = i.clamp(1, n - 2);
            three(
                alpha[j - 1],
                alpha[j],
                alpha[j + 1],
                u[j - 1],
                u[j],
                u[j + 1],
                alpha[i],
            )
        })
        .collect()
}

/// `E₀(α_i) = (α_i + 1)M₀ − ∫βρ₀ − 2F_i` where `F_i` is the running mass
/// with half weight on the current node. With trapezoid weights this makes
/// `Σ w E₀ ρ₀` vanish up to roundoff.
pub fn compute_e0(alpha: &[f64], rho0: &[f64], w: &[f64]) -> Vec<f64> {
    let m0: f64 = w.iter().zip(rho0).map(|(w, r)| w * r).sum();
    let mx: f64 = (0..alpha.len()).map(|i| w[i] * rho0[i] * alpha[i]).sum();
    let mut below = 0.0;
    let mut out = Vec::with_capacity(alpha.len());
    for i in 0..alpha.len() {
        let own = w[i] * rho0[i];
        let f = below + own / 2.0;
        out.push((alpha[i] + 1.0) * m0 - mx - 2.0 * f);
        below += own;
    }
    out
}

/// `E₀(α_i) = Σ_j w_j [−sgn(α_i − α_j) + (α_i − α_j)] ρ₀(α_j)`, quadratic cost.
pub fn compute_e0_direct(alpha: &[f64], rho0: &[f64], w: &[f64]) -> Vec<f64> {
    alpha
        .iter()
        .map(|&a| {
            (0..alpha.len())
                .map(|j| {
                    let diff = a - alpha[j];
                    let sgn = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    w[j] * (-sgn + diff) * rho0[j]
                })
                .sum()
        })
        .collect()
}

/// Initial data on a finite α-grid with its moments and `E₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationField {
    pub alpha: Vec<f64>,
    pub rho0: Vec<f64>,
    pub u0: Vec<f64>,
    pub d0: Vec<f64>,
    pub weights: Vec<f64>,
    pub m0: f64,
    pub m1: f64,
    /// `∫ β ρ₀(β) dβ`
    pub mx: f64,
    pub e0: Vec<f64>,
    pub certificate: DecayCertificate,
    /// Bound on what the grid misses beyond its ends.
    pub tail_estimate: f64,
    /// Richardson estimate of the quadrature error against the half grid.
    pub quad_error: f64,
}

impl AggregationField {
    /// Validate and build. A missing `d0` is estimated from `u0`.
    pub fn new(rows: FieldRows, certificate: DecayCertificate) -> Result<Self> {
        certificate.validate()?;
        let FieldRows {
            alpha,
            rho0,
            u0,
            d0,
        } = rows;
        let n = alpha.len();
        if n < 3 {
            return Err(CtError::InvalidField(format!("need at least 3 grid points, got {n}")));
        }
        if rho0.len() != n || u0.len() != n || d0.as_ref().is_some_and(|d| d.len() != n) {
            return Err(CtError::InvalidField("column lengths differ".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&alpha) || !finite(&rho0) || !finite(&u0) || !d0.as_deref().is_none_or(finite)
        {
            return Err(CtError::InvalidField("non-finite value".into()));
        }
        if let Some(i) = (1..n).find(|&i| !(alpha[i] > alpha[i - 1])) {
            return Err(CtError::InvalidField(format!(
                "alpha not strictly increasing at row {}",
                i + 1
            )));
        }
        if let Some(i) = rho0.iter().position(|&r| !(r > 0.0)) {
            return Err(CtError::InvalidField(format!(
                "rho0 must be positive, row {} has {}",
                i + 1,
                rho0[i]
            )));
        }
        let DecayCertificate {
            delta,
            decay_bound,
            quad_tol,
        } = certificate;
        for i in 0..n {
            let weight = (1.0 + alpha[i] * alpha[i]).powf((2.0 + delta) / 2.0);
            if weight * rho0[i] > decay_bound * (1.0 + 1e-12) {
                return Err(CtError::InvalidField(format!(
                    "decay bound violated at alpha = {}: {:e} > {:e}",
                    alpha[i],
                    weight * rho0[i],
                    decay_bound
                )));
            }
        }
        let d0 = d0.unwrap_or_else(|| centered_differences(&alpha, &u0));
        let weights = trapezoid_weights(&alpha);
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let rho_w: Vec<f64> = weights.iter().zip(&rho0).map(|(w, r)| w * r).collect();
        let m0 = rho_w.iter().sum::<f64>();
        let m1 = dot(&rho_w, &u0);
        let mx = dot(&rho_w, &alpha);
        let abs_x: f64 = rho_w.iter().zip(&alpha).map(|(m, a)| m * a.abs()).sum();

        // tails: ∫_L^∞ ρ ≤ B L^{−(1+δ)}/(1+δ),  ∫_L^∞ |x|ρ ≤ B L^{−δ}/δ
        let max_slope = d0.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut tail = 0.0f64;
        for (edge, u_edge) in [(alpha[0], u0[0]), (alpha[n - 1], u0[n - 1])] {
            let l = edge.abs();
            if l <= 1.0 {
                return Err(CtError::TailTooHeavy {
                    estimate: f64::INFINITY,
                    quad_tol,
                });
            }
            let mass = decay_bound * l.powf(-(1.0 + delta)) / (1.0 + delta);
            let first = decay_bound * l.powf(-delta) / delta;
            let momentum = u_edge.abs() * mass + max_slope * first;
            tail = tail.max(mass).max(first).max(momentum).max(3.0 * mass + first);
        }
        if tail > quad_tol {
            return Err(CtError::TailTooHeavy {
                estimate: tail,
                quad_tol,
            });
        }
        if !(m0 > 0.0) {
            return Err(CtError::NonpositiveMass(m0));
        }

        let quad_error = if n >= 5 {
            let half_alpha: Vec<f64> = alpha.iter().step_by(2).copied().collect();
            let idx: Vec<usize> = (0..n).step_by(2).collect();
            let hw = trapezoid_weights(&half_alpha);
            let coarse = |f: &dyn Fn(usize) -> f64| -> f64 {
                idx.iter().zip(&hw).map(|(&i, w)| w * f(i)).sum()
            };
            // the coarse grid may stop one node short; add that sliver back
            let cover = |f: &dyn Fn(usize) -> f64| -> f64 {
                let last = idx[idx.len() - 1];
                let extra = if last < n - 1 {
                    (alpha[n - 1] - alpha[last]) * (f(last) + f(n - 1)) / 2.0
                } else {
                    0.0
                };
                coarse(f) + extra
            };
            let m0c = cover(&|i| rho0[i]);
            let m1c = cover(&|i| rho0[i] * u0[i]);
            ((m0 - m0c).abs() / 3.0).max((m1 - m1c).abs() / 3.0)
        } else {
            f64::INFINITY
        };
        if quad_error > quad_tol {
            log::warn!("quadrature error estimate {quad_error:e} exceeds quad_tol {quad_tol:e}");
        }

        let e0 = compute_e0(&alpha, &rho0, &weights);
        for (i, &e) in e0.iter().enumerate() {
            if (e - m0 * alpha[i]).abs() > m0 + abs_x + 1e-9 * (m0 + abs_x) {
                return Err(CtError::InvalidField(format!(
                    "E0 out of bounds at alpha = {}",
                    alpha[i]
                )));
            }
        }
        Ok(Self {
            alpha,
            rho0,
            u0,
            d0,
            weights,
            m0,
            m1,
            mx,
            e0,
            certificate,
            tail_estimate: tail,
            quad_error,
        })
    }

    pub fn from_csv<R: Read>(r: R, certificate: DecayCertificate) -> Result<Self> {
        Self::new(parse_field_csv(r)?, certificate)
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// `(M₀, M₁)`
    pub fn moments(&self) -> (f64, f64) {
        (self.m0, self.m1)
    }

    /// Weighted sum `Σ w_i g_i`.
    pub fn integrate(&self, g: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| w * g(i)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cert() -> DecayCertificate {
        DecayCertificate {
            delta: 20.0,
            decay_bound: 1e12,
            quad_tol: 1e-9,
        }
    }

    fn gaussian(n: usize, m0: f64, u: impl Fn(f64) -> f64) -> FieldRows {
        let alpha: Vec<f64> = (0..n).map(|i| -10.0 + 20.0 * i as f64 / (n - 1) as f64).collect();
        let rho0 = alpha
            .iter()
            .map(|a| m0 * (-a * a / 2.0f64).exp() / (2.0 * std::f64::consts::PI).sqrt())
            .collect();
        let u0 = alpha.iter().map(|&a| u(a)).collect();
        FieldRows {
            alpha,
            rho0,
            u0,
            d0: None,
        }
    }

    #[test]
    fn even_bump_odd_velocity() {
        let f = AggregationField::new(gaussian(401, 0.2, |a| a.sin()), cert()).unwrap();
        assert!((f.m0 - 0.2).abs() < 1e-12);
        assert!(f.m1.abs() < 1e-15);
        // E₀(0) = 0 at the centre of an even density
        assert_eq!(f.alpha[200], 0.0);
        assert!(f.e0[200].abs() < 1e-15);
    }

    #[test]
    fn doubling_density_doubles_moments() {
        let a = AggregationField::new(gaussian(201, 0.2, |a| 1.0 + a.tanh()), cert()).unwrap();
        let b = AggregationField::new(gaussian(201, 0.4, |a| 1.0 + a.tanh()), cert()).unwrap();
        assert_eq!(2.0 * a.m0, b.m0);
        assert_eq!(2.0 * a.m1, b.m1);
    }

    #[test]
    fn e0_forms_agree() {
        let rows = gaussian(301, 0.7, |_| 0.0);
        let w = trapezoid_weights(&rows.alpha);
        let run = compute_e0(&rows.alpha, &rows.rho0, &w);
        let direct = compute_e0_direct(&rows.alpha, &rows.rho0, &w);
        for (x, y) in run.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-12);
        }
        let wsum: f64 = (0..301).map(|i| w[i] * rows.rho0[i] * run[i]).sum();
        assert!(wsum.abs() < 1e-15);
    }

    #[test]
    fn e0_far_field_limit() {
        let rows = gaussian(401, 0.5, |_| 0.0);
        let f = AggregationField::new(rows, cert()).unwrap();
        let last = f.len() - 1;
        let lim = f.e0[last] - (f.alpha[last] + 1.0) * f.m0 + f.mx;
        assert!((lim + 2.0 * f.m0).abs() < 1e-12);
    }

    #[test]
    fn derivative_estimate_is_second_order() {
        let err = |n: usize| {
            let alpha: Vec<f64> = (0..n).map(|i| (i as f64 / (n - 1) as f64).powi(2) * 3.0).collect();
            let u: Vec<f64> = alpha.iter().map(|a| a.sin()).collect();
            centered_differences(&alpha, &u)
                .iter()
                .zip(&alpha)
                .map(|(d, a)| (d - a.cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(101) / err(201);
        assert!(ratio > 3.5, "{ratio}");
    }

    #[test]
    fn rejects_bad_fields() {
        let mut rows = gaussian(11, 0.2, |_| 0.0);
        rows.rho0[3] = 0.0;
        assert!(matches!(
            AggregationField::new(rows, cert()),
            Err(CtError::InvalidField(_))
        ));
        let mut rows = gaussian(11, 0.2, |_| 0.0);
        rows.alpha.swap(2, 3);
        assert!(AggregationField::new(rows, cert()).is_err());
        let tight = DecayCertificate {
            decay_bound: 1e-3,
            ..cert()
        };
        assert!(AggregationField::new(gaussian(11, 0.2, |_| 0.0), tight).is_err());
        let heavy = DecayCertificate {
            delta: 0.5,
            ..cert()
        };
        assert!(matches!(
            AggregationField::new(gaussian(11, 0.2, |_| 0.0), heavy),
            Err(CtError::TailTooHeavy { .. })
        ));
    }

    #[test]
    fn parses_csv() {
        let rows = parse_field_csv("alpha,rho0,u0\n0,1,2\n1,1,3\n".as_bytes()).unwrap();
        assert_eq!(rows.alpha, vec![0.0, 1.0]);
        assert!(rows.d0.is_none());
        let rows = parse_field_csv("alpha,rho0,u0,d0\n0,1,2,5\n".as_bytes()).unwrap();
        assert_eq!(rows.d0, Some(vec![5.0]));
        assert!(parse_field_csv("alpha,rho\n0,1\n".as_bytes()).is_err());
        assert!(parse_field_csv("alpha,rho0,u0\n0,1\n".as_bytes()).is_err());
        assert!(parse_field_csv("alpha,rho0,u0\n0,x,1\n".as_bytes()).is_err());
        assert!(parse_field_csv("alpha,rho0,u0\n0,inf,1\n".as_bytes()).is_err());
        assert!(DecayCertificate::from_json(r#"{"delta":1,"decay_bound":2,"quad_tol":1e-9}"#).is_ok());
        assert!(DecayCertificate::from_json(r#"{"delta":-1,"decay_bound":2,"quad_tol":1e-9}"#).is_err());
        assert!(DecayCertificate::from_json(r#"{"delta":1}"#).is_err());
    }
}

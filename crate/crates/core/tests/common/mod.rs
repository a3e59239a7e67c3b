#![allow(dead_code)]

use ct_core::aggregation::{AggregationField, DecayCertificate, FieldRows};

/// Gaussian bump of mass `m0` on `[-10, 10]` with `n` nodes and velocity
/// `u(α) = (u0, u0')`.
pub fn gaussian_field(n: usize, m0: f64, u: impl Fn(f64) -> (f64, f64)) -> AggregationField {
    let alpha: Vec<f64> = (0..n)
        .map(|i| -10.0 + 20.0 * i as f64 / (n - 1) as f64)
        .collect();
    let rho0 = alpha
        .iter()
        .map(|a| m0 * (-a * a / 2.0f64).exp() / (2.0 * std::f64::consts::PI).sqrt())
        .collect();
    let (u0, d0) = alpha.iter().map(|&a| u(a)).unzip();
    AggregationField::new(
        FieldRows {
            alpha,
            rho0,
            u0,
            d0: Some(d0),
        },
        DecayCertificate {
            delta: 20.0,
            decay_bound: 1e10,
            quad_tol: 1e-9,
        },
    )
    .unwrap()
}

pub fn smooth_velocity(a: f64) -> (f64, f64) {
    (0.1 * (1.0 + a.tanh()), 0.1 / a.cosh().powi(2))
}

pub fn steep_velocity(a: f64) -> (f64, f64) {
    let w = 0.25;
    (-(a / w).tanh(), -1.0 / (w * (a / w).cosh().powi(2)))
}

/// Breakdown test for mass `m0` written directly in the aggregation
/// variables; `None` when the point sits within `1e-12` of the threshold.
pub fn direct_breakdown(m0: f64, rho: f64, d: f64) -> Option<bool> {
    let decide = |lhs: f64, rhs: f64| {
        let scale = 1f64.max(lhs.abs()).max(rhs.abs());
        if (lhs - rhs).abs() <= 1e-12 * scale {
            None
        } else {
            Some(lhs > rhs)
        }
    };
    if m0 < 0.25 {
        let root = (1.0 - 4.0 * m0).sqrt();
        let (l1, l2) = ((1.0 - root) / m0, (1.0 + root) / m0);
        if d.max(d + l2 * (0.5 * m0 - rho)) >= 0.0 {
            return Some(false);
        }
        let a2 = ((0.5 * m0 * l2 * d + m0 - 2.0 * rho) / (2.0 * rho)).abs();
        let a1 = ((0.5 * m0 * l1 * d + m0 - 2.0 * rho) / (2.0 * rho)).abs();
        // |a2|^l1 <= |a1|^l2
        decide(l2 * a1.ln(), l1 * a2.ln())
    } else if m0 == 0.25 {
        let w = m0 * d + 0.5 * m0 - rho;
        if d.max(w) >= 0.0 {
            return Some(false);
        }
        decide((-w / rho).ln(), m0 * d / w)
    } else {
        let q = m0 - 0.25;
        let qd = d + 2.0 * m0 - 4.0 * rho;
        let beta = if qd > 0.0 {
            std::f64::consts::PI
        } else if d < 0.0 {
            0.0
        } else {
            2.0 * std::f64::consts::PI
        };
        let atan = if qd == 0.0 {
            std::f64::consts::FRAC_PI_2.copysign(d)
        } else {
            (2.0 * d * q.sqrt() / qd).atan()
        };
        let t_star = (beta + atan) / q.sqrt();
        let lhs = (d + (0.5 * m0 - rho) / m0).powi(2);
        let rhs = q
            * (4.0 * rho * rho / (m0 * m0) * (m0 * t_star.exp() / q - 1.0)
                + (4.0 * rho - m0) / m0);
        decide(lhs, rhs)
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{direct_breakdown, gaussian_field, smooth_velocity, steep_velocity};
use ct_core::aggregation::{
    audit_frame, classify_aggregation, ep_params_of_mass, gamma, simulate, AuditTolerances,
    SimOptions, SimStatus,
};
use ct_core::characteristic::{
    backward_recrossing, integrate_linear, integrate_nonlinear, regime_horizon, LinearOptions,
    NonlinearOptions, Terminal, DEFAULT_EVENT_TOL,
};
use ct_core::curves::{integrate_q, s_star, Branch, CurveSet, DEFAULT_CURVE_TOL};
use ct_core::explicit::{classify, ExactSolution};
use ct_core::grid::GridSpec;
use ct_core::verify::{verify_grid, VerifyOptions};
use ct_core::{EPParams, Outcome, RegimeTag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn p(nu: f64, k: f64, c: f64) -> EPParams {
    EPParams::new(nu, k, c).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const STRONG_SETS: [(f64, f64, f64); 5] = [
    (3.0, 1.0, 1.0),
    (5.0, 1.0, 2.0),
    (2.1, 1.0, 1.0),
    (4.0, 2.0, 1.0),
    (10.0, 3.0, 0.5),
];

fn three_way_agreement() -> Check {
    let mut parts = vec![];
    for (nu, k, c) in [(3.0, 1.0, 1.0), (2.0, 1.0, 1.0), (1.0, 1.0, 1.0)] {
        let params = p(nu, k, c);
        let curves = CurveSet::build(&params, DEFAULT_CURVE_TOL, None).map_err(|e| e.to_string())?;
        let (report, _) = verify_grid(&params, &curves, &GridSpec::default(), &VerifyOptions::default())
            .map_err(|e| e.to_string())?;
        ensure(report.passed(), || format!("{:?}: {report:?}", params.tag()))?;
        parts.push(format!(
            "{:?} {}/{} agree, {} excluded",
            params.tag(),
            report.n_agree,
            report.n_points,
            report.n_boundary_excluded
        ));
    }
    Ok(parts.join("; "))
}

fn asymptotic_slopes() -> Check {
    let mut worst_strong: f64 = 0.0;
    for (nu, k, c) in STRONG_SETS {
        let params = p(nu, k, c);
        let curve = integrate_q(&params, Branch::Qa, None, DEFAULT_CURVE_TOL).map_err(|e| e.to_string())?;
        let want = (nu + (nu * nu - 4.0 * k * c).sqrt()) / 2.0;
        let err = (curve.asymptotic_slope.unwrap() - want).abs();
        ensure(err <= 1e-3, || format!("Qa {params:?}: error {err:e}"))?;
        worst_strong = worst_strong.max(err);
    }
    let mut worst_border: f64 = 0.0;
    for (nu, k, c) in [(2.0, 1.0, 1.0), (1.0, 2.0, 0.125), (0.5, 1.0, 1.0 / 16.0)] {
        let params = p(nu, k, c);
        let curve = integrate_q(&params, Branch::Qb, None, DEFAULT_CURVE_TOL).map_err(|e| e.to_string())?;
        let err = (curve.asymptotic_slope.unwrap() - nu / 2.0).abs();
        ensure(err <= 1e-2, || format!("Qb {params:?}: error {err:e}"))?;
        worst_border = worst_border.max(err);
    }
    Ok(format!("max error strong {worst_strong:.2e}, borderline {worst_border:.2e}"))
}

fn s_star_dual() -> Check {
    let sets = [
        (1.0, 1.0, 1.0),
        (0.5, 2.0, 1.0),
        (0.1, 1.0, 1.0),
        (1.0, 2.0, 0.5),
        (1.5, 1.0, 1.0),
        (0.2, 0.5, 3.0),
        (1.0, 4.0, 1.0),
        (0.8, 1.0, 0.5),
        (1.9, 1.0, 1.0),
        (0.3, 3.0, 2.0),
    ];
    let mut worst: f64 = 0.0;
    for (nu, k, c) in sets {
        let params = p(nu, k, c);
        ensure(params.tag() == RegimeTag::Weak, || format!("{params:?} not weak"))?;
        let formula = s_star(&params).map_err(|e| e.to_string())?;
        let (_, traj) = backward_recrossing(&params, DEFAULT_EVENT_TOL).map_err(|e| e.to_string())?;
        let err = (formula - traj).abs();
        ensure(err <= 1e-6, || format!("{params:?}: {formula} vs {traj}"))?;
        worst = worst.max(err);
    }
    let unit = s_star(&p(1.0, 1.0, 1.0)).unwrap();
    let want = (std::f64::consts::PI / 3f64.sqrt()).exp() + 1.0;
    ensure((unit - want).abs() <= 1e-12 && (unit - 7.1337).abs() < 1e-4, || {
        format!("s*(1,1,1) = {unit}")
    })?;
    Ok(format!("max |formula - trajectory| {worst:.2e}; s*(1,1,1) = {unit:.6}"))
}

fn random_params(rng: &mut ChaCha8Rng, regime: usize) -> EPParams {
    let k = rng.gen_range(0.5..2.0);
    let c = rng.gen_range(0.5..2.0);
    let crit = 2.0 * f64::sqrt(k * c);
    let nu = match regime {
        0 => crit * rng.gen_range(1.1..3.0),
        1 => crit,
        _ => crit * rng.gen_range(0.05..0.9),
    };
    p(nu, k, c)
}

fn exact_solution_residuals() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let params = random_params(&mut rng, i % 3);
        let rho0 = rng.gen_range(0.05..4.0);
        let d0 = rng.gen_range(-6.0..2.0);
        let sol = ExactSolution::new(&params, rho0, d0).map_err(|e| e.to_string())?;
        ensure(
            (sol.s(0.0) - 1.0 / rho0).abs() <= 1e-12 * (1.0 / rho0)
                && (sol.ds(0.0) - d0 / rho0).abs() <= 1e-12 * (1.0 + (d0 / rho0).abs()),
            || format!("initial data {params:?} {rho0} {d0}"),
        )?;
        let rate = params.nu.max((params.k * params.c).sqrt()).max(1.0);
        let h = 2e-3 / rate;
        let end = sol.breakdown_time().unwrap_or(10.0).min(10.0);
        let t = rng.gen_range(h..(end - h).max(2.0 * h));
        let (sm, s0, sp) = (sol.s(t - h), sol.s(t), sol.s(t + h));
        let fd = (sp - 2.0 * s0 + sm) / (h * h);
        let ds = sol.ds(t);
        let rhs = -params.nu * ds + params.k * (1.0 - params.c * s0);
        let scale = 1.0 + fd.abs() + (params.nu * ds).abs() + params.k * (1.0 + (params.c * s0).abs());
        let res = (fd - rhs).abs() / scale;
        ensure(res <= 1e-6, || format!("{params:?} {rho0} {d0} t={t}: residual {res:e}"))?;
        worst = worst.max(res);
    }
    let mut worst_root: f64 = 0.0;
    let mut n_roots = 0;
    while n_roots < 300 {
        let params = random_params(&mut rng, n_roots % 3);
        let rho0 = rng.gen_range(0.05..4.0);
        let d0 = rng.gen_range(-30.0..-1.0);
        let sol = ExactSolution::new(&params, rho0, d0).unwrap();
        let Some(root) = sol.breakdown_time() else { continue };
        let traj = integrate_linear(&params, -d0 / rho0, 1.0 / rho0, 2.0 * root + 1.0, &LinearOptions::default());
        let t_c = traj.terminal.breakdown_time().ok_or_else(|| format!("{params:?} no event"))?;
        let err = (t_c - root).abs();
        ensure(err <= 1e-9, || format!("{params:?} {rho0} {d0}: {t_c} vs {root}"))?;
        worst_root = worst_root.max(err);
        n_roots += 1;
    }
    Ok(format!("max residual {worst:.2e}; max root error {worst_root:.2e} over {n_roots} roots"))
}

fn riccati_edge() -> Check {
    for (nu, k, c) in STRONG_SETS {
        let params = p(nu, k, c);
        let lm = -(nu + params.discriminant().sqrt()) / 2.0;
        let opts = NonlinearOptions::default();
        let below = integrate_nonlinear(&params, 1e-12, lm - 0.01, 200.0, &opts).map_err(|e| e.to_string())?;
        ensure(matches!(below.terminal, Terminal::DBlewDown { .. }), || {
            format!("{params:?} below: {:?}", below.terminal)
        })?;
        let above = integrate_nonlinear(&params, 1e-12, lm + 0.01, 200.0, &opts).map_err(|e| e.to_string())?;
        ensure(matches!(above.terminal, Terminal::Completed { .. }), || {
            format!("{params:?} above: {:?}", above.terminal)
        })?;
    }
    Ok("5 strong sets split at the Riccati threshold".into())
}

fn aggregation_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m0 = rng.gen_range(0.26..5.0);
        let g = gamma(m0).map_err(|e| e.to_string())?;
        let s = s_star(&ep_params_of_mass(m0).unwrap()).unwrap();
        let rel = (g - s).abs() / s;
        ensure(rel <= 1e-12, || format!("M0={m0}: {g} vs {s}"))?;
        worst = worst.max(rel);
    }
    let g = gamma(0.5).unwrap();
    let exact = 4.0 * (1.0 + std::f64::consts::PI.exp());
    ensure((g - exact).abs() <= 1e-12 * exact && (g - 96.5628).abs() < 1e-4, || {
        format!("gamma(1/2) = {g}")
    })?;
    let mut decided = 0;
    for i in 0..1000 {
        let m0 = match i % 3 {
            0 => rng.gen_range(0.01..0.2499),
            1 => 0.25,
            _ => rng.gen_range(0.2501..5.0),
        };
        let rho = rng.gen_range(0.001..4.0);
        let d = rng.gen_range(-6.0..2.0);
        let general = classify(&ep_params_of_mass(m0).unwrap(), rho, d).map_err(|e| e.to_string())?;
        let via = classify_aggregation(m0, rho, d).map_err(|e| e.to_string())?;
        ensure(general == via, || format!("M0={m0} {rho} {d}: substitution differs"))?;
        if let Some(b) = direct_breakdown(m0, rho, d) {
            if general.outcome != Outcome::Boundary {
                ensure(b == general.breaks_down(), || format!("M0={m0} rho={rho} d={d}"))?;
                decided += 1;
            }
        }
    }
    Ok(format!("gamma vs s* max rel {worst:.1e}; gamma(1/2) = {g:.6}; {decided}/1000 decided points agree"))
}

fn simulation_audits() -> Check {
    let field = gaussian_field(2001, 0.2, smooth_velocity);
    for i in 0..field.len() {
        let v = classify_aggregation(field.m0, field.rho0[i], field.d0[i]).unwrap();
        ensure(v.outcome == Outcome::GlobalSmooth, || format!("particle {i} not smooth"))?;
    }
    let run = simulate(&field, &SimOptions::uniform(20.0, 21)).map_err(|e| e.to_string())?;
    ensure(run.status == SimStatus::Completed, || format!("{:?}", run.status))?;
    let tol = AuditTolerances::for_field(&field);
    let (mut mass, mut mom, mut em) = (0.0f64, 0.0f64, 0.0f64);
    let mut slope_coarse: f64 = 0.0;
    for frame in &run.frames {
        let a = audit_frame(frame, &field, &tol);
        ensure(a.mass_ok && a.momentum_ok && a.e_moment_ok, || format!("{a:?}"))?;
        mass = mass.max(a.mass.max(a.mass_transport));
        mom = mom.max(a.momentum);
        em = em.max(a.e_moment);
        slope_coarse = slope_coarse.max(a.slope_consistency);
    }
    let fine = gaussian_field(4001, 0.2, smooth_velocity);
    let run_fine = simulate(&fine, &SimOptions::uniform(20.0, 21)).map_err(|e| e.to_string())?;
    let slope_fine = run_fine
        .frames
        .iter()
        .map(|f| audit_frame(f, &fine, &tol).slope_consistency)
        .fold(0.0, f64::max);
    let order = (slope_coarse / slope_fine).log2();
    ensure(order > 1.8 && order < 2.2, || {
        format!("slope consistency {slope_coarse:e} -> {slope_fine:e}, order {order}")
    })?;

    let steep = gaussian_field(2001, 0.2, steep_velocity);
    let run = simulate(&steep, &SimOptions::uniform(10.0, 11)).map_err(|e| e.to_string())?;
    let SimStatus::BreakdownDetected { t_c, .. } = run.status else {
        return Err(format!("steep field: {:?}", run.status));
    };
    let params = ep_params_of_mass(steep.m0).unwrap();
    let oracle = (0..steep.len())
        .filter_map(|i| {
            integrate_nonlinear(&params, steep.rho0[i], steep.d0[i], 10.0, &NonlinearOptions::default())
                .ok()?
                .terminal
                .breakdown_time()
        })
        .fold(f64::INFINITY, f64::min);
    let rel = (t_c - oracle).abs() / oracle;
    ensure(rel <= 1e-4, || format!("t_c {t_c} vs oracle {oracle}"))?;
    Ok(format!(
        "mass {mass:.1e}, momentum {mom:.1e}, E-moment {em:.1e}, slope order {order:.2}, t_c rel err {rel:.1e}"
    ))
}

fn sigma_containment() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = f64::NEG_INFINITY;
    for params in [p(3.0, 1.0, 1.0), p(2.0, 1.0, 1.0), p(1.0, 1.0, 1.0)] {
        let set = CurveSet::build(&params, DEFAULT_CURVE_TOL, Some(200.0)).map_err(|e| e.to_string())?;
        let s_hi = set.upper.s_star.unwrap_or(10.0).min(10.0);
        let mut inside = 0;
        while inside < 100 {
            let s0 = rng.gen_range(0.05..s_hi);
            let r0 = rng.gen_range(-5.0..5.0);
            if set.signed_gap(s0, r0).map_err(|e| e.to_string())? > -1e-3 {
                continue;
            }
            inside += 1;
            let traj = integrate_linear(&params, r0, s0, regime_horizon(&params), &LinearOptions::default());
            ensure(matches!(traj.terminal, Terminal::Completed { .. }), || {
                format!("{params:?} ({s0}, {r0}) reached s = 0")
            })?;
            for smp in &traj.samples {
                let gap = set.signed_gap(smp.s, smp.r).map_err(|e| e.to_string())?;
                ensure(gap <= 1e-7, || format!("{params:?} ({s0}, {r0}) exits at t={}", smp.t))?;
                worst = worst.max(gap);
            }
        }
    }
    Ok(format!("300 interior starts stay inside; max gap {worst:.2e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Check, u64); 8] = [
        ("1 three-way classification agreement", three_way_agreement, 60),
        ("2 asymptotic slopes", asymptotic_slopes, 10),
        ("3 s* dual computation", s_star_dual, 5),
        ("4 exact-solution residuals", exact_solution_residuals, 5),
        ("5 Riccati edge", riccati_edge, 5),
        ("6 aggregation identities", aggregation_identities, 5),
        ("7 simulation audits", simulation_audits, 120),
        ("8 invariant-region containment", sigma_containment, 10),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > Duration::from_secs(budget) => {
                Err(format!("{msg}; over budget ({elapsed:.1?} > {budget} s)"))
            }
            other => other,
        };
        match outcome {
            Ok(msg) => println!("PASS criterion {name} [{elapsed:.2?}]: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name} [{elapsed:.2?}]: {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

#![no_main]

use ct_core::curves::{parse_curve_csv, CurveSidecar, ThresholdCurve};
use libfuzzer_sys::fuzz_target;

// Input: sidecar JSON, a NUL byte, then the curve CSV.
fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 16 {
        return;
    }
    let (side, csv) = match data.iter().position(|&b| b == 0) {
        Some(i) => (&data[..i], &data[i + 1..]),
        None => (&b""[..], data),
    };
    if let Ok(rows) = parse_curve_csv(csv) {
        assert!(rows.len() >= 2);
        assert!(rows.windows(2).all(|w| w[0].0 < w[1].0));
    }
    let (Ok(side), Ok(csv)) = (std::str::from_utf8(side), std::str::from_utf8(csv)) else {
        return;
    };
    let Ok(sidecar) = CurveSidecar::from_json(side) else {
        return;
    };
    if let Ok(curve) = ThresholdCurve::from_parts(csv, &sidecar) {
        let _ = curve.eval(0.5 * curve.s_max);
        let _ = curve.to_rho_d();
    }
});

#![no_main]

use ct_core::aggregation::{parse_field_csv, AggregationField, DecayCertificate};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 16 {
        return;
    }
    let Ok(rows) = parse_field_csv(data) else {
        return;
    };
    let cert = DecayCertificate {
        delta: 1.0,
        decay_bound: 1e300,
        quad_tol: 1e300,
    };
    if let Ok(field) = AggregationField::new(rows, cert) {
        assert!(field.m0 > 0.0);
        assert_eq!(field.e0.len(), field.len());
        assert!(field.alpha.windows(2).all(|w| w[0] < w[1]));
    }
});

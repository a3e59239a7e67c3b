#![no_main]

use ct_core::aggregation::DecayCertificate;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cert) = DecayCertificate::from_json(text) {
        assert!(cert.delta > 0.0 && cert.decay_bound > 0.0 && cert.quad_tol > 0.0);
    }
});

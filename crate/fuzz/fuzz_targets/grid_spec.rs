#![no_main]

use ct_core::grid::GridSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(grid) = text.parse::<GridSpec>() {
        assert!(grid.rho0.count >= 2 && grid.d0.count >= 2);
        assert!(grid.rho0.lo > 0.0 && grid.rho0.lo <= grid.rho0.hi);
        // don't materialise huge grids
        if grid.len() <= 10_000 {
            let pts = grid.points();
            assert_eq!(pts.len(), grid.len());
            assert!(pts.iter().all(|(r, d)| r.is_finite() && d.is_finite()));
        }
    }
});

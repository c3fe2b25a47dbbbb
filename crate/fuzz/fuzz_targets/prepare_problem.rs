#![no_main]

use libfuzzer_sys::fuzz_target;
use qsl_cli::parse_config_bytes;
use qsl_cli::problem::prepare;

const MAX_FUZZ_STEPS: usize = 32;

fuzz_target!(|data: &[u8]| {
    let Ok(cfg) = parse_config_bytes(data) else {
        return;
    };
    // Cap the grid so a single input stays cheap.
    let steps = cfg.grid.and_then(|g| g.steps).unwrap_or(MAX_FUZZ_STEPS).min(MAX_FUZZ_STEPS);
    let Ok(cfg) = cfg.with_overrides(Some(steps), None, None) else {
        return;
    };
    if let Ok(p) = prepare(&cfg) {
        assert_eq!(p.grid.len(), steps + 1);
    }
});

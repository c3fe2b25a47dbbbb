#![no_main]

use libfuzzer_sys::fuzz_target;
use qsl_core::bounds::BoundKind;
use qsl_core::verify::Suite;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Some(k) = BoundKind::from_name(s) {
        assert_eq!(k.name(), s);
    }
    if let Some(suite) = Suite::from_name(s) {
        assert_eq!(suite.name(), s);
    }
});

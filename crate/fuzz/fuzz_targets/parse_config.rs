#![no_main]

use libfuzzer_sys::fuzz_target;
use qsl_cli::parse_config_bytes;

fuzz_target!(|data: &[u8]| {
    // Anything that parses must survive a serialise/parse round trip.
    if let Ok(cfg) = parse_config_bytes(data) {
        let json = serde_json::to_vec(&cfg).expect("config serialises");
        let again = parse_config_bytes(&json).expect("serialised config parses");
        assert_eq!(cfg, again);
    }
});

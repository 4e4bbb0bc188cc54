#![no_main]

use libfuzzer_sys::fuzz_target;
use torrent_core::bench::parse_experiment_spec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = parse_experiment_spec(text) {
        assert!(spec.trials() >= 1);
        assert!(!spec.cells().is_empty());
    }
});

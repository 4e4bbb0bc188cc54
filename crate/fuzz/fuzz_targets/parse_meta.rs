#![no_main]

use libfuzzer_sys::fuzz_target;
use torrent_core::io::parse_meta;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(meta) = parse_meta(text) {
        assert_eq!(meta.w_star.len(), meta.p);
        let again = serde_json::to_string(&meta).expect("meta serializes");
        assert_eq!(parse_meta(&again).expect("round trip parses"), meta);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use torrent_core::io::parse_data_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(parsed) = parse_data_csv(text) {
        let n = parsed.x.n();
        assert_eq!(parsed.y.len(), n);
        assert_eq!(parsed.b.len(), n);
        assert_eq!(parsed.eps.len(), n);
        assert!(parsed.clean_set.iter().all(|i| i < n));
    }
});

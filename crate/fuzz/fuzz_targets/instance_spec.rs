#![no_main]

use libfuzzer_sys::fuzz_target;
use torrent_core::{gen_instance, InstanceSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<InstanceSpec>(data) else {
        return;
    };
    // keep generated instances small
    if spec.p.saturating_mul(spec.n) > 4096 || spec.p > 64 {
        return;
    }
    if let Ok(inst) = gen_instance(&spec) {
        assert_eq!(inst.x.p(), spec.p);
        assert_eq!(inst.y.len(), spec.n);
        assert_eq!(inst.corruption_support().len() + inst.clean_set.len(), spec.n);
    }
});

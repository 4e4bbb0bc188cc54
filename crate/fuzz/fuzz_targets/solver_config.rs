#![no_main]

use libfuzzer_sys::fuzz_target;
use torrent_core::{torrent_hd_solve, torrent_solve, DataMatrix, SolverConfig, Variant};

fuzz_target!(|data: &[u8]| {
    let Ok(mut cfg) = serde_json::from_slice::<SolverConfig>(data) else {
        return;
    };
    cfg.max_iters = cfg.max_iters.min(50);
    cfg.max_inner_iters = cfg.max_inner_iters.min(50);
    let x = DataMatrix::from_samples(&[
        vec![1.0, 0.5],
        vec![-0.3, 2.0],
        vec![0.7, 0.7],
        vec![1.5, -1.0],
        vec![0.2, 0.1],
    ])
    .unwrap();
    let y = [1.0, -2.0, 0.5, 9.0, 0.1];
    let fit = if cfg.variant == Variant::Hd {
        torrent_hd_solve(&x, &y, &cfg, None)
    } else {
        torrent_solve(&x, &y, &cfg, None)
    };
    if let Ok(fit) = fit {
        assert!(!fit.trace.is_empty());
    }
});

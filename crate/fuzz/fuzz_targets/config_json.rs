#![no_main]

use cutstack::config::RunConfig;
use cutstack::Rational;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = RunConfig::from_json(s) else { return };
    let back = RunConfig::from_json(&cfg.to_json()).expect("a valid config re-parses");
    assert_eq!(back.hash(), cfg.hash());
    let _ = cfg.resolve_mode();
    let _ = cfg.target_dist();
    let _ = cfg.tower_params::<Rational>();
    let _ = cfg.tower_params::<f64>();
});

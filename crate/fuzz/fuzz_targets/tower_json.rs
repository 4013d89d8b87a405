#![no_main]

use cutstack::manifest::TowerManifest;
use cutstack::Rational;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(m) = TowerManifest::from_json(s) else { return };
    let _ = m.gamma_table::<Rational>();
    let _ = m.gamma_table::<f64>();
    assert_eq!(TowerManifest::from_json(&m.to_json()).ok().map(|b| b.checksum), Some(m.checksum.clone()));
});

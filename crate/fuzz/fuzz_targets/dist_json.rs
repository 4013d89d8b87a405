#![no_main]

use cutstack::dist::FiniteDist;
use cutstack::Rational;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(d) = FiniteDist::<Rational>::from_json(s) {
        let back = FiniteDist::<Rational>::from_json(&d.to_json()).expect("round trip");
        assert_eq!(back, d);
        let _ = cutstack::dist::vasershtein(&d, &back);
    }
    let _ = FiniteDist::<f64>::from_json(s);
});

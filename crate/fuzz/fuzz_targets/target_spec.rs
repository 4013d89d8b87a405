#![no_main]

use cutstack::splitting::{dyadic_rep, TargetDist, TargetSpec};
use cutstack::Rational;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(spec) = TargetSpec::from_json(s) else { return };
    let Ok(t) = TargetDist::from_spec(&spec) else { return };
    for u in [0.0, 0.25, 0.5, 0.999] {
        let q = t.quantile(u);
        assert!(!(q < 0.0), "negative quantile {q}");
    }
    let c = t.cdf(1.0);
    assert!((0.0..=1.0).contains(&c) || c.is_nan());
    let _ = dyadic_rep::<f64>(&t, 3, None);
    if t.is_exact() {
        let _ = dyadic_rep::<Rational>(&t, 3, None);
    }
    let _ = t.reciprocal();
});

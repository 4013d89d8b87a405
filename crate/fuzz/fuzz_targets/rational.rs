#![no_main]

use cutstack::dist::Ext;
use cutstack::scalar::parse_rational;
use cutstack::{Rational, Scalar};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|s: &str| {
    if let Ok(r) = parse_rational(s) {
        assert_eq!(parse_rational(&r.render()).unwrap(), r);
    }
    if let Ok(v) = Ext::<Rational>::parse(s) {
        assert_eq!(Ext::<Rational>::parse(&v.render()).unwrap(), v);
    }
    let _ = Ext::<f64>::parse(s);
});

#![no_main]

use ascx::clustering::SegmentMethod;
use ascx::{Rational, StrategyKind};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|s: &str| {
    if let Ok(r) = s.parse::<Rational>() {
        assert!(r.den() > 0);
        assert_eq!(r.to_string().parse::<Rational>().expect("displayed rational parses"), r);
    }
    if let Ok(k) = s.parse::<StrategyKind>() {
        assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
    }
    let _ = s.parse::<SegmentMethod>();
});

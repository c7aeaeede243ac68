#![no_main]

use ascx::io::{format_dense_line, parse_dense_line};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|line: &str| {
    if let Ok((doc, v)) = parse_dense_line(line) {
        let again = parse_dense_line(&format_dense_line(doc, &v)).expect("formatted line parses");
        assert_eq!(again, (doc, v));
    }
});

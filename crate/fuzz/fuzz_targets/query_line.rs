#![no_main]

use ascx::io::{format_query_line, parse_query_line};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|line: &str| {
    if let Ok(q) = parse_query_line(line) {
        let again = parse_query_line(&format_query_line(&q)).expect("formatted line parses");
        assert_eq!(again, q);
    }
});

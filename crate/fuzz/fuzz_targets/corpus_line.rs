#![no_main]

use ascx::io::{format_corpus_line, parse_corpus_line};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|line: &str| {
    if let Ok(doc) = parse_corpus_line(line) {
        let again = parse_corpus_line(&format_corpus_line(&doc)).expect("formatted line parses");
        assert_eq!(again, doc);
    }
});

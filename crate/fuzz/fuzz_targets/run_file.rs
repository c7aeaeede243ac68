#![no_main]

use ascx::io::{parse_run_line, read_run};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for line in text.lines() {
            let _ = parse_run_line(line);
        }
    }
    if let Ok(groups) = read_run(data) {
        for (_, lines) in groups {
            assert!(lines.windows(2).all(|w| w[0].rank < w[1].rank));
        }
    }
});

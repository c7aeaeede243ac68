#![no_main]

use ascx_cli::config::{merge_into_args, parse_config};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(entries) = parse_config(text) {
        let mut args = vec!["search".to_string()];
        merge_into_args(&mut args, &entries);
        assert!(args.len() <= 1 + 2 * entries.len());
    }
});

#![no_main]

use ascx::io::{read_assignment, write_assignment};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((clusters, segments)) = read_assignment(data) {
        let mut out = Vec::new();
        write_assignment(&mut out, &clusters, &segments).unwrap();
        assert_eq!(read_assignment(&out[..]).expect("written assignment parses"), (clusters, segments));
    }
});

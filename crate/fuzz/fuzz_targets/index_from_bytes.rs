#![no_main]

use ascx::ClusterSkippingIndex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(index) = ClusterSkippingIndex::from_bytes(data) {
        // accepted images are canonical
        assert_eq!(index.to_bytes(), data);
    }
});

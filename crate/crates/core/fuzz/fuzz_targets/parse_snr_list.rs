#![no_main]

use libfuzzer_sys::fuzz_target;
use nearfield_ts::harness::parse_snr_list;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(list) = parse_snr_list(s) {
            assert!(!list.is_empty());
            assert!(list.iter().all(|v| v.is_finite()));
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use nearfield_ts::harness::parse_method_list;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(methods) = parse_method_list(s) {
            for m in methods {
                assert_eq!(m.label().parse::<nearfield_ts::harness::Method>().unwrap(), m);
            }
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use nearfield_ts::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_kv_str(s) {
            // Anything accepted must survive a round trip unchanged.
            let again = ExperimentConfig::from_kv_str(&cfg.to_kv_string()).expect("round trip");
            assert_eq!(cfg.to_kv_string(), again.to_kv_string());
        }
    }
});

//! Replays the checked-in fuzz seeds through the same entry points the fuzz
//! targets use, so the corpus stays exercised on stable toolchains.

use std::fs;
use std::path::PathBuf;

use nearfield_ts::harness::{parse_method_list, parse_snr_list, ExperimentConfig, Method};

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, fs::read_to_string(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn config_seeds() {
    let mut accepted = 0;
    for (name, text) in seeds("parse_config") {
        if let Ok(cfg) = ExperimentConfig::from_kv_str(&text) {
            let again = ExperimentConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
            assert_eq!(cfg, again, "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn snr_list_seeds() {
    for (name, text) in seeds("parse_snr_list") {
        if let Ok(list) = parse_snr_list(&text) {
            assert!(!list.is_empty() && list.iter().all(|v| v.is_finite()), "{name}");
        }
    }
    assert_eq!(parse_snr_list("5:20:5").unwrap().len(), 4);
}

#[test]
fn method_list_seeds() {
    for (name, text) in seeds("parse_method_list") {
        let methods = parse_method_list(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        for m in methods {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
    }
}

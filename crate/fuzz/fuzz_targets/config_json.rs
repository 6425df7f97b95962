#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use ohmic_cli::config::{parse_json, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(raw) = parse_json(text) {
        let _ = RunConfig::from_raw(&raw, Path::new("/nonexistent"), None);
    }
});

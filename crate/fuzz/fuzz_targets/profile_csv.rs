#![no_main]

use libfuzzer_sys::fuzz_target;
use ohmic_core::io::read_profile;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_profile(data) {
        assert!(rows.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(rows.iter().all(|r| r.1 >= 0.0));
    }
});

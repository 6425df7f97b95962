#![no_main]

use libfuzzer_sys::fuzz_target;
use ohmic_core::io::read_tabulated_kernel;
use ohmic_core::TailForm;

fuzz_target!(|data: &[u8]| {
    // Whatever parses must also evaluate without panicking.
    for tail in [
        None,
        Some(TailForm::Exponential { rate: 1.0 }),
        Some(TailForm::Power { exponent: 2.0 }),
    ] {
        if let Ok(nl) = read_tabulated_kernel(data, tail) {
            for s in [0.0, 0.5, 3.0, 1e3] {
                let _ = nl.eval_f(s);
                let _ = nl.eval_big_f(s);
                let _ = nl.eval_df(s);
            }
        }
    }
});

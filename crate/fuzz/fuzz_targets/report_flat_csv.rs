#![no_main]

use libfuzzer_sys::fuzz_target;
use memaudit::report::{read_flat_csv, report_from_flat_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = read_flat_csv(s);
        let _ = report_from_flat_csv(s);
    }
});

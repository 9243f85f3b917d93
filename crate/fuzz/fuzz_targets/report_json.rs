#![no_main]

use libfuzzer_sys::fuzz_target;
use memaudit::report::{report_from_flat_csv, write_flat_csv, ExperimentReport};

fuzz_target!(|data: &[u8]| {
    if let Ok(report) = serde_json::from_slice::<ExperimentReport>(data) {
        let value = serde_json::to_value(&report).expect("report serializes");
        let back = report_from_flat_csv(&write_flat_csv(&value)).expect("flat csv reloads");
        assert_eq!(back, report);
    }
});

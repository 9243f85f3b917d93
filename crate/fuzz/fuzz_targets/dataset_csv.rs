#![no_main]

use libfuzzer_sys::fuzz_target;
use memaudit::data::{read_dataset, write_dataset, ColumnSchema};

fuzz_target!(|data: &[u8]| {
    let schema = ColumnSchema::default();
    if let Ok(outcome) = read_dataset(data, &schema) {
        let mut buf = Vec::new();
        if write_dataset(&outcome.dataset, &mut buf, &schema).is_ok() {
            let again = read_dataset(buf.as_slice(), &schema).expect("written dataset reloads");
            assert_eq!(again.dataset.len(), outcome.dataset.len());
        }
    }
});

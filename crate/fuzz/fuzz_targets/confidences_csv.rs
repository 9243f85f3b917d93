#![no_main]

use libfuzzer_sys::fuzz_target;
use memaudit::game::{read_attack_inputs, write_attack_inputs};

fuzz_target!(|data: &[u8]| {
    if let Ok(inputs) = read_attack_inputs(data) {
        let mut buf = Vec::new();
        if write_attack_inputs(&inputs, &mut buf).is_ok() {
            let again = read_attack_inputs(buf.as_slice()).expect("written table reloads");
            assert_eq!(again.candidate_ids, inputs.candidate_ids);
            assert_eq!(again.z_ids, inputs.z_ids);
        }
    }
});

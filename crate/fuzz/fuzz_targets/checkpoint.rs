#![no_main]

use libfuzzer_sys::fuzz_target;
use memaudit::nnet::{read_checkpoint, write_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok((model, cfg)) = read_checkpoint(data) {
        let mut buf = Vec::new();
        if write_checkpoint(&model, &cfg, &mut buf).is_ok() {
            let _ = read_checkpoint(buf.as_slice()).expect("written checkpoint reloads");
        }
    }
});

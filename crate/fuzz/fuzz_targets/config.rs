#![no_main]

use libfuzzer_sys::fuzz_target;
use memaudit::config::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(s, None) {
            let again = parse_config(&cfg.to_text(), None).expect("printed config parses");
            assert_eq!(again.to_text(), cfg.to_text());
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use memaudit::game::EnsembleManifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = EnsembleManifest::from_json(s) {
            let again = EnsembleManifest::from_json(&m.to_json()).expect("written manifest reloads");
            assert_eq!(again, m);
        }
    }
});

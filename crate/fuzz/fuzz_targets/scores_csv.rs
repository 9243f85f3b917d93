#![no_main]

use libfuzzer_sys::fuzz_target;
use memaudit::attacks::{read_scores, write_scores, AttackKind};

fuzz_target!(|data: &[u8]| {
    if let Ok(scores) = read_scores(data, AttackKind::Rmia) {
        let mut buf = Vec::new();
        if write_scores(&scores, &mut buf).is_ok() {
            let again = read_scores(buf.as_slice(), AttackKind::Rmia).expect("written scores reload");
            assert_eq!(again.ids, scores.ids);
            assert_eq!(again.is_member, scores.is_member);
            assert_eq!(again.flags, scores.flags);
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use tfbimamba::io::{parse_manifest, to_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_manifest(text) {
        let written = to_jsonl(&records);
        assert_eq!(parse_manifest(&written).expect("written manifest parses"), records);
    }
});

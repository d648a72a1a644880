#![no_main]

use libfuzzer_sys::fuzz_target;
use tfbimamba::io::parse_labels;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(labels) = parse_labels(text) {
        for (i, l) in labels.iter().enumerate() {
            assert_eq!(l.frame, i);
            assert!((0.0..=180.0).contains(&l.azimuth));
        }
    }
});

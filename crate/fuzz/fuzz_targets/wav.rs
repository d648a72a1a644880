#![no_main]

use libfuzzer_sys::fuzz_target;
use tfbimamba::io::{decode_wav, encode_wav};

fuzz_target!(|data: &[u8]| {
    if let Ok((channels, rate)) = decode_wav(data) {
        assert!(channels.iter().flatten().all(|v| (-1.0..1.0).contains(v)));
        if !channels.is_empty() {
            let bytes = encode_wav(&channels, rate).expect("decoded channels re-encode");
            let (again, r) = decode_wav(&bytes).expect("re-encoded wav decodes");
            assert_eq!(
                (again.len(), again[0].len(), r),
                (channels.len(), channels[0].len(), rate)
            );
        }
    }
});

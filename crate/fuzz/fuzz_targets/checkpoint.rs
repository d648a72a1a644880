#![no_main]

use libfuzzer_sys::fuzz_target;
use tfbimamba::numcore::{checkpoint, Checkpoint};

fuzz_target!(|data: &[u8]| {
    let _ = checkpoint::decode(data);
    if let Ok(c) = Checkpoint::from_bytes(data) {
        let again = Checkpoint::from_bytes(&c.to_bytes()).expect("re-encoded checkpoint decodes");
        assert_eq!(again.to_bytes(), c.to_bytes());
    }
});

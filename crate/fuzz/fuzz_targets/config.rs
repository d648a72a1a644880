#![no_main]

use libfuzzer_sys::fuzz_target;
use tfbimamba::io::parse_run_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_run_config(text) {
        let resolved = cfg.to_toml();
        let again = parse_run_config(&resolved).expect("resolved config parses");
        assert_eq!(again.to_toml(), resolved);
    }
});

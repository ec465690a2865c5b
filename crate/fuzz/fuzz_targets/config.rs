#![no_main]

use eigensketch::config::parse_config_str;
use libfuzzer_sys::fuzz_target;

// Accepted configs must serialize to text that parses back equal. The parser
// strips comments and rejects non-finite numbers, so parsed configs are
// always representable.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config_str(text) {
        let again = parse_config_str(&cfg.serialize()).expect("canonical config reparses");
        assert_eq!(again, cfg);
    }
});

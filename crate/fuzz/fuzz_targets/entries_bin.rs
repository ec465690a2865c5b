#![no_main]

use eigensketch::stream::read_entries_bin;
use libfuzzer_sys::fuzz_target;

// 24-byte record reader over arbitrary bytes: finite validated triples until
// the first malformed or truncated record.
fuzz_target!(|data: &[u8]| {
    for item in read_entries_bin(data) {
        match item {
            Ok(t) => assert!(t.value.is_finite()),
            Err(_) => break,
        }
    }
});

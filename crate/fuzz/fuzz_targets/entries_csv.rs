#![no_main]

use eigensketch::stream::read_entries_csv;
use libfuzzer_sys::fuzz_target;

// The entry reader must survive arbitrary bytes: every yielded triple is
// validated, and the stream ends cleanly at the first malformed line.
fuzz_target!(|data: &[u8]| {
    for item in read_entries_csv(data) {
        match item {
            Ok(t) => assert!(t.value.is_finite()),
            Err(_) => break,
        }
    }
});

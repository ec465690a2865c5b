#![no_main]

use eigensketch::decode::{read_sparse_csv, write_sparse_csv};
use libfuzzer_sys::fuzz_target;

// Accepted sparse vectors round-trip exactly: f64 Display is
// shortest-round-trip and the parser admits only finite nonzero values.
fuzz_target!(|data: &[u8]| {
    if let Ok(v) = read_sparse_csv(data) {
        let mut buf = Vec::new();
        write_sparse_csv(&mut buf, &v).unwrap();
        let again = read_sparse_csv(&buf[..]).expect("canonical sparse CSV reparses");
        assert_eq!(again, v);
    }
});

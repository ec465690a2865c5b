#![no_main]

use eigensketch::eig::{read_eigenpairs_csv, write_eigenpairs_csv};
use libfuzzer_sys::fuzz_target;

// Accepted eigenpair files round-trip: every parsed value is finite, so
// equality is well defined.
fuzz_target!(|data: &[u8]| {
    if let Ok(pairs) = read_eigenpairs_csv(data) {
        let mut buf = Vec::new();
        write_eigenpairs_csv(&mut buf, &pairs).unwrap();
        let again = read_eigenpairs_csv(&buf[..]).expect("canonical eigenpairs CSV reparses");
        assert_eq!(again, pairs);
    }
});

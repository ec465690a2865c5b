#![no_main]

use eigensketch::measure::parse_descriptor;
use libfuzzer_sys::fuzz_target;

// Accepted descriptors must reparse from their canonical form to the same
// parameters. rows() is pure arithmetic on validated fields and must not
// panic or allocate.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(desc) = parse_descriptor(text) {
        let _ = desc.rows();
        let again = parse_descriptor(&desc.serialize()).expect("canonical descriptor reparses");
        assert_eq!(again, desc);
    }
});

#![no_main]

use eigensketch::stream::Sketch;
use libfuzzer_sys::fuzz_target;

// The sketch container must reject hostile headers without panicking and
// without allocating beyond what the input length itself justifies.
fuzz_target!(|data: &[u8]| {
    let _ = Sketch::read_from(&mut &data[..]);
});

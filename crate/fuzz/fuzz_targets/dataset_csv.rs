#![no_main]

use corrnet::dataset::{read_csv, write_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(m) = read_csv(data) else {
        return;
    };
    let mut out = Vec::new();
    write_csv(&m, &mut out).unwrap();
    assert_eq!(read_csv(&out[..]).unwrap(), m);
});

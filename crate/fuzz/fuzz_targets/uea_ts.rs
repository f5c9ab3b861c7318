#![no_main]

use libfuzzer_sys::fuzz_target;
use timehut::data::{parse_uea_ts, write_uea_ts};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ds) = parse_uea_ts(text) {
        let back = parse_uea_ts(&write_uea_ts(&ds)).expect("re-parse written dataset");
        assert_eq!(back.n_samples(), ds.n_samples());
        assert_eq!(back.n_channels(), ds.n_channels());
    }
});

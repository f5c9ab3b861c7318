#![no_main]

use libfuzzer_sys::fuzz_target;
use timehut::data::{parse_ucr_tsv, write_ucr_tsv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ds) = parse_ucr_tsv(text, "fuzz") {
        // anything we accept must survive a write/read cycle
        let out = write_ucr_tsv(&ds).expect("write accepted dataset");
        let back = parse_ucr_tsv(&out, "fuzz").expect("re-parse written dataset");
        assert_eq!(back.samples.shape(), ds.samples.shape());
    }
});

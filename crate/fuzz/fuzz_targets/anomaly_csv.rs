#![no_main]

use libfuzzer_sys::fuzz_target;
use timehut::data::{parse_anomaly_csv, write_anomaly_csv};

fuzz_target!(|data: &[u8]| {
    let Some((&split, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    let frac = (f64::from(split) + 0.5) / 256.0;
    if let Ok(series) = parse_anomaly_csv(text, frac) {
        assert!(series.train_end <= series.len());
        let back =
            parse_anomaly_csv(&write_anomaly_csv(&series), frac).expect("re-parse written series");
        assert_eq!(back.len(), series.len());
    }
});

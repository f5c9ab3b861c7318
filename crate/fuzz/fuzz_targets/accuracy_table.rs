#![no_main]

use libfuzzer_sys::fuzz_target;
use timehut::eval::compare::{compare_models, AccuracyTable};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = AccuracyTable::parse_csv(text) {
        if let Ok(report) = compare_models(&table) {
            for row in &report.pairs {
                for p in row {
                    assert!((0.0..=1.0).contains(&p.p_value));
                }
            }
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use timehut::checkpoint::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = decode(data) {
        let bytes = encode(&ck.encoder, &ck.metadata).expect("encode decoded checkpoint");
        let again = decode(&bytes).expect("decode re-encoded checkpoint");
        assert_eq!(again.encoder.num_parameters(), ck.encoder.num_parameters());
    }
});

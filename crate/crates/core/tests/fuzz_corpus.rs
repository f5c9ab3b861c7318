//! Replays the checked-in fuzz seeds through the same properties the fuzz targets check.

use std::fs;
use std::path::PathBuf;

use timehut::checkpoint;
use timehut::data;
use timehut::eval::compare;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn ucr_seeds() {
    let mut accepted = 0;
    for (name, bytes) in seeds("ucr_tsv") {
        let text = String::from_utf8(bytes).unwrap();
        if let Ok(ds) = data::parse_ucr_tsv(&text, "seed") {
            let back = data::parse_ucr_tsv(&data::write_ucr_tsv(&ds).unwrap(), "seed").unwrap();
            assert_eq!(back.samples.shape(), ds.samples.shape(), "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 1);
}

#[test]
fn uea_seeds() {
    let mut accepted = 0;
    for (name, bytes) in seeds("uea_ts") {
        let text = String::from_utf8(bytes).unwrap();
        if let Ok(ds) = data::parse_uea_ts(&text) {
            let back = data::parse_uea_ts(&data::write_uea_ts(&ds)).unwrap();
            assert_eq!(
                (back.n_samples(), back.n_channels()),
                (ds.n_samples(), ds.n_channels()),
                "{name}"
            );
            accepted += 1;
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn anomaly_seeds() {
    let mut outcomes = Vec::new();
    for (name, bytes) in seeds("anomaly_csv") {
        let (&split, rest) = bytes.split_first().unwrap();
        let frac = (f64::from(split) + 0.5) / 256.0;
        let parsed = data::parse_anomaly_csv(std::str::from_utf8(rest).unwrap(), frac);
        if let Ok(s) = &parsed {
            let back = data::parse_anomaly_csv(&data::write_anomaly_csv(s), frac).unwrap();
            assert_eq!(back.len(), s.len(), "{name}");
        }
        outcomes.push((name, parsed.is_ok()));
    }
    assert_eq!(
        outcomes,
        [
            ("decreasing.bin".to_string(), false),
            ("small.bin".to_string(), true)
        ]
    );
}

#[test]
fn checkpoint_seeds() {
    for (name, bytes) in seeds("checkpoint") {
        match checkpoint::decode(&bytes) {
            Ok(ck) => {
                let again =
                    checkpoint::decode(&checkpoint::encode(&ck.encoder, &ck.metadata).unwrap())
                        .unwrap();
                assert_eq!(
                    again.encoder.num_parameters(),
                    ck.encoder.num_parameters(),
                    "{name}"
                );
                assert_eq!(name, "tiny.ckpt");
            }
            Err(_) => assert_eq!(name, "truncated.ckpt"),
        }
    }
}

#[test]
fn table_seeds() {
    for (name, bytes) in seeds("accuracy_table") {
        let table =
            compare::AccuracyTable::parse_csv(std::str::from_utf8(&bytes).unwrap()).unwrap();
        let report = compare::compare_models(&table).unwrap();
        assert!(
            report
                .pairs
                .iter()
                .flatten()
                .all(|p| (0.0..=1.0).contains(&p.p_value)),
            "{name}"
        );
    }
}

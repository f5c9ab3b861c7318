use std::path::PathBuf;

use timehut::eval::compare::{self, AccuracyTable};

fn table() -> AccuracyTable {
    AccuracyTable::load_csv(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/uea_accuracies.csv"),
    )
    .unwrap()
}

/// Two-sided p by walking all sign assignments in Gray-code order over doubled mid-ranks.
fn brute_force_p(diffs: &[i64]) -> f64 {
    let nz: Vec<i64> = diffs.iter().copied().filter(|&d| d != 0).collect();
    let n = nz.len();
    let mut abs: Vec<(i64, usize)> = nz.iter().map(|d| d.abs()).zip(0..).collect();
    abs.sort();
    let mut r2 = vec![0i64; n];
    let mut i = 0;
    while i < n {
        let j = (i..n).take_while(|&k| abs[k].0 == abs[i].0).last().unwrap();
        for k in i..=j {
            r2[abs[k].1] = (i + j + 2) as i64; // twice the mean of ranks i+1..=j+1
        }
        i = j + 1;
    }
    let observed: i64 = nz
        .iter()
        .zip(&r2)
        .filter(|(d, _)| **d > 0)
        .map(|(_, r)| r)
        .sum();
    let (mut le, mut ge) = (0u64, 0u64);
    let mut w = 0i64;
    let mut signs = vec![false; n];
    for step in 0u64..(1u64 << n) {
        if step > 0 {
            let bit = step.trailing_zeros() as usize;
            signs[bit] = !signs[bit];
            w += if signs[bit] { r2[bit] } else { -r2[bit] };
        }
        le += u64::from(w <= observed);
        ge += u64::from(w >= observed);
    }
    let total = (1u64 << n) as f64;
    (2.0 * (le.min(ge) as f64) / total).min(1.0)
}

#[test]
fn fixture_matches_published_table() {
    let t = table();
    assert_eq!(t.models.len(), 15);
    assert_eq!(t.datasets.len(), 30);
    let dtw = t.model_index("DTW").unwrap();
    let missing: Vec<&str> = t
        .values
        .iter()
        .zip(&t.datasets)
        .filter(|(row, _)| row[dtw].is_none())
        .map(|(_, d)| d.as_str())
        .collect();
    assert_eq!(missing, ["InsectWingbeat"]);
}

#[test]
fn timehut_against_ts2vec() {
    let t = table();
    let (a, b) = t.paired(
        t.model_index("TimeHUT").unwrap(),
        t.model_index("TS2Vec").unwrap(),
    );
    let stats = compare::compare_pair(&a, &b).unwrap();
    assert_eq!((stats.wins, stats.draws, stats.losses), (25, 4, 1));
    assert_eq!(stats.n, 30);

    let milli: Vec<i64> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x * 1000.0).round() as i64 - (y * 1000.0).round() as i64)
        .collect();
    let oracle = brute_force_p(&milli);
    assert!(
        ((stats.p_value - oracle) / oracle).abs() < 1e-9,
        "{} vs {oracle}",
        stats.p_value
    );
    assert!(stats.p_value < 1e-4);

    let md = a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / 30.0;
    assert!((stats.mean_difference - md).abs() < 1e-12);
}

#[test]
fn exact_branch_matches_enumeration_for_every_pair_with_timehut() {
    let t = table();
    let th = t.model_index("TimeHUT").unwrap();
    for j in 0..t.models.len() {
        if j == th {
            continue;
        }
        let (a, b) = t.paired(th, j);
        let milli: Vec<i64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x * 1000.0).round() as i64 - (y * 1000.0).round() as i64)
            .collect();
        if milli.iter().filter(|&&d| d != 0).count() > 26 {
            continue;
        }
        let stats = compare::compare_pair(&a, &b).unwrap();
        let oracle = brute_force_p(&milli);
        assert!(
            (stats.p_value - oracle).abs() <= 1e-12,
            "{}: {} vs {oracle}",
            t.models[j],
            stats.p_value
        );
    }
}

#[test]
fn average_rank_of_timehut_as_published() {
    let report = compare::compare_models(&table()).unwrap();
    assert_eq!(report.ranked_datasets, 29);
    let th = report.models.iter().position(|m| m == "TimeHUT").unwrap();
    assert!(
        (report.average_ranks[th] - 2.93).abs() < 0.005,
        "{}",
        report.average_ranks[th]
    );
    let n = report.models.len() as f64;
    let total: f64 = report.average_ranks.iter().sum();
    assert!((total - n * (n + 1.0) / 2.0).abs() < 1e-9);
}

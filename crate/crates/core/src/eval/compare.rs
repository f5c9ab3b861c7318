//! Pairwise model comparison over per-dataset accuracy tables.
//!
//! Accuracies are compared at the table's printed precision of three decimals,
//! so draws mean equal printed values.

use std::fs;
use std::path::Path;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

/// Exact Wilcoxon distribution up to this many non-zero differences.
pub const EXACT_LIMIT: usize = 30;

/// Datasets × models accuracies; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl AccuracyTable {
    /// CSV with header `dataset,model1,model2,...`; empty, `-` or `NA` cells are missing.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse(1, e.to_string()))?
            .clone();
        if headers.len() < 2 {
            return Err(Error::parse(
                1,
                "expected `dataset` plus at least one model column",
            ));
        }
        let models: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut datasets = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
            if rec.len() != headers.len() {
                return Err(Error::parse(
                    line,
                    format!("expected {} fields, found {}", headers.len(), rec.len()),
                ));
            }
            datasets.push(rec[0].to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|c| match c {
                    "" | "-" | "NA" | "nan" | "NaN" => Ok(None),
                    v => v
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .map(Some)
                        .ok_or_else(|| Error::parse(line, format!("bad accuracy {v:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
        Ok(Self {
            models,
            datasets,
            values,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn model_index(&self, name: &str) -> Result<usize> {
        self.models
            .iter()
            .position(|m| m == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown model {name:?}")))
    }

    /// Rows where both models have a value.
    pub fn paired(&self, a: usize, b: usize) -> (Vec<f64>, Vec<f64>) {
        self.values
            .iter()
            .filter_map(|r| Some((r[a]?, r[b]?)))
            .unzip()
    }
}

fn milli(x: f64) -> i64 {
    (x * 1000.0).round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairStats {
    pub mean_difference: f64,
    pub wins: usize,
    pub draws: usize,
    pub losses: usize,
    pub p_value: f64,
    pub n: usize,
}

/// Ranks of `x` (1 = smallest), ties given their mean rank.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank p-value. Zero differences are dropped and ties
/// mid-ranked; the null distribution is enumerated exactly (conditional on the
/// tie pattern) for up to [`EXACT_LIMIT`] differences, otherwise approximated by a
/// tie-corrected normal. With no non-zero differences the p-value is 1.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|&x| x != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return 1.0;
    }
    let ranks = midranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let w_plus: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, r)| r)
        .sum();

    if n <= EXACT_LIMIT {
        // ranks are multiples of 1/2, so doubled ranks are integers
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; max + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=max).rev() {
                counts[s] += counts[s - r];
            }
        }
        let total = 2f64.powi(n as i32);
        let w = (2.0 * w_plus).round() as usize;
        let le: f64 = counts[..=w].iter().sum::<f64>() / total;
        let ge: f64 = counts[w..].iter().sum::<f64>() / total;
        (2.0 * le.min(ge)).min(1.0)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
            let t = j as f64;
            tie_term += t * t * t - t;
            i += j;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if var <= 0.0 {
            return 1.0;
        }
        let z = (w_plus - mean) / var.sqrt();
        let normal = Normal::standard();
        (2.0 * normal.cdf(-z.abs())).min(1.0)
    }
}

/// Compare model `a` against `b` on the datasets where both are present.
pub fn compare_pair(a: &[f64], b: &[f64]) -> Result<PairStats> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "{} vs {} accuracies",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("no paired datasets".into()));
    }
    let mut stats = PairStats {
        mean_difference: a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64,
        wins: 0,
        draws: 0,
        losses: 0,
        p_value: 1.0,
        n: a.len(),
    };
    let mut diffs = Vec::with_capacity(a.len());
    for (&x, &y) in a.iter().zip(b) {
        let d = milli(x) - milli(y);
        match d.cmp(&0) {
            std::cmp::Ordering::Greater => stats.wins += 1,
            std::cmp::Ordering::Equal => stats.draws += 1,
            std::cmp::Ordering::Less => stats.losses += 1,
        }
        diffs.push(d as f64);
    }
    stats.p_value = wilcoxon_signed_rank(&diffs);
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub models: Vec<String>,
    /// `pairs[i][j]` compares model `i` against model `j`.
    pub pairs: Vec<Vec<PairStats>>,
    pub average_ranks: Vec<f64>,
    /// Datasets with every model present, over which ranks are averaged.
    pub ranked_datasets: usize,
}

/// Average rank per model (1 = best), over datasets with no missing cell.
pub fn average_ranks(table: &AccuracyTable) -> (Vec<f64>, usize) {
    let k = table.models.len();
    let mut sums = vec![0.0; k];
    let mut used = 0;
    for row in &table.values {
        let Some(vals) = row.iter().copied().collect::<Option<Vec<f64>>>() else {
            continue;
        };
        let neg: Vec<f64> = vals.iter().map(|&v| -(milli(v) as f64)).collect();
        for (s, r) in sums.iter_mut().zip(midranks(&neg)) {
            *s += r;
        }
        used += 1;
    }
    let ranks = sums
        .into_iter()
        .map(|s| if used > 0 { s / used as f64 } else { f64::NAN })
        .collect();
    (ranks, used)
}

pub fn compare_models(table: &AccuracyTable) -> Result<ComparisonReport> {
    let k = table.models.len();
    if k < 2 {
        return Err(Error::InvalidInput("need at least two models".into()));
    }
    let mut pairs = Vec::with_capacity(k);
    for i in 0..k {
        let mut row = Vec::with_capacity(k);
        for j in 0..k {
            let (a, b) = table.paired(i, j);
            row.push(compare_pair(&a, &b)?);
        }
        pairs.push(row);
    }
    let (average_ranks, ranked_datasets) = average_ranks(table);
    Ok(ComparisonReport {
        models: table.models.clone(),
        pairs,
        average_ranks,
        ranked_datasets,
    })
}

//! Classification protocol: RBF SVM on frozen features, penalty chosen by
//! stratified cross-validation, accuracy and macro one-vs-rest AUPRC.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::svm::{rbf_kernel, scale_gamma, BinarySvm};
use super::{EvalResult, Task};
use crate::{Error, Result};

/// Penalties tried during cross-validation.
pub const C_GRID: [f64; 9] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4];

/// One-vs-rest RBF classifier.
#[derive(Debug, Clone)]
pub struct SvmClassifier {
    train: Array2<f64>,
    gamma: f64,
    pub c: f64,
    pub num_classes: usize,
    machines: Vec<BinarySvm>,
}

fn check_labels(labels: &[usize], rows: usize, what: &str) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Shape(format!(
            "{what}: {} labels for {rows} rows",
            labels.len()
        )));
    }
    Ok(())
}

fn one_vs_rest(
    k: ArrayView2<'_, f64>,
    idx: &[usize],
    labels: &[usize],
    num_classes: usize,
    c: f64,
) -> Vec<BinarySvm> {
    let classes: Vec<usize> = if num_classes == 2 {
        vec![1]
    } else {
        (0..num_classes).collect()
    };
    classes
        .into_iter()
        .map(|cls| {
            let y: Vec<f64> = idx
                .iter()
                .map(|&i| if labels[i] == cls { 1.0 } else { -1.0 })
                .collect();
            BinarySvm::fit(k, idx, &y, c)
        })
        .collect()
}

/// Per-class scores from the binary machines' decision values.
fn class_scores(
    machines: &[BinarySvm],
    krow: ndarray::ArrayView1<'_, f64>,
    num_classes: usize,
) -> Vec<f64> {
    if num_classes == 2 {
        let f = machines[0].decision(krow);
        vec![-f, f]
    } else {
        machines.iter().map(|m| m.decision(krow)).collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut assign = vec![0; labels.len()];
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut next = 0;
    for cls in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == cls).collect();
        members.shuffle(rng);
        for i in members {
            assign[i] = next % folds;
            next += 1;
        }
    }
    assign
}

impl SvmClassifier {
    /// Select the penalty by cross-validation and fit on all of `x`.
    pub fn fit(x: ArrayView2<'_, f64>, labels: &[usize], seed: u64) -> Result<Self> {
        check_labels(labels, x.nrows(), "train")?;
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; num_classes];
        for &l in labels {
            counts[l] += 1;
        }
        let present: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
        if present.len() < 2 {
            return Err(Error::InvalidInput(
                "training set contains a single class".into(),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite training features".into()));
        }
        let gamma = scale_gamma(x);
        let k = rbf_kernel(x, x, gamma);
        let folds = present.iter().copied().min().unwrap_or(0).min(5);

        let c = if folds < 2 {
            *C_GRID.last().expect("non-empty grid")
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let assign = stratified_folds(labels, folds, &mut rng);
            let mut best = (f64::NEG_INFINITY, C_GRID[0]);
            for &c in &C_GRID {
                let mut acc = 0.0;
                for f in 0..folds {
                    let tr: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] != f).collect();
                    let va: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] == f).collect();
                    let machines = one_vs_rest(k.view(), &tr, labels, num_classes, c);
                    let correct = va
                        .iter()
                        .filter(|&&i| {
                            argmax(&class_scores(&machines, k.row(i), num_classes)) == labels[i]
                        })
                        .count();
                    acc += correct as f64 / va.len() as f64;
                }
                acc /= folds as f64;
                if acc > best.0 {
                    best = (acc, c);
                }
            }
            best.1
        };

        let all: Vec<usize> = (0..labels.len()).collect();
        let machines = one_vs_rest(k.view(), &all, labels, num_classes, c);
        Ok(Self {
            train: x.to_owned(),
            gamma,
            c,
            num_classes,
            machines,
        })
    }

    /// `n × K` class scores.
    pub fn decision_function(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.train.ncols() {
            return Err(Error::Shape(format!(
                "feature dim {} vs train {}",
                x.ncols(),
                self.train.ncols()
            )));
        }
        let k = rbf_kernel(x, self.train.view(), self.gamma);
        let mut out = Array2::zeros((x.nrows(), self.num_classes));
        for (i, row) in k.rows().into_iter().enumerate() {
            for (j, s) in class_scores(&self.machines, row, self.num_classes)
                .into_iter()
                .enumerate()
            {
                out[[i, j]] = s;
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let s = self.decision_function(x)?;
        Ok(s.rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().expect("row-major")))
            .collect())
    }
}

/// Average precision of `scores` for binary `relevant` flags; `None` without positives.
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> Option<f64> {
    let positives = relevant.iter().filter(|&&r| r).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut ap, mut last_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        // all items sharing a score enter together
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            tp += usize::from(relevant[order[k]]);
            seen += 1;
            k += 1;
        }
        let recall = tp as f64 / positives as f64;
        ap += (recall - last_recall) * (tp as f64 / seen as f64);
        last_recall = recall;
    }
    Some(ap)
}

/// Macro average precision over classes present in `labels`.
pub fn macro_auprc(scores: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    let aps: Vec<f64> = (0..scores.ncols())
        .filter_map(|c| {
            let rel: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            average_precision(scores.column(c).to_vec().as_slice(), &rel)
        })
        .collect();
    if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    }
}

pub fn classify_eval(
    train_x: ArrayView2<'_, f64>,
    train_y: &[usize],
    test_x: ArrayView2<'_, f64>,
    test_y: &[usize],
    seed: u64,
) -> Result<EvalResult> {
    check_labels(test_y, test_x.nrows(), "test")?;
    if test_y.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let clf = SvmClassifier::fit(train_x, train_y, seed)?;
    let scores = clf.decision_function(test_x)?;
    let pred: Vec<usize> = scores
        .rows()
        .into_iter()
        .map(|r| argmax(r.as_slice().expect("row-major")))
        .collect();
    let correct = pred.iter().zip(test_y).filter(|(p, t)| p == t).count();
    let mut metrics = BTreeMap::new();
    metrics.insert("accuracy".to_string(), correct as f64 / test_y.len() as f64);
    metrics.insert("auprc".to_string(), macro_auprc(scores.view(), test_y));
    metrics.insert("svm_c".to_string(), clf.c);
    Ok(EvalResult::new(Task::Classification, metrics).with_seed(seed))
}

/// Train on `train`, encode both splits and run [`classify_eval`]. Inputs are
/// expected to be normalised already.
pub fn train_and_classify(
    train: &crate::data::TimeSeriesDataset,
    test: &crate::data::TimeSeriesDataset,
    encoder_config: &crate::encoder::EncoderConfig,
    train_config: &crate::trainer::TrainConfig,
) -> Result<(
    EvalResult,
    crate::encoder::Encoder,
    crate::trainer::TrainHistory,
)> {
    let (ytr, yte) = match (&train.labels, &test.labels) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::InvalidInput(
                "classification needs labelled splits".into(),
            ))
        }
    };
    let (encoder, history) = crate::trainer::train(train, encoder_config, train_config)?;
    let ftr = super::encode_instances(&encoder, train, train_config.max_train_length)?;
    let fte = super::encode_instances(&encoder, test, train_config.max_train_length)?;
    let result = classify_eval(ftr.view(), ytr, fte.view(), yte, train_config.seed)?
        .with_dataset(train.name.clone())
        .with_config(&(encoder_config, train_config))?;
    Ok((result, encoder, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(
        n_per: usize,
        centers: &[(f64, f64)],
        spread: f64,
        seed: u64,
    ) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, spread).unwrap();
        let mut x = Array2::zeros((n_per * centers.len(), 2));
        let mut y = Vec::new();
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for k in 0..n_per {
                let r = c * n_per + k;
                x[[r, 0]] = cx + noise.sample(&mut rng);
                x[[r, 1]] = cy + noise.sample(&mut rng);
                y.push(c);
            }
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_are_perfect() {
        let (tr, ytr) = blobs(15, &[(-3.0, 0.0), (3.0, 0.0)], 0.5, 1);
        let (te, yte) = blobs(20, &[(-3.0, 0.0), (3.0, 0.0)], 0.5, 2);
        let r = classify_eval(tr.view(), &ytr, te.view(), &yte, 0).unwrap();
        assert_eq!(r.metrics["accuracy"], 1.0);
        assert_eq!(r.metrics["auprc"], 1.0);
    }

    #[test]
    fn three_classes() {
        let centers = [(-4.0, 0.0), (4.0, 0.0), (0.0, 5.0)];
        let (tr, ytr) = blobs(12, &centers, 0.6, 3);
        let (te, yte) = blobs(12, &centers, 0.6, 4);
        let r = classify_eval(tr.view(), &ytr, te.view(), &yte, 0).unwrap();
        assert_eq!(r.metrics["accuracy"], 1.0);
    }

    #[test]
    fn shuffled_labels_are_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (tr, _) = blobs(40, &[(0.0, 0.0), (0.0, 0.0)], 1.0, 5);
        let (te, _) = blobs(200, &[(0.0, 0.0), (0.0, 0.0)], 1.0, 6);
        let ytr: Vec<usize> = (0..80).map(|_| rng.random_range(0..2)).collect();
        let yte: Vec<usize> = (0..400).map(|_| rng.random_range(0..2)).collect();
        let acc = classify_eval(tr.view(), &ytr, te.view(), &yte, 1)
            .unwrap()
            .metrics["accuracy"];
        assert!((acc - 0.5).abs() <= 0.1, "accuracy {acc}");
    }

    #[test]
    fn single_class_rejected() {
        let x = Array2::zeros((4, 2));
        assert!(classify_eval(x.view(), &[0, 0, 0, 0], x.view(), &[0, 0, 0, 0], 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (tr, ytr) = blobs(10, &[(-0.5, 0.0), (0.5, 0.0)], 1.0, 7);
        let (te, yte) = blobs(10, &[(-0.5, 0.0), (0.5, 0.0)], 1.0, 8);
        let a = classify_eval(tr.view(), &ytr, te.view(), &yte, 3).unwrap();
        let b = classify_eval(tr.view(), &ytr, te.view(), &yte, 3).unwrap();
        assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn average_precision_cases() {
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.1], &[true, true, false]),
            Some(1.0)
        );
        // ranking: + - + → (1/1 + 2/3) / 2
        let ap = average_precision(&[0.9, 0.5, 0.1], &[true, false, true]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        // all tied: precision is the base rate
        let ap = average_precision(&[0.0; 4], &[true, false, false, false]).unwrap();
        assert!((ap - 0.25).abs() < 1e-12);
        assert_eq!(average_precision(&[0.3], &[false]), None);
    }

    #[test]
    fn folds_are_stratified() {
        let labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = stratified_folds(&labels, 5, &mut rng);
        for f in 0..5 {
            let members: Vec<usize> = (0..10).filter(|&i| a[i] == f).collect();
            assert_eq!(members.len(), 2);
            assert_ne!(labels[members[0]], labels[members[1]]);
        }
    }
}

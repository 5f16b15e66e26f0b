use std::collections::BTreeMap;

use crate::error::{check_len, Error, Result};
use crate::linalg::RowMatrix;

pub const CHI2_EPS: f64 = 1e-10;

/// L1-normalised bag-of-words histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    weights: Vec<f64>,
    empty: bool,
}

impl Histogram {
    /// Normalise raw counts; all-zero counts give an empty histogram.
    pub fn from_counts(counts: &[f64]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid("histogram counts must be finite and >= 0"));
        }
        let total: f64 = counts.iter().sum();
        if total == 0.0 {
            return Ok(Self {
                weights: vec![0.0; counts.len()],
                empty: true,
            });
        }
        Ok(Self {
            weights: counts.iter().map(|c| c / total).collect(),
            empty: false,
        })
    }

    pub fn from_assignments(assignments: &[usize], k: usize) -> Result<Self> {
        let mut counts = vec![0.0; k];
        for &a in assignments {
            if a >= k {
                return Err(Error::invalid(format!("word {a} outside vocabulary of {k}")));
            }
            counts[a] += 1.0;
        }
        Self::from_counts(&counts)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }
}

/// `½ Σ (a − b)² / (a + b + ε)`
pub fn chi2_distance(a: &Histogram, b: &Histogram) -> Result<f64> {
    check_len("histogram", b.len(), a.len())?;
    Ok(0.5
        * a.weights
            .iter()
            .zip(&b.weights)
            .map(|(x, y)| (x - y) * (x - y) / (x + y + CHI2_EPS))
            .sum::<f64>())
}

/// `exp(−D(a, b) / γ)`
pub fn chi2_kernel(a: &Histogram, b: &Histogram, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma {gamma} must be > 0")));
    }
    Ok((-chi2_distance(a, b)? / gamma).exp())
}

/// Mean χ² distance over distinct pairs; the default kernel width.
pub fn mean_pairwise_distance(hists: &[Histogram]) -> Result<f64> {
    if hists.len() < 2 {
        return Err(Error::invalid("need at least two histograms"));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..hists.len() {
        for j in i + 1..hists.len() {
            sum += chi2_distance(&hists[i], &hists[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Kernel matrix between two histogram sets.
pub fn kernel_matrix(rows: &[Histogram], cols: &[Histogram], gamma: f64) -> Result<RowMatrix> {
    let mut out = RowMatrix::zeros(rows.len(), cols.len());
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in cols.iter().enumerate() {
            out.set(i, j, chi2_kernel(a, b, gamma)?);
        }
    }
    Ok(out)
}

/// Majority vote among the `k` nearest training histograms by χ² distance.
///
/// Neighbours are ranked by distance then training index. Vote ties go to
/// the label with the smaller mean neighbour distance, then the lower label.
pub fn knn_classify(train: &[Histogram], labels: &[u32], test: &Histogram, k: usize) -> Result<u32> {
    check_len("training labels", labels.len(), train.len())?;
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if k == 0 || k > train.len() {
        return Err(Error::invalid(format!("k {k} outside 1..={}", train.len())));
    }
    let mut dist: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, h)| chi2_distance(h, test).map(|d| (d, i)))
        .collect::<Result<_>>()?;
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for &(d, i) in &dist[..k] {
        let e = votes.entry(labels[i]).or_default();
        e.0 += 1;
        e.1 += d;
    }
    let best = votes
        .iter()
        .map(|(&label, &(n, s))| (label, n, s / n as f64))
        .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
        .expect("k >= 1 gives a vote");
    Ok(best.0)
}

/// Classification outcome on a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Sorted distinct labels indexing the confusion matrix.
    pub classes: Vec<u32>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    /// `(item index, true label, predicted label)`
    pub predictions: Vec<(usize, u32, u32)>,
}

impl EvalReport {
    fn from_predictions(classes: Vec<u32>, predictions: Vec<(usize, u32, u32)>) -> Self {
        let pos = |l: u32| classes.binary_search(&l).expect("label is a known class");
        let mut confusion = vec![vec![0; classes.len()]; classes.len()];
        let mut correct = 0;
        for &(_, t, p) in &predictions {
            confusion[pos(t)][pos(p)] += 1;
            correct += usize::from(t == p);
        }
        let accuracy = correct as f64 / predictions.len().max(1) as f64;
        Self {
            accuracy,
            classes,
            confusion,
            predictions,
        }
    }

    /// `video_id,true_label,predicted_label` rows with a header.
    pub fn predictions_csv(&self) -> String {
        let mut s = String::from("video_id,true_label,predicted_label\n");
        for (i, t, p) in &self.predictions {
            s.push_str(&format!("{i},{t},{p}\n"));
        }
        s
    }

    /// Confusion matrix with true labels down and predictions across.
    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for c in &self.classes {
            s.push_str(&format!(",{c}"));
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            s.push_str(&c.to_string());
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

fn classes_of(labels: &[u32]) -> Vec<u32> {
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

/// Train on one set, test on another.
pub fn evaluate_split(
    train: &[Histogram],
    train_labels: &[u32],
    test: &[Histogram],
    test_labels: &[u32],
    k: usize,
) -> Result<EvalReport> {
    check_len("test labels", test_labels.len(), test.len())?;
    let known = classes_of(train_labels);
    if known.len() < 2 {
        return Err(Error::invalid("evaluation needs at least two classes"));
    }
    if let Some(l) = test_labels.iter().find(|l| known.binary_search(l).is_err()) {
        return Err(Error::invalid(format!("class {l} is absent from the training split")));
    }
    let mut predictions = Vec::with_capacity(test.len());
    for (i, (h, &t)) in test.iter().zip(test_labels).enumerate() {
        predictions.push((i, t, knn_classify(train, train_labels, h, k)?));
    }
    Ok(EvalReport::from_predictions(known, predictions))
}

/// Leave-one-out: each item is classified against all others.
pub fn evaluate_loo(hists: &[Histogram], labels: &[u32], k: usize) -> Result<EvalReport> {
    check_len("labels", labels.len(), hists.len())?;
    let classes = classes_of(labels);
    if classes.len() < 2 {
        return Err(Error::invalid("evaluation needs at least two classes"));
    }
    let mut predictions = Vec::with_capacity(hists.len());
    for i in 0..hists.len() {
        let (mut th, mut tl) = (Vec::with_capacity(hists.len() - 1), Vec::with_capacity(hists.len() - 1));
        for j in (0..hists.len()).filter(|&j| j != i) {
            th.push(hists[j].clone());
            tl.push(labels[j]);
        }
        if !tl.contains(&labels[i]) {
            return Err(Error::invalid(format!(
                "class {} has a single member; leave-one-out cannot train on it",
                labels[i]
            )));
        }
        predictions.push((i, labels[i], knn_classify(&th, &tl, &hists[i], k)?));
    }
    Ok(EvalReport::from_predictions(classes, predictions))
}

//! Evaluation metrics: balanced accuracy, macro-averaged ROC and PR AUC,
//! confusion matrices, and ROC curve points.
//!
//! All three metrics are rank-based, hence invariant under strictly
//! monotone transforms of the scores. Conventions pinned here (and by the
//! oracle tests):
//!
//! - ROC AUC uses the Mann-Whitney rank statistic; tied scores contribute
//!   half credit.
//! - PR AUC is average precision with step interpolation; tied scores are
//!   processed as one threshold group, which also makes the metric invariant
//!   under duplicating every example.
//! - Classes with no positives or no negatives are excluded from macro
//!   averages and reported in `skipped_classes`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor2;

pub const N_CLASSES: usize = 4;

/// One-vs-rest ROC curve for a class, as (fpr, tpr) points monotone in fpr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub class: usize,
    pub points: Vec<(f64, f64)>,
}

/// Headline metrics plus supporting detail. Field order matches the
/// reporting convention: balanced accuracy, PR AUC, ROC AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub balanced_accuracy: f64,
    pub macro_pr_auc: f64,
    pub macro_roc_auc: f64,
    /// `confusion[true_class][predicted_class]` counts.
    pub confusion: Vec<Vec<u64>>,
    /// Classes excluded from the macro averages (no positives or negatives).
    pub skipped_classes: Vec<usize>,
    pub per_class_roc: Vec<RocCurve>,
}

fn check_lengths(labels: &[usize], other_len: usize, what: &str) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::EmptyInput(format!("{what} on an empty label set")));
    }
    if labels.len() != other_len {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {} labels vs {} rows",
            labels.len(),
            other_len
        )));
    }
    Ok(())
}

/// Unweighted mean of per-class recall over the classes present in
/// `labels`.
pub fn balanced_accuracy(labels: &[usize], predictions: &[usize]) -> Result<f64> {
    check_lengths(labels, predictions.len(), "balanced accuracy")?;
    let n_classes = labels
        .iter()
        .chain(predictions)
        .max()
        .map_or(N_CLASSES, |&m| N_CLASSES.max(m + 1));
    let mut support = vec![0u64; n_classes];
    let mut hits = vec![0u64; n_classes];
    for (&l, &p) in labels.iter().zip(predictions) {
        support[l] += 1;
        if l == p {
            hits[l] += 1;
        }
    }
    let mut acc = 0.0;
    let mut present = 0usize;
    for (h, s) in hits.iter().zip(&support) {
        if *s > 0 {
            acc += *h as f64 / *s as f64;
            present += 1;
        }
    }
    Ok(acc / present as f64)
}

/// Midranks (1-based) of `scores`, averaging ranks within tied groups.
fn midranks(scores: &[f64]) -> Vec<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// One-vs-rest AUC for a binary split via the rank statistic; `None` when
/// a side is empty.
fn binary_roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let pos_rank_sum: f64 = ranks
        .iter()
        .zip(positive)
        .filter(|(_, &p)| p)
        .map(|(r, _)| r)
        .sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision with tied scores processed as one threshold group.
fn binary_average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 || n_pos == positive.len() {
        return None;
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let group_pos = order[i..=j].iter().filter(|&&k| positive[k]).count();
        tp += group_pos;
        seen += j - i + 1;
        if group_pos > 0 {
            let precision = tp as f64 / seen as f64;
            ap += precision * group_pos as f64 / n_pos as f64;
        }
        i = j + 1;
    }
    Some(ap)
}

fn one_vs_rest<'a>(
    labels: &'a [usize],
    scores: &'a Tensor2,
    class: usize,
) -> (Vec<f64>, Vec<bool>) {
    let col: Vec<f64> = (0..scores.rows()).map(|r| scores.get(r, class)).collect();
    let pos: Vec<bool> = labels.iter().map(|&l| l == class).collect();
    (col, pos)
}

fn macro_average(
    labels: &[usize],
    scores: &Tensor2,
    per_class: impl Fn(&[f64], &[bool]) -> Option<f64>,
    what: &str,
) -> Result<(f64, Vec<usize>)> {
    check_lengths(labels, scores.rows(), what)?;
    if !scores.is_finite() {
        return Err(Error::NonFinite(format!("{what} scores")));
    }
    let mut total = 0.0;
    let mut included = 0usize;
    let mut skipped = Vec::new();
    for class in 0..scores.cols() {
        let (col, pos) = one_vs_rest(labels, scores, class);
        match per_class(&col, &pos) {
            Some(v) => {
                total += v;
                included += 1;
            }
            None => skipped.push(class),
        }
    }
    if included == 0 {
        return Err(Error::NoComputableClass);
    }
    if !skipped.is_empty() {
        log::warn!("{what}: classes {skipped:?} lack positives or negatives; excluded from the macro average");
    }
    Ok((total / included as f64, skipped))
}

/// Macro one-vs-rest ROC AUC over the classes with both positives and
/// negatives.
pub fn roc_auc_macro(labels: &[usize], scores: &Tensor2) -> Result<f64> {
    macro_average(labels, scores, binary_roc_auc, "macro ROC AUC").map(|(v, _)| v)
}

/// Macro one-vs-rest average precision over the computable classes.
pub fn pr_auc_macro(labels: &[usize], scores: &Tensor2) -> Result<f64> {
    macro_average(labels, scores, binary_average_precision, "macro PR AUC").map(|(v, _)| v)
}

/// `confusion[true][pred]` counts over `n_classes`.
pub fn confusion_matrix(labels: &[usize], predictions: &[usize], n_classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&l, &p) in labels.iter().zip(predictions) {
        m[l][p] += 1;
    }
    m
}

/// One-vs-rest ROC curve for `class`: starts at (0, 0), steps once per
/// distinct score, ends at (1, 1).
pub fn roc_curve(labels: &[usize], scores: &Tensor2, class: usize) -> Option<RocCurve> {
    let (col, pos) = one_vs_rest(labels, scores, class);
    let n_pos = pos.iter().filter(|&&p| p).count();
    let n_neg = pos.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let n = col.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && col[order[j + 1]] == col[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            if pos[k] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        i = j + 1;
    }
    Some(RocCurve { class, points })
}

/// Predicted class per row: argmax of the scores (first index wins ties).
pub fn argmax_predictions(scores: &Tensor2) -> Vec<usize> {
    (0..scores.rows())
        .map(|r| {
            let row = scores.row(r);
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Full report from labels and per-class scores.
pub fn evaluate(labels: &[usize], scores: &Tensor2) -> Result<EvalReport> {
    check_lengths(labels, scores.rows(), "evaluate")?;
    let predictions = argmax_predictions(scores);
    let balanced = balanced_accuracy(labels, &predictions)?;
    let (pr, _) = macro_average(labels, scores, binary_average_precision, "macro PR AUC")?;
    let (roc, skipped) = macro_average(labels, scores, binary_roc_auc, "macro ROC AUC")?;
    let confusion = confusion_matrix(labels, &predictions, scores.cols());
    let per_class_roc = (0..scores.cols())
        .filter_map(|c| roc_curve(labels, scores, c))
        .collect();
    Ok(EvalReport {
        balanced_accuracy: balanced,
        macro_pr_auc: pr,
        macro_roc_auc: roc,
        confusion,
        skipped_classes: skipped,
        per_class_roc,
    })
}

/// Writes ROC curve points as CSV (`class,fpr,tpr`) for plotting.
pub fn write_roc_csv<W: std::io::Write>(report: &EvalReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["class", "fpr", "tpr"])?;
    for curve in &report.per_class_roc {
        for (fpr, tpr) in &curve.points {
            w.write_record([
                curve.class.to_string(),
                format!("{fpr}"),
                format!("{tpr}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

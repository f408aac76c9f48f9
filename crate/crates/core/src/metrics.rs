//! Rank-based multi-label metrics: ranking loss, average AUC, coverage and
//! average precision.
//!
//! Scores and truth are `l x p` (labels by instances). Truth entries are
//! `+1` or `-1`; a `0` entry is left out of every comparison, which lets the
//! same code score only the hidden entries of a masked label matrix.
//!
//! Tie handling is asymmetric: in the ranking loss a positive scored equal
//! to a negative counts as misordered, in the AUC it counts as correctly
//! ordered. Label ranks break score ties by ascending label index.
//! Instances (or labels) whose comparison set is empty are skipped and the
//! average is taken over the rest.

use std::cmp::Ordering;
use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{GlocalError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationReport {
    pub rkl: f64,
    pub auc: f64,
    pub cvg: f64,
    pub ap: f64,
    /// Instances without both a positive and a negative label.
    pub skipped_instances: usize,
    /// Labels without both a positive and a negative instance.
    pub skipped_labels: usize,
}

impl EvaluationReport {
    pub const CSV_HEADER: &'static str = "rkl,auc,cvg,ap,skipped_instances,skipped_labels";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.rkl, self.auc, self.cvg, self.ap, self.skipped_instances, self.skipped_labels
        )
    }

    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            for line in c.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        let _ = writeln!(out, "{}", Self::CSV_HEADER);
        let _ = writeln!(out, "{}", self.csv_row());
        out
    }
}

fn check(scores: &Array2<f64>, truth: &Array2<i8>) -> Result<()> {
    if scores.dim() != truth.dim() {
        return Err(GlocalError::Shape(format!(
            "scores are {:?}, truth is {:?}",
            scores.dim(),
            truth.dim()
        )));
    }
    if let Some(v) = truth.iter().find(|v| !matches!(v, -1..=1)) {
        return Err(GlocalError::InvalidArgument(format!(
            "truth entry {v} not in {{-1, 0, +1}}"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(GlocalError::NonFinite("score".into()));
    }
    Ok(())
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

fn mean_of(ratios: &[f64], what: &str) -> Result<f64> {
    if ratios.is_empty() {
        return Err(GlocalError::UndefinedMetric(format!(
            "{what}: every case is degenerate"
        )));
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

fn instance_ratios_rkl(scores: &Array2<f64>, truth: &Array2<i8>) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..scores.ncols() {
        let (s, t) = (scores.column(i), truth.column(i));
        let pos: Vec<f64> = (0..s.len()).filter(|&j| t[j] == 1).map(|j| s[j]).collect();
        let neg = sorted((0..s.len()).filter(|&j| t[j] == -1).map(|j| s[j]).collect());
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        // negatives scored at or above each positive
        let bad: usize = pos
            .iter()
            .map(|&p| neg.len() - neg.partition_point(|&x| x < p))
            .sum();
        out.push(bad as f64 / (pos.len() * neg.len()) as f64);
    }
    out
}

/// Fraction of (positive, negative) label pairs where the negative is
/// scored at least as high, averaged over instances.
pub fn ranking_loss(scores: &Array2<f64>, truth: &Array2<i8>) -> Result<f64> {
    check(scores, truth)?;
    mean_of(&instance_ratios_rkl(scores, truth), "ranking loss")
}

fn label_ratios_auc(scores: &Array2<f64>, truth: &Array2<i8>) -> Vec<f64> {
    let mut out = Vec::new();
    for j in 0..scores.nrows() {
        let (s, t) = (scores.row(j), truth.row(j));
        let pos: Vec<f64> = (0..s.len()).filter(|&i| t[i] == 1).map(|i| s[i]).collect();
        let neg = sorted((0..s.len()).filter(|&i| t[i] == -1).map(|i| s[i]).collect());
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let good: usize = pos.iter().map(|&p| neg.partition_point(|&x| x <= p)).sum();
        out.push(good as f64 / (pos.len() * neg.len()) as f64);
    }
    out
}

/// Fraction of (positive, negative) instance pairs where the positive is
/// scored at least as high, averaged over labels.
pub fn average_auc(scores: &Array2<f64>, truth: &Array2<i8>) -> Result<f64> {
    check(scores, truth)?;
    mean_of(&label_ratios_auc(scores, truth), "average AUC")
}

/// 1-based ranks of the evaluated labels of column `i`, `None` for
/// labels left out.
fn label_ranks(scores: &Array2<f64>, truth: &Array2<i8>, i: usize) -> Vec<Option<usize>> {
    let (s, t) = (scores.column(i), truth.column(i));
    let mut order: Vec<usize> = (0..s.len()).filter(|&j| t[j] != 0).collect();
    order.sort_by(|&a, &b| {
        s[b].partial_cmp(&s[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut ranks = vec![None; s.len()];
    for (r, &j) in order.iter().enumerate() {
        ranks[j] = Some(r + 1);
    }
    ranks
}

/// Per-instance `max rank over positives - 1` and precision averages,
/// for instances with at least one positive.
fn rank_based(scores: &Array2<f64>, truth: &Array2<i8>) -> (Vec<f64>, Vec<f64>) {
    let mut cvg = Vec::new();
    let mut ap = Vec::new();
    for i in 0..scores.ncols() {
        let t = truth.column(i);
        let ranks = label_ranks(scores, truth, i);
        let positives: Vec<(usize, usize)> = (0..t.len())
            .filter(|&j| t[j] == 1)
            .map(|j| (j, ranks[j].expect("positive labels are ranked")))
            .collect();
        if positives.is_empty() {
            continue;
        }
        let deepest = positives.iter().map(|&(_, r)| r).max().unwrap_or(1);
        cvg.push((deepest - 1) as f64);

        let mut by_rank: Vec<usize> = positives.iter().map(|&(_, r)| r).collect();
        by_rank.sort_unstable();
        // positives are summed in label order
        let precision: f64 = positives
            .iter()
            .map(|&(_, r)| {
                let above = by_rank.partition_point(|&x| x <= r);
                above as f64 / r as f64
            })
            .sum();
        ap.push(precision / positives.len() as f64);
    }
    (cvg, ap)
}

/// Average number of steps down the label ranking needed to cover every
/// positive label.
pub fn coverage(scores: &Array2<f64>, truth: &Array2<i8>) -> Result<f64> {
    check(scores, truth)?;
    mean_of(&rank_based(scores, truth).0, "coverage")
}

/// For each positive label, the fraction of labels ranked at or above it
/// that are positive; averaged over positives, then instances.
pub fn average_precision(scores: &Array2<f64>, truth: &Array2<i8>) -> Result<f64> {
    check(scores, truth)?;
    mean_of(&rank_based(scores, truth).1, "average precision")
}

/// All four metrics plus skip counts.
pub fn evaluate(scores: &Array2<f64>, truth: &Array2<i8>) -> Result<EvaluationReport> {
    check(scores, truth)?;
    let rkl = instance_ratios_rkl(scores, truth);
    let auc = label_ratios_auc(scores, truth);
    let (cvg, ap) = rank_based(scores, truth);
    Ok(EvaluationReport {
        rkl: mean_of(&rkl, "ranking loss")?,
        auc: mean_of(&auc, "average AUC")?,
        cvg: mean_of(&cvg, "coverage")?,
        ap: mean_of(&ap, "average precision")?,
        skipped_instances: scores.ncols() - rkl.len(),
        skipped_labels: scores.nrows() - auc.len(),
    })
}

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("label matrices differ in shape: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
}

/// How precision, recall and F1 are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Pooled over all `n · L` label slots.
    #[default]
    Micro,
    /// Unweighted mean of the per-label scores.
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl LabelCounts {
    fn add(&mut self, y: bool, p: bool) {
        match (y, p) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn shape(m: &[Vec<bool>]) -> (usize, usize) {
    (m.len(), m.first().map_or(0, Vec::len))
}

fn check(y: &[Vec<bool>], yhat: &[Vec<bool>]) -> Result<(usize, usize), MetricsError> {
    let (sy, sp) = (shape(y), shape(yhat));
    let ragged = |m: &[Vec<bool>], l: usize| m.iter().any(|r| r.len() != l);
    if sy != sp || ragged(y, sy.1) || ragged(yhat, sy.1) {
        return Err(MetricsError::ShapeMismatch {
            left: sy,
            right: sp,
        });
    }
    Ok(sy)
}

pub fn label_counts(y: &[Vec<bool>], yhat: &[Vec<bool>]) -> Result<Vec<LabelCounts>, MetricsError> {
    let (_, l) = check(y, yhat)?;
    let mut counts = vec![LabelCounts::default(); l];
    for (ry, rp) in y.iter().zip(yhat) {
        for (k, (&a, &b)) in ry.iter().zip(rp).enumerate() {
            counts[k].add(a, b);
        }
    }
    Ok(counts)
}

/// Fraction of label slots predicted correctly. Empty input scores 0.
pub fn hamming_score(y: &[Vec<bool>], yhat: &[Vec<bool>]) -> Result<f64, MetricsError> {
    let (n, l) = check(y, yhat)?;
    let hits: usize = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x == y).count())
        .sum();
    Ok(ratio(hits, n * l))
}

pub fn prf1(y: &[Vec<bool>], yhat: &[Vec<bool>]) -> Result<(f64, f64, f64), MetricsError> {
    prf1_with(y, yhat, Averaging::Micro)
}

pub fn prf1_with(
    y: &[Vec<bool>],
    yhat: &[Vec<bool>],
    averaging: Averaging,
) -> Result<(f64, f64, f64), MetricsError> {
    let counts = label_counts(y, yhat)?;
    Ok(match averaging {
        Averaging::Micro => {
            let tp: usize = counts.iter().map(|c| c.tp).sum();
            let fp: usize = counts.iter().map(|c| c.fp).sum();
            let fn_: usize = counts.iter().map(|c| c.fn_).sum();
            let (p, r) = (ratio(tp, tp + fp), ratio(tp, tp + fn_));
            (p, r, harmonic(p, r))
        }
        Averaging::Macro => {
            let l = counts.len().max(1) as f64;
            let p = counts.iter().map(LabelCounts::precision).sum::<f64>() / l;
            let r = counts.iter().map(LabelCounts::recall).sum::<f64>() / l;
            (p, r, harmonic(p, r))
        }
    })
}

/// Sample-wise intersection over union of the positive label sets, averaged
/// over samples. A sample with no true and no predicted positives scores 1.
pub fn iou_score(y: &[Vec<bool>], yhat: &[Vec<bool>]) -> Result<f64, MetricsError> {
    let (n, _) = check(y, yhat)?;
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| {
            let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
            let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
            if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            }
        })
        .sum();
    Ok(total / n as f64)
}

pub fn hs_degradation(hs_base: f64, hs_obf: f64) -> f64 {
    hs_base - hs_obf
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n: usize,
    pub labels: usize,
    pub hs: f64,
    pub hamming_loss: f64,
    pub averaging: Averaging,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub per_label: Vec<LabelCounts>,
}

pub fn metrics_report(
    y: &[Vec<bool>],
    yhat: &[Vec<bool>],
    averaging: Averaging,
) -> Result<MetricsReport, MetricsError> {
    let (n, labels) = check(y, yhat)?;
    let hs = hamming_score(y, yhat)?;
    let (precision, recall, f1) = prf1_with(y, yhat, averaging)?;
    Ok(MetricsReport {
        n,
        labels,
        hs,
        hamming_loss: 1.0 - hs,
        averaging,
        precision,
        recall,
        f1,
        iou: iou_score(y, yhat)?,
        per_label: label_counts(y, yhat)?,
    })
}

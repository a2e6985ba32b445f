//! Detection metrics on recapture-probability scores; label 1 is recaptured.
//!
//! A sample is called recaptured when `score >= threshold`. FAR is the
//! fraction of genuine samples called recaptured, FRR the fraction of
//! recaptured samples called genuine. Every metric is a percentage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "Model,ACC(%),AUC(%),EER(%),AP(%),HTER(%)";
pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn validate(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Input("no scores".into()));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Input(format!("label {l} is not 0 or 1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("NaN score".into()));
    }
    Ok(())
}

/// `(positives, negatives)`, failing unless both are present.
fn class_counts(labels: &[u8], metric: &str) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!("{metric} needs both classes")));
    }
    Ok((pos, neg))
}

pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    validate(scores, labels)?;
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|&(&s, &l)| (s >= threshold) == (l == 1))
        .count();
    Ok(hits as f64 * 100.0 / scores.len() as f64)
}

/// Mann-Whitney AUC with ties counted as one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate(scores, labels)?;
    let (pos, neg) = class_counts(labels, "AUC")?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the Mann-Whitney U, kept integral so complements sum exactly
    let mut u2: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        u2 += 2 * p * neg_below + p * n;
        neg_below += n;
        i = j;
    }
    Ok(u2 as f64 * 50.0 / (pos as f64 * neg as f64))
}

/// FAR and FRR (as fractions) at one threshold.
fn error_rates(scores: &[f64], labels: &[u8], threshold: f64, pos: usize, neg: usize) -> (f64, f64) {
    let mut false_accept = 0usize;
    let mut false_reject = 0usize;
    for (&s, &l) in scores.iter().zip(labels) {
        match (l == 1, s >= threshold) {
            (false, true) => false_accept += 1,
            (true, false) => false_reject += 1,
            _ => {}
        }
    }
    (false_accept as f64 / neg as f64, false_reject as f64 / pos as f64)
}

/// Equal error rate and its threshold.
///
/// Candidates, in ascending order, are the smallest score followed by the
/// midpoints between consecutive distinct scores; the first candidate
/// minimizing `|FAR - FRR|` wins and reports `(FAR + FRR) / 2`.
pub fn eer(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    validate(scores, labels)?;
    let (pos, neg) = class_counts(labels, "EER")?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // threshold at the smallest score: everything is called recaptured
    let (mut below_pos, mut below_neg) = (0usize, 0usize);
    let mut best = (f64::INFINITY, 0.0, scores[order[0]]);
    let mut consider = |below_pos: usize, below_neg: usize, t: f64| {
        let far = (neg - below_neg) as f64 / neg as f64;
        let frr = below_pos as f64 / pos as f64;
        let gap = (far - frr).abs();
        if gap < best.0 {
            best = (gap, (far + frr) * 50.0, t);
        }
    };
    consider(0, 0, scores[order[0]]);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                below_pos += 1;
            } else {
                below_neg += 1;
            }
            i += 1;
        }
        if i < order.len() {
            consider(below_pos, below_neg, (s + scores[order[i]]) / 2.0);
        }
    }
    Ok((best.1, best.2))
}

/// Average precision over the descending ranking; equal scores keep their
/// input order.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 {
        return Err(Error::UndefinedMetric("AP needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum * 100.0 / pos as f64)
}

/// Half total error rate at a fixed threshold.
pub fn hter(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    validate(scores, labels)?;
    let (pos, neg) = class_counts(labels, "HTER")?;
    let (far, frr) = error_rates(scores, labels, threshold, pos, neg);
    Ok((far + frr) * 50.0)
}

/// How the HTER operating threshold is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HterMode {
    /// The configured fixed threshold (0.5 by default).
    #[default]
    Fixed,
    /// The EER threshold of the validation split.
    DevEer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub acc: f64,
    pub auc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub ap: f64,
    pub hter: f64,
    /// Decision threshold for ACC.
    pub threshold: f64,
    /// Operating threshold for HTER.
    pub hter_threshold: f64,
}

impl EvalReport {
    pub fn compute(scenario: &str, scores: Vec<f64>, labels: Vec<u8>, threshold: f64, hter_threshold: f64) -> Result<Self> {
        let (eer, eer_threshold) = eer(&scores, &labels)?;
        Ok(EvalReport {
            scenario: scenario.to_string(),
            acc: accuracy(&scores, &labels, threshold)?,
            auc: auc(&scores, &labels)?,
            eer,
            eer_threshold,
            ap: average_precision(&scores, &labels)?,
            hter: hter(&scores, &labels, hter_threshold)?,
            threshold,
            hter_threshold,
            scores,
            labels,
        })
    }

    /// Metrics recomputed from the stored scores.
    pub fn recompute(&self) -> Result<Self> {
        Self::compute(
            &self.scenario,
            self.scores.clone(),
            self.labels.clone(),
            self.threshold,
            self.hter_threshold,
        )
    }

    pub fn csv_row(&self, model: &str) -> String {
        format!(
            "{model},{:.2},{:.2},{:.2},{:.2},{:.2}",
            self.acc, self.auc, self.eer, self.ap, self.hter
        )
    }
}

pub fn csv_table<'a>(rows: impl IntoIterator<Item = (&'a str, &'a EvalReport)>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (model, report) in rows {
        out.push_str(&report.csv_row(model));
        out.push('\n');
    }
    out
}

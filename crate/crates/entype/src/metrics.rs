//! Strict accuracy and loose macro/micro precision, recall, and F1 over
//! (gold, predicted) type-set pairs.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot evaluate an empty pair sequence")]
    EmptyInput,
    #[error("pair {index} has an empty predicted set")]
    EmptyPrediction { index: usize },
}

/// The seven evaluation scores, all in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub strict_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

impl EvalResult {
    /// Flat `key value` lines, one metric per line, stable order.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.entries() {
            let _ = writeln!(out, "{key} {value:.6}");
        }
        out
    }

    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("strict_accuracy", self.strict_accuracy),
            ("macro_precision", self.macro_precision),
            ("macro_recall", self.macro_recall),
            ("macro_f1", self.macro_f1),
            ("micro_precision", self.micro_precision),
            ("micro_recall", self.micro_recall),
            ("micro_f1", self.micro_f1),
        ]
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn validate<T: Ord>(pairs: &[(BTreeSet<T>, BTreeSet<T>)]) -> Result<(), MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    for (i, (_, pred)) in pairs.iter().enumerate() {
        if pred.is_empty() {
            return Err(MetricsError::EmptyPrediction { index: i });
        }
    }
    Ok(())
}

/// Fraction of mentions whose predicted set equals the gold set exactly.
pub fn strict_accuracy<T: Ord>(
    pairs: &[(BTreeSet<T>, BTreeSet<T>)],
) -> Result<f64, MetricsError> {
    validate(pairs)?;
    let exact = pairs.iter().filter(|(gold, pred)| gold == pred).count();
    Ok(exact as f64 / pairs.len() as f64)
}

/// Mention-averaged overlap precision/recall and their harmonic mean.
pub fn loose_macro<T: Ord>(
    pairs: &[(BTreeSet<T>, BTreeSet<T>)],
) -> Result<(f64, f64, f64), MetricsError> {
    validate(pairs)?;
    let n = pairs.len() as f64;
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    for (gold, pred) in pairs {
        let overlap = gold.intersection(pred).count() as f64;
        p_sum += overlap / pred.len() as f64;
        r_sum += overlap / gold.len() as f64;
    }
    let p = p_sum / n;
    let r = r_sum / n;
    Ok((p, r, f1(p, r)))
}

/// Pooled-count overlap precision/recall and their harmonic mean.
pub fn loose_micro<T: Ord>(
    pairs: &[(BTreeSet<T>, BTreeSet<T>)],
) -> Result<(f64, f64, f64), MetricsError> {
    validate(pairs)?;
    let mut overlap = 0usize;
    let mut pred_total = 0usize;
    let mut gold_total = 0usize;
    for (gold, pred) in pairs {
        overlap += gold.intersection(pred).count();
        pred_total += pred.len();
        gold_total += gold.len();
    }
    let p = overlap as f64 / pred_total as f64;
    let r = overlap as f64 / gold_total as f64;
    Ok((p, r, f1(p, r)))
}

/// All seven scores in one pass.
pub fn evaluate<T: Ord>(
    pairs: &[(BTreeSet<T>, BTreeSet<T>)],
) -> Result<EvalResult, MetricsError> {
    let strict = strict_accuracy(pairs)?;
    let (map, mar, maf) = loose_macro(pairs)?;
    let (mip, mir, mif) = loose_micro(pairs)?;
    Ok(EvalResult {
        strict_accuracy: strict,
        macro_precision: map,
        macro_recall: mar,
        macro_f1: maf,
        micro_precision: mip,
        micro_recall: mir,
        micro_f1: mif,
    })
}

//! Post-hoc model analyses: per-type attention statistics and a PCA
//! projection of the label embeddings.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::{EmbeddingTable, MentionInstance, PAD_TOKEN};
use crate::encoders::build_context_windows;
use crate::labels::LabelError;
use crate::model::{Model, ModelError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error("label PCA needs at least 2 types, found {found}")]
    TooFewTypes { found: usize },
}

/// Attention statistics for one gold type: how often the top-attended
/// context token was the head's lexical parent or the token adjacent to the
/// mention, plus the most frequently top-attended words.
///
/// Each fraction is computed over the mentions of the type that carry the
/// relevant annotation or adjacent token; `None` means no mention was
/// eligible. The categories overlap, so the fractions need not sum to 1.
#[derive(Clone, Debug)]
pub struct AttentionSummaryRow {
    pub type_path: String,
    pub mentions: usize,
    pub parent_fraction: Option<f64>,
    pub before_fraction: Option<f64>,
    pub after_fraction: Option<f64>,
    /// Top-attended token strings with counts, most frequent first.
    pub frequent_words: Vec<(String, usize)>,
}

#[derive(Default)]
struct TypeTally {
    mentions: usize,
    parent_eligible: usize,
    parent_hits: usize,
    before_eligible: usize,
    before_hits: usize,
    after_eligible: usize,
    after_hits: usize,
    words: HashMap<String, usize>,
}

fn fraction(hits: usize, eligible: usize) -> Option<f64> {
    if eligible == 0 {
        None
    } else {
        Some(hits as f64 / eligible as f64)
    }
}

/// Runs the attentive model over a dataset and aggregates, per gold type,
/// where the single strongest attention weight landed. Padding positions
/// can win the argmax (they count as a non-match) but never enter the
/// frequent-word tally.
pub fn attention_summary(
    model: &Model,
    table: &EmbeddingTable,
    dataset: &[MentionInstance],
    top_words: usize,
) -> Result<Vec<AttentionSummaryRow>, AnalysisError> {
    let mut tallies: BTreeMap<String, TypeTally> = BTreeMap::new();
    for inst in dataset {
        let att = model.attention(table, inst)?;
        let windows = build_context_windows(inst, model.config.context_size);
        let c = windows.window_size();
        let pos = att.argmax();
        let top_token = if pos < c {
            windows.left[pos].as_str()
        } else {
            windows.right[pos - c].as_str()
        };
        let is_pad = top_token == PAD_TOKEN;

        for label in &inst.labels {
            let path = crate::labels::parse_type_path(label)?.to_string();
            let tally = tallies.entry(path).or_default();
            tally.mentions += 1;
            if let Some(parent) = &inst.parent_token {
                tally.parent_eligible += 1;
                if !is_pad && top_token == parent {
                    tally.parent_hits += 1;
                }
            }
            if let Some(before) = inst.token_before() {
                tally.before_eligible += 1;
                if !is_pad && top_token == before {
                    tally.before_hits += 1;
                }
            }
            if let Some(after) = inst.token_after() {
                tally.after_eligible += 1;
                if !is_pad && top_token == after {
                    tally.after_hits += 1;
                }
            }
            if !is_pad {
                *tally.words.entry(top_token.to_string()).or_insert(0) += 1;
            }
        }
    }

    Ok(tallies
        .into_iter()
        .map(|(type_path, tally)| {
            let mut words: Vec<(String, usize)> = tally.words.into_iter().collect();
            words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            words.truncate(top_words);
            AttentionSummaryRow {
                type_path,
                mentions: tally.mentions,
                parent_fraction: fraction(tally.parent_hits, tally.parent_eligible),
                before_fraction: fraction(tally.before_hits, tally.before_eligible),
                after_fraction: fraction(tally.after_hits, tally.after_eligible),
                frequent_words: words,
            }
        })
        .collect())
}

fn fmt_fraction(f: Option<f64>, precision: usize) -> String {
    match f {
        Some(v) => format!("{v:.precision$}"),
        None => String::new(),
    }
}

/// Comma-separated summary with a header row; frequent words are
/// space-joined inside one cell.
pub fn attention_summary_csv(rows: &[AttentionSummaryRow]) -> String {
    let mut out =
        String::from("type,mentions,parent_fraction,before_fraction,after_fraction,frequent_words\n");
    for row in rows {
        let words: Vec<&str> = row.frequent_words.iter().map(|(w, _)| w.as_str()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.type_path,
            row.mentions,
            fmt_fraction(row.parent_fraction, 6),
            fmt_fraction(row.before_fraction, 6),
            fmt_fraction(row.after_fraction, 6),
            words.join(" ")
        );
    }
    out
}

/// Human-readable table: one line per type with the three fractions and
/// the most frequent top-attended words.
pub fn attention_summary_table(rows: &[AttentionSummaryRow]) -> String {
    let mut out = format!(
        "{:<28} {:>7} {:>7} {:>7}  {}\n",
        "Type", "Parent", "Before", "After", "Frequent Words"
    );
    for row in rows {
        let words: Vec<&str> = row.frequent_words.iter().map(|(w, _)| w.as_str()).collect();
        let na = |f: Option<f64>| {
            f.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into())
        };
        let _ = writeln!(
            out,
            "{:<28} {:>7} {:>7} {:>7}  {}",
            row.type_path,
            na(row.parent_fraction),
            na(row.before_fraction),
            na(row.after_fraction),
            words.join(", ")
        );
    }
    out
}

/// A type's label embedding projected onto the first two principal
/// components.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaPoint {
    pub type_path: String,
    pub x: f64,
    pub y: f64,
}

/// Projects the rows of the effective label weight matrix (one embedding
/// per type) onto their top-2 principal directions: rows are centered and
/// the covariance eigenvectors are computed directly, without scaling or
/// whitening. Eigenvector signs are fixed so each direction's
/// largest-magnitude entry is positive.
pub fn pca_label_embeddings(model: &Model) -> Result<Vec<PcaPoint>, AnalysisError> {
    let k = model.types.num_types();
    if k < 2 {
        return Err(AnalysisError::TooFewTypes { found: k });
    }
    let w = model.effective_label_matrix()?;
    let d = w.cols();

    let mut mean = vec![0.0; d];
    for row in 0..k {
        for col in 0..d {
            mean[col] += w.at(row, col);
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);

    let centered: Vec<Vec<f64>> = (0..k)
        .map(|row| (0..d).map(|col| w.at(row, col) - mean[col]).collect())
        .collect();

    let mut cov = vec![vec![0.0; d]; d];
    for row in &centered {
        for i in 0..d {
            for j in i..d {
                cov[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[i][j] = cov[j][i];
        }
    }

    let (eigenvalues, eigenvectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigenvalues[b].partial_cmp(&eigenvalues[a]).unwrap());

    let direction = |rank: usize| -> Option<Vec<f64>> {
        let idx = *order.get(rank)?;
        let mut v: Vec<f64> = (0..d).map(|i| eigenvectors[i][idx]).collect();
        // Sign convention: largest-magnitude entry positive.
        let mut lead = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        Some(v)
    };
    let first = direction(0).expect("d >= 1");
    let second = direction(1);

    Ok(centered
        .iter()
        .enumerate()
        .map(|(row, values)| {
            let dot = |dir: &[f64]| values.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>();
            PcaPoint {
                type_path: model.types.type_at(row).to_string(),
                x: dot(&first),
                y: second.as_ref().map(|dir| dot(dir)).unwrap_or(0.0),
            }
        })
        .collect())
}

/// Comma-separated PCA coordinates with a header row.
pub fn pca_csv(points: &[PcaPoint]) -> String {
    let mut out = String::from("type,x,y\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.type_path, p.x, p.y);
    }
    out
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and the matrix of eigenvectors (columns).
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for i in 0..n {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[p][i];
                    let aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for row in v.iter_mut() {
                    let vip = row[p];
                    let viq = row[q];
                    row[p] = c * vip - s * viq;
                    row[q] = s * vip + c * viq;
                }
            }
        }
    }
    let eigenvalues = (0..n).map(|i| a[i][i]).collect();
    (eigenvalues, v)
}

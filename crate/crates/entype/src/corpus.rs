//! Dataset, pre-trained embedding, and Brown-cluster loading.
//!
//! Datasets are line-delimited JSON records (UTF-8), one mention per line.
//! Embeddings are whitespace-separated text: a token followed by its vector
//! components. Cluster tables are `token<TAB>bitstring` lines.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Tensor;

/// Reserved padding symbol for context windows. It embeds to the zero
/// vector, bypassing the table entirely.
pub const PAD_TOKEN: &str = "<pad>";

/// Designated fallback token that every embedding table must contain.
pub const UNK_TOKEN: &str = "unk";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected {expected} values after the token, found {actual}")]
    EmbeddingArity {
        path: String,
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("{path}:{line}: cannot parse value: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("embedding table at {path} lacks the required \"{UNK_TOKEN}\" fallback row")]
    MissingUnk { path: String },
    #[error("{path}:{line}: mention span [{start}, {end}) out of range for {tokens} tokens")]
    SpanOutOfRange {
        path: String,
        line: usize,
        start: usize,
        end: usize,
        tokens: usize,
    },
    #[error("{path}:{line}: record has an empty label set")]
    EmptyLabels { path: String, line: usize },
    #[error("{path}:{line}: head_index {head} outside the mention span [{start}, {end})")]
    HeadOutOfSpan {
        path: String,
        line: usize,
        head: usize,
        start: usize,
        end: usize,
    },
    #[error("{path}:{line}: cluster bit-string {bits:?} contains characters outside {{0,1}}")]
    BadClusterBits {
        path: String,
        line: usize,
        bits: String,
    },
    #[error("{path}:{line}: expected token<TAB>bitstring")]
    BadClusterRow { path: String, line: usize },
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Frozen map from surface tokens to dense vectors with an "unk" fallback.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
    zero: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(
        dimension: usize,
        vectors: HashMap<String, Vec<f64>>,
    ) -> Result<Self, CorpusError> {
        if !vectors.contains_key(UNK_TOKEN) {
            return Err(CorpusError::MissingUnk {
                path: "<memory>".into(),
            });
        }
        debug_assert!(vectors.values().all(|v| v.len() == dimension));
        Ok(Self {
            dimension,
            vectors,
            zero: vec![0.0; dimension],
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Total token lookup: the stored row for known tokens (case preserved),
    /// the "unk" row for unknown ones, and the zero vector for [`PAD_TOKEN`].
    pub fn embed(&self, token: &str) -> &[f64] {
        if token == PAD_TOKEN {
            return &self.zero;
        }
        self.vectors
            .get(token)
            .or_else(|| self.vectors.get(UNK_TOKEN))
            .expect("unk row validated at construction")
    }

    pub fn embed_tensor(&self, token: &str) -> Tensor {
        Tensor::vector(self.embed(token).to_vec()).expect("embedding rows are finite")
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Writes an embedding table in the text format `load_embedding_table`
/// reads, rows sorted by token.
pub fn save_embedding_table(
    path: impl AsRef<Path>,
    table: &EmbeddingTable,
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut rows: Vec<(&str, &[f64])> = table.iter().collect();
    rows.sort_by_key(|(token, _)| *token);
    let mut body = String::new();
    for (token, values) in rows {
        body.push_str(token);
        for v in values {
            let _ = write!(body, " {v}");
        }
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| io_err(path, e))
}

/// Total token-to-embedding lookup, the shared unknown-token policy for
/// every encoder.
pub fn embed_token<'a>(table: &'a EmbeddingTable, token: &str) -> &'a [f64] {
    table.embed(token)
}

/// Loads a whitespace-separated embedding file: one token plus
/// `expected_dim` reals per line. Case is preserved.
pub fn load_embedding_table(
    path: impl AsRef<Path>,
    expected_dim: usize,
) -> Result<EmbeddingTable, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut vectors = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line has a first field");
        let values: Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        if values.len() != expected_dim {
            return Err(CorpusError::EmbeddingArity {
                path: path.display().to_string(),
                line: idx + 1,
                expected: expected_dim,
                actual: values.len(),
            });
        }
        vectors.insert(token.to_string(), values);
    }
    if !vectors.contains_key(UNK_TOKEN) {
        return Err(CorpusError::MissingUnk {
            path: path.display().to_string(),
        });
    }
    EmbeddingTable::new(expected_dim, vectors)
}

/// A sentence with one annotated entity mention.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionInstance {
    pub tokens: Vec<String>,
    /// Mention span over `tokens`; `end` is exclusive.
    pub start: usize,
    pub end: usize,
    /// Gold type paths, each beginning with "/".
    pub labels: Vec<String>,
    /// Index of the syntactic head token, within the mention span.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_index: Option<usize>,
    /// Dependency label on the mention head.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dep_role: Option<String>,
    /// The head's lexical parent token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_token: Option<String>,
    /// Precomputed document topic id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_topic: Option<i64>,
}

impl MentionInstance {
    pub fn mention_tokens(&self) -> &[String] {
        &self.tokens[self.start..self.end]
    }

    /// The head token: the annotated head when present, otherwise the last
    /// mention token.
    pub fn head_token(&self) -> &str {
        match self.head_index {
            Some(i) => &self.tokens[i],
            None => &self.tokens[self.end - 1],
        }
    }

    /// Token immediately before the mention, if the mention is not
    /// sentence-initial.
    pub fn token_before(&self) -> Option<&str> {
        if self.start > 0 {
            Some(&self.tokens[self.start - 1])
        } else {
            None
        }
    }

    /// Token immediately after the mention, if any.
    pub fn token_after(&self) -> Option<&str> {
        self.tokens.get(self.end).map(String::as_str)
    }

    fn validate(&self, path: &Path, line: usize) -> Result<(), CorpusError> {
        if self.start >= self.end || self.end > self.tokens.len() {
            return Err(CorpusError::SpanOutOfRange {
                path: path.display().to_string(),
                line,
                start: self.start,
                end: self.end,
                tokens: self.tokens.len(),
            });
        }
        if self.labels.is_empty() {
            return Err(CorpusError::EmptyLabels {
                path: path.display().to_string(),
                line,
            });
        }
        if let Some(h) = self.head_index {
            if h < self.start || h >= self.end {
                return Err(CorpusError::HeadOutOfSpan {
                    path: path.display().to_string(),
                    line,
                    head: h,
                    start: self.start,
                    end: self.end,
                });
            }
        }
        Ok(())
    }
}

/// Reads a line-delimited dataset, validating every record. Order is
/// preserved.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<MentionInstance>, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: MentionInstance =
            serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        inst.validate(path, idx + 1)?;
        out.push(inst);
    }
    Ok(out)
}

/// Writes a dataset in the same line-delimited format `load_dataset` reads.
pub fn save_dataset(
    path: impl AsRef<Path>,
    instances: &[MentionInstance],
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut body = String::new();
    for inst in instances {
        let line = serde_json::to_string(inst).expect("instances serialize");
        let _ = writeln!(body, "{line}");
    }
    fs::write(path, body).map_err(|e| io_err(path, e))
}

/// Map from tokens to Brown-cluster bit-strings.
#[derive(Clone, Debug, Default)]
pub struct ClusterTable {
    clusters: HashMap<String, String>,
}

impl ClusterTable {
    pub fn new(clusters: HashMap<String, String>) -> Self {
        Self { clusters }
    }

    pub fn lookup(&self, token: &str) -> Option<&str> {
        self.clusters.get(token).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.clusters.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Writes a cluster table in the `token<TAB>bitstring` format, rows sorted
/// by token.
pub fn save_cluster_table(
    path: impl AsRef<Path>,
    table: &ClusterTable,
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut rows: Vec<(&str, &str)> = table.iter().collect();
    rows.sort_by_key(|(token, _)| *token);
    let mut body = String::new();
    for (token, bits) in rows {
        let _ = writeln!(body, "{token}\t{bits}");
    }
    fs::write(path, body).map_err(|e| io_err(path, e))
}

/// Loads a two-column `token<TAB>bitstring` cluster table.
pub fn load_cluster_table(path: impl AsRef<Path>) -> Result<ClusterTable, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut clusters = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (token, bits) = line.split_once('\t').ok_or_else(|| CorpusError::BadClusterRow {
            path: path.display().to_string(),
            line: idx + 1,
        })?;
        if bits.is_empty() || bits.chars().any(|c| c != '0' && c != '1') {
            return Err(CorpusError::BadClusterBits {
                path: path.display().to_string(),
                line: idx + 1,
                bits: bits.to_string(),
            });
        }
        clusters.insert(token.to_string(), bits.to_string());
    }
    Ok(ClusterTable::new(clusters))
}

/// Pronouns used by [`drop_pronominal_mentions`].
const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves", "you", "your",
    "yours", "yourself", "he", "him", "his", "himself", "she", "her", "hers", "herself", "it",
    "its", "itself", "they", "them", "their", "theirs", "themselves", "this", "that", "these",
    "those", "who", "whom", "whose", "which", "what",
];

/// Preprocessing filter that removes mentions whose head token is a pronoun
/// (case-insensitive). Evaluation itself never filters; callers opt in.
pub fn drop_pronominal_mentions(instances: Vec<MentionInstance>) -> Vec<MentionInstance> {
    instances
        .into_iter()
        .filter(|inst| {
            let head = inst.head_token().to_lowercase();
            !PRONOUNS.contains(&head.as_str())
        })
        .collect()
}

//! Hand-crafted mention features and their binary indicator vectorization.
//!
//! Feature strings are namespaced, e.g. `HEAD=Obama`, `SHAPE=Aa A. Aa`,
//! `CTXB=who`. A [`FeatureIndex`] built from training data maps them to
//! columns of a sparse binary vector; features unseen at training time are
//! dropped at vectorization.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{ClusterTable, MentionInstance};

/// Feature namespaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKind {
    /// Syntactic head of the mention.
    Head,
    /// Non-head words of the mention.
    NonHead,
    /// Brown cluster bit-string for the head token.
    Cluster,
    /// Character trigrams of the mention head.
    Char,
    /// Word shape of the mention phrase.
    Shape,
    /// Dependency label on the mention head.
    Role,
    /// Token immediately before the mention.
    CtxBefore,
    /// Token immediately after the mention.
    CtxAfter,
    /// The head's lexical parent.
    Parent,
    /// Precomputed document topic.
    Topic,
}

impl FeatureKind {
    pub fn prefix(self) -> &'static str {
        match self {
            FeatureKind::Head => "HEAD",
            FeatureKind::NonHead => "NONHEAD",
            FeatureKind::Cluster => "CLUSTER",
            FeatureKind::Char => "CHAR",
            FeatureKind::Shape => "SHAPE",
            FeatureKind::Role => "ROLE",
            FeatureKind::CtxBefore => "CTXB",
            FeatureKind::CtxAfter => "CTXA",
            FeatureKind::Parent => "PARENT",
            FeatureKind::Topic => "TOPIC",
        }
    }
}

/// A namespaced feature string such as `HEAD=Obama`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureString(String);

impl FeatureString {
    pub fn new(kind: FeatureKind, value: impl AsRef<str>) -> Self {
        Self(format!("{}={}", kind.prefix(), value.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for FeatureString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Character-class abstraction of a string: uppercase to 'A', lowercase to
/// 'a', digits to '#', anything else kept as-is, then adjacent identical
/// class characters collapsed.
pub fn word_shape(token: &str) -> String {
    let mut out = String::new();
    let mut last: Option<char> = None;
    for c in token.chars() {
        let class = if c.is_uppercase() {
            'A'
        } else if c.is_lowercase() {
            'a'
        } else if c.is_ascii_digit() {
            '#'
        } else {
            c
        };
        if last != Some(class) {
            out.push(class);
            last = Some(class);
        }
    }
    out
}

/// All consecutive character trigrams of the lowercased token wrapped in
/// ':' boundary markers, in order. Repeats are kept, so the count always
/// equals the character length of the token.
pub fn char_trigrams(head_token: &str) -> Vec<String> {
    let wrapped: Vec<char> = std::iter::once(':')
        .chain(head_token.to_lowercase().chars())
        .chain(std::iter::once(':'))
        .collect();
    wrapped
        .windows(3)
        .map(|w| w.iter().collect::<String>())
        .collect()
}

/// Feature extraction settings. `context_width` is the number of tokens on
/// each side emitted as CTXB/CTXA features.
#[derive(Clone, Copy, Debug)]
pub struct FeatureExtractor {
    pub context_width: usize,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self { context_width: 1 }
    }
}

impl FeatureExtractor {
    /// Emits the full feature set for one mention. Absent optional
    /// annotations silently yield no feature.
    pub fn extract(
        &self,
        inst: &MentionInstance,
        clusters: &ClusterTable,
    ) -> BTreeSet<FeatureString> {
        let mut out = BTreeSet::new();
        let head = inst.head_token();
        let head_pos = inst.head_index.unwrap_or(inst.end - 1);

        out.insert(FeatureString::new(FeatureKind::Head, head));
        for (pos, tok) in inst.tokens[inst.start..inst.end].iter().enumerate() {
            if inst.start + pos != head_pos {
                out.insert(FeatureString::new(FeatureKind::NonHead, tok));
            }
        }
        if let Some(bits) = clusters.lookup(head) {
            out.insert(FeatureString::new(FeatureKind::Cluster, bits));
        }
        for tri in char_trigrams(head) {
            out.insert(FeatureString::new(FeatureKind::Char, tri));
        }
        out.insert(FeatureString::new(
            FeatureKind::Shape,
            word_shape(&inst.mention_tokens().join(" ")),
        ));
        if let Some(role) = &inst.dep_role {
            out.insert(FeatureString::new(FeatureKind::Role, role));
        }
        for offset in 1..=self.context_width {
            if inst.start >= offset {
                out.insert(FeatureString::new(
                    FeatureKind::CtxBefore,
                    &inst.tokens[inst.start - offset],
                ));
            }
            if let Some(tok) = inst.tokens.get(inst.end + offset - 1) {
                out.insert(FeatureString::new(FeatureKind::CtxAfter, tok));
            }
        }
        if let Some(parent) = &inst.parent_token {
            out.insert(FeatureString::new(FeatureKind::Parent, parent));
        }
        if let Some(topic) = inst.doc_topic {
            out.insert(FeatureString::new(FeatureKind::Topic, topic.to_string()));
        }
        out
    }
}

/// Convenience wrapper over [`FeatureExtractor::extract`] with the default
/// one-token context width.
pub fn extract_feature_strings(
    inst: &MentionInstance,
    clusters: &ClusterTable,
) -> BTreeSet<FeatureString> {
    FeatureExtractor::default().extract(inst, clusters)
}

/// Frozen bijection between feature strings and column indices, built from
/// training data in one pass.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureIndex {
    columns: Vec<FeatureString>,
    #[serde(skip)]
    lookup: HashMap<FeatureString, usize>,
}

impl FeatureIndex {
    /// Builds the index from per-instance feature sets in corpus order.
    pub fn build<'a>(sets: impl IntoIterator<Item = &'a BTreeSet<FeatureString>>) -> Self {
        let mut columns = Vec::new();
        let mut lookup = HashMap::new();
        for set in sets {
            for feat in set {
                if !lookup.contains_key(feat) {
                    lookup.insert(feat.clone(), columns.len());
                    columns.push(feat.clone());
                }
            }
        }
        Self { columns, lookup }
    }

    /// Rebuilds the lookup map after deserialization.
    pub fn rebuild_lookup(&mut self) {
        self.lookup = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
    }

    pub fn dimension(&self) -> usize {
        self.columns.len()
    }

    pub fn index_of(&self, feat: &FeatureString) -> Option<usize> {
        self.lookup.get(feat).copied()
    }

    pub fn feature_at(&self, index: usize) -> &FeatureString {
        &self.columns[index]
    }
}

/// Sorted active indices of a binary indicator vector.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SparseVector {
    indices: Vec<usize>,
}

impl SparseVector {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Maps known features to their active indices (sorted, deduplicated);
/// unknown features are dropped.
pub fn vectorize(strings: &BTreeSet<FeatureString>, index: &FeatureIndex) -> SparseVector {
    let mut indices: Vec<usize> = strings
        .iter()
        .filter_map(|f| index.index_of(f))
        .collect();
    indices.sort_unstable();
    indices.dedup();
    SparseVector { indices }
}

//! Hierarchical type paths, the type inventory, and label weight algebra.
//!
//! Types are paths like `/person/artist/actor`. The inventory's hierarchy
//! nodes are all distinct path prefixes; the sparse binary matrix `S`
//! marks, per type column, every ancestor-or-self node, so composing the
//! output weights as `W^T = V S` shares parameters between types in the
//! same hierarchy.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Parameter, Tensor};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("malformed type path {path:?}: {reason}")]
    MalformedPath { path: String, reason: String },
    #[error("unknown label {path:?}")]
    UnknownLabel { path: String },
    #[error("label set is empty")]
    EmptyLabels,
    #[error("label weight shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// An ordered, nonempty list of path segments parsed from `/a/b/c`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TypePath {
    segments: Vec<String>,
}

impl TypePath {
    pub fn parse(s: &str) -> Result<Self, LabelError> {
        let malformed = |reason: &str| LabelError::MalformedPath {
            path: s.to_string(),
            reason: reason.to_string(),
        };
        let rest = s
            .strip_prefix('/')
            .ok_or_else(|| malformed("must start with '/'"))?;
        if rest.is_empty() {
            return Err(malformed("has no segments"));
        }
        let segments: Vec<String> = rest.split('/').map(str::to_string).collect();
        if segments.iter().any(String::is_empty) {
            return Err(malformed("contains an empty segment"));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    /// All prefixes of this path, shortest first, including the path itself.
    pub fn prefixes(&self) -> Vec<TypePath> {
        (1..=self.segments.len())
            .map(|n| TypePath {
                segments: self.segments[..n].to_vec(),
            })
            .collect()
    }

    /// True when `self` is an ancestor-or-self prefix of `other`.
    pub fn is_prefix_of(&self, other: &TypePath) -> bool {
        self.segments.len() <= other.segments.len()
            && self.segments == other.segments[..self.segments.len()]
    }
}

impl std::fmt::Display for TypePath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for seg in &self.segments {
            write!(f, "/{seg}")?;
        }
        Ok(())
    }
}

impl TryFrom<String> for TypePath {
    type Error = LabelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        TypePath::parse(&s)
    }
}

impl From<TypePath> for String {
    fn from(p: TypePath) -> String {
        p.to_string()
    }
}

/// Parses a `/a/b/c` type path string.
pub fn parse_type_path(s: &str) -> Result<TypePath, LabelError> {
    TypePath::parse(s)
}

/// The K type paths (column order) and the R hierarchy nodes (row order),
/// both fixed lexicographically for reproducibility.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TypeSystem {
    types: Vec<TypePath>,
    nodes: Vec<TypePath>,
}

impl TypeSystem {
    pub fn new(types: impl IntoIterator<Item = TypePath>) -> Result<Self, LabelError> {
        let type_set: BTreeSet<TypePath> = types.into_iter().collect();
        if type_set.is_empty() {
            return Err(LabelError::EmptyLabels);
        }
        let mut node_set = BTreeSet::new();
        for t in &type_set {
            node_set.extend(t.prefixes());
        }
        Ok(Self {
            types: type_set.into_iter().collect(),
            nodes: node_set.into_iter().collect(),
        })
    }

    pub fn from_strings<'a>(
        labels: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, LabelError> {
        let parsed: Result<Vec<_>, _> = labels.into_iter().map(TypePath::parse).collect();
        Self::new(parsed?)
    }

    /// Number of types K.
    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    /// Number of hierarchy nodes R.
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn types(&self) -> &[TypePath] {
        &self.types
    }

    pub fn nodes(&self) -> &[TypePath] {
        &self.nodes
    }

    pub fn type_index(&self, path: &TypePath) -> Option<usize> {
        self.types.binary_search(path).ok()
    }

    pub fn type_at(&self, k: usize) -> &TypePath {
        &self.types[k]
    }
}

impl TryFrom<Vec<String>> for TypeSystem {
    type Error = LabelError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        let parsed: Result<Vec<_>, _> = v.iter().map(|s| TypePath::parse(s)).collect();
        TypeSystem::new(parsed?)
    }
}

impl From<TypeSystem> for Vec<String> {
    fn from(ts: TypeSystem) -> Vec<String> {
        ts.types.iter().map(TypePath::to_string).collect()
    }
}

/// The constant sparse binary matrix S (R x K): `S[r][k] = 1` iff node `r`
/// is an ancestor-or-self prefix of type `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyMatrix {
    rows: usize,
    cols: usize,
    /// Per type column, the sorted node rows set to 1.
    col_nodes: Vec<Vec<usize>>,
}

impl HierarchyMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column_nodes(&self, k: usize) -> &[usize] {
        &self.col_nodes[k]
    }

    /// Identity matrix, the degenerate encoding where every type is its own
    /// only node.
    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            col_nodes: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// Dense representation for tests and inspection.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.cols]; self.rows];
        for (k, nodes) in self.col_nodes.iter().enumerate() {
            for &r in nodes {
                m[r][k] = 1.0;
            }
        }
        m
    }
}

/// Builds S from a type system; column k holds exactly `depth(k)` ones.
pub fn build_hierarchy_matrix(ts: &TypeSystem) -> HierarchyMatrix {
    let col_nodes = ts
        .types()
        .iter()
        .map(|t| {
            let mut rows: Vec<usize> = t
                .prefixes()
                .iter()
                .map(|p| {
                    ts.nodes()
                        .binary_search(p)
                        .expect("every prefix of a type is a node")
                })
                .collect();
            rows.sort_unstable();
            rows
        })
        .collect();
    HierarchyMatrix {
        rows: ts.num_nodes(),
        cols: ts.num_types(),
        col_nodes,
    }
}

/// Output-layer weights: either a directly learned `K x D` matrix or the
/// hierarchical factorization `W^T = V S` with `V` of shape `D x R`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum LabelWeights {
    Flat {
        weights: Parameter, // K x D
    },
    Hierarchical {
        node_weights: Parameter, // D x R
        matrix: HierarchyMatrix,
    },
}

impl LabelWeights {
    /// The effective `K x D` logistic-regression weight matrix.
    pub fn effective(&self) -> Result<Tensor, LabelError> {
        match self {
            LabelWeights::Flat { weights } => Ok(weights.value.clone()),
            LabelWeights::Hierarchical {
                node_weights,
                matrix,
            } => {
                let d = node_weights.value.rows();
                let r = node_weights.value.cols();
                if r != matrix.rows() {
                    return Err(LabelError::ShapeMismatch(format!(
                        "node weights have {r} columns but the hierarchy has {} nodes",
                        matrix.rows()
                    )));
                }
                let k = matrix.cols();
                let mut out = Tensor::zeros(vec![k, d]);
                for col in 0..k {
                    for &node in matrix.column_nodes(col) {
                        for di in 0..d {
                            let w = out.at(col, di) + node_weights.value.at(di, node);
                            out.set(col, di, w);
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Accumulates the gradient of the effective weights. `d_row` is the
    /// gradient on row `k` of the effective matrix; for the hierarchical
    /// form it flows to every ancestor node column of `V`.
    pub(crate) fn accumulate_row_grad(&mut self, k: usize, d_row: &[f64]) {
        match self {
            LabelWeights::Flat { weights } => {
                let d = weights.value.cols();
                let row = &mut weights.grad.data_mut()[k * d..(k + 1) * d];
                for (a, b) in row.iter_mut().zip(d_row) {
                    *a += b;
                }
            }
            LabelWeights::Hierarchical {
                node_weights,
                matrix,
            } => {
                let r = node_weights.value.cols();
                for &node in matrix.column_nodes(k) {
                    for (di, g) in d_row.iter().enumerate() {
                        node_weights.grad.data_mut()[di * r + node] += g;
                    }
                }
            }
        }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        match self {
            LabelWeights::Flat { weights } => vec![weights],
            LabelWeights::Hierarchical { node_weights, .. } => vec![node_weights],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            LabelWeights::Flat { weights } => vec![weights],
            LabelWeights::Hierarchical { node_weights, .. } => vec![node_weights],
        }
    }
}

/// The effective logistic-regression weights for either mode.
pub fn effective_label_weights(lw: &LabelWeights) -> Result<Tensor, LabelError> {
    lw.effective()
}

/// Binary indicator over the K types for a gold label set. With
/// `expand_ancestors` every ancestor of a gold label that is itself a type
/// is also marked.
pub fn encode_gold_vector(
    labels: &BTreeSet<TypePath>,
    ts: &TypeSystem,
    expand_ancestors: bool,
) -> Result<Vec<f64>, LabelError> {
    if labels.is_empty() {
        return Err(LabelError::EmptyLabels);
    }
    let mut t = vec![0.0; ts.num_types()];
    for label in labels {
        let k = ts
            .type_index(label)
            .ok_or_else(|| LabelError::UnknownLabel {
                path: label.to_string(),
            })?;
        t[k] = 1.0;
        if expand_ancestors {
            for prefix in label.prefixes() {
                if let Some(a) = ts.type_index(&prefix) {
                    t[a] = 1.0;
                }
            }
        }
    }
    Ok(t)
}

//! The full classifier: encoder, sparse features, and label weights glued
//! into one multi-label logistic model, trained with Adam.
//!
//! Probabilities come from a bias-free logistic layer over the
//! concatenation of the mention representation, the encoder's context
//! representation, and (for hybrid variants) a projected sparse feature
//! vector. The sparse-only baseline feeds the raw indicator vector to the
//! logistic layer directly. Pre-trained embeddings are frozen; dropout is
//! applied to the mention and feature representations at train time only.

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClusterTable, EmbeddingTable, MentionInstance};
use crate::encoders::{
    attentive_context_backward, attentive_context_embedded, averaging_context_embedded,
    build_context_windows, embed_windows, lstm_context_backward, lstm_context_embedded,
    mention_representation, AttentionWeights, AttentiveCache, EncoderKind, LstmContextCache,
};
use crate::features::{FeatureExtractor, FeatureIndex, SparseVector};
use crate::labels::{
    build_hierarchy_matrix, encode_gold_vector, LabelError, LabelWeights, TypePath, TypeSystem,
};
use crate::metrics::{self, EvalResult, MetricsError};
use crate::numerics::{
    adam_step, apply_dropout_mask, dropout_with_mask, sigmoid, uniform_init, AdamConfig,
    Differentiable, LstmWeights, Mode, NumericsError, Parameter, Tensor, INIT_SCALE,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainingData,
    #[error("development set is empty")]
    EmptyDevData,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}; aborting")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("probability {value} outside (0, 1)")]
    ProbabilityOutOfRange { value: f64 },
    #[error("probability/target length mismatch: {probabilities} vs {targets}")]
    LengthMismatch { probabilities: usize, targets: usize },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("unsupported model format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("corrupt model file {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error("operation requires the attentive encoder, model uses {found}")]
    NotAttentive { found: String },
}

/// Model architecture and training hyperparameters.
///
/// `encoder: None` selects the sparse-only baseline, which feeds the raw
/// feature indicator vector to the logistic layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: Option<EncoderKind>,
    pub use_hand_crafted: bool,
    pub use_hierarchical: bool,
    /// Word embedding dimension D_m.
    pub mention_dim: usize,
    /// LSTM hidden size D_h.
    pub hidden_dim: usize,
    /// Attention hidden layer size D_a.
    pub attention_dim: usize,
    /// Projected sparse-feature size D_l.
    pub feature_proj_dim: usize,
    /// Context window size C on each side of the mention.
    pub context_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Inference threshold on per-type probabilities.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: Some(EncoderKind::Attentive),
            use_hand_crafted: false,
            use_hierarchical: false,
            mention_dim: 300,
            hidden_dim: 100,
            attention_dim: 100,
            feature_proj_dim: 50,
            context_size: 10,
            dropout: 0.5,
            learning_rate: 0.001,
            batch_size: 1000,
            epochs: 5,
            threshold: 0.5,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("mention_dim", self.mention_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("feature_proj_dim", self.feature_proj_dim),
            ("context_size", self.context_size),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ModelError::Config(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!(
                "dropout {} must lie in [0, 1)",
                self.dropout
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(ModelError::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.encoder.is_none() && !self.use_hand_crafted {
            return Err(ModelError::Config(
                "the sparse-only baseline requires use_hand_crafted".into(),
            ));
        }
        Ok(())
    }

    /// Dimension of the context representation, zero for the baseline.
    pub fn context_dim(&self) -> usize {
        self.encoder
            .map(|e| e.context_dim(self.mention_dim, self.hidden_dim))
            .unwrap_or(0)
    }
}

/// Learnable encoder weights for the configured [`EncoderKind`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum EncoderWeights {
    Averaging,
    Lstm {
        left: LstmWeights,
        right: LstmWeights,
    },
    /// Bi-LSTM shared between the left and right windows plus the two-layer
    /// attention scorer.
    Attentive {
        forward: LstmWeights,
        backward: LstmWeights,
        attn_hidden: Parameter,
        attn_score: Parameter,
    },
}

/// A trained (or freshly initialized) classifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub types: TypeSystem,
    pub feature_index: Option<FeatureIndex>,
    pub encoder: Option<EncoderWeights>,
    /// Sparse-feature projection W (feature_proj_dim x D_f), hybrid only.
    pub feature_projection: Option<Parameter>,
    pub label_weights: LabelWeights,
}

/// Per-mention inference output. The predicted set is never empty and
/// always contains the argmax type.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub predicted: BTreeSet<usize>,
}

impl Prediction {
    pub fn predicted_paths(&self, ts: &TypeSystem) -> BTreeSet<String> {
        self.predicted
            .iter()
            .map(|&k| ts.type_at(k).to_string())
            .collect()
    }
}

/// Threshold inference: the argmax type (smallest index on ties) plus every
/// type whose probability strictly exceeds the threshold.
pub fn predict_types(probabilities: &[f64], threshold: f64) -> BTreeSet<usize> {
    assert!(!probabilities.is_empty(), "need at least one type");
    let mut argmax = 0;
    let mut best = probabilities[0];
    for (k, &p) in probabilities.iter().enumerate().skip(1) {
        if p > best {
            best = p;
            argmax = k;
        }
    }
    let mut out: BTreeSet<usize> = probabilities
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(k, _)| k)
        .collect();
    out.insert(argmax);
    out
}

/// Summed per-type binary cross-entropy of probabilities against a binary
/// gold vector. Batched losses are the mean of per-mention sums.
pub fn bce_loss(probabilities: &[f64], targets: &[f64]) -> Result<f64, ModelError> {
    if probabilities.len() != targets.len() {
        return Err(ModelError::LengthMismatch {
            probabilities: probabilities.len(),
            targets: targets.len(),
        });
    }
    let mut loss = 0.0;
    for (&y, &t) in probabilities.iter().zip(targets) {
        if !(y > 0.0 && y < 1.0) {
            return Err(ModelError::ProbabilityOutOfRange { value: y });
        }
        loss -= t * y.ln() + (1.0 - t) * (1.0 - y).ln();
    }
    Ok(loss)
}

/// A mention preprocessed against a specific model: frozen embedding
/// segments, vectorized features, and (for training) the gold vector.
pub(crate) struct EncodedInstance {
    mention_vec: Vec<f64>,
    left_embeds: Vec<Vec<f64>>,
    right_embeds: Vec<Vec<f64>>,
    features: SparseVector,
    target: Vec<f64>,
}

pub(crate) struct ForwardCache {
    z: Vec<f64>,
    effective: Tensor,
    mention_len: usize,
    context_len: usize,
    feature_mask: Option<Vec<f64>>,
    encoder_cache: EncoderCache,
}

pub(crate) enum EncoderCache {
    None,
    Averaging,
    Lstm(LstmContextCache),
    Attentive(AttentiveCache),
}

impl Model {
    /// Fresh model with seeded uniform weight init. The feature index must
    /// be provided exactly when the configuration uses hand-crafted
    /// features.
    pub fn new(
        config: ModelConfig,
        types: TypeSystem,
        feature_index: Option<FeatureIndex>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if config.use_hand_crafted != feature_index.is_some() {
            return Err(ModelError::Config(
                "feature index must be present exactly when use_hand_crafted is set".into(),
            ));
        }

        let encoder = config.encoder.map(|kind| match kind {
            EncoderKind::Averaging => EncoderWeights::Averaging,
            EncoderKind::Lstm => EncoderWeights::Lstm {
                left: LstmWeights::init(config.mention_dim, config.hidden_dim, rng),
                right: LstmWeights::init(config.mention_dim, config.hidden_dim, rng),
            },
            EncoderKind::Attentive => EncoderWeights::Attentive {
                forward: LstmWeights::init(config.mention_dim, config.hidden_dim, rng),
                backward: LstmWeights::init(config.mention_dim, config.hidden_dim, rng),
                attn_hidden: uniform_init(
                    vec![config.attention_dim, 2 * config.hidden_dim],
                    INIT_SCALE,
                    rng,
                ),
                attn_score: uniform_init(vec![1, config.attention_dim], INIT_SCALE, rng),
            },
        });

        let feature_projection = if config.use_hand_crafted && config.encoder.is_some() {
            let d_f = feature_index.as_ref().expect("checked above").dimension();
            if d_f == 0 {
                return Err(ModelError::Config(
                    "feature index is empty; nothing to project".into(),
                ));
            }
            Some(uniform_init(
                vec![config.feature_proj_dim, d_f],
                INIT_SCALE,
                rng,
            ))
        } else {
            None
        };

        let input_dim = Self::input_dim_for(&config, feature_index.as_ref());
        if input_dim == 0 {
            return Err(ModelError::Config("model input dimension is zero".into()));
        }
        let k = types.num_types();
        let label_weights = if config.use_hierarchical {
            let matrix = build_hierarchy_matrix(&types);
            LabelWeights::Hierarchical {
                node_weights: uniform_init(vec![input_dim, matrix.rows()], INIT_SCALE, rng),
                matrix,
            }
        } else {
            LabelWeights::Flat {
                weights: uniform_init(vec![k, input_dim], INIT_SCALE, rng),
            }
        };

        Ok(Self {
            config,
            types,
            feature_index,
            encoder,
            feature_projection,
            label_weights,
        })
    }

    fn input_dim_for(config: &ModelConfig, feature_index: Option<&FeatureIndex>) -> usize {
        match config.encoder {
            None => feature_index.map(FeatureIndex::dimension).unwrap_or(0),
            Some(_) => {
                let mut d = config.mention_dim + config.context_dim();
                if config.use_hand_crafted {
                    d += config.feature_proj_dim;
                }
                d
            }
        }
    }

    /// Input dimension of the logistic layer.
    pub fn input_dim(&self) -> usize {
        Self::input_dim_for(&self.config, self.feature_index.as_ref())
    }

    /// All learnable parameters in a fixed order.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        match &self.encoder {
            None | Some(EncoderWeights::Averaging) => {}
            Some(EncoderWeights::Lstm { left, right }) => {
                out.extend(left.params());
                out.extend(right.params());
            }
            Some(EncoderWeights::Attentive {
                forward,
                backward,
                attn_hidden,
                attn_score,
            }) => {
                out.extend(forward.params());
                out.extend(backward.params());
                out.push(attn_hidden);
                out.push(attn_score);
            }
        }
        if let Some(proj) = &self.feature_projection {
            out.push(proj);
        }
        out.extend(self.label_weights.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        match &mut self.encoder {
            None | Some(EncoderWeights::Averaging) => {}
            Some(EncoderWeights::Lstm { left, right }) => {
                out.extend(left.params_mut());
                out.extend(right.params_mut());
            }
            Some(EncoderWeights::Attentive {
                forward,
                backward,
                attn_hidden,
                attn_score,
            }) => {
                out.extend(forward.params_mut());
                out.extend(backward.params_mut());
                out.push(attn_hidden);
                out.push(attn_score);
            }
        }
        if let Some(proj) = &mut self.feature_projection {
            out.push(proj);
        }
        out.extend(self.label_weights.params_mut());
        out
    }

    pub(crate) fn encode_instance(
        &self,
        inst: &MentionInstance,
        table: &EmbeddingTable,
        clusters: &ClusterTable,
    ) -> Result<EncodedInstance, ModelError> {
        let (mention_vec, left_embeds, right_embeds) = if self.config.encoder.is_some() {
            let v_m = mention_representation(inst.mention_tokens(), table)?;
            let windows = build_context_windows(inst, self.config.context_size);
            let (left, right) = embed_windows(&windows, table);
            (v_m.data().to_vec(), left, right)
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        let features = if let Some(index) = &self.feature_index {
            let strings = FeatureExtractor::default().extract(inst, clusters);
            crate::features::vectorize(&strings, index)
        } else {
            SparseVector::default()
        };
        Ok(EncodedInstance {
            mention_vec,
            left_embeds,
            right_embeds,
            features,
            target: Vec::new(),
        })
    }

    fn encode_with_target(
        &self,
        inst: &MentionInstance,
        table: &EmbeddingTable,
        clusters: &ClusterTable,
    ) -> Result<EncodedInstance, ModelError> {
        let mut enc = self.encode_instance(inst, table, clusters)?;
        let labels = parse_label_set(&inst.labels)?;
        enc.target = encode_gold_vector(&labels, &self.types, true)?;
        Ok(enc)
    }

    pub(crate) fn forward_encoded(
        &self,
        enc: &EncodedInstance,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, ForwardCache), ModelError> {
        let cfg = &self.config;
        let mut z = Vec::with_capacity(self.input_dim());
        let mut feature_mask = None;

        // Mention segment, with train-time dropout. The mask is not kept:
        // the embeddings feeding v_m are frozen, so no gradient crosses it.
        let mention_len = enc.mention_vec.len();
        if mention_len > 0 {
            let v_m = Tensor::vector(enc.mention_vec.clone())?;
            let (dropped, _mask) = dropout_with_mask(&v_m, cfg.dropout, mode, rng)?;
            z.extend_from_slice(dropped.data());
        }

        // Context segment.
        let encoder_cache = match &self.encoder {
            None => EncoderCache::None,
            Some(EncoderWeights::Averaging) => {
                let v_c = averaging_context_embedded(
                    &enc.left_embeds,
                    &enc.right_embeds,
                    cfg.mention_dim,
                );
                z.extend_from_slice(v_c.data());
                EncoderCache::Averaging
            }
            Some(EncoderWeights::Lstm { left, right }) => {
                let (v_c, cache) =
                    lstm_context_embedded(&enc.left_embeds, &enc.right_embeds, left, right);
                z.extend_from_slice(v_c.data());
                EncoderCache::Lstm(cache)
            }
            Some(EncoderWeights::Attentive {
                forward,
                backward,
                attn_hidden,
                attn_score,
            }) => {
                let (v_c, cache) = attentive_context_embedded(
                    &enc.left_embeds,
                    &enc.right_embeds,
                    forward,
                    backward,
                    attn_hidden,
                    attn_score,
                );
                z.extend_from_slice(v_c.data());
                EncoderCache::Attentive(cache)
            }
        };
        let context_len = z.len() - mention_len;

        // Feature segment: projected for hybrids, raw for the baseline.
        if cfg.use_hand_crafted {
            let v_f = match &self.feature_projection {
                Some(proj) => {
                    let d_l = cfg.feature_proj_dim;
                    let d_f = proj.value.cols();
                    let mut v = vec![0.0; d_l];
                    for &j in enc.features.indices() {
                        for (di, out) in v.iter_mut().enumerate() {
                            *out += proj.value.data()[di * d_f + j];
                        }
                    }
                    v
                }
                None => {
                    let d_f = self
                        .feature_index
                        .as_ref()
                        .expect("baseline has an index")
                        .dimension();
                    let mut v = vec![0.0; d_f];
                    for &j in enc.features.indices() {
                        v[j] = 1.0;
                    }
                    v
                }
            };
            let v_f = Tensor::vector(v_f)?;
            let (dropped, mask) = dropout_with_mask(&v_f, cfg.dropout, mode, rng)?;
            z.extend_from_slice(dropped.data());
            if mode == Mode::Train {
                feature_mask = Some(mask);
            }
        }

        let effective = self.label_weights.effective()?;
        let logits = effective.matvec(&z);
        let y: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();

        Ok((
            y,
            ForwardCache {
                z,
                effective,
                mention_len,
                context_len,
                feature_mask,
                encoder_cache,
            },
        ))
    }

    /// Accumulates gradients for one mention given the logit gradient
    /// `d_logits` (for batch-mean cross-entropy this is `(y - t) / B`).
    pub(crate) fn backward_encoded(
        &mut self,
        enc: &EncodedInstance,
        cache: &ForwardCache,
        d_logits: &[f64],
    ) {
        let cfg = self.config.clone();

        // Label layer.
        let mut row = vec![0.0; cache.z.len()];
        for (k, &dl) in d_logits.iter().enumerate() {
            if dl == 0.0 {
                continue;
            }
            for (r, zv) in row.iter_mut().zip(&cache.z) {
                *r = dl * zv;
            }
            self.label_weights.accumulate_row_grad(k, &row);
        }
        let d_z = cache.effective.matvec_t(d_logits);

        let (_d_mention, rest) = d_z.split_at(cache.mention_len);
        let (d_context, d_feature) = rest.split_at(cache.context_len);
        // The mention segment has no learnable upstream weights: embeddings
        // are frozen, so its gradient stops here.

        match (&mut self.encoder, &cache.encoder_cache) {
            (None, EncoderCache::None) => {}
            (Some(EncoderWeights::Averaging), EncoderCache::Averaging) => {}
            (Some(EncoderWeights::Lstm { left, right }), EncoderCache::Lstm(c)) => {
                lstm_context_backward(left, right, c, d_context);
            }
            (
                Some(EncoderWeights::Attentive {
                    forward,
                    backward,
                    attn_hidden,
                    attn_score,
                }),
                EncoderCache::Attentive(c),
            ) => {
                attentive_context_backward(forward, backward, attn_hidden, attn_score, c, d_context);
            }
            _ => unreachable!("cache kind always matches the encoder"),
        }

        if let Some(proj) = &mut self.feature_projection {
            let d_pre = match &cache.feature_mask {
                Some(mask) => apply_dropout_mask(d_feature, mask, cfg.dropout),
                None => d_feature.to_vec(),
            };
            let d_f = proj.value.cols();
            for &j in enc.features.indices() {
                for (di, g) in d_pre.iter().enumerate() {
                    proj.grad.data_mut()[di * d_f + j] += g;
                }
            }
        }
    }

    /// Deterministic eval-mode probabilities for one mention.
    pub fn forward_eval(
        &self,
        table: &EmbeddingTable,
        clusters: &ClusterTable,
        inst: &MentionInstance,
    ) -> Result<Vec<f64>, ModelError> {
        let enc = self.encode_instance(inst, table, clusters)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0); // unused in eval mode
        let (y, _) = self.forward_encoded(&enc, Mode::Eval, &mut rng)?;
        Ok(y)
    }

    /// Train-mode probabilities (dropout active, driven by `rng`).
    pub fn forward_train(
        &self,
        table: &EmbeddingTable,
        clusters: &ClusterTable,
        inst: &MentionInstance,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>, ModelError> {
        let enc = self.encode_instance(inst, table, clusters)?;
        let (y, _) = self.forward_encoded(&enc, Mode::Train, rng)?;
        Ok(y)
    }

    /// Eval-mode forward plus threshold inference.
    pub fn predict(
        &self,
        table: &EmbeddingTable,
        clusters: &ClusterTable,
        inst: &MentionInstance,
    ) -> Result<Prediction, ModelError> {
        let probabilities = self.forward_eval(table, clusters, inst)?;
        let predicted = predict_types(&probabilities, self.config.threshold);
        Ok(Prediction {
            probabilities,
            predicted,
        })
    }

    /// Attention weights over the context windows of one mention; requires
    /// the attentive encoder.
    pub fn attention(
        &self,
        table: &EmbeddingTable,
        inst: &MentionInstance,
    ) -> Result<AttentionWeights, ModelError> {
        let Some(EncoderWeights::Attentive {
            forward,
            backward,
            attn_hidden,
            attn_score,
        }) = &self.encoder
        else {
            let found = match self.config.encoder {
                Some(kind) => kind.to_string(),
                None => "sparse-only".to_string(),
            };
            return Err(ModelError::NotAttentive { found });
        };
        let windows = build_context_windows(inst, self.config.context_size);
        let (_, att) = crate::encoders::attentive_context(
            &windows,
            table,
            forward,
            backward,
            attn_hidden,
            attn_score,
        );
        Ok(att)
    }

    /// The effective K x D logistic weight matrix (flat weights, or
    /// `(V S)^T` for the hierarchical encoding).
    pub fn effective_label_matrix(&self) -> Result<Tensor, ModelError> {
        Ok(self.label_weights.effective()?)
    }

    /// Serializes the model (config, type inventory, feature index, and all
    /// parameter tensors) to a versioned JSON container.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        #[derive(Serialize)]
        struct FileRef<'a> {
            format_version: u32,
            model: &'a Model,
        }
        let body = serde_json::to_string(&FileRef {
            format_version: MODEL_FORMAT_VERSION,
            model: self,
        })
        .expect("model serializes");
        std::fs::write(path, body).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Loads a model saved by [`Model::save`], verifying the format version.
    pub fn load(path: impl AsRef<Path>) -> Result<Model, ModelError> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let corrupt = |message: String| ModelError::Corrupt {
            path: path.display().to_string(),
            message,
        };

        #[derive(Deserialize)]
        struct VersionProbe {
            format_version: u32,
        }
        let probe: VersionProbe =
            serde_json::from_str(&body).map_err(|e| corrupt(e.to_string()))?;
        if probe.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Version {
                found: probe.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }

        #[derive(Deserialize)]
        struct File {
            #[allow(dead_code)]
            format_version: u32,
            model: Model,
        }
        let mut file: File = serde_json::from_str(&body).map_err(|e| corrupt(e.to_string()))?;
        if let Some(index) = &mut file.model.feature_index {
            index.rebuild_lookup();
        }
        Ok(file.model)
    }

    /// Wraps a batch into a [`Differentiable`] target for gradient
    /// checking. The loss is the batch-mean summed cross-entropy in eval
    /// mode (dropout off), matching the training objective at dropout 0.
    pub fn batch_loss<'a>(
        &'a mut self,
        table: &EmbeddingTable,
        clusters: &ClusterTable,
        batch: &[MentionInstance],
    ) -> Result<BatchLossTarget<'a>, ModelError> {
        let encoded: Result<Vec<_>, _> = batch
            .iter()
            .map(|inst| self.encode_with_target(inst, table, clusters))
            .collect();
        Ok(BatchLossTarget {
            model: self,
            batch: encoded?,
        })
    }
}

fn parse_label_set(labels: &[String]) -> Result<BTreeSet<TypePath>, LabelError> {
    labels.iter().map(|s| TypePath::parse(s)).collect()
}

/// Batch-mean loss adapter implementing [`Differentiable`] over all model
/// parameters.
pub struct BatchLossTarget<'a> {
    model: &'a mut Model,
    batch: Vec<EncodedInstance>,
}

impl BatchLossTarget<'_> {
    fn mean_loss(&mut self, with_grad: bool) -> Result<f64, ModelError> {
        let scale = 1.0 / self.batch.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut total = 0.0;
        for enc in &self.batch {
            let (y, cache) = self.model.forward_encoded(enc, Mode::Eval, &mut rng)?;
            total += bce_loss(&y, &enc.target)? * scale;
            if with_grad {
                let d_logits: Vec<f64> = y
                    .iter()
                    .zip(&enc.target)
                    .map(|(&yk, &tk)| (yk - tk) * scale)
                    .collect();
                self.model.backward_encoded(enc, &cache, &d_logits);
            }
        }
        Ok(total)
    }
}

impl Differentiable for BatchLossTarget<'_> {
    fn params(&mut self) -> Vec<&mut Parameter> {
        self.model.params_mut()
    }
    fn loss(&mut self) -> Result<f64, NumericsError> {
        self.mean_loss(false).map_err(|_| NumericsError::NonFiniteValue)
    }
    fn loss_and_grad(&mut self) -> Result<f64, NumericsError> {
        self.mean_loss(true).map_err(|_| NumericsError::NonFiniteValue)
    }
}

/// Loss and dev score for one epoch.
#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub dev_micro_f1: f64,
}

/// A trained model plus its per-epoch history; `model` is the snapshot
/// with the best development loose-micro F1.
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Trains a model from scratch: seeded init, shuffled mini-batches, Adam on
/// batch-mean loss, dev-set model selection by loose micro F1 after every
/// epoch. The type inventory and feature index are built from the training
/// split; gold vectors include every ancestor type present in the
/// inventory.
pub fn train(
    config: &ModelConfig,
    train_set: &[MentionInstance],
    dev_set: &[MentionInstance],
    embeddings: &EmbeddingTable,
    clusters: &ClusterTable,
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptyTrainingData);
    }
    if dev_set.is_empty() {
        return Err(ModelError::EmptyDevData);
    }
    if config.encoder.is_some() && embeddings.dimension() != config.mention_dim {
        return Err(ModelError::Config(format!(
            "embedding dimension {} does not match mention_dim {}",
            embeddings.dimension(),
            config.mention_dim
        )));
    }

    let types = TypeSystem::from_strings(
        train_set
            .iter()
            .flat_map(|inst| inst.labels.iter().map(String::as_str)),
    )?;

    let feature_index = if config.use_hand_crafted {
        let extractor = FeatureExtractor::default();
        let sets: Vec<_> = train_set
            .iter()
            .map(|inst| extractor.extract(inst, clusters))
            .collect();
        Some(FeatureIndex::build(sets.iter()))
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::new(config.clone(), types, feature_index, &mut rng)?;

    let encoded: Result<Vec<_>, _> = train_set
        .iter()
        .map(|inst| model.encode_with_target(inst, embeddings, clusters))
        .collect();
    let encoded = encoded?;

    let dev_gold: Result<Vec<BTreeSet<String>>, _> = dev_set
        .iter()
        .map(|inst| {
            parse_label_set(&inst.labels)
                .map(|set| set.iter().map(TypePath::to_string).collect())
        })
        .collect();
    let dev_gold = dev_gold?;
    let dev_encoded: Result<Vec<_>, _> = dev_set
        .iter()
        .map(|inst| model.encode_instance(inst, embeddings, clusters))
        .collect();
    let dev_encoded = dev_encoded?;

    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    adam.validate()?;

    let n = encoded.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 1..=config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let enc = &encoded[i];
                let (y, cache) = model.forward_encoded(enc, Mode::Train, &mut rng)?;
                batch_loss += bce_loss(&y, &enc.target)? * scale;
                let d_logits: Vec<f64> = y
                    .iter()
                    .zip(&enc.target)
                    .map(|(&yk, &tk)| (yk - tk) * scale)
                    .collect();
                model.backward_encoded(enc, &cache, &d_logits);
            }
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    loss: batch_loss,
                });
            }
            loss_sum += batch_loss * chunk.len() as f64;
            for p in model.params_mut() {
                adam_step(p, &adam);
            }
        }

        let dev_f1 = dev_micro_f1(&model, &dev_encoded, &dev_gold)?;
        history.push(EpochStats {
            epoch,
            mean_train_loss: loss_sum / n as f64,
            dev_micro_f1: dev_f1,
        });
        let improved = match &best {
            None => true,
            Some((best_f1, _, _)) => dev_f1 > *best_f1,
        };
        if improved {
            best = Some((dev_f1, epoch, model.clone()));
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model: best_model,
        history,
        best_epoch,
    })
}

fn dev_micro_f1(
    model: &Model,
    dev_encoded: &[EncodedInstance],
    dev_gold: &[BTreeSet<String>],
) -> Result<f64, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut pairs = Vec::with_capacity(dev_encoded.len());
    for (enc, gold) in dev_encoded.iter().zip(dev_gold) {
        let (y, _) = model.forward_encoded(enc, Mode::Eval, &mut rng)?;
        let predicted = predict_types(&y, model.config.threshold);
        let paths: BTreeSet<String> = predicted
            .iter()
            .map(|&k| model.types.type_at(k).to_string())
            .collect();
        pairs.push((gold.clone(), paths));
    }
    let (_, _, f1) = metrics::loose_micro(&pairs)?;
    Ok(f1)
}

/// Runs eval-mode prediction over a dataset and scores it against the
/// instances' own gold labels.
pub fn evaluate_model(
    model: &Model,
    table: &EmbeddingTable,
    clusters: &ClusterTable,
    instances: &[MentionInstance],
) -> Result<(EvalResult, Vec<Prediction>), ModelError> {
    let mut pairs = Vec::with_capacity(instances.len());
    let mut predictions = Vec::with_capacity(instances.len());
    for inst in instances {
        let prediction = model.predict(table, clusters, inst)?;
        let gold: BTreeSet<String> = parse_label_set(&inst.labels)?
            .iter()
            .map(TypePath::to_string)
            .collect();
        pairs.push((gold, prediction.predicted_paths(&model.types)));
        predictions.push(prediction);
    }
    let result = metrics::evaluate(&pairs)?;
    Ok((result, predictions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use std::collections::HashMap;

    fn tiny_table(dim: usize, words: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        let mut m: HashMap<String, Vec<f64>> = words
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect();
        m.entry("unk".into()).or_insert_with(|| vec![0.1; dim]);
        EmbeddingTable::new(dim, m).unwrap()
    }

    fn inst(tokens: &[&str], start: usize, end: usize, labels: &[&str]) -> MentionInstance {
        MentionInstance {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            start,
            end,
            labels: labels.iter().map(|s| s.to_string()).collect(),
            head_index: None,
            dep_role: None,
            parent_token: None,
            doc_topic: None,
        }
    }

    fn toy_config(encoder: Option<EncoderKind>) -> ModelConfig {
        ModelConfig {
            encoder,
            use_hand_crafted: false,
            use_hierarchical: false,
            mention_dim: 2,
            hidden_dim: 2,
            attention_dim: 2,
            feature_proj_dim: 2,
            context_size: 2,
            dropout: 0.0,
            learning_rate: 0.01,
            batch_size: 4,
            epochs: 3,
            threshold: 0.5,
            seed: 7,
        }
    }

    fn zero_all_weights(model: &mut Model) {
        for p in model.params_mut() {
            p.value.fill(0.0);
        }
    }

    #[test]
    fn all_zero_weights_predict_one_half_everywhere() {
        let types = TypeSystem::from_strings(["/a", "/b", "/c"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model =
            Model::new(toy_config(Some(EncoderKind::Attentive)), types, None, &mut rng).unwrap();
        zero_all_weights(&mut model);
        let table = tiny_table(2, &[("x", vec![0.5, -0.5])]);
        let y = model
            .forward_eval(
                &table,
                &ClusterTable::default(),
                &inst(&["x", "M", "x"], 1, 2, &["/a"]),
            )
            .unwrap();
        assert_eq!(y, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn one_dim_toy_matches_hand_computed_sigmoid() {
        // Averaging encoder, C = 1, D_m = 1, K = 1:
        // z = [v_m, mean(left), mean(right)] = [0.5, 0.3, -0.2]
        // logit = 1*0.5 + 2*0.3 + 3*(-0.2) = 0.5, y = sigmoid(0.5).
        let types = TypeSystem::from_strings(["/a"]).unwrap();
        let mut cfg = toy_config(Some(EncoderKind::Averaging));
        cfg.mention_dim = 1;
        cfg.context_size = 1;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = Model::new(cfg, types, None, &mut rng).unwrap();
        match &mut model.label_weights {
            LabelWeights::Flat { weights } => {
                weights.value.data_mut().copy_from_slice(&[1.0, 2.0, 3.0]);
            }
            _ => unreachable!(),
        }
        let table = tiny_table(
            1,
            &[("m", vec![0.5]), ("l", vec![0.3]), ("r", vec![-0.2])],
        );
        let y = model
            .forward_eval(
                &table,
                &ClusterTable::default(),
                &inst(&["l", "m", "r"], 1, 2, &["/a"]),
            )
            .unwrap();
        assert!((y[0] - sigmoid(0.5)).abs() < 1e-15);
    }

    #[test]
    fn hybrid_with_no_active_features_matches_truncated_weights() {
        let types = TypeSystem::from_strings(["/a", "/b"]).unwrap();
        let mut cfg = toy_config(Some(EncoderKind::Averaging));
        cfg.use_hand_crafted = true;

        // Index built from a mention unrelated to the probe instance, so
        // the probe activates no features at all.
        let clusters = ClusterTable::default();
        let extractor = FeatureExtractor::default();
        let donor = inst(&["q", "Z", "q"], 1, 2, &["/a"]);
        let sets = vec![extractor.extract(&donor, &clusters)];
        let index = FeatureIndex::build(sets.iter());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = Model::new(cfg, types, Some(index), &mut rng).unwrap();
        let table = tiny_table(2, &[("totally", vec![0.4, 0.1]), ("new", vec![-0.3, 0.2])]);
        let probe = inst(&["totally", "new", "totally"], 1, 2, &["/a"]);
        let y = model.forward_eval(&table, &clusters, &probe).unwrap();

        // Hand path: logits over [v_m; v_c] columns only, because v_f = 0.
        let enc = model.encode_instance(&probe, &table, &clusters).unwrap();
        assert!(enc.features.is_empty());
        let w = model.effective_label_matrix().unwrap();
        let d1 = 2 + 4; // mention + averaging context
        let mut z = enc.mention_vec.clone();
        z.extend_from_slice(
            averaging_context_embedded(&enc.left_embeds, &enc.right_embeds, 2).data(),
        );
        for k in 0..2 {
            let logit: f64 = (0..d1).map(|d| w.at(k, d) * z[d]).sum();
            assert!((y[k] - sigmoid(logit)).abs() < 1e-15);
        }
    }

    #[test]
    fn bce_worked_examples() {
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - 0.693147).abs() < 1e-6);
        assert!((bce_loss(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - 1.386294).abs() < 1e-6);
        // Near-perfect fit drives the loss toward zero.
        assert!(bce_loss(&[1.0 - 1e-12], &[1.0]).unwrap() < 1e-9);
        assert!(matches!(
            bce_loss(&[1.0], &[1.0]),
            Err(ModelError::ProbabilityOutOfRange { .. })
        ));
    }

    #[test]
    fn predict_types_worked_examples() {
        let set: Vec<usize> = predict_types(&[0.7, 0.6, 0.4], 0.5).into_iter().collect();
        assert_eq!(set, vec![0, 1]);
        let set: Vec<usize> = predict_types(&[0.2, 0.3], 0.5).into_iter().collect();
        assert_eq!(set, vec![1]);
        // Strict inequality plus smallest-index tie-break.
        let set: Vec<usize> = predict_types(&[0.5, 0.5], 0.5).into_iter().collect();
        assert_eq!(set, vec![0]);
    }

    fn training_fixture() -> (Vec<MentionInstance>, Vec<MentionInstance>, EmbeddingTable) {
        // Two types separable by the mention token.
        let mut train = Vec::new();
        for i in 0..16 {
            let (word, label) = if i % 2 == 0 { ("cat", "/x") } else { ("dog", "/y") };
            train.push(inst(&["the", word, "ran"], 1, 2, &[label]));
        }
        let dev = vec![
            inst(&["the", "cat", "ran"], 1, 2, &["/x"]),
            inst(&["the", "dog", "ran"], 1, 2, &["/y"]),
        ];
        let table = tiny_table(
            2,
            &[
                ("cat", vec![1.0, -1.0]),
                ("dog", vec![-1.0, 1.0]),
                ("the", vec![0.1, 0.1]),
                ("ran", vec![-0.1, 0.2]),
            ],
        );
        (train, dev, table)
    }

    #[test]
    fn training_is_deterministic_given_the_seed() {
        let (train_set, dev, table) = training_fixture();
        let cfg = ModelConfig {
            learning_rate: 0.05,
            ..toy_config(Some(EncoderKind::Averaging))
        };
        let run = || {
            train(&cfg, &train_set, &dev, &table, &ClusterTable::default()).unwrap()
        };
        let a = run();
        let b = run();
        let ser = |m: &Model| serde_json::to_string(m).unwrap();
        assert_eq!(ser(&a.model), ser(&b.model));
        assert_eq!(a.best_epoch, b.best_epoch);
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.mean_train_loss, y.mean_train_loss);
            assert_eq!(x.dev_micro_f1, y.dev_micro_f1);
        }
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let (train_set, dev, table) = training_fixture();
        let cfg = ModelConfig {
            learning_rate: 0.05,
            epochs: 3,
            ..toy_config(Some(EncoderKind::Averaging))
        };
        let outcome = train(&cfg, &train_set, &dev, &table, &ClusterTable::default()).unwrap();
        let losses: Vec<f64> = outcome.history.iter().map(|h| h.mean_train_loss).collect();
        assert!(losses[0] > losses[1] && losses[1] > losses[2], "{losses:?}");
    }

    #[test]
    fn returned_model_reproduces_the_best_dev_score() {
        let (train_set, dev, table) = training_fixture();
        let cfg = ModelConfig {
            learning_rate: 0.05,
            epochs: 4,
            ..toy_config(Some(EncoderKind::Averaging))
        };
        let clusters = ClusterTable::default();
        let outcome = train(&cfg, &train_set, &dev, &table, &clusters).unwrap();
        let best_recorded = outcome
            .history
            .iter()
            .map(|h| h.dev_micro_f1)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(
            outcome.history[outcome.best_epoch - 1].dev_micro_f1,
            best_recorded
        );
        let (result, _) = evaluate_model(&outcome.model, &table, &clusters, &dev).unwrap();
        assert_eq!(result.micro_f1, best_recorded);
    }

    #[test]
    fn empty_training_data_is_an_error() {
        let (_, dev, table) = training_fixture();
        let cfg = toy_config(Some(EncoderKind::Averaging));
        assert!(matches!(
            train(&cfg, &[], &dev, &table, &ClusterTable::default()),
            Err(ModelError::EmptyTrainingData)
        ));
    }

    #[test]
    fn model_round_trip_preserves_forward_outputs_exactly() {
        let (train_set, dev, table) = training_fixture();
        let mut cfg = toy_config(Some(EncoderKind::Attentive));
        cfg.use_hand_crafted = true;
        cfg.use_hierarchical = true;
        cfg.epochs = 2;
        let clusters = ClusterTable::default();
        let outcome = train(&cfg, &train_set, &dev, &table, &clusters).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        outcome.model.save(&path).unwrap();
        let loaded = Model::load(&path).unwrap();

        for probe in &dev {
            let before = outcome.model.forward_eval(&table, &clusters, probe).unwrap();
            let after = loaded.forward_eval(&table, &clusters, probe).unwrap();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn version_mismatch_and_corruption_are_detected() {
        let (train_set, dev, table) = training_fixture();
        let cfg = ModelConfig {
            epochs: 1,
            ..toy_config(Some(EncoderKind::Averaging))
        };
        let outcome =
            train(&cfg, &train_set, &dev, &table, &ClusterTable::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        outcome.model.save(&path).unwrap();

        let body = std::fs::read_to_string(&path).unwrap();
        let altered = body.replace("\"format_version\":1", "\"format_version\":9");
        std::fs::write(&path, &altered).unwrap();
        assert!(matches!(
            Model::load(&path),
            Err(ModelError::Version { found: 9, .. })
        ));

        std::fs::write(&path, &body[..body.len() / 2]).unwrap();
        assert!(matches!(Model::load(&path), Err(ModelError::Corrupt { .. })));
    }

    #[test]
    fn full_attentive_hybrid_hierarchical_gradients_pass_the_checker() {
        let types =
            TypeSystem::from_strings(["/a", "/a/b", "/c"]).unwrap();
        let clusters = ClusterTable::default();
        let batch = vec![
            inst(&["l1", "m1", "r1"], 1, 2, &["/a", "/a/b"]),
            inst(&["l2", "m2", "m3", "r2"], 1, 3, &["/c"]),
        ];
        let extractor = FeatureExtractor::default();
        let sets: Vec<_> = batch.iter().map(|b| extractor.extract(b, &clusters)).collect();
        let index = FeatureIndex::build(sets.iter());

        let mut cfg = toy_config(Some(EncoderKind::Attentive));
        cfg.use_hand_crafted = true;
        cfg.use_hierarchical = true;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = Model::new(cfg, types, Some(index), &mut rng).unwrap();
        // Push the init away from zero so no true gradient sits near the
        // finite-difference noise floor.
        for p in model.params_mut() {
            for v in p.value.data_mut() {
                *v *= 4.0;
            }
        }

        let table = tiny_table(
            2,
            &[
                ("l1", vec![0.3, -0.4]),
                ("m1", vec![0.8, 0.1]),
                ("r1", vec![-0.2, 0.6]),
                ("l2", vec![0.5, 0.5]),
                ("m2", vec![-0.7, 0.3]),
                ("m3", vec![0.2, 0.2]),
                ("r2", vec![0.1, -0.9]),
            ],
        );
        let mut target = model.batch_loss(&table, &clusters, &batch).unwrap();
        let report = grad_check(&mut target, 1e-4).unwrap();
        assert!(report.max_rel_error < 1e-4, "{}", report.max_rel_error);
    }
}


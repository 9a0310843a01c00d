//! Deterministic synthetic corpus for desk-scale verification.
//!
//! Each mention's gold types are determined jointly by two signals: the
//! mention head word fixes the coarse type family, and a single trigger
//! word placed in the context window fixes whether the leaf subtype also
//! applies. Context encoders therefore have to read the trigger to get the
//! full label set right, and an attention mechanism that works should land
//! its strongest weight on the trigger.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ClusterTable, EmbeddingTable, MentionInstance};

const FAMILY_HEADS: [[&str; 4]; 3] = [
    ["Smith", "Jones", "Brown", "Davis"],
    ["Corp", "Group", "Bank", "Labs"],
    ["Paris", "Berlin", "Tokyo", "Cairo"],
];
const FAMILY_LABELS: [[&str; 2]; 3] = [
    ["/person", "/person/artist"],
    ["/organization", "/organization/company"],
    ["/location", "/location/city"],
];
const FAMILY_CLUSTERS: [&str; 3] = ["1110", "1011", "0111"];
const PARENT_TRIGGERS: [&str; 3] = ["plainly", "broadly", "roughly"];
const CHILD_TRIGGERS: [&str; 3] = ["namely", "exactly", "strictly"];

#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub mentions: usize,
    /// Total vocabulary size, including head and trigger words.
    pub vocabulary: usize,
    pub embedding_dim: usize,
    /// Triggers are placed within this distance of the mention.
    pub window: usize,
    /// Maximum filler tokens per side.
    pub max_context: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            mentions: 2000,
            vocabulary: 200,
            embedding_dim: 16,
            window: 5,
            max_context: 6,
            seed: 13,
        }
    }
}

pub struct SynthCorpus {
    pub instances: Vec<MentionInstance>,
    /// The trigger token of each instance, index-aligned with `instances`.
    pub triggers: Vec<String>,
    pub embeddings: EmbeddingTable,
    pub clusters: ClusterTable,
}

/// Generates a corpus over six hierarchical types (three families, each
/// with a parent type and a leaf subtype).
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let reserved = FAMILY_HEADS.iter().flatten().count()
        + PARENT_TRIGGERS.len()
        + CHILD_TRIGGERS.len();
    assert!(
        cfg.vocabulary > reserved,
        "vocabulary {} leaves no filler words (need > {reserved})",
        cfg.vocabulary
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let fillers: Vec<String> = (0..cfg.vocabulary - reserved)
        .map(|i| format!("w{i:03}"))
        .collect();

    // Embeddings for the whole vocabulary in a fixed order, plus "unk".
    // Trigger vectors are longer and fillers shorter than head words, the
    // way contentful cue words stand out from function-word noise.
    let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
    let add = |word: &str,
               scale: f64,
               rng: &mut ChaCha8Rng,
               vectors: &mut HashMap<String, Vec<f64>>| {
        let v = (0..cfg.embedding_dim)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        vectors.insert(word.to_string(), v);
    };
    for head in FAMILY_HEADS.iter().flatten() {
        add(head, 1.0, &mut rng, &mut vectors);
    }
    for trig in PARENT_TRIGGERS.iter().chain(CHILD_TRIGGERS.iter()) {
        add(trig, 2.5, &mut rng, &mut vectors);
    }
    for filler in &fillers {
        add(filler, 0.5, &mut rng, &mut vectors);
    }
    add("unk", 0.5, &mut rng, &mut vectors);
    let embeddings = EmbeddingTable::new(cfg.embedding_dim, vectors).expect("unk present");

    let clusters = ClusterTable::new(
        FAMILY_HEADS
            .iter()
            .enumerate()
            .flat_map(|(f, heads)| {
                heads
                    .iter()
                    .map(move |h| (h.to_string(), FAMILY_CLUSTERS[f].to_string()))
            })
            .collect(),
    );

    let mut instances = Vec::with_capacity(cfg.mentions);
    let mut triggers = Vec::with_capacity(cfg.mentions);
    for _ in 0..cfg.mentions {
        let family = rng.random_range(0..3usize);
        let is_leaf = rng.random::<bool>();
        let head = FAMILY_HEADS[family][rng.random_range(0..4)];
        let trigger = if is_leaf {
            CHILD_TRIGGERS[rng.random_range(0..CHILD_TRIGGERS.len())]
        } else {
            PARENT_TRIGGERS[rng.random_range(0..PARENT_TRIGGERS.len())]
        };

        let mut mention: Vec<String> = Vec::new();
        if rng.random::<f64>() < 0.3 {
            mention.push(fillers[rng.random_range(0..fillers.len())].clone());
        }
        mention.push(head.to_string());

        let mut left_n = rng.random_range(0..=cfg.max_context);
        let right_n = rng.random_range(0..=cfg.max_context);
        if left_n == 0 && right_n == 0 {
            left_n = 1;
        }

        let mut tokens: Vec<String> = (0..left_n)
            .map(|_| fillers[rng.random_range(0..fillers.len())].clone())
            .collect();
        let start = tokens.len();
        tokens.extend(mention.iter().cloned());
        let end = tokens.len();
        tokens.extend(
            (0..right_n).map(|_| fillers[rng.random_range(0..fillers.len())].clone()),
        );

        // Overwrite one in-window context slot with the trigger.
        let mut slots: Vec<usize> = Vec::new();
        for d in 1..=left_n.min(cfg.window) {
            slots.push(start - d);
        }
        for d in 1..=right_n.min(cfg.window) {
            slots.push(end + d - 1);
        }
        let slot = slots[rng.random_range(0..slots.len())];
        tokens[slot] = trigger.to_string();

        let labels: Vec<String> = if is_leaf {
            FAMILY_LABELS[family].iter().map(|s| s.to_string()).collect()
        } else {
            vec![FAMILY_LABELS[family][0].to_string()]
        };

        instances.push(MentionInstance {
            tokens,
            start,
            end,
            labels,
            head_index: Some(end - 1),
            dep_role: None,
            parent_token: Some(trigger.to_string()),
            doc_topic: None,
        });
        triggers.push(trigger.to_string());
    }

    SynthCorpus {
        instances,
        triggers,
        embeddings,
        clusters,
    }
}

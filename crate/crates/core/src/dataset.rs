//! Dataset construction: (instruction, context, target) triples,
//! minimal-context variants, leakage-safe grouped splits, corpus statistics,
//! and SFT record export with verified mask boundaries.
//!
//! Examples derived from the same underlying change share a `group_id`;
//! splits never separate a group, so a minimal variant can never leak into
//! the evaluation split while its full sibling is trained on.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::repofs::{canonical_serialize, linearize, RepoError, RepoSnapshot};

pub const CORPUS_SCHEMA: &str = "dslbench.corpus.v1";
pub const SFT_SCHEMA: &str = "dslbench.sft.v1";
pub const SPLIT_MANIFEST_SCHEMA: &str = "dslbench.split-manifest.v1";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error("keep set misses changed keys: {}", keys.join(", "))]
    MissingChangedKeys { keys: Vec<String> },
    #[error("template is missing the {{{name}}} placeholder")]
    MissingPlaceholder { name: &'static str },
    #[error("prefix alignment failed: {0}")]
    Alignment(String),
    #[error("token codec could not decode ids")]
    CodecDecode,
    #[error("grouped split needs at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("split ratios must be positive and sum to 1, got ({0}, {1})")]
    BadRatios(f64, f64),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("malformed corpus line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("unsupported schema `{0}`")]
    UnsupportedSchema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Minimal,
}

impl Variant {
    fn suffix(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Minimal => "minimal",
        }
    }
}

/// The operation families covered by the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Create,
    AddAttribute,
    AddProduct,
    DeleteAttribute,
    DeleteProduct,
}

impl Operation {
    pub const ALL: [Operation; 5] = [
        Operation::Create,
        Operation::AddAttribute,
        Operation::AddProduct,
        Operation::DeleteAttribute,
        Operation::DeleteProduct,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Operation::Create => "create",
            Operation::AddAttribute => "add_attribute",
            Operation::AddProduct => "add_product",
            Operation::DeleteAttribute => "delete_attribute",
            Operation::DeleteProduct => "delete_product",
        }
    }
}

/// One (instruction, context, target) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalExample {
    pub id: String,
    /// Identifies the underlying change; all variants of it share this id.
    pub group_id: String,
    pub instruction: String,
    pub operation: Operation,
    pub variant: Variant,
    pub context: RepoSnapshot,
    pub target: RepoSnapshot,
}

impl EvalExample {
    /// Flattened keys whose content differs between context and target
    /// (added, removed, or modified files).
    pub fn changed_keys(&self) -> Vec<String> {
        let ctx = self.context.flatten();
        let tgt = self.target.flatten();
        let mut keys: Vec<String> = ctx
            .entries()
            .keys()
            .chain(tgt.entries().keys())
            .cloned()
            .collect();
        keys.sort();
        keys.dedup();
        keys.retain(|k| ctx.get(k) != tgt.get(k));
        keys
    }

    /// True when context and target are identical (an empty change-set).
    pub fn change_set_is_empty(&self) -> bool {
        self.context == self.target
    }
}

fn example_id(group_id: &str, variant: Variant) -> String {
    format!("{group_id}::{}", variant.suffix())
}

/// Builds a full-variant example from before/after directories.
/// The id is derived deterministically from the group id and variant.
pub fn build_example(
    instruction: &str,
    context_dir: &Path,
    target_dir: &Path,
    operation: Operation,
    group_id: &str,
) -> Result<EvalExample, DatasetError> {
    let context = linearize(context_dir)?;
    let target = linearize(target_dir)?;
    Ok(EvalExample {
        id: example_id(group_id, Variant::Full),
        group_id: group_id.to_string(),
        instruction: instruction.to_string(),
        operation,
        variant: Variant::Full,
        context,
        target,
    })
}

fn key_matches_prefix(key: &str, prefix: &str) -> bool {
    key == prefix || key.starts_with(&format!("{prefix}/"))
}

/// Derives a minimal-context variant keeping only keys under the given path
/// prefixes. Every changed key must be covered, otherwise the task would
/// become unsolvable and an error lists the missing keys.
pub fn minimal_variant(
    example: &EvalExample,
    keep: &[String],
) -> Result<EvalExample, DatasetError> {
    let changed = example.changed_keys();
    let missing: Vec<String> = changed
        .iter()
        .filter(|key| !keep.iter().any(|prefix| key_matches_prefix(key, prefix)))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::MissingChangedKeys { keys: missing });
    }

    let filter = |snapshot: &RepoSnapshot| -> Result<RepoSnapshot, DatasetError> {
        let mut kept = RepoSnapshot::new();
        for (key, content) in snapshot.flatten().entries() {
            if keep.iter().any(|prefix| key_matches_prefix(key, prefix)) {
                kept.insert_file(key, content.clone())?;
            }
        }
        Ok(kept)
    };

    Ok(EvalExample {
        id: example_id(&example.group_id, Variant::Minimal),
        group_id: example.group_id.clone(),
        instruction: example.instruction.clone(),
        operation: example.operation,
        variant: Variant::Minimal,
        context: filter(&example.context)?,
        target: filter(&example.target)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSide {
    Train,
    Eval,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub group_id: String,
    pub examples: usize,
    pub split: SplitSide,
}

/// Record of one grouped split: seed, ratios, and the per-group assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitManifest {
    pub schema_version: String,
    pub seed: u64,
    pub train_ratio: f64,
    pub eval_ratio: f64,
    pub total_examples: usize,
    pub train_examples: usize,
    pub eval_examples: usize,
    /// Absolute difference between the achieved and ideal train count.
    pub deviation: f64,
    pub groups: Vec<GroupAssignment>,
}

/// Partitions examples by group so that no group spans splits.
///
/// Groups are shuffled with the seeded generator, then assigned largest
/// first to whichever side is furthest below its target example count.
/// Deterministic for a fixed seed; both sides are guaranteed non-empty.
pub fn grouped_split(
    examples: &[EvalExample],
    ratios: (f64, f64),
    seed: u64,
) -> Result<(Vec<EvalExample>, Vec<EvalExample>, SplitManifest), DatasetError> {
    let (train_ratio, eval_ratio) = ratios;
    if train_ratio <= 0.0 || eval_ratio <= 0.0 || (train_ratio + eval_ratio - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadRatios(train_ratio, eval_ratio));
    }

    let mut by_group: BTreeMap<String, Vec<EvalExample>> = BTreeMap::new();
    for example in examples {
        by_group
            .entry(example.group_id.clone())
            .or_default()
            .push(example.clone());
    }
    if by_group.len() < 2 {
        return Err(DatasetError::TooFewGroups(by_group.len()));
    }

    let mut order: Vec<String> = by_group.keys().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    // Largest group first; the shuffled order breaks size ties.
    order.sort_by_key(|g| std::cmp::Reverse(by_group[g].len()));

    let total = examples.len();
    let train_target = train_ratio * total as f64;
    let eval_target = eval_ratio * total as f64;
    let mut train_count = 0usize;
    let mut eval_count = 0usize;
    let mut assignment: HashMap<&str, SplitSide> = HashMap::new();
    for group in &order {
        let size = by_group[group].len();
        let train_deficit = train_target - train_count as f64;
        let eval_deficit = eval_target - eval_count as f64;
        let side = if train_deficit >= eval_deficit {
            train_count += size;
            SplitSide::Train
        } else {
            eval_count += size;
            SplitSide::Eval
        };
        assignment.insert(group.as_str(), side);
    }

    // Chunky groups can starve one side entirely; move the smallest group
    // over so both splits are usable.
    for (starved, donor) in [(SplitSide::Eval, SplitSide::Train), (SplitSide::Train, SplitSide::Eval)] {
        let starved_count = match starved {
            SplitSide::Train => train_count,
            SplitSide::Eval => eval_count,
        };
        if starved_count == 0 {
            let smallest: &str = order
                .iter()
                .filter(|g| assignment[g.as_str()] == donor)
                .min_by_key(|g| (by_group[*g].len(), g.as_str()))
                .expect("donor side cannot be empty when the other is starved");
            let size = by_group[smallest].len();
            assignment.insert(smallest, starved);
            match starved {
                SplitSide::Train => {
                    train_count += size;
                    eval_count -= size;
                }
                SplitSide::Eval => {
                    eval_count += size;
                    train_count -= size;
                }
            }
        }
    }

    let mut train = Vec::new();
    let mut eval = Vec::new();
    let mut groups = Vec::new();
    for (group_id, members) in &by_group {
        let side = assignment[group_id.as_str()];
        groups.push(GroupAssignment {
            group_id: group_id.clone(),
            examples: members.len(),
            split: side,
        });
        match side {
            SplitSide::Train => train.extend(members.iter().cloned()),
            SplitSide::Eval => eval.extend(members.iter().cloned()),
        }
    }
    train.sort_by(|a, b| a.id.cmp(&b.id));
    eval.sort_by(|a, b| a.id.cmp(&b.id));

    let manifest = SplitManifest {
        schema_version: SPLIT_MANIFEST_SCHEMA.to_string(),
        seed,
        train_ratio,
        eval_ratio,
        total_examples: total,
        train_examples: train.len(),
        eval_examples: eval.len(),
        deviation: (train.len() as f64 - train_target).abs(),
        groups,
    };
    Ok((train, eval, manifest))
}

/// Pluggable text ↔ token-id codec. The mask boundary is defined against a
/// specific tokenizer, so SFT export takes the codec as a parameter.
pub trait TokenCodec {
    fn encode(&mut self, text: &str) -> Vec<u32>;
    /// Decodes ids back to text; `None` when an id is unknown.
    fn decode(&self, ids: &[u32]) -> Option<String>;
}

/// Lossless whitespace codec used by tests and the CLI exporter: the text is
/// segmented into alternating whitespace and non-whitespace runs and each
/// distinct run is interned. `decode(encode(text)) == text` for any text.
#[derive(Debug, Default)]
pub struct WhitespaceCodec {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
}

impl WhitespaceCodec {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, piece: &str) -> u32 {
        if let Some(&id) = self.index.get(piece) {
            return id;
        }
        let id = self.vocab.len() as u32;
        self.vocab.push(piece.to_string());
        self.index.insert(piece.to_string(), id);
        id
    }
}

impl TokenCodec for WhitespaceCodec {
    fn encode(&mut self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            let first_is_space = rest.chars().next().unwrap().is_whitespace();
            let end = rest
                .char_indices()
                .find(|(_, c)| c.is_whitespace() != first_is_space)
                .map(|(i, _)| i)
                .unwrap_or(rest.len());
            ids.push(self.intern(&rest[..end]));
            rest = &rest[end..];
        }
        ids
    }

    fn decode(&self, ids: &[u32]) -> Option<String> {
        let mut out = String::new();
        for &id in ids {
            out.push_str(self.vocab.get(id as usize)?);
        }
        Some(out)
    }
}

/// Prompt template for SFT rendering; must contain `{instruction}` and
/// `{context}` placeholders.
#[derive(Debug, Clone)]
pub struct SftTemplate {
    text: String,
}

impl SftTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, DatasetError> {
        let text = text.into();
        if !text.contains("{context}") {
            return Err(DatasetError::MissingPlaceholder { name: "context" });
        }
        if !text.contains("{instruction}") {
            return Err(DatasetError::MissingPlaceholder { name: "instruction" });
        }
        Ok(SftTemplate { text })
    }

    pub fn render(&self, instruction: &str, context_document: &str) -> String {
        self.text
            .replace("{instruction}", instruction)
            .replace("{context}", context_document)
    }
}

/// A rendered training record. Tokens before `mask_boundary` decode exactly
/// to the prompt (these are the ones a trainer masks out of the loss);
/// tokens from the boundary on decode exactly to the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub rendered_prompt: String,
    pub rendered_target: String,
    pub mask_boundary: usize,
    pub prompt_tokens: usize,
    pub target_tokens: usize,
}

/// Renders an example through the template and verifies the mask boundary by
/// re-decoding both sides of the token sequence.
///
/// The full rendered text is encoded once, the way a trainer would tokenize
/// it; a template that fuses the prompt tail with the start of the target
/// makes the boundary undecodable and fails the alignment check.
pub fn render_sft(
    example: &EvalExample,
    template: &SftTemplate,
    codec: &mut dyn TokenCodec,
) -> Result<SftRecord, DatasetError> {
    let rendered_prompt = template.render(
        &example.instruction,
        &canonical_serialize(&example.context),
    );
    let rendered_target = canonical_serialize(&example.target);
    let full = format!("{rendered_prompt}{rendered_target}");
    let tokens = codec.encode(&full);

    let mut boundary = None;
    for b in 0..=tokens.len() {
        let prefix = codec.decode(&tokens[..b]).ok_or(DatasetError::CodecDecode)?;
        if prefix.len() != rendered_prompt.len() {
            continue;
        }
        if prefix == rendered_prompt {
            let suffix = codec.decode(&tokens[b..]).ok_or(DatasetError::CodecDecode)?;
            if suffix == rendered_target {
                boundary = Some(b);
            }
            break;
        }
    }
    let mask_boundary = boundary.ok_or_else(|| {
        DatasetError::Alignment(format!(
            "no token boundary separates prompt from target for example {}",
            example.id
        ))
    })?;

    Ok(SftRecord {
        rendered_prompt,
        rendered_target,
        mask_boundary,
        prompt_tokens: mask_boundary,
        target_tokens: tokens.len() - mask_boundary,
    })
}

/// Corpus-level statistics; line counts are raw file lines over the
/// flattened views, folders are distinct folder paths of the context tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub example_count: usize,
    pub mean_context_lines: f64,
    pub mean_target_lines: f64,
    pub mean_files: f64,
    pub mean_folders: f64,
    pub variant_ratio: f64,
}

fn loc(snapshot: &RepoSnapshot) -> usize {
    snapshot
        .flatten()
        .entries()
        .values()
        .map(|content| content.lines().count())
        .sum()
}

pub fn corpus_stats(examples: &[EvalExample]) -> Result<CorpusStats, DatasetError> {
    if examples.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let n = examples.len() as f64;
    let minimal = examples
        .iter()
        .filter(|e| e.variant == Variant::Minimal)
        .count();
    Ok(CorpusStats {
        example_count: examples.len(),
        mean_context_lines: examples.iter().map(|e| loc(&e.context) as f64).sum::<f64>() / n,
        mean_target_lines: examples.iter().map(|e| loc(&e.target) as f64).sum::<f64>() / n,
        mean_files: examples
            .iter()
            .map(|e| e.context.file_count() as f64)
            .sum::<f64>()
            / n,
        mean_folders: examples
            .iter()
            .map(|e| e.context.folder_paths().len() as f64)
            .sum::<f64>()
            / n,
        variant_ratio: minimal as f64 / n,
    })
}

#[derive(Serialize)]
struct CorpusLineOut<'a> {
    schema_version: &'a str,
    #[serde(flatten)]
    example: &'a EvalExample,
}

#[derive(Deserialize)]
struct CorpusLineIn {
    schema_version: String,
    #[serde(flatten)]
    example: EvalExample,
}

/// One self-contained record per line, snapshots embedded in nested form.
pub fn corpus_to_jsonl(examples: &[EvalExample]) -> String {
    let mut out = String::new();
    for example in examples {
        let line = serde_json::to_string(&CorpusLineOut {
            schema_version: CORPUS_SCHEMA,
            example,
        })
        .expect("corpus serialization cannot fail");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn corpus_from_jsonl(text: &str) -> Result<Vec<EvalExample>, DatasetError> {
    let mut examples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLineIn =
            serde_json::from_str(line).map_err(|e| DatasetError::MalformedLine {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if parsed.schema_version != CORPUS_SCHEMA {
            return Err(DatasetError::UnsupportedSchema(parsed.schema_version));
        }
        examples.push(parsed.example);
    }
    Ok(examples)
}

#[derive(Serialize)]
struct SftLineOut<'a> {
    schema_version: &'a str,
    example_id: &'a str,
    #[serde(flatten)]
    record: &'a SftRecord,
}

/// One SFT record per line, tagged with the source example id.
pub fn sft_to_jsonl(records: &[(String, SftRecord)]) -> String {
    let mut out = String::new();
    for (example_id, record) in records {
        let line = serde_json::to_string(&SftLineOut {
            schema_version: SFT_SCHEMA,
            example_id,
            record,
        })
        .expect("sft serialization cannot fail");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

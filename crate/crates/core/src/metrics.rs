//! Quantitative metrics for repository-scale predictions.
//!
//! Standard measures (exact match, document validity, BLEU) are complemented
//! by two change-focused ones:
//!
//! - **Change similarity** scores only the expected edits. Per changed line,
//!   the normalized token-level Levenshtein error `e` becomes a score
//!   `(1 - e)^alpha`; lines are averaged with log-length weights
//!   `min(ln(1 + len), w_max)` so larger edits matter more without any single
//!   edit dominating.
//! - **Structural fidelity** is the F1 over the folder/file path sets of the
//!   target and predicted trees, catching spurious and missing artifacts.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::diffcore::{line_diff, normalized_line_error, split_lines, OpTag};
use crate::repofs::{canonical_serialize, parse_snapshot, RepoSnapshot};

/// Schema tag carried by every record line in a metrics report file.
pub const METRICS_SCHEMA: &str = "dslbench.metrics.v1";

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("cannot aggregate an empty record set")]
    EmptyRecords,
    #[error("unsupported record schema `{0}`, expected `{METRICS_SCHEMA}`")]
    UnsupportedSchema(String),
    #[error("malformed record line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
}

/// Tunables of the change-similarity and BLEU computations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Exponent applied to `1 - e` per changed line.
    pub alpha: f64,
    /// Cap on the log-length line weight.
    pub w_max: f64,
    /// Maximum n-gram order for BLEU.
    pub bleu_max_n: usize,
    /// Floor substituted for zero n-gram counts.
    pub bleu_smoothing: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            alpha: 5.0,
            w_max: 20.0,
            bleu_max_n: 4,
            bleu_smoothing: 1e-9,
        }
    }
}

/// How a changed line came to differ between context and target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Insert,
    Replace,
    Delete,
}

/// One expected edit with its paired prediction line and per-line scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChangedLine {
    /// Flattened path of the file the change belongs to.
    pub key: String,
    pub kind: ChangeKind,
    /// The expected line; for deletions, the removed context line.
    pub true_content: String,
    /// The prediction line paired with this change, when one exists.
    pub pred_content: Option<String>,
    /// Normalized token-level error in `[0, 1]`.
    pub error: f64,
    /// `(1 - error)^alpha`.
    pub score: f64,
    /// `min(ln(1 + chars(true_content)), w_max)`.
    pub weight: f64,
}

/// All changed lines of one example plus their weighted average score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChangeScore {
    pub lines: Vec<ChangedLine>,
    pub average: f64,
}

/// Precision/recall/F1 over folder-and-file path sets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StructScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// 1 iff target and prediction are the same tree (same folders, same files,
/// byte-equal contents). Construction order never matters.
pub fn exact_match(target: &RepoSnapshot, prediction: &RepoSnapshot) -> u8 {
    u8::from(target == prediction)
}

/// 1 iff the raw text parses as a linearized document.
pub fn validity(raw_output: &str) -> u8 {
    u8::from(parse_snapshot(raw_output).is_ok())
}

fn line_weight(content: &str, cfg: &MetricConfig) -> f64 {
    let len = content.chars().count() as f64;
    (1.0 + len).ln().min(cfg.w_max)
}

fn line_score(error: f64, cfg: &MetricConfig) -> f64 {
    (1.0 - error).clamp(0.0, 1.0).powf(cfg.alpha)
}

/// How each target line relates to the prediction, per `line_diff(target,
/// prediction)`: unchanged, paired with a replacement line, or missing.
enum Pairing<'a> {
    Unchanged,
    Replaced(&'a str),
    Missing,
}

fn pair_target_lines<'a>(target: &[&'a str], prediction: &[&'a str]) -> Vec<Pairing<'a>> {
    let mut pairing: Vec<Pairing> = (0..target.len()).map(|_| Pairing::Missing).collect();
    for op in line_diff(target, prediction).opcodes() {
        match op.tag {
            OpTag::Equal => {
                for slot in pairing[op.a_start..op.a_end].iter_mut() {
                    *slot = Pairing::Unchanged;
                }
            }
            OpTag::Replace => {
                let pred_len = op.b_end - op.b_start;
                for (offset, slot) in pairing[op.a_start..op.a_end].iter_mut().enumerate() {
                    *slot = if offset < pred_len {
                        Pairing::Replaced(prediction[op.b_start + offset])
                    } else {
                        Pairing::Missing
                    };
                }
            }
            OpTag::Delete => {}
            OpTag::Insert => {}
        }
    }
    pairing
}

fn count_occurrences(lines: &[&str], needle: &str) -> usize {
    lines.iter().filter(|l| **l == needle).count()
}

/// Scores only the expected changes between context and target.
///
/// Per file key, `line_diff(context, target)` yields the changed lines;
/// `line_diff(target, prediction)` aligns each changed target line with its
/// prediction counterpart. Unpaired expected lines score `e = 1`. A deleted
/// line scores `e = 0` when the prediction dropped it too (no more copies
/// than the target keeps), else `e = 1`. With no expected changes at all the
/// score degenerates to exact-match semantics.
pub fn change_similarity(
    context: &RepoSnapshot,
    target: &RepoSnapshot,
    prediction: &RepoSnapshot,
    cfg: &MetricConfig,
) -> ChangeScore {
    let ctx = context.flatten();
    let tgt = target.flatten();
    let pred = prediction.flatten();

    let mut keys: Vec<&String> = ctx.entries().keys().chain(tgt.entries().keys()).collect();
    keys.sort();
    keys.dedup();

    let mut lines: Vec<ChangedLine> = Vec::new();
    for key in keys {
        let ctx_lines = split_lines(ctx.get(key).unwrap_or(""));
        let tgt_lines = split_lines(tgt.get(key).unwrap_or(""));
        let script = line_diff(&ctx_lines, &tgt_lines);
        if script.is_all_equal() {
            continue;
        }
        let pred_lines = split_lines(pred.get(key).unwrap_or(""));
        let pairing = pair_target_lines(&tgt_lines, &pred_lines);

        for op in script.opcodes() {
            match op.tag {
                OpTag::Equal => {}
                OpTag::Replace | OpTag::Insert => {
                    let kind = if op.tag == OpTag::Insert {
                        ChangeKind::Insert
                    } else {
                        ChangeKind::Replace
                    };
                    for b in op.b_start..op.b_end {
                        let true_content = tgt_lines[b];
                        let (error, pred_content) = match pairing[b] {
                            Pairing::Unchanged => (0.0, Some(true_content.to_string())),
                            Pairing::Replaced(p) => {
                                (normalized_line_error(true_content, p), Some(p.to_string()))
                            }
                            Pairing::Missing => (1.0, None),
                        };
                        lines.push(ChangedLine {
                            key: key.clone(),
                            kind,
                            true_content: true_content.to_string(),
                            pred_content,
                            error,
                            score: line_score(error, cfg),
                            weight: line_weight(true_content, cfg),
                        });
                    }
                }
                OpTag::Delete => {
                    for removed in &ctx_lines[op.a_start..op.a_end] {
                        let removed = *removed;
                        let deleted_in_pred = count_occurrences(&pred_lines, removed)
                            <= count_occurrences(&tgt_lines, removed);
                        let error = if deleted_in_pred { 0.0 } else { 1.0 };
                        lines.push(ChangedLine {
                            key: key.clone(),
                            kind: ChangeKind::Delete,
                            true_content: removed.to_string(),
                            pred_content: None,
                            error,
                            score: line_score(error, cfg),
                            weight: line_weight(removed, cfg),
                        });
                    }
                }
            }
        }
    }

    let average = if lines.is_empty() {
        f64::from(exact_match(target, prediction))
    } else {
        let weight_sum: f64 = lines.iter().map(|l| l.weight).sum();
        if weight_sum > 0.0 {
            lines.iter().map(|l| l.score * l.weight).sum::<f64>() / weight_sum
        } else {
            lines.iter().map(|l| l.score).sum::<f64>() / lines.len() as f64
        }
    };
    ChangeScore { lines, average }
}

/// F1 over the folder/file path sets of target and prediction. Includes
/// every folder path (empty folders too) and every file path.
pub fn structural_fidelity(target: &RepoSnapshot, prediction: &RepoSnapshot) -> StructScore {
    let k_true = target.path_set();
    let k_pred = prediction.path_set();
    let intersection = k_true.intersection(&k_pred).count() as f64;

    let precision = if k_pred.is_empty() {
        if k_true.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        intersection / k_pred.len() as f64
    };
    let recall = if k_true.is_empty() {
        1.0
    } else {
        intersection / k_true.len() as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    StructScore {
        precision,
        recall,
        f1,
    }
}

/// Sentence BLEU over whitespace tokens: geometric mean of modified n-gram
/// precisions for `n = 1..=min(max_n, |candidate|)`, zero counts floored at
/// the smoothing epsilon, times the brevity penalty `exp(1 - r/c)` when the
/// candidate is shorter than the reference.
pub fn bleu(reference: &str, candidate: &str, cfg: &MetricConfig) -> f64 {
    let ref_tokens: Vec<&str> = reference.split_whitespace().collect();
    let cand_tokens: Vec<&str> = candidate.split_whitespace().collect();
    if cand_tokens.is_empty() {
        return if ref_tokens.is_empty() { 1.0 } else { 0.0 };
    }

    let max_n = cfg.bleu_max_n.max(1).min(cand_tokens.len());
    let mut log_precision_sum = 0.0;
    for n in 1..=max_n {
        let mut ref_counts: HashMap<&[&str], usize> = HashMap::new();
        for gram in ref_tokens.windows(n) {
            *ref_counts.entry(gram).or_insert(0) += 1;
        }
        let mut cand_counts: HashMap<&[&str], usize> = HashMap::new();
        for gram in cand_tokens.windows(n) {
            *cand_counts.entry(gram).or_insert(0) += 1;
        }
        let clipped: usize = cand_counts
            .iter()
            .map(|(gram, count)| (*count).min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = (cand_tokens.len() - n + 1) as f64;
        let precision = (clipped as f64).max(cfg.bleu_smoothing) / total;
        log_precision_sum += precision.ln();
    }
    let geometric_mean = (log_precision_sum / max_n as f64).exp();

    let r = ref_tokens.len() as f64;
    let c = cand_tokens.len() as f64;
    let brevity_penalty = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    brevity_penalty * geometric_mean
}

/// Scores of one evaluated example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub exact_match: u8,
    pub valid: u8,
    pub bleu: f64,
    pub change_similarity: f64,
    pub structural_fidelity: f64,
}

/// Strips any non-document prefix/suffix (chat preamble, trailing prose)
/// by cutting to the outermost braces.
fn repair_document(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    if start < end {
        Some(&raw[start..=end])
    } else {
        None
    }
}

/// Evaluates one raw model output against a context/target pair.
///
/// Validity is judged on the raw text. An invalid output gets one repair
/// attempt (strip prefix/suffix around the outermost braces); if that parse
/// also fails, exact match, change similarity, and structural fidelity are 0
/// and BLEU is computed on the raw text against the canonical target.
pub fn evaluate_example(
    id: &str,
    context: &RepoSnapshot,
    target: &RepoSnapshot,
    raw_prediction: &str,
    cfg: &MetricConfig,
) -> ExampleRecord {
    let direct = parse_snapshot(raw_prediction);
    let valid = u8::from(direct.is_ok());
    let parsed = direct.ok().or_else(|| {
        repair_document(raw_prediction).and_then(|doc| parse_snapshot(doc).ok())
    });

    match parsed {
        Some(prediction) => ExampleRecord {
            id: id.to_string(),
            exact_match: exact_match(target, &prediction),
            valid,
            bleu: bleu(
                &canonical_serialize(target),
                &canonical_serialize(&prediction),
                cfg,
            ),
            change_similarity: change_similarity(context, target, &prediction, cfg).average,
            structural_fidelity: structural_fidelity(target, &prediction).f1,
        },
        None => ExampleRecord {
            id: id.to_string(),
            exact_match: 0,
            valid: 0,
            bleu: bleu(&canonical_serialize(target), raw_prediction, cfg),
            change_similarity: 0.0,
            structural_fidelity: 0.0,
        },
    }
}

/// Arithmetic means over a record set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub exact_match: f64,
    pub validity: f64,
    pub bleu: f64,
    pub change_similarity: f64,
    pub structural_fidelity: f64,
}

/// Per-example records plus their aggregate means, sorted by example id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub records: Vec<ExampleRecord>,
    pub aggregate: AggregateScores,
}

/// Sorts records by id and computes the per-metric arithmetic means.
pub fn aggregate(mut records: Vec<ExampleRecord>) -> Result<MetricReport, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyRecords);
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let n = records.len() as f64;
    let aggregate = AggregateScores {
        exact_match: records.iter().map(|r| f64::from(r.exact_match)).sum::<f64>() / n,
        validity: records.iter().map(|r| f64::from(r.valid)).sum::<f64>() / n,
        bleu: records.iter().map(|r| r.bleu).sum::<f64>() / n,
        change_similarity: records.iter().map(|r| r.change_similarity).sum::<f64>() / n,
        structural_fidelity: records.iter().map(|r| r.structural_fidelity).sum::<f64>() / n,
    };
    Ok(MetricReport { records, aggregate })
}

#[derive(Serialize)]
struct RecordLineOut<'a> {
    schema_version: &'a str,
    #[serde(flatten)]
    record: &'a ExampleRecord,
}

#[derive(Deserialize)]
struct RecordLineIn {
    schema_version: String,
    #[serde(flatten)]
    record: ExampleRecord,
}

/// Renders records as one self-contained JSON line each.
pub fn records_to_jsonl(records: &[ExampleRecord]) -> String {
    let mut out = String::new();
    for record in records {
        let line = serde_json::to_string(&RecordLineOut {
            schema_version: METRICS_SCHEMA,
            record,
        })
        .expect("record serialization cannot fail");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Parses a record-per-line report file, checking the schema tag.
pub fn records_from_jsonl(text: &str) -> Result<Vec<ExampleRecord>, MetricError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLineIn =
            serde_json::from_str(line).map_err(|e| MetricError::MalformedRecord {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if parsed.schema_version != METRICS_SCHEMA {
            return Err(MetricError::UnsupportedSchema(parsed.schema_version));
        }
        records.push(parsed.record);
    }
    Ok(records)
}

/// Summary table column headers, mirroring the usual reporting layout.
pub const TABLE_COLUMNS: [&str; 6] = [
    "Setting",
    "EM",
    "JSON",
    "BLEU",
    "Change Similar.",
    "Struct. Fidelity",
];

/// Renders labeled aggregates as an aligned text table, values rounded to
/// three decimals at display time.
pub fn render_table(rows: &[(String, AggregateScores)]) -> String {
    let mut cells: Vec<Vec<String>> = vec![TABLE_COLUMNS.iter().map(|s| s.to_string()).collect()];
    for (label, agg) in rows {
        cells.push(vec![
            label.clone(),
            format!("{:.3}", agg.exact_match),
            format!("{:.3}", agg.validity),
            format!("{:.3}", agg.bleu),
            format!("{:.3}", agg.change_similarity),
            format!("{:.3}", agg.structural_fidelity),
        ]);
    }
    let widths: Vec<usize> = (0..TABLE_COLUMNS.len())
        .map(|col| cells.iter().map(|row| row[col].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let mut line = String::new();
        for (col, cell) in row.iter().enumerate() {
            if col > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            if col + 1 < row.len() {
                for _ in cell.len()..widths[col] {
                    line.push(' ');
                }
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repofs::RepoSnapshot;

    fn snap(files: &[(&str, &str)]) -> RepoSnapshot {
        RepoSnapshot::from_files(files.iter().copied()).unwrap()
    }

    #[test]
    fn exact_match_is_strict_on_content() {
        let a = snap(&[("m/f.dsl", "x\n")]);
        let b = snap(&[("m/f.dsl", "x\n")]);
        let c = snap(&[("m/f.dsl", "y\n")]);
        assert_eq!(exact_match(&a, &b), 1);
        assert_eq!(exact_match(&a, &c), 0);
    }

    #[test]
    fn exact_match_ignores_insertion_order() {
        let forward = snap(&[("a/x", "1"), ("a/y", "2")]);
        let backward = snap(&[("a/y", "2"), ("a/x", "1")]);
        assert_eq!(exact_match(&forward, &backward), 1);
        assert_eq!(
            canonical_serialize(&forward),
            canonical_serialize(&backward)
        );
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let cfg = MetricConfig::default();
        let ctx = snap(&[("m/f.dsl", "a\nb\n")]);
        let tgt = snap(&[("m/f.dsl", "a\nb\nc\n")]);
        let score = change_similarity(&ctx, &tgt, &tgt, &cfg);
        assert_eq!(score.average, 1.0);
        assert!(!score.lines.is_empty());
    }

    #[test]
    fn single_substituted_token_scores_two_thirds_to_the_alpha() {
        let cfg = MetricConfig::default();
        let ctx = snap(&[("m/f.dsl", "entity A {\n}")]);
        let tgt = snap(&[("m/f.dsl", "entity A {\n  q: T2\n}")]);
        let pred = snap(&[("m/f.dsl", "entity A {\n  q: T3\n}")]);
        let score = change_similarity(&ctx, &tgt, &pred, &cfg);
        assert_eq!(score.lines.len(), 1);
        assert_eq!(score.lines[0].kind, ChangeKind::Insert);
        assert!((score.lines[0].error - 1.0 / 3.0).abs() < 1e-12);
        assert!((score.average - 32.0 / 243.0).abs() < 1e-12);
    }

    #[test]
    fn log_weights_average_to_exactly_one_third() {
        // Lengths 9 and 99 give weights ln(10) and ln(100) = 2 ln(10); with
        // scores 1 and 0 the weighted mean is 1/3.
        let cfg = MetricConfig::default();
        let nine = "123456789";
        let ninety_nine = "x".repeat(99);
        let ctx = snap(&[("m/f.dsl", "base")]);
        let tgt = snap(&[("m/f.dsl", format!("base\n{nine}\n{ninety_nine}").as_str())]);
        let pred = snap(&[("m/f.dsl", format!("base\n{nine}").as_str())]);
        let score = change_similarity(&ctx, &tgt, &pred, &cfg);
        assert_eq!(score.lines.len(), 2);
        assert_eq!(score.lines[0].score, 1.0);
        assert_eq!(score.lines[1].score, 0.0);
        assert!((score.average - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn deleted_line_scores_zero_error_when_prediction_dropped_it() {
        let cfg = MetricConfig::default();
        let ctx = snap(&[("m/f.dsl", "keep\nremove_me\n")]);
        let tgt = snap(&[("m/f.dsl", "keep\n")]);
        let score = change_similarity(&ctx, &tgt, &tgt, &cfg);
        assert_eq!(score.lines.len(), 1);
        assert_eq!(score.lines[0].kind, ChangeKind::Delete);
        assert_eq!(score.average, 1.0);

        let kept = snap(&[("m/f.dsl", "keep\nremove_me\n")]);
        let score = change_similarity(&ctx, &tgt, &kept, &cfg);
        assert_eq!(score.average, 0.0);
    }

    #[test]
    fn deleting_one_of_two_duplicate_lines_still_scores_one_on_target() {
        let cfg = MetricConfig::default();
        let ctx = snap(&[("m/f.dsl", "dup\ndup\n")]);
        let tgt = snap(&[("m/f.dsl", "dup\n")]);
        assert_eq!(change_similarity(&ctx, &tgt, &tgt, &cfg).average, 1.0);
    }

    #[test]
    fn no_expected_change_degenerates_to_exact_match_semantics() {
        let cfg = MetricConfig::default();
        let same = snap(&[("m/f.dsl", "a\n")]);
        assert_eq!(change_similarity(&same, &same, &same, &cfg).average, 1.0);
        let other = snap(&[("m/f.dsl", "b\n")]);
        assert_eq!(change_similarity(&same, &same, &other, &cfg).average, 0.0);
    }

    #[test]
    fn file_addition_and_removal_are_scored_per_key() {
        let cfg = MetricConfig::default();
        let ctx = snap(&[("m/old.dsl", "gone\n")]);
        let tgt = snap(&[("m/new.dsl", "fresh\n")]);
        // Perfect prediction: new file added, old file removed.
        assert_eq!(change_similarity(&ctx, &tgt, &tgt, &cfg).average, 1.0);
        // Prediction that kept the old file and skipped the new one.
        let bad = snap(&[("m/old.dsl", "gone\n")]);
        assert_eq!(change_similarity(&ctx, &tgt, &bad, &cfg).average, 0.0);
    }

    #[test]
    fn structural_fidelity_worked_example() {
        let tgt = snap(&[("a/f", "1"), ("a/g", "2")]);
        let pred = snap(&[("a/f", "1"), ("a/h", "2")]);
        let score = structural_fidelity(&tgt, &pred);
        assert!((score.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((score.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((score.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn structural_fidelity_identical_trees_and_degenerate_cases() {
        let tgt = snap(&[("a/f", "1")]);
        assert_eq!(structural_fidelity(&tgt, &tgt).f1, 1.0);

        let empty = RepoSnapshot::new();
        let both_empty = structural_fidelity(&empty, &empty);
        assert_eq!(both_empty.precision, 1.0);
        assert_eq!(both_empty.recall, 1.0);
        assert_eq!(both_empty.f1, 1.0);

        let empty_pred = structural_fidelity(&tgt, &empty);
        assert_eq!(empty_pred.precision, 0.0);
        assert_eq!(empty_pred.f1, 0.0);
    }

    #[test]
    fn spurious_file_in_ten_path_tree() {
        let files: Vec<(String, &str)> =
            (0..9).map(|i| (format!("d/f{i}"), "x")).collect();
        let tgt = RepoSnapshot::from_files(files.clone()).unwrap();
        assert_eq!(tgt.path_set().len(), 10);
        let mut pred = tgt.clone();
        pred.insert_file("d/spurious", "x").unwrap();
        let score = structural_fidelity(&tgt, &pred);
        assert!((score.precision - 10.0 / 11.0).abs() < 1e-15);
        assert_eq!(score.recall, 1.0);
        assert!((score.f1 - 20.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn bleu_identity_and_brevity_penalty() {
        let cfg = MetricConfig::default();
        assert_eq!(bleu("a b c d", "a b c d", &cfg), 1.0);
        let expected = (1.0f64 - 4.0 / 3.0).exp();
        assert!((bleu("a b c d", "a b c", &cfg) - expected).abs() < 1e-12);
        assert_eq!(bleu("a b", "", &cfg), 0.0);
        assert_eq!(bleu("", "", &cfg), 1.0);
    }

    #[test]
    fn evaluate_perfect_prediction_scores_all_ones() {
        let cfg = MetricConfig::default();
        let ctx = snap(&[("m/f.dsl", "a\n")]);
        let tgt = snap(&[("m/f.dsl", "a\nb\n")]);
        let record = evaluate_example("e1", &ctx, &tgt, &canonical_serialize(&tgt), &cfg);
        assert_eq!(record.exact_match, 1);
        assert_eq!(record.valid, 1);
        assert_eq!(record.bleu, 1.0);
        assert_eq!(record.change_similarity, 1.0);
        assert_eq!(record.structural_fidelity, 1.0);
    }

    #[test]
    fn chat_preamble_is_repaired_but_counts_as_invalid() {
        let cfg = MetricConfig::default();
        let ctx = snap(&[("m/f.dsl", "a\n")]);
        let tgt = snap(&[("m/f.dsl", "a\nb\n")]);
        let raw = format!(
            "Sure, here is the updated project:\n{}",
            canonical_serialize(&tgt)
        );
        let record = evaluate_example("e1", &ctx, &tgt, &raw, &cfg);
        assert_eq!(record.valid, 0);
        assert_eq!(record.exact_match, 1);
        assert_eq!(record.change_similarity, 1.0);
        assert_eq!(record.structural_fidelity, 1.0);
        assert_eq!(record.bleu, 1.0);
    }

    #[test]
    fn garbage_text_scores_zeros_except_bleu() {
        let cfg = MetricConfig::default();
        let ctx = snap(&[("m/f.dsl", "a\n")]);
        let tgt = snap(&[("m/f.dsl", "a\nb\n")]);
        let record = evaluate_example("e1", &ctx, &tgt, "no document here", &cfg);
        assert_eq!(record.valid, 0);
        assert_eq!(record.exact_match, 0);
        assert_eq!(record.change_similarity, 0.0);
        assert_eq!(record.structural_fidelity, 0.0);
        assert!(record.bleu >= 0.0);
    }

    #[test]
    fn alpha_never_changes_the_ranking_of_two_predictions() {
        // On a single changed line, x ↦ x^alpha is monotone on [0,1], so the
        // sign of s(A) − s(B) is independent of alpha.
        let ctx = snap(&[("m/f.dsl", "base")]);
        let tgt = snap(&[("m/f.dsl", "base\nq1 q2 q3 q4")]);
        let close = snap(&[("m/f.dsl", "base\nq1 q2 q3 zz")]);
        let far = snap(&[("m/f.dsl", "base\nq1 zz zz zz")]);
        for alpha in [0.5, 1.0, 2.0, 5.0, 20.0] {
            let cfg = MetricConfig {
                alpha,
                ..Default::default()
            };
            let a = change_similarity(&ctx, &tgt, &close, &cfg).average;
            let b = change_similarity(&ctx, &tgt, &far, &cfg).average;
            assert!(a > b, "alpha {alpha}: {a} !> {b}");
        }
    }

    #[test]
    fn aggregate_matches_hand_computed_sums() {
        // Spreadsheet-style oracle: means over a small engineered record set.
        let mk = |id: &str, em: u8, valid: u8, bleu: f64, cs: f64, sf: f64| ExampleRecord {
            id: id.to_string(),
            exact_match: em,
            valid,
            bleu,
            change_similarity: cs,
            structural_fidelity: sf,
        };
        let records = vec![
            mk("e1", 1, 1, 1.0, 1.0, 1.0),
            mk("e2", 0, 1, 0.9, 0.75, 1.0),
            mk("e3", 1, 1, 1.0, 1.0, 1.0),
            mk("e4", 0, 0, 0.1, 0.0, 0.5),
            mk("e5", 0, 1, 0.8, 0.5, 0.9),
            mk("e6", 1, 1, 1.0, 1.0, 1.0),
            mk("e7", 0, 1, 0.7, 0.25, 0.8),
            mk("e8", 1, 1, 1.0, 1.0, 1.0),
        ];
        let report = aggregate(records).unwrap();
        assert!((report.aggregate.exact_match - 4.0 / 8.0).abs() < 1e-15);
        assert!((report.aggregate.validity - 7.0 / 8.0).abs() < 1e-15);
        assert!((report.aggregate.bleu - 6.5 / 8.0).abs() < 1e-12);
        assert!((report.aggregate.change_similarity - 5.5 / 8.0).abs() < 1e-12);
        assert!((report.aggregate.structural_fidelity - 7.2 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_means_and_empty_error() {
        let mk = |id: &str, em: u8| ExampleRecord {
            id: id.to_string(),
            exact_match: em,
            valid: 1,
            bleu: 0.5,
            change_similarity: 0.25,
            structural_fidelity: 1.0,
        };
        let report = aggregate(vec![mk("b", 1), mk("a", 0), mk("d", 1), mk("c", 0)]).unwrap();
        assert_eq!(report.aggregate.exact_match, 0.5);
        assert_eq!(report.aggregate.validity, 1.0);
        assert_eq!(report.records[0].id, "a");
        assert!(matches!(aggregate(vec![]), Err(MetricError::EmptyRecords)));

        let single = aggregate(vec![mk("only", 1)]).unwrap();
        assert_eq!(single.aggregate.exact_match, 1.0);
        assert_eq!(single.aggregate.bleu, 0.5);
    }

    #[test]
    fn record_lines_round_trip_with_schema_tag() {
        let records = vec![ExampleRecord {
            id: "e1".to_string(),
            exact_match: 1,
            valid: 1,
            bleu: 0.75,
            change_similarity: 0.5,
            structural_fidelity: 1.0,
        }];
        let text = records_to_jsonl(&records);
        assert!(text.contains("\"schema_version\":\"dslbench.metrics.v1\""));
        assert_eq!(records_from_jsonl(&text).unwrap(), records);
    }

    #[test]
    fn table_has_expected_columns_and_rounding() {
        let rows = vec![(
            "zero-shot".to_string(),
            AggregateScores {
                exact_match: 0.5554,
                validity: 1.0,
                bleu: 0.91349,
                change_similarity: 0.7777,
                structural_fidelity: 1.0,
            },
        )];
        let table = render_table(&rows);
        let mut lines = table.lines();
        let header = lines.next().unwrap();
        for column in TABLE_COLUMNS {
            assert!(header.contains(column), "missing column {column}");
        }
        let row = lines.next().unwrap();
        assert!(row.contains("0.555"));
        assert!(row.contains("0.913"));
        assert!(row.contains("0.778"));
    }
}

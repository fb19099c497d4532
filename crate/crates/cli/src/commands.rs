//! Subcommand implementations. Each function returns the process exit code
//! or a classified error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use dslbench::dataset::{
    self, corpus_from_jsonl, corpus_to_jsonl, grouped_split, minimal_variant, render_sft,
    EvalExample, Operation, SftTemplate, WhitespaceCodec,
};
use dslbench::diffcore::{line_diff, split_lines};
use dslbench::metrics::{
    aggregate, change_similarity, evaluate_example, records_from_jsonl, records_to_jsonl,
    render_table, AggregateScores, ExampleRecord, MetricReport,
};
use dslbench::repofs::{
    canonical_serialize, delinearize as repo_delinearize, linearize as repo_linearize,
    parse_snapshot,
};
use dslbench::runner::{
    generations_to_jsonl, run_eval, Demonstration, EndpointConfig, GenParams, HttpTransport,
    PromptAssets, PromptMode, ReplayArchive, ReplayTransport, Transport,
};
use dslbench::toydsl::{acceptance, check_repo, diagnostics_to_jsonl, Acceptance, TypeRegistry};

use crate::config::RunConfig;
use crate::error::{CliError, EXIT_DSL_FAIL, EXIT_OK};
use crate::{
    DatasetBuildArgs, DatasetExportSftArgs, DatasetSplitArgs, DatasetStatsArgs,
    DatasetVariantArgs, DelinearizeArgs, DslcheckArgs, EvalArgs, LinearizeArgs, ReportArgs,
    RunArgs,
};

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::io(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, content)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

pub fn linearize(args: &LinearizeArgs, _config: &RunConfig) -> Result<i32, CliError> {
    let snapshot = repo_linearize(&args.dir)?;
    let document = canonical_serialize(&snapshot);
    match &args.out {
        Some(path) => write_file(path, &document)?,
        None => println!("{document}"),
    }
    if let Some(path) = &args.flat_csv {
        write_file(path, &snapshot.flatten().to_csv())?;
    }
    Ok(EXIT_OK)
}

pub fn delinearize(args: &DelinearizeArgs, _config: &RunConfig) -> Result<i32, CliError> {
    let document = read_file(&args.document)?;
    let snapshot = parse_snapshot(&document)?;
    repo_delinearize(&snapshot, &args.dir)?;
    Ok(EXIT_OK)
}

fn load_corpus(path: &Path) -> Result<Vec<EvalExample>, CliError> {
    Ok(corpus_from_jsonl(&read_file(path)?)?)
}

fn parse_mode(mode: &str) -> Result<PromptMode, CliError> {
    match mode {
        "zero-shot" | "zero_shot" => Ok(PromptMode::ZeroShot),
        "one-shot" | "one_shot" => Ok(PromptMode::OneShot),
        other => Err(CliError::validation(format!(
            "unknown mode `{other}`, expected zero-shot or one-shot"
        ))),
    }
}

fn parse_operation(operation: &str) -> Result<Operation, CliError> {
    Operation::ALL
        .into_iter()
        .find(|op| op.as_str() == operation)
        .ok_or_else(|| {
            let names: Vec<&str> = Operation::ALL.iter().map(|op| op.as_str()).collect();
            CliError::validation(format!(
                "unknown operation `{operation}`, expected one of {}",
                names.join(", ")
            ))
        })
}

fn load_assets(
    grammar: Option<&PathBuf>,
    demo: Option<&PathBuf>,
) -> Result<PromptAssets, CliError> {
    let grammar_summary = grammar.map(|p| read_file(p)).transpose()?;
    let demonstration = demo
        .map(|p| -> Result<Demonstration, CliError> {
            let text = read_file(p)?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::validation(format!("bad demonstration file {}: {e}", p.display()))
            })
        })
        .transpose()?;
    Ok(PromptAssets {
        grammar_summary,
        demonstration,
    })
}

/// Lenient generation-log line: only the id and raw text are required.
#[derive(Deserialize)]
struct PredictionLine {
    #[allow(dead_code)]
    schema_version: Option<String>,
    example_id: String,
    raw_text: String,
}

fn load_predictions(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut predictions = BTreeMap::new();
    for (idx, line) in read_file(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PredictionLine = serde_json::from_str(line).map_err(|e| {
            CliError::validation(format!("malformed prediction line {}: {e}", idx + 1))
        })?;
        predictions.insert(parsed.example_id, parsed.raw_text);
    }
    Ok(predictions)
}

fn check_alignment(
    examples: &[EvalExample],
    predictions: &BTreeMap<String, String>,
) -> Result<(), CliError> {
    let corpus_ids: Vec<&str> = examples.iter().map(|e| e.id.as_str()).collect();
    let missing: Vec<&str> = corpus_ids
        .iter()
        .filter(|id| !predictions.contains_key(**id))
        .copied()
        .collect();
    let extra: Vec<&String> = predictions
        .keys()
        .filter(|id| !corpus_ids.contains(&id.as_str()))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut message = String::from("corpus and predictions do not align by example id");
        if !missing.is_empty() {
            message.push_str(&format!("; missing predictions for: {}", missing.join(", ")));
        }
        if !extra.is_empty() {
            let extra: Vec<&str> = extra.iter().map(|s| s.as_str()).collect();
            message.push_str(&format!("; predictions without examples: {}", extra.join(", ")));
        }
        return Err(CliError::validation(message));
    }
    Ok(())
}

fn explain_example(example: &EvalExample, raw_prediction: &str, config: &RunConfig) {
    println!("--- {}", example.id);
    let ctx = example.context.flatten();
    let tgt = example.target.flatten();
    let mut keys: Vec<&String> = ctx.entries().keys().chain(tgt.entries().keys()).collect();
    keys.sort();
    keys.dedup();
    for key in keys {
        let a = split_lines(ctx.get(key).unwrap_or(""));
        let b = split_lines(tgt.get(key).unwrap_or(""));
        let script = line_diff(&a, &b);
        if script.is_all_equal() {
            continue;
        }
        println!("  {key}:");
        for op in script.opcodes() {
            println!("    {op}");
        }
    }
    if let Ok(prediction) = parse_snapshot(raw_prediction) {
        let score = change_similarity(
            &example.context,
            &example.target,
            &prediction,
            &config.metric_config(),
        );
        for line in &score.lines {
            println!(
                "  line {:?} (e={:.3}, s={:.3}, w={:.3})",
                line.true_content, line.error, line.score, line.weight
            );
        }
    }
}

fn emit_report(
    report: &MetricReport,
    setting: &str,
    records_out: Option<&PathBuf>,
    table_out: Option<&PathBuf>,
    summary_csv: Option<&PathBuf>,
) -> Result<(), CliError> {
    let table = render_table(&[(setting.to_string(), report.aggregate)]);
    print!("{table}");
    if let Some(path) = records_out {
        write_file(path, &records_to_jsonl(&report.records))?;
    }
    if let Some(path) = table_out {
        write_file(path, &table)?;
    }
    if let Some(path) = summary_csv {
        write_file(path, &summary_csv_text(&[(setting.to_string(), report.aggregate)]))?;
    }
    Ok(())
}

fn summary_csv_text(rows: &[(String, AggregateScores)]) -> String {
    let mut out = String::from("setting,em,json,bleu,change_similarity,structural_fidelity\n");
    for (label, agg) in rows {
        out.push_str(&format!(
            "{label},{:.3},{:.3},{:.3},{:.3},{:.3}\n",
            agg.exact_match, agg.validity, agg.bleu, agg.change_similarity, agg.structural_fidelity
        ));
    }
    out
}

pub fn eval(args: &EvalArgs, config: &RunConfig) -> Result<i32, CliError> {
    let examples = load_corpus(&args.corpus)?;
    let metric_cfg = config.metric_config();

    let records: Vec<ExampleRecord> = if let Some(replay_path) = &args.replay {
        let mode = parse_mode(args.mode.as_deref().unwrap_or("zero-shot"))?;
        let assets = load_assets(args.grammar.as_ref(), args.demo.as_ref())?;
        let archive = ReplayArchive::from_jsonl(&read_file(replay_path)?)?;
        let transport = ReplayTransport::new(archive);
        let params = GenParams {
            max_tokens: config.max_tokens,
            temperature: config.temperature,
            seed: Some(config.seed),
        };
        let output = run_eval(
            &examples,
            mode,
            &assets,
            &transport,
            &params,
            &metric_cfg,
            config.jobs,
        )?;
        output.report.records
    } else {
        let predictions_path = args.predictions.as_ref().ok_or_else(|| {
            CliError::validation("eval needs --predictions or --replay".to_string())
        })?;
        let predictions = load_predictions(predictions_path)?;
        check_alignment(&examples, &predictions)?;
        examples
            .iter()
            .map(|example| {
                let raw = predictions.get(&example.id).expect("alignment checked");
                if args.explain {
                    explain_example(example, raw, config);
                }
                evaluate_example(&example.id, &example.context, &example.target, raw, &metric_cfg)
            })
            .collect()
    };

    let report = aggregate(records)?;
    emit_report(
        &report,
        &args.setting,
        args.records_out.as_ref(),
        args.table_out.as_ref(),
        args.summary_csv.as_ref(),
    )?;
    Ok(EXIT_OK)
}

pub fn dataset_build(args: &DatasetBuildArgs, _config: &RunConfig) -> Result<i32, CliError> {
    let operation = parse_operation(&args.operation)?;
    let example = dataset::build_example(
        &args.instruction,
        &args.context_dir,
        &args.target_dir,
        operation,
        &args.group_id,
    )?;
    if example.change_set_is_empty() {
        eprintln!(
            "warning: example {} has an empty change-set (context == target)",
            example.id
        );
    }
    append_corpus_line(&args.out, &example)?;
    println!("built {}", example.id);
    Ok(EXIT_OK)
}

fn append_corpus_line(path: &Path, example: &EvalExample) -> Result<(), CliError> {
    let mut existing = if path.exists() {
        read_file(path)?
    } else {
        String::new()
    };
    existing.push_str(&corpus_to_jsonl(std::slice::from_ref(example)));
    write_file(path, &existing)
}

pub fn dataset_variant(args: &DatasetVariantArgs, _config: &RunConfig) -> Result<i32, CliError> {
    let examples = load_corpus(&args.corpus)?;
    let example = examples
        .iter()
        .find(|e| e.id == args.id)
        .ok_or_else(|| CliError::validation(format!("no example with id `{}`", args.id)))?;
    let minimal = minimal_variant(example, &args.keep)?;
    append_corpus_line(&args.out, &minimal)?;
    println!("built {}", minimal.id);
    Ok(EXIT_OK)
}

fn parse_ratios(text: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::validation(format!(
            "ratios must be two comma-separated numbers, got `{text}`"
        )));
    }
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| CliError::validation(format!("bad ratio `{s}`: {e}")))
    };
    Ok((parse(parts[0])?, parse(parts[1])?))
}

pub fn dataset_split(args: &DatasetSplitArgs, config: &RunConfig) -> Result<i32, CliError> {
    let examples = load_corpus(&args.corpus)?;
    let ratios = parse_ratios(&args.ratios)?;
    let (train, eval, manifest) = grouped_split(&examples, ratios, config.seed)?;
    write_file(&args.train_out, &corpus_to_jsonl(&train))?;
    write_file(&args.eval_out, &corpus_to_jsonl(&eval))?;
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .expect("manifest serializes");
    write_file(&args.manifest, &manifest_json)?;
    println!(
        "split {} examples into {} train / {} eval (seed {})",
        manifest.total_examples, manifest.train_examples, manifest.eval_examples, manifest.seed
    );
    Ok(EXIT_OK)
}

pub fn dataset_stats(args: &DatasetStatsArgs, _config: &RunConfig) -> Result<i32, CliError> {
    let examples = load_corpus(&args.corpus)?;
    let stats = dataset::corpus_stats(&examples)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
    } else {
        println!("examples:            {}", stats.example_count);
        println!("mean context lines:  {:.2}", stats.mean_context_lines);
        println!("mean target lines:   {:.2}", stats.mean_target_lines);
        println!("mean files:          {:.2}", stats.mean_files);
        println!("mean folders:        {:.2}", stats.mean_folders);
        println!("minimal share:       {:.2}", stats.variant_ratio);
    }
    Ok(EXIT_OK)
}

pub fn dataset_export_sft(
    args: &DatasetExportSftArgs,
    _config: &RunConfig,
) -> Result<i32, CliError> {
    let examples = load_corpus(&args.corpus)?;
    let template = SftTemplate::new(read_file(&args.template)?)?;
    let mut codec = WhitespaceCodec::new();
    let mut records = Vec::with_capacity(examples.len());
    for example in &examples {
        let record = render_sft(example, &template, &mut codec)?;
        records.push((example.id.clone(), record));
    }
    write_file(&args.out, &dataset::sft_to_jsonl(&records))?;
    println!("exported {} records", records.len());
    Ok(EXIT_OK)
}

pub fn dslcheck(args: &DslcheckArgs, _config: &RunConfig) -> Result<i32, CliError> {
    let snapshot = match (&args.snapshot, &args.dir) {
        (Some(path), None) => parse_snapshot(&read_file(path)?)?,
        (None, Some(dir)) => repo_linearize(dir)?,
        _ => return Err(CliError::validation("give a snapshot file or --dir".to_string())),
    };
    let registry_text = read_file(&args.registry)?;
    let registry = TypeRegistry::from_json(&registry_text)
        .map_err(|e| CliError::validation(format!("bad registry: {e}")))?;

    let diagnostics = check_repo(&snapshot, &registry);
    for diagnostic in &diagnostics {
        println!("{diagnostic}");
    }
    if let Some(path) = &args.diagnostics_out {
        write_file(path, &diagnostics_to_jsonl(&diagnostics))?;
    }
    match acceptance(&snapshot, &registry) {
        Acceptance::Pass => {
            println!("PASS");
            Ok(EXIT_OK)
        }
        Acceptance::Fail(_) => {
            println!("FAIL");
            Ok(EXIT_DSL_FAIL)
        }
    }
}

pub fn run(args: &RunArgs, config: &RunConfig) -> Result<i32, CliError> {
    let examples = load_corpus(&args.corpus)?;
    let mode = parse_mode(&args.mode)?;
    let assets = load_assets(args.grammar.as_ref(), args.demo.as_ref())?;

    let transport: Box<dyn Transport> = if let Some(replay_path) = &args.replay {
        let archive = ReplayArchive::from_jsonl(&read_file(replay_path)?)?;
        Box::new(ReplayTransport::new(archive))
    } else {
        let base_url = args
            .endpoint_url
            .clone()
            .or_else(|| config.base_url.clone())
            .ok_or_else(|| {
                CliError::validation("run needs --endpoint-url (or base_url in config) or --replay")
            })?;
        let model = args
            .model
            .clone()
            .or_else(|| config.model.clone())
            .ok_or_else(|| CliError::validation("run needs --model (or model in config)"))?;
        let mut endpoint = EndpointConfig::new(base_url, model);
        endpoint.token_env = config.token_env.clone();
        Box::new(HttpTransport::new(endpoint)?)
    };

    let params = GenParams {
        max_tokens: args.max_tokens.unwrap_or(config.max_tokens),
        temperature: args.temperature.unwrap_or(config.temperature),
        seed: Some(config.seed),
    };
    let output = run_eval(
        &examples,
        mode,
        &assets,
        transport.as_ref(),
        &params,
        &config.metric_config(),
        config.jobs,
    )?;

    let setting = args.setting.clone().unwrap_or_else(|| mode.as_str().to_string());
    emit_report(
        &output.report,
        &setting,
        args.records_out.as_ref(),
        args.table_out.as_ref(),
        None,
    )?;
    if let Some(path) = &args.generations_out {
        write_file(path, &generations_to_jsonl(&output.generations))?;
    }
    let failures = output
        .generations
        .iter()
        .filter(|g| g.error.is_some())
        .count();
    if failures > 0 {
        eprintln!("warning: {failures} example(s) failed at the endpoint (scored as invalid)");
    }
    Ok(EXIT_OK)
}

pub fn report(args: &ReportArgs, _config: &RunConfig) -> Result<i32, CliError> {
    if !args.labels.is_empty() && args.labels.len() != args.records.len() {
        return Err(CliError::validation(format!(
            "{} labels given for {} record files",
            args.labels.len(),
            args.records.len()
        )));
    }
    let mut rows = Vec::new();
    for (idx, path) in args.records.iter().enumerate() {
        let records = records_from_jsonl(&read_file(path)?)?;
        let report = aggregate(records)?;
        let label = if args.labels.is_empty() {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("row{idx}"))
        } else {
            args.labels[idx].clone()
        };
        rows.push((label, report.aggregate));
    }
    let table = render_table(&rows);
    print!("{table}");
    if let Some(path) = &args.table_out {
        write_file(path, &table)?;
    }
    if let Some(path) = &args.csv {
        write_file(path, &summary_csv_text(&rows))?;
    }
    Ok(EXIT_OK)
}

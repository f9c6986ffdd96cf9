//! Command execution and artifact layout.
//!
//! Every command writes into its own run directory: a `manifest.json` naming
//! the config fingerprint, tool version, input digests, and artifact list
//! (the manifest carries the run's only timestamp), plus the command's
//! summary and record-stream files. Input corpora are never modified.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;

use toolsnare_core::corpus::{
    load_query_set, load_tool_corpus, partition_queries, validate_query_labels, QueryRecord,
    ToolRecord,
};
use toolsnare_core::error::Error;
use toolsnare_core::eval::protocol::{
    baseline_rewrite_eval, run_protocol, sweep, transfer_eval, ExperimentResult, SweepAxis,
    SweepResult, TransferMatrix,
};
use toolsnare_core::eval::records::{read_jsonl, recount, write_jsonl};
use toolsnare_core::eval::QuerySetId;
use toolsnare_core::fingerprint::digest_bytes;
use toolsnare_core::perturb::CandidateText;
use toolsnare_core::selectors::ToolSelector;

use crate::config::{build_selector, build_space, RunConfig};

pub struct LoadedCorpus {
    pub tools: Vec<ToolRecord>,
    pub queries: Vec<QueryRecord>,
    pub tools_digest: String,
    pub queries_digest: String,
}

pub fn load_corpus(config: &RunConfig) -> anyhow::Result<LoadedCorpus> {
    let tools_raw = std::fs::read(&config.corpus.tools)
        .with_context(|| format!("reading {}", config.corpus.tools.display()))?;
    let queries_raw = std::fs::read(&config.corpus.queries)
        .with_context(|| format!("reading {}", config.corpus.queries.display()))?;
    let tools = load_tool_corpus(&config.corpus.tools)?;
    let queries = load_query_set(&config.corpus.queries)?;
    validate_query_labels(&queries, &tools)?;
    Ok(LoadedCorpus {
        tools,
        queries,
        tools_digest: digest_bytes(&tools_raw),
        queries_digest: digest_bytes(&queries_raw),
    })
}

pub struct RunDir {
    pub path: PathBuf,
    artifacts: Vec<String>,
}

impl RunDir {
    pub fn create(path: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(path)
            .with_context(|| format!("creating output dir {}", path.display()))?;
        Ok(RunDir {
            path: path.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let rendered = serde_json::to_string_pretty(value)?;
        std::fs::write(self.path.join(name), rendered + "\n")?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> anyhow::Result<()> {
        std::fs::write(self.path.join(name), text)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn write_records(
        &mut self,
        name: &str,
        outcomes: &[toolsnare_core::eval::QueryOutcome],
    ) -> anyhow::Result<()> {
        write_jsonl(self.path.join(name), outcomes)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    /// Writes the manifest last so it can list every artifact.
    pub fn finish_manifest(
        mut self,
        command: &str,
        fingerprint: &str,
        corpus: &LoadedCorpus,
        config: &RunConfig,
    ) -> anyhow::Result<PathBuf> {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut artifacts = self.artifacts.clone();
        artifacts.push("manifest.json".into());
        artifacts.sort();
        let manifest = serde_json::json!({
            "schema": "toolsnare.manifest.v1",
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "created_unix": created_unix,
            "config_fingerprint": fingerprint,
            "inputs": {
                "tools": { "path": config.corpus.tools, "sha256": corpus.tools_digest },
                "queries": { "path": config.corpus.queries, "sha256": corpus.queries_digest },
            },
            "artifacts": artifacts,
        });
        self.write_json("manifest.json", &manifest)?;
        Ok(self.path)
    }
}

fn resolved_config_toml(config: &RunConfig) -> anyhow::Result<String> {
    // The config only ever references credentials by environment-variable
    // name, so serializing it versbatim leaks nothing.
    Ok(toml::to_string_pretty(config)?)
}

fn accessible_refs<'a>(
    config: &RunConfig,
    queries: &'a [QueryRecord],
) -> anyhow::Result<Vec<&'a QueryRecord>> {
    let partition = partition_queries(queries, config.partition.access_fraction, config.seed)?;
    let ids: BTreeSet<String> = partition.attack_accessible.into_iter().collect();
    Ok(queries.iter().filter(|q| ids.contains(&q.query_id)).collect())
}

pub fn cmd_attack(config: &RunConfig, output: &Path) -> anyhow::Result<ExperimentResult> {
    let corpus = load_corpus(config)?;
    let selector = build_selector(&config.selector, &corpus.tools)?;
    let accessible = accessible_refs(config, &corpus.queries)?;
    let space = build_space(&config.attack, &accessible)?;
    let protocol = config.protocol_config()?;

    let run = run_protocol(&protocol, &corpus.tools, &corpus.queries, selector.as_ref(), &space)?;

    let mut dir = RunDir::create(output)?;
    dir.write_text("config.resolved.toml", &resolved_config_toml(config)?)?;
    dir.write_json("result.json", &run.result)?;
    dir.write_records("per_query.jsonl", &run.outcomes)?;
    let trace_lines: String = run
        .state
        .trace
        .iter()
        .map(|record| serde_json::to_string(record).map(|l| l + "\n"))
        .collect::<Result<_, _>>()?;
    dir.write_text("trace.jsonl", &trace_lines)?;
    dir.write_json("state.json", &run.state)?;
    dir.write_json("adversarial.json", &run.state.current_best)?;
    dir.write_json(
        "partition.json",
        &serde_json::json!({
            "partition": run.partition,
            "hard_query_ids": run.hard_query_ids,
        }),
    )?;
    let fingerprint = run.result.config_fingerprint.clone();
    dir.finish_manifest("attack", &fingerprint, &corpus, config)?;
    Ok(run.result)
}

pub fn cmd_sweep(
    config: &RunConfig,
    axis: SweepAxis,
    values: &[u64],
    output: &Path,
) -> anyhow::Result<SweepResult> {
    let corpus = load_corpus(config)?;
    let selector = build_selector(&config.selector, &corpus.tools)?;
    let accessible = accessible_refs(config, &corpus.queries)?;
    let space = build_space(&config.attack, &accessible)?;
    let protocol = config.protocol_config()?;

    let result = sweep(
        &protocol,
        axis,
        values,
        &corpus.tools,
        &corpus.queries,
        selector.as_ref(),
        &space,
    )?;

    let mut dir = RunDir::create(output)?;
    dir.write_text("config.resolved.toml", &resolved_config_toml(config)?)?;
    dir.write_json("sweep.json", &result)?;
    let fingerprint = result.config_fingerprint.clone();
    dir.finish_manifest("sweep", &fingerprint, &corpus, config)?;
    Ok(result)
}

pub fn cmd_transfer(
    config: &RunConfig,
    adversarial_path: &Path,
    target_kinds: &[String],
    output: &Path,
) -> anyhow::Result<TransferMatrix> {
    let corpus = load_corpus(config)?;
    let raw = std::fs::read_to_string(adversarial_path)
        .with_context(|| format!("reading {}", adversarial_path.display()))?;
    let adversarial: CandidateText = serde_json::from_str(&raw)
        .map_err(|e| Error::Config(format!("adversarial file: {e}")))?;

    let kinds: Vec<String> = if target_kinds.is_empty() {
        config.transfer.targets.clone()
    } else {
        target_kinds.to_vec()
    };
    if kinds.is_empty() {
        return Err(Error::Config("no transfer targets configured".into()).into());
    }
    let mut selectors: Vec<(String, Box<dyn ToolSelector>)> = Vec::new();
    for kind in &kinds {
        let mut selector_config = config.selector.clone();
        selector_config.kind = kind.clone();
        selectors.push((kind.clone(), build_selector(&selector_config, &corpus.tools)?));
    }
    let targets: Vec<(String, &dyn ToolSelector)> = selectors
        .iter()
        .map(|(label, s)| (label.clone(), s.as_ref()))
        .collect();

    let (matrix, outcomes) = transfer_eval(
        &adversarial,
        &config.selector.kind,
        &targets,
        &corpus.queries,
        &config.attack.ks,
        config.selector.max_tools,
    )?;

    let mut dir = RunDir::create(output)?;
    dir.write_json("transfer.json", &matrix)?;
    dir.write_records("per_query.jsonl", &outcomes)?;
    let fingerprint = toolsnare_core::fingerprint::digest_of(&matrix);
    dir.finish_manifest("transfer", &fingerprint, &corpus, config)?;
    Ok(matrix)
}

pub fn cmd_rewrite_eval(
    config: &RunConfig,
    rewrite_path: &Path,
    output: &Path,
) -> anyhow::Result<ExperimentResult> {
    let corpus = load_corpus(config)?;
    let selector = build_selector(&config.selector, &corpus.tools)?;
    let raw = std::fs::read_to_string(rewrite_path)
        .with_context(|| format!("reading {}", rewrite_path.display()))?;
    let rewritten: ToolRecord = serde_json::from_str(&raw)
        .map_err(|e| Error::Config(format!("rewrite file: {e}")))?;

    let (result, outcomes) = baseline_rewrite_eval(
        &rewritten,
        &corpus.tools,
        &corpus.queries,
        selector.as_ref(),
        &config.attack.ks,
        config.selector.max_tools,
    )?;

    let mut dir = RunDir::create(output)?;
    dir.write_json("result.json", &result)?;
    dir.write_records("per_query.jsonl", &outcomes)?;
    let fingerprint = result.config_fingerprint.clone();
    dir.finish_manifest("rewrite-eval", &fingerprint, &corpus, config)?;
    Ok(result)
}

/// Recounts a prior run's persisted per-query records and checks them against
/// the stored summary. Returns an error when any ratio diverges.
pub fn cmd_eval(run_dir: &Path) -> anyhow::Result<serde_json::Value> {
    let result_raw = std::fs::read_to_string(run_dir.join("result.json"))
        .with_context(|| format!("reading result.json in {}", run_dir.display()))?;
    let result: ExperimentResult = serde_json::from_str(&result_raw)?;
    let outcomes = read_jsonl(run_dir.join("per_query.jsonl"))?;
    let ks: Vec<usize> = result.before.hit_at.keys().copied().collect();
    let ks = if ks.is_empty() { vec![1, 3, 5] } else { ks };
    let (before, after) = recount(&outcomes, &result.selector, &ks, QuerySetId::All);

    let mut mismatches = Vec::new();
    for (metric, stored) in result.before.metric_values() {
        let recounted = before.metric_values().get(&metric).copied();
        if recounted != Some(stored) {
            mismatches.push(format!("before {metric}: stored {stored:?} recount {recounted:?}"));
        }
    }
    for (metric, stored) in result.after.metric_values() {
        let recounted = after.metric_values().get(&metric).copied();
        if recounted != Some(stored) {
            mismatches.push(format!("after {metric}: stored {stored:?} recount {recounted:?}"));
        }
    }
    let report = serde_json::json!({
        "schema": "toolsnare.recount.v1",
        "run": run_dir,
        "recount_before": before,
        "recount_after": after,
        "matches_summary": mismatches.is_empty(),
        "mismatches": mismatches,
    });
    std::fs::write(
        run_dir.join("recount.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    if report["matches_summary"].as_bool() != Some(true) {
        return Err(Error::Integrity(format!(
            "recount diverges from the stored summary: {:?}",
            report["mismatches"]
        ))
        .into());
    }
    Ok(report)
}

fn fmt_report(report: &toolsnare_core::eval::MetricReport) -> String {
    let mut parts: Vec<String> = report
        .hit_at
        .iter()
        .map(|(k, v)| format!("hit@{k}={v:.4}"))
        .collect();
    if let Some(p) = report.p_use {
        parts.push(format!("p_use={p:.4}"));
    }
    format!("{} (n={})", parts.join(" "), report.n_queries)
}

/// Prints a readable summary of whichever artifacts a run directory holds.
pub fn cmd_report(run_dir: &Path) -> anyhow::Result<()> {
    let mut found = false;
    let result_path = run_dir.join("result.json");
    if result_path.exists() {
        found = true;
        let result: ExperimentResult =
            serde_json::from_str(&std::fs::read_to_string(result_path)?)?;
        println!("experiment: {:?} on {} (target {})", result.mode, result.selector, result.target_tool_id);
        println!("  before: {}", fmt_report(&result.before));
        println!("  after:  {}", fmt_report(&result.after));
        let improvements: Vec<String> = result
            .improvement
            .iter()
            .map(|(metric, improvement)| format!("{metric}: {improvement}"))
            .collect();
        println!("  impro.: {}", improvements.join("  "));
        if let (Some(hb), Some(ha)) = (&result.held_out_before, &result.held_out_after) {
            println!("  held-out before: {}", fmt_report(hb));
            println!("  held-out after:  {}", fmt_report(ha));
        }
        println!("  evals used: {}", result.evals_used);
        println!("  fingerprint: {}", result.config_fingerprint);
    }
    let sweep_path = run_dir.join("sweep.json");
    if sweep_path.exists() {
        found = true;
        let result: SweepResult = serde_json::from_str(&std::fs::read_to_string(sweep_path)?)?;
        println!("sweep over {:?} ({}):", result.axis, result.peak_metric);
        for (index, point) in result.points.iter().enumerate() {
            let marker = if index == result.peak_held_out_index { " <- held-out peak" } else { "" };
            println!(
                "  {:>8}  train {}  held-out {}{marker}",
                point.value,
                fmt_report(&point.train),
                fmt_report(&point.held_out),
            );
        }
    }
    let transfer_path = run_dir.join("transfer.json");
    if transfer_path.exists() {
        found = true;
        let matrix: TransferMatrix =
            serde_json::from_str(&std::fs::read_to_string(transfer_path)?)?;
        println!("transfer from {} (target {}):", matrix.source_model, matrix.target_tool_id);
        for row in &matrix.rows {
            println!(
                "  -> {:<18} before {}  after {}",
                row.target_model,
                fmt_report(&row.before),
                fmt_report(&row.after)
            );
        }
    }
    if !found {
        return Err(Error::Config(format!(
            "no result.json, sweep.json, or transfer.json under {}",
            run_dir.display()
        ))
        .into());
    }
    Ok(())
}

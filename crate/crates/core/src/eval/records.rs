//! Per-query outcome records: the persisted ground truth behind every report.
//!
//! Records are streamed as JSON Lines, one object per query per condition per
//! model (schema `toolsnare.query_record.v1`, documented in
//! `docs/FORMATS.md`). Re-aggregating a record stream must reproduce the
//! stored summary exactly; `recount` is that re-aggregation.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{report_from_outcomes, MetricReport, QuerySetId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Before,
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySplit {
    Accessible,
    HeldOut,
}

/// One selector evaluation of one query under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_id: String,
    pub condition: Condition,
    /// Partition membership; absent for evaluations run without a partition
    /// (transfer, rewrite).
    pub split: Option<QuerySplit>,
    /// True when the query belongs to the experiment's evaluation set.
    pub in_eval_set: bool,
    /// 1-based rank of the target (ranked selectors).
    pub rank: Option<usize>,
    /// Whether the target was in the chosen set (chosen-set selectors).
    pub chosen: Option<bool>,
    /// Selector the outcome was measured on.
    pub model: String,
}

pub fn write_jsonl(path: impl AsRef<Path>, outcomes: &[QueryOutcome]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    for outcome in outcomes {
        serde_json::to_writer(&mut writer, outcome)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<QueryOutcome>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut outcomes = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            index,
            message: e.to_string(),
        })?;
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// Recomputes the before/after reports of one model from its record stream.
/// `query_set_id` selects the slice: the evaluation set, or one partition
/// split intersected with it.
pub fn recount(
    outcomes: &[QueryOutcome],
    model: &str,
    ks: &[usize],
    query_set_id: QuerySetId,
) -> (MetricReport, MetricReport) {
    let slice = |condition: Condition| -> Vec<&QueryOutcome> {
        outcomes
            .iter()
            .filter(|o| o.model == model && o.condition == condition)
            .filter(|o| match query_set_id {
                QuerySetId::All => o.in_eval_set,
                QuerySetId::Accessible => {
                    o.in_eval_set && o.split == Some(QuerySplit::Accessible)
                }
                QuerySetId::HeldOut => o.in_eval_set && o.split == Some(QuerySplit::HeldOut),
            })
            .collect()
    };
    (
        report_from_outcomes(&slice(Condition::Before), ks, query_set_id),
        report_from_outcomes(&slice(Condition::After), ks, query_set_id),
    )
}

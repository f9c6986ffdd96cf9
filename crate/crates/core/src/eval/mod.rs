//! Retrieval metrics and experiment reports.
//!
//! Every reported ratio is an aggregate over persisted per-query outcomes
//! ([`records::QueryOutcome`]), so any report can be recounted from its record
//! stream after the fact.

pub mod protocol;
pub mod records;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selectors::Selection;
pub use records::{Condition, QueryOutcome, QuerySplit};

/// Which query set a report aggregates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySetId {
    Accessible,
    HeldOut,
    All,
}

/// Hit@k (for ranked selectors) and/or usage probability (for chosen-set
/// selectors) over one query set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// k → fraction of queries whose top-k contains the target.
    pub hit_at: BTreeMap<usize, f64>,
    /// Fraction of queries whose chosen set contains the target.
    pub p_use: Option<f64>,
    pub n_queries: usize,
    pub query_set_id: QuerySetId,
}

impl MetricReport {
    /// The metric→value map used by improvement ratios and sweeps.
    pub fn metric_values(&self) -> BTreeMap<String, f64> {
        let mut values: BTreeMap<String, f64> = self
            .hit_at
            .iter()
            .map(|(k, v)| (format!("hit@{k}"), *v))
            .collect();
        if let Some(p) = self.p_use {
            values.insert("p_use".into(), p);
        }
        values
    }
}

/// Relative improvement of one metric, reported as after/before. When the
/// before value is zero the ratio is undefined and flagged instead (rendered
/// as "-").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Improvement {
    Ratio { value: f64 },
    FromZero,
}

impl std::fmt::Display for Improvement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Improvement::Ratio { value } => write!(f, "{:.0}%", value * 100.0),
            Improvement::FromZero => write!(f, "-"),
        }
    }
}

/// after/before per metric; [`Improvement::FromZero`] where before == 0.
pub fn improvement_map(
    before: &MetricReport,
    after: &MetricReport,
) -> BTreeMap<String, Improvement> {
    let before_values = before.metric_values();
    let after_values = after.metric_values();
    before_values
        .into_iter()
        .filter_map(|(metric, b)| {
            let a = *after_values.get(&metric)?;
            let improvement = if b > 0.0 {
                Improvement::Ratio { value: a / b }
            } else {
                Improvement::FromZero
            };
            Some((metric, improvement))
        })
        .collect()
}

/// Fraction of queries whose top-k ranking contains the target. All
/// selections must be in ranked mode.
pub fn hit_at_k(selections: &[Selection], target_id: &str, k: usize) -> Result<f64> {
    if selections.is_empty() {
        return Err(Error::EmptyInput("no selections to aggregate".into()));
    }
    let mut hits = 0usize;
    for selection in selections {
        match selection {
            Selection::Ranked { entries, .. } => {
                if entries.iter().take(k).any(|e| e.tool_id == target_id) {
                    hits += 1;
                }
            }
            Selection::ChosenSet { .. } => {
                return Err(Error::Mode(
                    "hit@k needs ranked selections; use usage_probability for chosen sets".into(),
                ))
            }
        }
    }
    Ok(hits as f64 / selections.len() as f64)
}

/// Fraction of queries whose chosen set contains the target. All selections
/// must be in chosen-set mode.
pub fn usage_probability(selections: &[Selection], target_id: &str) -> Result<f64> {
    if selections.is_empty() {
        return Err(Error::EmptyInput(
            "usage probability over an empty query set is undefined".into(),
        ));
    }
    let mut used = 0usize;
    for selection in selections {
        match selection {
            Selection::ChosenSet { tools, .. } => {
                if tools.contains(target_id) {
                    used += 1;
                }
            }
            Selection::Ranked { .. } => {
                return Err(Error::Mode(
                    "usage probability needs chosen-set selections".into(),
                ))
            }
        }
    }
    Ok(used as f64 / selections.len() as f64)
}

/// Aggregates per-query outcomes into a report. Ranked outcomes (rank
/// present) produce hit@k for each requested k; chosen outcomes produce
/// p_use.
pub fn report_from_outcomes(
    outcomes: &[&QueryOutcome],
    ks: &[usize],
    query_set_id: QuerySetId,
) -> MetricReport {
    let n = outcomes.len();
    let mut hit_at = BTreeMap::new();
    let ranked = outcomes.iter().filter(|o| o.rank.is_some()).count();
    if ranked > 0 {
        for &k in ks {
            let hits = outcomes
                .iter()
                .filter(|o| o.rank.map(|r| r <= k).unwrap_or(false))
                .count();
            hit_at.insert(k, if n > 0 { hits as f64 / n as f64 } else { 0.0 });
        }
    }
    let chosen_any = outcomes.iter().any(|o| o.chosen.is_some());
    let p_use = if chosen_any && n > 0 {
        Some(
            outcomes.iter().filter(|o| o.chosen == Some(true)).count() as f64 / n as f64,
        )
    } else {
        None
    };
    MetricReport {
        hit_at,
        p_use,
        n_queries: n,
        query_set_id,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selectors::RankedEntry;
    use std::collections::BTreeSet;

    fn ranked(ids: &[&str]) -> Selection {
        Selection::Ranked {
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, id)| RankedEntry {
                    tool_id: id.to_string(),
                    score: 1.0 / (i + 1) as f64,
                })
                .collect(),
            k: ids.len(),
        }
    }

    fn chosen(ids: &[&str]) -> Selection {
        Selection::ChosenSet {
            tools: ids.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
            unmatched: 0,
        }
    }

    #[test]
    fn hit_at_k_respects_the_cutoff() {
        let selections = vec![ranked(&["a", "b", "target", "c", "d"])];
        assert_eq!(hit_at_k(&selections, "target", 1).unwrap(), 0.0);
        assert_eq!(hit_at_k(&selections, "target", 3).unwrap(), 1.0);
        assert_eq!(hit_at_k(&selections, "target", 5).unwrap(), 1.0);
    }

    #[test]
    fn absent_target_never_hits() {
        let selections: Vec<Selection> = (0..4)
            .map(|_| ranked(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]))
            .collect();
        assert_eq!(hit_at_k(&selections, "target", 5).unwrap(), 0.0);
    }

    #[test]
    fn chosen_set_input_is_a_mode_error() {
        let selections = vec![chosen(&["a"])];
        assert!(matches!(
            hit_at_k(&selections, "a", 1),
            Err(Error::Mode(_))
        ));
    }

    #[test]
    fn usage_probability_counts_membership() {
        let selections = vec![
            chosen(&["target", "x"]),
            chosen(&["x"]),
            chosen(&["target"]),
            chosen(&[]),
        ];
        assert_eq!(usage_probability(&selections, "target").unwrap(), 0.5);
        assert_eq!(usage_probability(&selections, "never").unwrap(), 0.0);
    }

    #[test]
    fn usage_probability_rejects_empty_query_set() {
        assert!(matches!(
            usage_probability(&[], "t"),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn improvement_flags_from_zero() {
        let mut before = MetricReport {
            hit_at: BTreeMap::from([(1, 0.0), (5, 0.2)]),
            p_use: None,
            n_queries: 10,
            query_set_id: QuerySetId::All,
        };
        let after = MetricReport {
            hit_at: BTreeMap::from([(1, 0.4), (5, 0.6)]),
            p_use: None,
            n_queries: 10,
            query_set_id: QuerySetId::All,
        };
        let improvements = improvement_map(&before, &after);
        assert_eq!(improvements["hit@1"], Improvement::FromZero);
        assert_eq!(
            improvements["hit@5"],
            Improvement::Ratio { value: 0.6 / 0.2 }
        );
        before.hit_at.insert(1, 0.1);
        let improvements = improvement_map(&before, &after);
        assert_eq!(improvements["hit@1"], Improvement::Ratio { value: 4.0 });
        assert_eq!(format!("{}", Improvement::FromZero), "-");
    }
}

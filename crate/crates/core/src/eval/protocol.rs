//! Experiment protocols: indiscriminate/conditional/LLM attack runs, query and
//! budget sweeps with held-out splits, transfer matrices, and the
//! rewrite-baseline evaluation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::attack::{
    greedy_attack, AttackBudget, AttackContext, AttackOptions, AttackState, GoalFunction,
};
use crate::corpus::{
    identify_hard_queries, partition_queries, HardQueryPolicy, QueryPartition, QueryRecord,
    ToolRecord,
};
use crate::error::{Error, Result};
use crate::eval::records::{Condition, QueryOutcome, QuerySplit};
use crate::eval::{improvement_map, report_from_outcomes, Improvement, MetricReport, QuerySetId};
use crate::fingerprint::{digest_of, digest_value};
use crate::perturb::{AttackSpace, CandidateText};
use crate::selectors::{Selection, SelectionMode, ToolSelector};

pub const RESULT_SCHEMA: &str = "toolsnare.result.v1";
pub const SWEEP_SCHEMA: &str = "toolsnare.sweep.v1";
pub const TRANSFER_SCHEMA: &str = "toolsnare.transfer.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    /// Maximize retrieval of the target over all queries.
    Indiscriminate,
    /// Make the target win among tools sharing its category; evaluated on the
    /// queries labeled with any cohort member.
    Conditional,
    /// Maximize the chance an LLM selector includes the target in its chosen
    /// set.
    Llm,
    /// No search: evaluate an externally supplied rewrite of the target.
    Rewrite,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub mode: ProtocolMode,
    pub target_tool_id: String,
    pub access_fraction: f64,
    pub seed: u64,
    /// Applied to retriever goals only; ignored (and rejected) for the LLM
    /// goal, which averages over all accessible queries.
    pub hard_query_policy: Option<HardQueryPolicy>,
    pub goal: GoalFunction,
    pub budget: AttackBudget,
    /// Hit@k cutoffs for reports.
    pub ks: Vec<usize>,
    #[serde(skip)]
    pub options: AttackOptions,
}

impl ProtocolConfig {
    fn chosen_cap(&self) -> usize {
        match self.goal {
            GoalFunction::LlmIndicator { max_tools } => max_tools,
            GoalFunction::RetrieverRank => 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema: String,
    pub mode: ProtocolMode,
    pub selector: String,
    pub target_tool_id: String,
    pub before: MetricReport,
    pub after: MetricReport,
    pub improvement: BTreeMap<String, Improvement>,
    /// Reports over the held-out slice of the evaluation set, when nonempty.
    pub held_out_before: Option<MetricReport>,
    pub held_out_after: Option<MetricReport>,
    pub evals_used: u64,
    pub config_fingerprint: String,
}

pub struct ProtocolRun {
    pub result: ExperimentResult,
    pub state: AttackState,
    pub outcomes: Vec<QueryOutcome>,
    pub partition: QueryPartition,
    pub hard_query_ids: BTreeSet<String>,
}

fn find_tool<'a>(tools: &'a [ToolRecord], tool_id: &str) -> Result<&'a ToolRecord> {
    tools
        .iter()
        .find(|t| t.tool_id == tool_id)
        .ok_or_else(|| Error::UnknownToolId(tool_id.to_string()))
}

/// Queries the experiment reports metrics over, per mode.
fn evaluation_ids(
    mode: ProtocolMode,
    target: &ToolRecord,
    tools: &[ToolRecord],
    queries: &[QueryRecord],
) -> Result<BTreeSet<String>> {
    match mode {
        ProtocolMode::Indiscriminate | ProtocolMode::Llm | ProtocolMode::Rewrite => {
            Ok(queries.iter().map(|q| q.query_id.clone()).collect())
        }
        ProtocolMode::Conditional => {
            let cohort: BTreeSet<&str> = tools
                .iter()
                .filter(|t| t.category == target.category)
                .map(|t| t.tool_id.as_str())
                .collect();
            if cohort.len() < 2 {
                return Err(Error::Config(format!(
                    "conditional mode needs competitors sharing category '{}'",
                    target.category
                )));
            }
            let ids: BTreeSet<String> = queries
                .iter()
                .filter(|q| q.relevant_tool_ids.iter().any(|id| cohort.contains(id.as_str())))
                .map(|q| q.query_id.clone())
                .collect();
            if ids.is_empty() {
                return Err(Error::Config(
                    "conditional mode found no queries labeled with the cohort".into(),
                ));
            }
            Ok(ids)
        }
    }
}

/// Evaluates one text state (original or adversarial) on every query,
/// producing one outcome per query.
fn outcomes_for(
    selector: &dyn ToolSelector,
    swap: Option<&ToolRecord>,
    target_id: &str,
    queries: &[QueryRecord],
    chosen_cap: usize,
    condition: Condition,
    eval_ids: &BTreeSet<String>,
    accessible_ids: &BTreeSet<String>,
    model: &str,
) -> Result<Vec<QueryOutcome>> {
    let view = selector.view(swap)?;
    let mut outcomes = Vec::with_capacity(queries.len());
    for query in queries {
        let (rank, chosen) = match selector.mode() {
            SelectionMode::Ranked => {
                let ranking = view.rank_all(&query.text)?;
                let rank = ranking
                    .iter()
                    .position(|e| e.tool_id == target_id)
                    .map(|i| i + 1);
                (rank, None)
            }
            SelectionMode::ChosenSet => match view.select(&query.text, chosen_cap.max(1))? {
                Selection::ChosenSet { tools, .. } => (None, Some(tools.contains(target_id))),
                Selection::Ranked { .. } => {
                    return Err(Error::Mode("chosen-set selector returned a ranking".into()))
                }
            },
        };
        outcomes.push(QueryOutcome {
            query_id: query.query_id.clone(),
            condition,
            split: Some(if accessible_ids.contains(&query.query_id) {
                QuerySplit::Accessible
            } else {
                QuerySplit::HeldOut
            }),
            in_eval_set: eval_ids.contains(&query.query_id),
            rank,
            chosen,
            model: model.to_string(),
        });
    }
    Ok(outcomes)
}

fn slice_report(
    outcomes: &[QueryOutcome],
    condition: Condition,
    ks: &[usize],
    query_set_id: QuerySetId,
) -> MetricReport {
    let slice: Vec<&QueryOutcome> = outcomes
        .iter()
        .filter(|o| o.condition == condition && o.in_eval_set)
        .filter(|o| match query_set_id {
            QuerySetId::All => true,
            QuerySetId::Accessible => o.split == Some(QuerySplit::Accessible),
            QuerySetId::HeldOut => o.split == Some(QuerySplit::HeldOut),
        })
        .collect();
    report_from_outcomes(&slice, ks, query_set_id)
}

fn protocol_fingerprint(
    cfg: &ProtocolConfig,
    tools: &[ToolRecord],
    queries: &[QueryRecord],
    selector: &dyn ToolSelector,
    space: &AttackSpace,
) -> String {
    digest_value(&serde_json::json!({
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "saliency_ordering": cfg.options.saliency_ordering,
        "tools": digest_of(&tools),
        "queries": digest_of(&queries),
        "selector": selector.describe(),
        "space": space.fingerprint_value(),
    }))
}

fn validate_goal_selector(goal: &GoalFunction, selector: &dyn ToolSelector) -> Result<()> {
    let ok = match goal {
        GoalFunction::LlmIndicator { .. } => selector.mode() == SelectionMode::ChosenSet,
        GoalFunction::RetrieverRank => selector.mode() == SelectionMode::Ranked,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "goal {:?} does not match selector '{}' mode",
            goal,
            selector.name()
        )))
    }
}

/// Runs one full experiment: partition, hard-query filtering, the greedy
/// attack on the accessible queries, and before/after metrics over the
/// mode's evaluation set (identical query ids on both sides).
pub fn run_protocol(
    cfg: &ProtocolConfig,
    tools: &[ToolRecord],
    queries: &[QueryRecord],
    selector: &dyn ToolSelector,
    space: &AttackSpace,
) -> Result<ProtocolRun> {
    if cfg.mode == ProtocolMode::Rewrite {
        return Err(Error::Config(
            "rewrite mode takes no search; use baseline_rewrite_eval".into(),
        ));
    }
    validate_goal_selector(&cfg.goal, selector)?;
    let target = find_tool(tools, &cfg.target_tool_id)?;
    let eval_ids = evaluation_ids(cfg.mode, target, tools, queries)?;
    let partition = partition_queries(queries, cfg.access_fraction, cfg.seed)?;
    let accessible_ids: BTreeSet<String> = partition.attack_accessible.iter().cloned().collect();
    let accessible: Vec<QueryRecord> = partition
        .attack_accessible
        .iter()
        .map(|id| {
            queries
                .iter()
                .find(|q| &q.query_id == id)
                .cloned()
                .expect("partition ids come from the query set")
        })
        .collect();

    let hard_query_ids = match (&cfg.goal, cfg.hard_query_policy) {
        (GoalFunction::RetrieverRank, Some(policy)) => {
            identify_hard_queries(target, &accessible, selector, policy)?
        }
        (GoalFunction::LlmIndicator { .. }, Some(_)) => {
            return Err(Error::Config(
                "hard-query filtering applies to retriever goals only".into(),
            ))
        }
        _ => BTreeSet::new(),
    };
    let active: Vec<QueryRecord> = accessible
        .iter()
        .filter(|q| !hard_query_ids.contains(&q.query_id))
        .cloned()
        .collect();

    let model = selector.name().to_string();
    let chosen_cap = cfg.chosen_cap();
    let mut outcomes = outcomes_for(
        selector,
        None,
        &cfg.target_tool_id,
        queries,
        chosen_cap,
        Condition::Before,
        &eval_ids,
        &accessible_ids,
        &model,
    )?;

    let ctx = AttackContext {
        selector,
        goal: cfg.goal,
        space,
        queries: &active,
        options: cfg.options,
    };
    let state = greedy_attack(&ctx, target, cfg.budget)?;

    outcomes.extend(outcomes_for(
        selector,
        Some(&state.current_best.tool),
        &cfg.target_tool_id,
        queries,
        chosen_cap,
        Condition::After,
        &eval_ids,
        &accessible_ids,
        &model,
    )?);

    let before = slice_report(&outcomes, Condition::Before, &cfg.ks, QuerySetId::All);
    let after = slice_report(&outcomes, Condition::After, &cfg.ks, QuerySetId::All);
    let held_out_before = slice_report(&outcomes, Condition::Before, &cfg.ks, QuerySetId::HeldOut);
    let (held_out_before, held_out_after) = if held_out_before.n_queries > 0 {
        (
            Some(held_out_before),
            Some(slice_report(&outcomes, Condition::After, &cfg.ks, QuerySetId::HeldOut)),
        )
    } else {
        (None, None)
    };

    let improvement = improvement_map(&before, &after);
    let result = ExperimentResult {
        schema: RESULT_SCHEMA.to_string(),
        mode: cfg.mode,
        selector: model,
        target_tool_id: cfg.target_tool_id.clone(),
        before,
        after,
        improvement,
        held_out_before,
        held_out_after,
        evals_used: state.evals_used,
        config_fingerprint: protocol_fingerprint(cfg, tools, queries, selector, space),
    };
    Ok(ProtocolRun {
        result,
        state,
        outcomes,
        partition,
        hard_query_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    QueryCount,
    AttackBudget,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: u64,
    /// After-attack metrics on the attack-time (train) queries.
    pub train: MetricReport,
    /// After-attack metrics on the held-out split.
    pub held_out: MetricReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema: String,
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    pub baseline_train: MetricReport,
    pub baseline_held_out: MetricReport,
    /// Index of the held-out peak of `peak_metric` over `points` (first index
    /// on ties) — where attack overfitting sets in.
    pub peak_held_out_index: usize,
    pub peak_metric: String,
    pub config_fingerprint: String,
}

fn peak_metric_for(goal: &GoalFunction, ks: &[usize]) -> String {
    match goal {
        GoalFunction::LlmIndicator { .. } => "p_use".to_string(),
        GoalFunction::RetrieverRank => {
            format!("hit@{}", ks.iter().max().copied().unwrap_or(5))
        }
    }
}

/// One full attack per axis value under an identical seed, recording train and
/// held-out metrics at every point.
pub fn sweep(
    cfg: &ProtocolConfig,
    axis: SweepAxis,
    values: &[u64],
    tools: &[ToolRecord],
    queries: &[QueryRecord],
    selector: &dyn ToolSelector,
    space: &AttackSpace,
) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::EmptyInput("sweep values".into()));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("sweep values must be strictly increasing".into()));
    }
    validate_goal_selector(&cfg.goal, selector)?;
    let target = find_tool(tools, &cfg.target_tool_id)?;
    let partition = partition_queries(queries, cfg.access_fraction, cfg.seed)?;
    let accessible_ids: BTreeSet<String> = partition.attack_accessible.iter().cloned().collect();
    let held_out_ids: BTreeSet<String> = partition.held_out.iter().cloned().collect();
    if !accessible_ids.is_disjoint(&held_out_ids) {
        return Err(Error::Integrity("accessible and held-out splits overlap".into()));
    }
    let accessible: Vec<QueryRecord> = partition
        .attack_accessible
        .iter()
        .map(|id| {
            queries
                .iter()
                .find(|q| &q.query_id == id)
                .cloned()
                .expect("partition ids come from the query set")
        })
        .collect();
    let all_ids: BTreeSet<String> = queries.iter().map(|q| q.query_id.clone()).collect();
    let model = selector.name().to_string();
    let chosen_cap = cfg.chosen_cap();

    // Clamp query-count values to the accessible pool, dropping collisions.
    let mut effective: Vec<u64> = Vec::with_capacity(values.len());
    for &value in values {
        let clamped = match axis {
            SweepAxis::QueryCount => {
                let max = accessible.len() as u64;
                if value > max {
                    log::warn!("query-count value {value} exceeds the {max} accessible queries; clamping");
                    max
                } else {
                    value
                }
            }
            SweepAxis::AttackBudget => value,
        };
        if effective.last() != Some(&clamped) {
            effective.push(clamped);
        }
    }

    let baseline = outcomes_for(
        selector,
        None,
        &cfg.target_tool_id,
        queries,
        chosen_cap,
        Condition::Before,
        &all_ids,
        &accessible_ids,
        &model,
    )?;
    let baseline_train = slice_report(&baseline, Condition::Before, &cfg.ks, QuerySetId::Accessible);
    let baseline_held_out = slice_report(&baseline, Condition::Before, &cfg.ks, QuerySetId::HeldOut);

    let mut points = Vec::with_capacity(effective.len());
    for &value in &effective {
        let (train_queries, budget) = match axis {
            SweepAxis::QueryCount => {
                let used: Vec<QueryRecord> =
                    accessible.iter().take(value as usize).cloned().collect();
                (used, cfg.budget)
            }
            SweepAxis::AttackBudget => (
                accessible.clone(),
                AttackBudget::new(cfg.budget.per_position, value),
            ),
        };
        let train_ids: BTreeSet<String> =
            train_queries.iter().map(|q| q.query_id.clone()).collect();
        let hard = match (&cfg.goal, cfg.hard_query_policy) {
            (GoalFunction::RetrieverRank, Some(policy)) if !train_queries.is_empty() => {
                identify_hard_queries(target, &train_queries, selector, policy)?
            }
            _ => BTreeSet::new(),
        };
        let active: Vec<QueryRecord> = train_queries
            .iter()
            .filter(|q| !hard.contains(&q.query_id))
            .cloned()
            .collect();
        let after = if budget.global_evals == 0 || active.is_empty() {
            // Zero budget (or nothing to optimize on): the attack is the
            // identity and after equals the unattacked baseline.
            baseline.clone()
        } else {
            let ctx = AttackContext {
                selector,
                goal: cfg.goal,
                space,
                queries: &active,
                options: cfg.options,
            };
            let state = greedy_attack(&ctx, target, budget)?;
            outcomes_for(
                selector,
                Some(&state.current_best.tool),
                &cfg.target_tool_id,
                queries,
                chosen_cap,
                Condition::After,
                &all_ids,
                &accessible_ids,
                &model,
            )?
        };
        let train_slice: Vec<&QueryOutcome> = after
            .iter()
            .filter(|o| train_ids.contains(&o.query_id))
            .collect();
        let held_slice: Vec<&QueryOutcome> = after
            .iter()
            .filter(|o| held_out_ids.contains(&o.query_id))
            .collect();
        points.push(SweepPoint {
            value,
            train: report_from_outcomes(&train_slice, &cfg.ks, QuerySetId::Accessible),
            held_out: report_from_outcomes(&held_slice, &cfg.ks, QuerySetId::HeldOut),
        });
    }

    let peak_metric = peak_metric_for(&cfg.goal, &cfg.ks);
    let peak_held_out_index = points
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            let va = a.held_out.metric_values().get(&peak_metric).copied().unwrap_or(0.0);
            let vb = b.held_out.metric_values().get(&peak_metric).copied().unwrap_or(0.0);
            va.total_cmp(&vb).then_with(|| ib.cmp(ia))
        })
        .map(|(i, _)| i)
        .unwrap_or(0);

    Ok(SweepResult {
        schema: SWEEP_SCHEMA.to_string(),
        axis,
        points,
        baseline_train,
        baseline_held_out,
        peak_held_out_index,
        peak_metric,
        config_fingerprint: protocol_fingerprint(cfg, tools, queries, selector, space),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferRow {
    pub target_model: String,
    pub before: MetricReport,
    pub after: MetricReport,
    pub improvement: BTreeMap<String, Improvement>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub schema: String,
    pub source_model: String,
    pub target_tool_id: String,
    pub rows: Vec<TransferRow>,
}

/// Evaluates a frozen adversarial text on every target selector, without any
/// further optimization. Under deterministic selectors the diagonal entry
/// (target == source) reproduces the source attack's final metrics exactly.
/// Returns the matrix plus the per-query outcomes behind every cell (model
/// field = target label).
pub fn transfer_eval(
    adversarial: &CandidateText,
    source_model: &str,
    targets: &[(String, &dyn ToolSelector)],
    queries: &[QueryRecord],
    ks: &[usize],
    chosen_cap: usize,
) -> Result<(TransferMatrix, Vec<QueryOutcome>)> {
    if targets.is_empty() {
        return Err(Error::EmptyInput("transfer targets".into()));
    }
    let target_id = adversarial.tool.tool_id.clone();
    let all_ids: BTreeSet<String> = queries.iter().map(|q| q.query_id.clone()).collect();
    let none = BTreeSet::new();
    let mut rows = Vec::with_capacity(targets.len());
    let mut outcomes = Vec::new();
    for (label, selector) in targets {
        let before_outcomes = outcomes_for(
            *selector,
            None,
            &target_id,
            queries,
            chosen_cap,
            Condition::Before,
            &all_ids,
            &none,
            label,
        )?;
        let after_outcomes = outcomes_for(
            *selector,
            Some(&adversarial.tool),
            &target_id,
            queries,
            chosen_cap,
            Condition::After,
            &all_ids,
            &none,
            label,
        )?;
        let before = slice_report(&before_outcomes, Condition::Before, ks, QuerySetId::All);
        let after = slice_report(&after_outcomes, Condition::After, ks, QuerySetId::All);
        let improvement = improvement_map(&before, &after);
        rows.push(TransferRow {
            target_model: label.clone(),
            before,
            after,
            improvement,
        });
        outcomes.extend(before_outcomes);
        outcomes.extend(after_outcomes);
    }
    Ok((
        TransferMatrix {
            schema: TRANSFER_SCHEMA.to_string(),
            source_model: source_model.to_string(),
            target_tool_id: target_id,
            rows,
        },
        outcomes,
    ))
}

/// Evaluates an externally supplied rewrite of the target as the "attack":
/// before/after metrics with no search. The rewrite must keep the tool id and
/// the parameters blob byte-identical.
pub fn baseline_rewrite_eval(
    rewritten: &ToolRecord,
    tools: &[ToolRecord],
    queries: &[QueryRecord],
    selector: &dyn ToolSelector,
    ks: &[usize],
    chosen_cap: usize,
) -> Result<(ExperimentResult, Vec<QueryOutcome>)> {
    let original = find_tool(tools, &rewritten.tool_id)?;
    if rewritten.parameters != original.parameters {
        return Err(Error::FieldMask(
            "rewrite modifies the parameters blob".into(),
        ));
    }
    if rewritten.description.is_empty() {
        return Err(Error::Config("rewrite has an empty description".into()));
    }
    if queries.is_empty() {
        return Err(Error::EmptyInput("query set".into()));
    }
    let all_ids: BTreeSet<String> = queries.iter().map(|q| q.query_id.clone()).collect();
    let none = BTreeSet::new();
    let model = selector.name().to_string();
    let mut outcomes = outcomes_for(
        selector,
        None,
        &rewritten.tool_id,
        queries,
        chosen_cap,
        Condition::Before,
        &all_ids,
        &none,
        &model,
    )?;
    outcomes.extend(outcomes_for(
        selector,
        Some(rewritten),
        &rewritten.tool_id,
        queries,
        chosen_cap,
        Condition::After,
        &all_ids,
        &none,
        &model,
    )?);
    let before = slice_report(&outcomes, Condition::Before, ks, QuerySetId::All);
    let after = slice_report(&outcomes, Condition::After, ks, QuerySetId::All);
    let improvement = improvement_map(&before, &after);
    let result = ExperimentResult {
        schema: RESULT_SCHEMA.to_string(),
        mode: ProtocolMode::Rewrite,
        selector: model,
        target_tool_id: rewritten.tool_id.clone(),
        before,
        after,
        improvement,
        held_out_before: None,
        held_out_after: None,
        evals_used: 0,
        config_fingerprint: digest_value(&serde_json::json!({
            "rewritten": digest_of(&rewritten),
            "tools": digest_of(&tools),
            "queries": digest_of(&queries),
            "selector": selector.describe(),
        })),
    };
    Ok((result, outcomes))
}

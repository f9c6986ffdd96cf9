//! Two-phase greedy search for adversarial tool text.
//!
//! The driver walks word positions of the perturbable text left to right,
//! generates at most `B` single-op candidates per position, evaluates each
//! against the goal function, and accepts the position's best candidate iff it
//! strictly beats the best goal seen so far. A second pass repeats the walk at
//! character level over the word-phase result. The starting bar is the goal of
//! the ORIGINAL text, so a perturbation is only ever kept when it improves on
//! the unattacked baseline.
//!
//! Every candidate evaluation is charged to a global ledger; when the ledger
//! hits zero the driver stops where it stands and returns the best state so
//! far, with a cursor precise enough that [`resume_attack`] continues
//! mid-position and reproduces the single-run result exactly.
//!
//! After each accepted edit the perturbed text is re-tokenized and the walk
//! continues from the next position index of the new tokenization, so
//! insertions and deletions shift later positions rather than invalidating
//! them.

use serde::{Deserialize, Serialize};

use crate::corpus::{QueryRecord, ToolRecord};
use crate::error::{Error, Result};
use crate::perturb::{
    char_sites, gen_char_perturbations, gen_word_perturbations, word_sites, AttackSpace,
    CandidateText, CharOpKind, OpKind, PerturbationOp, SiteRef, WordOpKind,
};
use crate::selectors::{Selection, ToolSelector};

/// Scalar objective the attack maximizes, averaged over the active queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalFunction {
    /// 1 when the target is in the chosen set, else 0. For chosen-set (LLM)
    /// selectors; averages over all accessible queries.
    LlmIndicator { max_tools: usize },
    /// Reciprocal rank of the target in the full ranking, in (0, 1]. For
    /// ranked selectors; hard queries are removed from the active set first.
    RetrieverRank,
}

/// Candidate-generation width (per position) and the global evaluation ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackBudget {
    pub per_position: usize,
    pub global_evals: u64,
}

impl AttackBudget {
    pub fn new(per_position: usize, global_evals: u64) -> Self {
        AttackBudget {
            per_position,
            global_evals,
        }
    }
}

/// Counts down goal evaluations. Every candidate evaluation must charge the
/// ledger first; evaluations stop exactly at zero remaining.
#[derive(Debug)]
pub struct BudgetLedger {
    remaining: u64,
}

impl BudgetLedger {
    pub fn new(global_evals: u64) -> Self {
        BudgetLedger {
            remaining: global_evals,
        }
    }

    pub fn remaining(&self) -> u64 {
        self.remaining
    }

    fn try_charge(&mut self) -> bool {
        if self.remaining == 0 {
            return false;
        }
        self.remaining -= 1;
        true
    }
}

/// Goal of `candidate` under the swap-in semantics: the selector sees the
/// original corpus with the target tool's text replaced by the candidate.
/// Pure — does not touch any ledger.
pub fn goal_value(
    goal: &GoalFunction,
    candidate: &CandidateText,
    selector: &dyn ToolSelector,
    queries: &[QueryRecord],
    parallelism: usize,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Config("goal evaluation over zero queries".into()));
    }
    let view = selector.view(Some(&candidate.tool))?;
    let target_id = candidate.tool.tool_id.as_str();
    let per_query = |query: &QueryRecord| -> Result<f64> {
        match goal {
            GoalFunction::LlmIndicator { max_tools } => {
                match view.select(&query.text, *max_tools)? {
                    Selection::ChosenSet { tools, .. } => {
                        Ok(if tools.contains(target_id) { 1.0 } else { 0.0 })
                    }
                    Selection::Ranked { .. } => Err(Error::Mode(
                        "llm_indicator goal needs a chosen-set selector".into(),
                    )),
                }
            }
            GoalFunction::RetrieverRank => {
                let ranking = view.rank_all(&query.text)?;
                let rank = ranking
                    .iter()
                    .position(|e| e.tool_id == target_id)
                    .ok_or_else(|| Error::UnknownToolId(target_id.to_string()))?;
                Ok(1.0 / (rank + 1) as f64)
            }
        }
    };
    let values: Vec<f64> = if parallelism > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| queries.par_iter().map(per_query).collect::<Result<_>>())?
    } else {
        queries.iter().map(per_query).collect::<Result<_>>()?
    };
    // Deterministic fold in query order regardless of evaluation order.
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Charges one evaluation to the ledger, then computes [`goal_value`].
/// Errors with [`Error::BudgetExhausted`] when nothing remains.
pub fn eval_goal(
    goal: &GoalFunction,
    candidate: &CandidateText,
    selector: &dyn ToolSelector,
    queries: &[QueryRecord],
    ledger: &mut BudgetLedger,
    parallelism: usize,
) -> Result<f64> {
    if !ledger.try_charge() {
        return Err(Error::BudgetExhausted);
    }
    goal_value(goal, candidate, selector, queries, parallelism)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Word,
    Char,
}

/// One record per evaluated candidate, in evaluation order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub phase: Phase,
    /// Index into the phase's site plan at the time of evaluation.
    pub site: usize,
    pub op: PerturbationOp,
    pub score: f64,
    pub accepted: bool,
    /// Cumulative candidate evaluations after this one (saliency probes
    /// included).
    pub evals_used: u64,
    /// True for saliency-ordering probes, which are never accepted.
    #[serde(default)]
    pub probe: bool,
}

/// Best candidate seen so far within the in-progress position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PendingBest {
    pub score: f64,
    pub enum_index: usize,
    pub trace_index: usize,
    pub candidate: CandidateText,
}

/// Where the walk stands: the current phase's site plan and the position
/// within it. Serializable so a persisted state resumes exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cursor {
    pub phase: Phase,
    pub sites: Vec<SiteRef>,
    pub site_index: usize,
    pub next_candidate: usize,
    pub pending: Option<PendingBest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackState {
    pub current_best: CandidateText,
    pub s_max: f64,
    /// Goal of the original, unattacked text.
    pub initial_goal: f64,
    pub evals_used: u64,
    pub trace: Vec<TraceRecord>,
    pub cursor: Cursor,
    pub converged: bool,
    pub per_position_budget: usize,
}

/// Everything the driver needs besides the target and the budget.
pub struct AttackContext<'a> {
    pub selector: &'a dyn ToolSelector,
    pub goal: GoalFunction,
    pub space: &'a AttackSpace,
    /// Active queries: accessible minus hard for retriever goals, all
    /// accessible for the LLM goal.
    pub queries: &'a [QueryRecord],
    pub options: AttackOptions,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AttackOptions {
    /// Visit positions in descending goal-drop-when-deleted order instead of
    /// left to right. Costs one probe evaluation per position at phase entry.
    pub saliency_ordering: bool,
    /// Worker threads for per-query goal evaluation; 1 = sequential.
    pub parallelism: usize,
}

impl AttackOptions {
    fn threads(&self) -> usize {
        self.parallelism.max(1)
    }
}

fn sites_for(phase: Phase, candidate: &CandidateText, space: &AttackSpace) -> Vec<SiteRef> {
    match phase {
        Phase::Word => word_sites(candidate, space),
        Phase::Char => char_sites(candidate, space),
    }
}

fn gen_for(
    phase: Phase,
    parent: &CandidateText,
    site: SiteRef,
    budget: usize,
    space: &AttackSpace,
) -> Vec<CandidateText> {
    match phase {
        Phase::Word => gen_word_perturbations(parent, site, budget, space),
        Phase::Char => gen_char_perturbations(parent, site, budget, space),
    }
}

fn delete_probe_op(phase: Phase, site: SiteRef) -> PerturbationOp {
    let kind = match phase {
        Phase::Word => OpKind::Word(WordOpKind::WordDelete),
        Phase::Char => OpKind::Char(CharOpKind::CharDelete),
    };
    PerturbationOp {
        kind,
        field: site.field,
        locus: site.index,
        payload: String::new(),
    }
}

/// Orders `sites` by descending goal drop when the site is deleted, charging
/// one evaluation per site. Sites whose deletion is illegal keep saliency 0.
/// Stops early (returning the order built so far, natural order appended) if
/// the ledger runs out.
fn saliency_order(
    ctx: &AttackContext,
    state: &mut AttackState,
    ledger: &mut BudgetLedger,
    phase: Phase,
    sites: Vec<SiteRef>,
) -> Result<Vec<SiteRef>> {
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(sites.len());
    for (index, site) in sites.iter().enumerate() {
        let op = delete_probe_op(phase, *site);
        let Ok(probe) = crate::perturb::apply(&op, &state.current_best, ctx.space) else {
            scored.push((0.0, index));
            continue;
        };
        if !ledger.try_charge() {
            // Out of budget mid-probing: keep what was scored, natural order
            // for the rest.
            for rest in index..sites.len() {
                scored.push((0.0, rest));
            }
            break;
        }
        let value = goal_value(
            &ctx.goal,
            &probe,
            ctx.selector,
            ctx.queries,
            ctx.options.threads(),
        )?;
        state.evals_used += 1;
        state.trace.push(TraceRecord {
            phase,
            site: index,
            op,
            score: value,
            accepted: false,
            evals_used: state.evals_used,
            probe: true,
        });
        scored.push((state.s_max - value, index));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    Ok(scored.into_iter().map(|(_, i)| sites[i]).collect())
}

fn enter_phase(
    ctx: &AttackContext,
    state: &mut AttackState,
    ledger: &mut BudgetLedger,
    phase: Phase,
) -> Result<()> {
    let natural = sites_for(phase, &state.current_best, ctx.space);
    let sites = if ctx.options.saliency_ordering {
        saliency_order(ctx, state, ledger, phase, natural)?
    } else {
        natural
    };
    state.cursor = Cursor {
        phase,
        sites,
        site_index: 0,
        next_candidate: 0,
        pending: None,
    };
    Ok(())
}

fn run(ctx: &AttackContext, state: &mut AttackState, ledger: &mut BudgetLedger) -> Result<()> {
    let b = state.per_position_budget;
    loop {
        if state.cursor.site_index >= state.cursor.sites.len() {
            match state.cursor.phase {
                Phase::Word => {
                    enter_phase(ctx, state, ledger, Phase::Char)?;
                    continue;
                }
                Phase::Char => {
                    state.converged = true;
                    return Ok(());
                }
            }
        }
        let phase = state.cursor.phase;
        let site = state.cursor.sites[state.cursor.site_index];
        let candidates = gen_for(phase, &state.current_best, site, b, ctx.space);
        for (enum_index, candidate) in candidates.iter().enumerate().skip(state.cursor.next_candidate)
        {
            if !ledger.try_charge() {
                // Stop mid-position; the cursor lets a resume pick up here.
                state.cursor.next_candidate = enum_index;
                return Ok(());
            }
            let score = goal_value(
                &ctx.goal,
                candidate,
                ctx.selector,
                ctx.queries,
                ctx.options.threads(),
            )?;
            state.evals_used += 1;
            let trace_index = state.trace.len();
            state.trace.push(TraceRecord {
                phase,
                site: state.cursor.site_index,
                op: candidate
                    .ops_applied
                    .last()
                    .expect("generated candidates carry their op")
                    .clone(),
                score,
                accepted: false,
                evals_used: state.evals_used,
                probe: false,
            });
            let better = match &state.cursor.pending {
                None => true,
                Some(pending) => score > pending.score,
            };
            if better {
                state.cursor.pending = Some(PendingBest {
                    score,
                    enum_index,
                    trace_index,
                    candidate: candidate.clone(),
                });
            }
        }
        // Position complete: accept its best candidate iff it strictly
        // improves on the best goal seen so far.
        if let Some(pending) = state.cursor.pending.take() {
            if pending.score > state.s_max {
                state.trace[pending.trace_index].accepted = true;
                state.current_best = pending.candidate;
                state.s_max = pending.score;
                if !ctx.options.saliency_ordering {
                    // Re-tokenize the evolved text; continue from the next
                    // position index of the new site plan.
                    state.cursor.sites = sites_for(phase, &state.current_best, ctx.space);
                }
            }
        }
        state.cursor.site_index += 1;
        state.cursor.next_candidate = 0;
    }
}

fn validate_context(ctx: &AttackContext) -> Result<()> {
    if ctx.queries.is_empty() {
        return Err(Error::Config(
            "no active queries remain for the attack".into(),
        ));
    }
    Ok(())
}

/// Runs the two-phase greedy attack and returns the best state observed.
/// Terminates early when the global evaluation ledger is exhausted.
pub fn greedy_attack(
    ctx: &AttackContext,
    target: &ToolRecord,
    budget: AttackBudget,
) -> Result<AttackState> {
    validate_context(ctx)?;
    if budget.per_position == 0 {
        return Err(Error::Config("per-position budget must be positive".into()));
    }
    let original = CandidateText::from_original(target);
    // The baseline evaluation of the unattacked text sets the acceptance bar;
    // it is not an attack operation and is not charged to the ledger.
    let initial_goal = goal_value(
        &ctx.goal,
        &original,
        ctx.selector,
        ctx.queries,
        ctx.options.threads(),
    )?;
    let mut state = AttackState {
        current_best: original,
        s_max: initial_goal,
        initial_goal,
        evals_used: 0,
        trace: Vec::new(),
        cursor: Cursor {
            phase: Phase::Word,
            sites: Vec::new(),
            site_index: 0,
            next_candidate: 0,
            pending: None,
        },
        converged: false,
        per_position_budget: budget.per_position,
    };
    let mut ledger = BudgetLedger::new(budget.global_evals);
    enter_phase(ctx, &mut state, &mut ledger, Phase::Word)?;
    run(ctx, &mut state, &mut ledger)?;
    debug_assert_eq!(
        state.current_best.tool.parameters, target.parameters,
        "parameters must survive the attack byte-identically"
    );
    Ok(state)
}

/// Continues a terminated attack with a fresh ledger of `extra.global_evals`
/// evaluations, resuming exactly where the cursor stopped. A converged state
/// is returned unchanged.
pub fn resume_attack(
    ctx: &AttackContext,
    mut state: AttackState,
    extra: AttackBudget,
) -> Result<AttackState> {
    validate_context(ctx)?;
    verify_trace_integrity(&state)?;
    if state.converged || extra.global_evals == 0 {
        return Ok(state);
    }
    state.per_position_budget = extra.per_position;
    let mut ledger = BudgetLedger::new(extra.global_evals);
    run(ctx, &mut state, &mut ledger)?;
    Ok(state)
}

/// Accepted-step scores must be strictly increasing and above the baseline.
fn verify_trace_integrity(state: &AttackState) -> Result<()> {
    let mut last = state.initial_goal;
    for record in state.trace.iter().filter(|r| r.accepted) {
        if record.score <= last {
            return Err(Error::Integrity(format!(
                "accepted score {} does not exceed previous best {}",
                record.score, last
            )));
        }
        last = record.score;
    }
    Ok(())
}

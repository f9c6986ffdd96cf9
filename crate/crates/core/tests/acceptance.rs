//! Acceptance gate: one test per criterion, each printing a pass/fail line
//! (visible with `cargo test --test acceptance -- --nocapture`).

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use toolsnare_core::attack::{
    greedy_attack, AttackBudget, AttackContext, AttackOptions, GoalFunction, Phase, TraceRecord,
};
use toolsnare_core::corpus::{
    partition_queries, FieldKind, HardQueryPolicy, QueryRecord, ToolRecord,
};
use toolsnare_core::eval::protocol::{
    run_protocol, sweep, transfer_eval, ProtocolConfig, ProtocolMode, SweepAxis,
};
use toolsnare_core::eval::records::{recount, write_jsonl};
use toolsnare_core::eval::{MetricReport, QuerySetId};
use toolsnare_core::perturb::{
    mine_insertion_words, AttackSpace, CharOpKind, CharTable, Lexicon, OpKind, WordOpKind,
};
use toolsnare_core::selectors::bm25::Bm25Index;
use toolsnare_core::selectors::embedding::{DenseRetriever, HashEmbedder};
use toolsnare_core::selectors::llm::{LlmSelector, PromptTemplate, WordOverlapClient};
use toolsnare_core::selectors::{
    cosine_score, EmbeddingProvider, RankedEntry, Selection, SelectionMode, SelectorView,
    ToolSelector,
};

/// Prints the per-criterion verdict line even when the test panics.
struct Gate {
    name: &'static str,
    started: Instant,
    passed: bool,
}

impl Gate {
    fn open(name: &'static str) -> Self {
        Gate {
            name,
            started: Instant::now(),
            passed: false,
        }
    }

    fn pass(mut self) {
        self.passed = true;
        println!(
            "acceptance {}: PASS ({:.2}s)",
            self.name,
            self.started.elapsed().as_secs_f64()
        );
    }
}

impl Drop for Gate {
    fn drop(&mut self) {
        if !self.passed {
            println!(
                "acceptance {}: FAIL ({:.2}s)",
                self.name,
                self.started.elapsed().as_secs_f64()
            );
        }
    }
}

fn desc_only() -> BTreeSet<FieldKind> {
    [FieldKind::Description].into_iter().collect()
}

fn all_fields() -> BTreeSet<FieldKind> {
    FieldKind::all()
}

/// 25 tools with short (≤ 8 word), lowercase, punctuation-free descriptions.
fn oracle_corpus() -> Vec<ToolRecord> {
    let pool = [
        "find", "weather", "stock", "price", "music", "game", "match", "recipe", "hotel",
        "city", "news", "map", "report", "daily", "local", "fast", "new", "image", "video",
        "text", "show", "list", "place", "query", "data",
    ];
    (0..25)
        .map(|i| {
            let len = 4 + (i % 5); // 4..=8 words
            let words: Vec<&str> = (0..len).map(|j| pool[(i * 3 + j * 7) % pool.len()]).collect();
            common::tool(
                &format!("o{i:02}"),
                &format!("Oracle{i:02}"),
                "oracle",
                &words.join(" "),
            )
        })
        .collect()
}

fn oracle_queries() -> Vec<QueryRecord> {
    [
        "find weather report",
        "stock price news",
        "local music match",
        "fast hotel map",
        "daily image text",
    ]
    .iter()
    .enumerate()
    .map(|(i, text)| common::query(&format!("oq{i}"), text, &[]))
    .collect()
}

fn oracle_space() -> AttackSpace {
    let mut space = AttackSpace::default();
    space.insertion_words = vec!["data".into(), "info".into(), "best".into()];
    space.max_total_edits = 256;
    space
}

/// Independent full ranking: embed the descriptions directly and sort.
fn oracle_rank(
    embedder: &HashEmbedder,
    tools: &[ToolRecord],
    target_id: &str,
    target_desc: &str,
    query: &str,
) -> usize {
    let query_vec = embedder.embed(query).unwrap();
    let mut scored: Vec<(String, f64)> = tools
        .iter()
        .map(|t| {
            let text = if t.tool_id == target_id {
                target_desc
            } else {
                t.description.as_str()
            };
            let doc = embedder.embed(text).unwrap();
            (t.tool_id.clone(), cosine_score(&query_vec, &doc).unwrap())
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.iter().position(|(id, _)| id == target_id).unwrap() + 1
}

fn oracle_goal(
    embedder: &HashEmbedder,
    tools: &[ToolRecord],
    target_id: &str,
    target_desc: &str,
    queries: &[QueryRecord],
) -> f64 {
    let total: f64 = queries
        .iter()
        .map(|q| 1.0 / oracle_rank(embedder, tools, target_id, target_desc, &q.text) as f64)
        .sum();
    total / queries.len() as f64
}

fn length_ok(candidate: &str, original_len: usize, ratio: f64) -> bool {
    candidate.chars().count() as f64 >= ratio * original_len as f64
}

/// Every legal single word-op variant at `index`, by direct string surgery
/// over the single-space lowercase fixture texts.
fn enumerate_word_variants(
    desc: &str,
    index: usize,
    space: &AttackSpace,
    original_len: usize,
) -> Vec<String> {
    let words: Vec<&str> = desc.split(' ').collect();
    let Some(&word) = words.get(index) else {
        return Vec::new();
    };
    let mut variants = Vec::new();
    for synonym in space.lexicon.synonyms(word) {
        if synonym != word {
            let mut next = words.clone();
            next[index] = synonym;
            variants.push(next.join(" "));
        }
    }
    {
        let mut next = words.clone();
        next.remove(index);
        variants.push(next.join(" "));
    }
    for insert in &space.insertion_words {
        let mut next = words.clone();
        next.insert(index, insert);
        variants.push(next.join(" "));
    }
    variants
        .into_iter()
        .filter(|v| length_ok(v, original_len, space.min_length_ratio))
        .collect()
}

/// Every legal single char-op variant at `index`.
fn enumerate_char_variants(
    desc: &str,
    index: usize,
    space: &AttackSpace,
    original_len: usize,
) -> Vec<String> {
    let chars: Vec<char> = desc.chars().collect();
    let Some(&current) = chars.get(index) else {
        return Vec::new();
    };
    let lower = current.to_lowercase().next().unwrap_or(current);
    let mut variants = Vec::new();
    for &neighbor in space.keyboard.lookup(lower) {
        let mut next = chars.clone();
        next.insert(index + 1, neighbor);
        variants.push(next.into_iter().collect::<String>());
    }
    {
        let mut next = chars.clone();
        next.remove(index);
        variants.push(next.into_iter().collect::<String>());
    }
    if index + 1 < chars.len() && chars[index] != chars[index + 1] {
        let mut next = chars.clone();
        next.swap(index, index + 1);
        variants.push(next.into_iter().collect::<String>());
    }
    for &neighbor in space.keyboard.lookup(lower) {
        if neighbor != current {
            let mut next = chars.clone();
            next[index] = neighbor;
            variants.push(next.into_iter().collect::<String>());
        }
    }
    for &confusable in space.homoglyphs.lookup(current) {
        if confusable != current {
            let mut next = chars.clone();
            next[index] = confusable;
            variants.push(next.into_iter().collect::<String>());
        }
    }
    variants
        .into_iter()
        .filter(|v| length_ok(v, original_len, space.min_length_ratio))
        .collect()
}

/// Applies a traced op to the replayed description, independently of the
/// library's segment surgery.
fn replay_op(desc: &str, record: &TraceRecord) -> String {
    match record.op.kind {
        OpKind::Word(kind) => {
            let mut words: Vec<String> = desc.split(' ').map(str::to_string).collect();
            match kind {
                WordOpKind::SynonymReplace => words[record.op.locus] = record.op.payload.clone(),
                WordOpKind::WordDelete => {
                    words.remove(record.op.locus);
                }
                WordOpKind::WordInsert => words.insert(record.op.locus, record.op.payload.clone()),
            }
            words.join(" ")
        }
        OpKind::Char(kind) => {
            let mut chars: Vec<char> = desc.chars().collect();
            match kind {
                CharOpKind::CharInsert => {
                    for (i, ch) in record.op.payload.chars().enumerate() {
                        chars.insert(record.op.locus + i, ch);
                    }
                }
                CharOpKind::CharDelete => {
                    chars.remove(record.op.locus);
                }
                CharOpKind::CharSwapAdjacent => chars.swap(record.op.locus, record.op.locus + 1),
                CharOpKind::CharSubstituteKeyboard | CharOpKind::CharSubstituteHomoglyph => {
                    chars[record.op.locus] = record.op.payload.chars().next().unwrap();
                }
            }
            chars.into_iter().collect()
        }
    }
}

fn site_index_of(record: &TraceRecord) -> usize {
    match record.op.kind {
        OpKind::Char(CharOpKind::CharInsert) => record.op.locus - 1,
        _ => record.op.locus,
    }
}

fn sorted(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values
}

/// Criterion 1 — at every position the accepted candidate's goal equals the
/// exhaustive maximum over all legal single-op candidates at that position.
#[test]
fn acceptance_01_greedy_matches_exhaustive_oracle() {
    let gate = Gate::open("01 greedy-vs-oracle");
    let tools = oracle_corpus();
    let queries = oracle_queries();
    let space = oracle_space();
    let embedder = HashEmbedder::default();
    let retriever =
        DenseRetriever::build(&tools, &desc_only(), Arc::new(HashEmbedder::default())).unwrap();

    let mut violations = 0usize;
    for target in &tools {
        let ctx = AttackContext {
            selector: &retriever,
            goal: GoalFunction::RetrieverRank,
            space: &space,
            queries: &queries,
            options: AttackOptions::default(),
        };
        let state = greedy_attack(&ctx, target, AttackBudget::new(10_000, 1_000_000)).unwrap();
        assert!(state.converged, "oracle-size budgets must converge");

        // Replay the trace group by group against the exhaustive enumerator.
        let mut desc = target.description.clone();
        let original_len = desc.chars().count();
        let mut s_max = oracle_goal(&embedder, &tools, &target.tool_id, &desc, &queries);
        assert!((s_max - state.initial_goal).abs() < 1e-12);
        let mut i = 0;
        while i < state.trace.len() {
            let phase = state.trace[i].phase;
            let site = state.trace[i].site;
            let mut j = i;
            while j < state.trace.len()
                && state.trace[j].phase == phase
                && state.trace[j].site == site
            {
                j += 1;
            }
            let group = &state.trace[i..j];
            let position = site_index_of(&group[0]);
            let variants = match phase {
                Phase::Word => enumerate_word_variants(&desc, position, &space, original_len),
                Phase::Char => enumerate_char_variants(&desc, position, &space, original_len),
            };
            let oracle_scores: Vec<f64> = variants
                .iter()
                .map(|v| oracle_goal(&embedder, &tools, &target.tool_id, v, &queries))
                .collect();
            let trace_scores: Vec<f64> = group.iter().map(|r| r.score).collect();
            assert_eq!(
                trace_scores.len(),
                oracle_scores.len(),
                "candidate count mismatch at {phase:?} site {position} of {}",
                target.tool_id
            );
            for (a, b) in sorted(trace_scores.clone())
                .iter()
                .zip(sorted(oracle_scores.clone()))
            {
                if (a - b).abs() > 1e-12 {
                    violations += 1;
                }
            }
            let oracle_max = oracle_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let accepted: Vec<&TraceRecord> = group.iter().filter(|r| r.accepted).collect();
            match accepted.as_slice() {
                [record] => {
                    if (record.score - oracle_max).abs() > 1e-12 || record.score <= s_max {
                        violations += 1;
                    }
                    desc = replay_op(&desc, record);
                    s_max = record.score;
                }
                [] => {
                    if oracle_max > s_max + 1e-12 {
                        violations += 1;
                    }
                }
                _ => violations += 1,
            }
            i = j;
        }
        assert_eq!(
            desc, state.current_best.tool.description,
            "replayed text diverged for {}",
            target.tool_id
        );
    }
    assert_eq!(violations, 0, "greedy/oracle divergences found");
    gate.pass();
}

/// Criterion 2 — monotone accepted scores, final ≥ initial, ledger soundness,
/// and ≤ B evaluations per position, over 100 seeded runs.
#[test]
fn acceptance_02_monotonicity_and_budget_properties() {
    let gate = Gate::open("02 monotonicity-and-budgets");
    let tools = oracle_corpus();
    let queries = oracle_queries();
    let bm25 = Bm25Index::build(&tools, &desc_only(), 1.2, 0.75).unwrap();
    let dense =
        DenseRetriever::build(&tools, &desc_only(), Arc::new(HashEmbedder::default())).unwrap();

    for run in 0..100u64 {
        let target = &tools[(run as usize) % tools.len()];
        let per_position = 3 + (run as usize) % 8;
        let global = 40 + (run * 7) % 160;
        let selector: &dyn ToolSelector = if run % 2 == 0 { &bm25 } else { &dense };
        let space = oracle_space();
        let ctx = AttackContext {
            selector,
            goal: GoalFunction::RetrieverRank,
            space: &space,
            queries: &queries,
            options: AttackOptions::default(),
        };
        let state = greedy_attack(&ctx, target, AttackBudget::new(per_position, global)).unwrap();

        assert!(state.evals_used <= global, "run {run}: ledger overdrawn");
        assert!(state.s_max >= state.initial_goal, "run {run}: goal regressed");
        let mut last = state.initial_goal;
        for record in state.trace.iter().filter(|r| r.accepted) {
            assert!(record.score > last, "run {run}: accepted scores not strictly increasing");
            last = record.score;
        }
        let mut per_site: BTreeMap<(u8, usize), usize> = BTreeMap::new();
        for record in &state.trace {
            let phase = match record.phase {
                Phase::Word => 0u8,
                Phase::Char => 1u8,
            };
            *per_site.entry((phase, record.site)).or_insert(0) += 1;
        }
        assert!(
            per_site.values().all(|&n| n <= per_position),
            "run {run}: position evaluated more than B candidates"
        );
        // Phase order: no char record before the last word record.
        let last_word = state
            .trace
            .iter()
            .rposition(|r| r.phase == Phase::Word)
            .unwrap_or(0);
        assert!(
            state.trace[..last_word].iter().all(|r| r.phase == Phase::Word),
            "run {run}: phase order violated"
        );
    }
    gate.pass();
}

/// Criterion 3 — BM25 scores match an independent hand-rolled Okapi
/// computation to 1e-9 on 20 (query, document) pairs.
#[test]
fn acceptance_03_bm25_numeric_fidelity() {
    let gate = Gate::open("03 bm25-fidelity");
    let tools = vec![
        common::tool("d0", "D0", "x", "the quick brown fox jumps over fences"),
        common::tool("d1", "D1", "x", "lazy dogs sleep all day long"),
        common::tool("d2", "D2", "x", "quick weather forecast for the day"),
        common::tool("d3", "D3", "x", "fox hunting season forecast report"),
        common::tool("d4", "D4", "x", "a dog a fox and a quick update"),
    ];
    let (k1, b) = (1.2, 0.75);
    let index = Bm25Index::build(&tools, &desc_only(), k1, b).unwrap();
    let view = index.view(None).unwrap();

    let docs: Vec<Vec<String>> = tools
        .iter()
        .map(|t| toolsnare_core::perturb::terms(&t.description))
        .collect();
    let hand_rolled = |query: &str, doc: usize| -> f64 {
        let n = docs.len() as f64;
        let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
        let dl = docs[doc].len() as f64;
        let mut score = 0.0;
        for term in toolsnare_core::perturb::terms(query) {
            let tf = docs[doc].iter().filter(|t| **t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = docs.iter().filter(|d| d.contains(&term)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        score
    };

    let queries = [
        "quick fox forecast",
        "lazy day dogs",
        "the weather report",
        "fox day update",
    ];
    let mut pairs = 0;
    for query in queries {
        for (doc_index, tool) in tools.iter().enumerate() {
            let got = view.score(query, &tool.tool_id).unwrap();
            let want = hand_rolled(query, doc_index);
            assert!(
                (got - want).abs() < 1e-9,
                "pair ({query:?}, {}) diverged: {got} vs {want}",
                tool.tool_id
            );
            pairs += 1;
        }
    }
    assert_eq!(pairs, 20);
    gate.pass();
}

fn mined_space(queries: &[QueryRecord], accessible: &[String]) -> AttackSpace {
    let texts: Vec<&str> = queries
        .iter()
        .filter(|q| accessible.contains(&q.query_id))
        .map(|q| q.text.as_str())
        .collect();
    let mut space = AttackSpace::default();
    space.insertion_words = mine_insertion_words(texts.iter().copied(), 40);
    space
}

fn conditional_config() -> ProtocolConfig {
    ProtocolConfig {
        mode: ProtocolMode::Conditional,
        target_tool_id: "w00".into(),
        access_fraction: 0.2,
        seed: 17,
        hard_query_policy: Some(HardQueryPolicy::BottomFraction { fraction: 0.25 }),
        goal: GoalFunction::RetrieverRank,
        budget: AttackBudget::new(50, 5000),
        ks: vec![1, 3, 5],
        options: AttackOptions::default(),
    }
}

/// Criterion 4 — conditional attack on the synthetic cohort corpus: BM25,
/// budget 5000, after Hit@1 ≥ 2× before and after Hit@5 ≥ 0.80 on cohort
/// queries.
#[test]
fn acceptance_04_conditional_attack_direction() {
    let gate = Gate::open("04 conditional-reproduction");
    let started = Instant::now();
    let tools = common::retriever_corpus();
    let queries = common::retriever_queries();
    let index = Bm25Index::build(&tools, &all_fields(), 1.2, 0.75).unwrap();
    let cfg = conditional_config();
    let partition = partition_queries(&queries, cfg.access_fraction, cfg.seed).unwrap();
    let space = mined_space(&queries, &partition.attack_accessible);

    let run = run_protocol(&cfg, &tools, &queries, &index, &space).unwrap();
    let before1 = run.result.before.hit_at[&1];
    let after1 = run.result.after.hit_at[&1];
    let after5 = run.result.after.hit_at[&5];
    assert!(before1 > 0.0, "fixture must give the target a nonzero start");
    assert!(
        after1 >= 2.0 * before1,
        "hit@1 {after1} is below 2x the before value {before1}"
    );
    assert!(after5 >= 0.80, "hit@5 {after5} below the 0.80 bar");
    assert!(run.state.evals_used <= 5000);
    assert!(started.elapsed().as_secs() < 300, "conditional run exceeded 5 minutes");
    gate.pass();
}

/// Criterion 5 — indiscriminate attack over all 200 queries, before Hit@5 <
/// 0.05, strictly improved after, on both BM25 and the local embedder.
#[test]
fn acceptance_05_indiscriminate_attack_direction() {
    let gate = Gate::open("05 indiscriminate-reproduction");
    let started = Instant::now();
    let tools = common::retriever_corpus();
    let queries = common::retriever_queries();
    let partition = partition_queries(&queries, 0.2, 17).unwrap();
    let space = mined_space(&queries, &partition.attack_accessible);

    let bm25 = Bm25Index::build(&tools, &all_fields(), 1.2, 0.75).unwrap();
    let dense =
        DenseRetriever::build(&tools, &all_fields(), Arc::new(HashEmbedder::default())).unwrap();
    let selectors: [(&str, &dyn ToolSelector); 2] = [("bm25", &bm25), ("dense", &dense)];

    for (label, selector) in selectors {
        let cfg = ProtocolConfig {
            mode: ProtocolMode::Indiscriminate,
            target_tool_id: "zz01".into(),
            access_fraction: 0.2,
            seed: 17,
            hard_query_policy: Some(HardQueryPolicy::BottomFraction { fraction: 0.25 }),
            goal: GoalFunction::RetrieverRank,
            budget: AttackBudget::new(50, 5000),
            ks: vec![1, 3, 5],
            options: AttackOptions::default(),
        };
        let run = run_protocol(&cfg, &tools, &queries, selector, &space).unwrap();
        let before5 = run.result.before.hit_at[&5];
        let after5 = run.result.after.hit_at[&5];
        assert_eq!(run.result.before.n_queries, 200);
        assert!(before5 < 0.05, "[{label}] fixture target starts too visible: {before5}");
        assert!(after5 > before5, "[{label}] no strict improvement: {before5} -> {after5}");
    }
    assert!(started.elapsed().as_secs() < 300, "indiscriminate runs exceeded 5 minutes");
    gate.pass();
}

/// Criterion 6 — LLM path with the deterministic word-overlap mock:
/// P_use < 0.2 before, > 0.8 after, budget 2000.
#[test]
fn acceptance_06_llm_selection_attack() {
    let gate = Gate::open("06 llm-reproduction");
    let started = Instant::now();
    let tools = common::llm_corpus();
    let queries = common::llm_queries();
    let selector = LlmSelector::new(
        Arc::new(WordOverlapClient::default()),
        PromptTemplate::default(),
        &tools,
        7,
        64,
    )
    .unwrap();
    let partition = partition_queries(&queries, 0.25, 5).unwrap();
    let space = mined_space(&queries, &partition.attack_accessible);
    let cfg = ProtocolConfig {
        mode: ProtocolMode::Llm,
        target_tool_id: "t_caption".into(),
        access_fraction: 0.25,
        seed: 5,
        hard_query_policy: None,
        goal: GoalFunction::LlmIndicator { max_tools: 7 },
        budget: AttackBudget::new(50, 2000),
        ks: vec![1, 3, 5],
        options: AttackOptions::default(),
    };
    let run = run_protocol(&cfg, &tools, &queries, &selector, &space).unwrap();
    let before = run.result.before.p_use.expect("llm mode reports p_use");
    let after = run.result.after.p_use.expect("llm mode reports p_use");
    assert!(before < 0.2, "p_use before too high: {before}");
    assert!(after > 0.8, "p_use after too low: {after}");
    assert!(run.state.evals_used <= 2000);
    assert!(started.elapsed().as_secs() < 120, "llm run exceeded 2 minutes");
    gate.pass();
}

fn assert_metric_laws(report: &MetricReport) {
    let ordered: Vec<f64> = report.hit_at.values().copied().collect();
    for window in ordered.windows(2) {
        assert!(window[0] <= window[1] + 1e-15, "hit@k not monotone: {report:?}");
    }
    for value in report.metric_values().values() {
        assert!((0.0..=1.0).contains(value), "ratio out of range: {report:?}");
    }
}

/// Criterion 7 — metric laws on every report plus recount-oracle equality on
/// persisted per-query records.
#[test]
fn acceptance_07_metric_laws_and_recount() {
    let gate = Gate::open("07 metric-laws-recount");
    let tools = common::retriever_corpus();
    let queries = common::retriever_queries();
    let index = Bm25Index::build(&tools, &all_fields(), 1.2, 0.75).unwrap();
    let mut cfg = conditional_config();
    cfg.budget = AttackBudget::new(20, 400);
    let partition = partition_queries(&queries, cfg.access_fraction, cfg.seed).unwrap();
    let space = mined_space(&queries, &partition.attack_accessible);
    let run = run_protocol(&cfg, &tools, &queries, &index, &space).unwrap();

    assert_metric_laws(&run.result.before);
    assert_metric_laws(&run.result.after);
    if let (Some(hb), Some(ha)) = (&run.result.held_out_before, &run.result.held_out_after) {
        assert_metric_laws(hb);
        assert_metric_laws(ha);
    }

    // Recount oracle: persist, reload, re-aggregate, compare bit-exactly.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("per_query.jsonl");
    write_jsonl(&path, &run.outcomes).unwrap();
    let reloaded = toolsnare_core::eval::records::read_jsonl(&path).unwrap();
    assert_eq!(reloaded.len(), run.outcomes.len());
    let (before, after) = recount(&reloaded, "bm25", &cfg.ks, QuerySetId::All);
    for (k, value) in &run.result.before.hit_at {
        assert_eq!(value.to_bits(), before.hit_at[k].to_bits(), "before hit@{k} recount");
    }
    for (k, value) in &run.result.after.hit_at {
        assert_eq!(value.to_bits(), after.hit_at[k].to_bits(), "after hit@{k} recount");
    }
    let (held_before, held_after) = recount(&reloaded, "bm25", &cfg.ks, QuerySetId::HeldOut);
    if let (Some(hb), Some(ha)) = (&run.result.held_out_before, &run.result.held_out_after) {
        assert_eq!(hb.hit_at[&5].to_bits(), held_before.hit_at[&5].to_bits());
        assert_eq!(ha.hit_at[&5].to_bits(), held_after.hit_at[&5].to_bits());
    }
    gate.pass();
}

/// Criterion 8 — transfer diagonal identity (bit-exact under deterministic
/// selectors) and full matrices across BM25, the local embedder, and the
/// mock LLM.
#[test]
fn acceptance_08_transfer_diagonal_identity() {
    let gate = Gate::open("08 transfer-diagonal");
    let tools = common::retriever_corpus();
    let queries = common::retriever_queries();
    let partition = partition_queries(&queries, 0.2, 17).unwrap();
    let space = mined_space(&queries, &partition.attack_accessible);

    let bm25 = Bm25Index::build(&tools, &all_fields(), 1.2, 0.75).unwrap();
    let dense =
        DenseRetriever::build(&tools, &all_fields(), Arc::new(HashEmbedder::default())).unwrap();
    let mock = LlmSelector::new(
        Arc::new(WordOverlapClient::default()),
        PromptTemplate::default(),
        &tools,
        5,
        64,
    )
    .unwrap();

    let retriever_sources: [(&str, &dyn ToolSelector); 2] = [("bm25", &bm25), ("dense", &dense)];
    for (label, source) in retriever_sources {
        let cfg = ProtocolConfig {
            mode: ProtocolMode::Indiscriminate,
            target_tool_id: "zz01".into(),
            access_fraction: 0.2,
            seed: 17,
            hard_query_policy: Some(HardQueryPolicy::BottomFraction { fraction: 0.25 }),
            goal: GoalFunction::RetrieverRank,
            budget: AttackBudget::new(20, 600),
            ks: vec![1, 3, 5],
            options: AttackOptions::default(),
        };
        let run = run_protocol(&cfg, &tools, &queries, source, &space).unwrap();
        let targets: Vec<(String, &dyn ToolSelector)> = vec![
            ("bm25".into(), &bm25),
            ("dense".into(), &dense),
            ("llm".into(), &mock),
        ];
        let (matrix, cell_outcomes) = transfer_eval(
            &run.state.current_best,
            label,
            &targets,
            &queries,
            &cfg.ks,
            5,
        )
        .unwrap();
        assert_eq!(matrix.rows.len(), 3, "matrix must emit every cell");
        let diagonal = matrix
            .rows
            .iter()
            .find(|r| r.target_model == label)
            .expect("diagonal row present");
        for (k, value) in &run.result.after.hit_at {
            assert_eq!(
                value.to_bits(),
                diagonal.after.hit_at[k].to_bits(),
                "[{label}] diagonal hit@{k} not bit-exact"
            );
        }
        // Off-diagonal cells must carry reports regardless of direction, and
        // every cell must survive a recount over the persisted outcomes.
        for row in &matrix.rows {
            assert!(row.before.n_queries == 200 && row.after.n_queries == 200);
            let (rb, ra) = recount(&cell_outcomes, &row.target_model, &cfg.ks, QuerySetId::All);
            for (k, value) in &row.before.hit_at {
                assert_eq!(value.to_bits(), rb.hit_at[k].to_bits());
            }
            for (k, value) in &row.after.hit_at {
                assert_eq!(value.to_bits(), ra.hit_at[k].to_bits());
            }
            if let (Some(p), Some(rp)) = (row.after.p_use, ra.p_use) {
                assert_eq!(p.to_bits(), rp.to_bits());
            }
        }
    }

    // LLM source on the module corpus.
    let llm_tools = common::llm_corpus();
    let llm_queries = common::llm_queries();
    let llm_selector = LlmSelector::new(
        Arc::new(WordOverlapClient::default()),
        PromptTemplate::default(),
        &llm_tools,
        7,
        64,
    )
    .unwrap();
    let llm_partition = partition_queries(&llm_queries, 0.25, 5).unwrap();
    let llm_space = mined_space(&llm_queries, &llm_partition.attack_accessible);
    let cfg = ProtocolConfig {
        mode: ProtocolMode::Llm,
        target_tool_id: "t_caption".into(),
        access_fraction: 0.25,
        seed: 5,
        hard_query_policy: None,
        goal: GoalFunction::LlmIndicator { max_tools: 7 },
        budget: AttackBudget::new(20, 600),
        ks: vec![1, 3, 5],
        options: AttackOptions::default(),
    };
    let run = run_protocol(&cfg, &llm_tools, &llm_queries, &llm_selector, &llm_space).unwrap();
    let llm_bm25 = Bm25Index::build(&llm_tools, &all_fields(), 1.2, 0.75).unwrap();
    let llm_dense =
        DenseRetriever::build(&llm_tools, &all_fields(), Arc::new(HashEmbedder::default()))
            .unwrap();
    let targets: Vec<(String, &dyn ToolSelector)> = vec![
        ("llm".into(), &llm_selector),
        ("bm25".into(), &llm_bm25),
        ("dense".into(), &llm_dense),
    ];
    let (matrix, _) =
        transfer_eval(&run.state.current_best, "llm", &targets, &llm_queries, &cfg.ks, 7).unwrap();
    assert_eq!(matrix.rows.len(), 3);
    let diagonal = &matrix.rows[0];
    assert_eq!(
        run.result.after.p_use.unwrap().to_bits(),
        diagonal.after.p_use.unwrap().to_bits(),
        "llm diagonal p_use not bit-exact"
    );
    gate.pass();
}

/// Scripted retriever for the overfitting fixture: the target's rank depends
/// only on how many times "boost" appears in its description, improving
/// forever on train-marked queries while peaking at two boosts on
/// hold-marked ones.
struct OverfitSelector {
    ids: Vec<String>,
    target: String,
}

struct OverfitView<'a> {
    parent: &'a OverfitSelector,
    boosts: usize,
}

impl OverfitView<'_> {
    fn rank_for(&self, query: &str) -> usize {
        let n = self.parent.ids.len();
        let rank = if query.contains("holdmark") {
            1 + (2_i64 - self.boosts as i64).unsigned_abs() as usize
        } else {
            10usize.saturating_sub(self.boosts).max(1)
        };
        rank.min(n)
    }
}

impl SelectorView for OverfitView<'_> {
    fn select(&self, query: &str, k: usize) -> toolsnare_core::Result<Selection> {
        let mut entries = self.rank_all(query)?;
        entries.truncate(k);
        Ok(Selection::Ranked { entries, k })
    }

    fn rank_all(&self, query: &str) -> toolsnare_core::Result<Vec<RankedEntry>> {
        let rank = self.rank_for(query);
        let fillers: Vec<&String> = self
            .parent
            .ids
            .iter()
            .filter(|id| **id != self.parent.target)
            .collect();
        let n = self.parent.ids.len();
        let mut entries = Vec::with_capacity(n);
        let mut filler_iter = fillers.into_iter();
        for position in 1..=n {
            let tool_id = if position == rank {
                self.parent.target.clone()
            } else {
                filler_iter.next().expect("enough fillers").clone()
            };
            entries.push(RankedEntry {
                tool_id,
                score: (n - position) as f64,
            });
        }
        Ok(entries)
    }

    fn score(&self, query: &str, tool_id: &str) -> toolsnare_core::Result<f64> {
        let ranking = self.rank_all(query)?;
        Ok(ranking
            .iter()
            .find(|e| e.tool_id == tool_id)
            .map(|e| e.score)
            .unwrap_or(0.0))
    }
}

impl ToolSelector for OverfitSelector {
    fn name(&self) -> &str {
        "overfit-scripted"
    }

    fn mode(&self) -> SelectionMode {
        SelectionMode::Ranked
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "overfit-scripted" })
    }

    fn view<'a>(
        &'a self,
        swap: Option<&ToolRecord>,
    ) -> toolsnare_core::Result<Box<dyn SelectorView + 'a>> {
        let boosts = swap
            .map(|t| {
                toolsnare_core::perturb::terms(&t.description)
                    .iter()
                    .filter(|w| *w == "boost")
                    .count()
            })
            .unwrap_or(0);
        Ok(Box::new(OverfitView {
            parent: self,
            boosts,
        }))
    }
}

/// Criterion 9 — sweep integrity: the zero-budget point equals the unattacked
/// baseline, the splits are disjoint, and peak detection equals a brute-force
/// argmax over the recorded points on a fixture shaped to overfit.
#[test]
fn acceptance_09_sweep_integrity_and_overfitting_peak() {
    let gate = Gate::open("09 sweep-integrity");
    let ids: Vec<String> = (0..12).map(|i| format!("t{i:02}")).collect();
    let mut tools: Vec<ToolRecord> = ids
        .iter()
        .map(|id| common::tool(id, id, "x", "alpha beta"))
        .collect();
    tools[11] = common::tool("t11", "t11", "x", "alpha beta");
    let target_id = "t11";

    // Texts depend on the (deterministic) partition: train-marked queries are
    // exactly the accessible ones.
    let placeholder: Vec<QueryRecord> = (0..8)
        .map(|i| common::query(&format!("s{i}"), "placeholder", &[]))
        .collect();
    let partition = partition_queries(&placeholder, 0.5, 9).unwrap();
    let accessible: BTreeSet<&String> = partition.attack_accessible.iter().collect();
    let queries: Vec<QueryRecord> = (0..8)
        .map(|i| {
            let id = format!("s{i}");
            let text = if accessible.contains(&&id) {
                format!("trainmark probe {i}")
            } else {
                format!("holdmark probe {i}")
            };
            common::query(&id, &text, &[])
        })
        .collect();

    let selector = OverfitSelector {
        ids: ids.clone(),
        target: target_id.to_string(),
    };
    let mut space = AttackSpace::default();
    space.lexicon = Arc::new(Lexicon::from_tsv("", "empty").unwrap());
    space.word_ops = [WordOpKind::WordInsert].into_iter().collect();
    space.char_ops = BTreeSet::new();
    space.insertion_words = vec!["boost".into()];
    space.max_total_edits = 64;

    let cfg = ProtocolConfig {
        mode: ProtocolMode::Indiscriminate,
        target_tool_id: target_id.into(),
        access_fraction: 0.5,
        seed: 9,
        hard_query_policy: None,
        goal: GoalFunction::RetrieverRank,
        budget: AttackBudget::new(4, 1000),
        ks: vec![1],
        options: AttackOptions::default(),
    };
    let values = [0u64, 1, 2, 3, 5, 8];
    let result = sweep(
        &cfg,
        SweepAxis::AttackBudget,
        &values,
        &tools,
        &queries,
        &selector,
        &space,
    )
    .unwrap();

    // Zero-budget identity, bit-exact.
    assert_eq!(result.points[0].value, 0);
    assert_eq!(
        result.points[0].train.hit_at[&1].to_bits(),
        result.baseline_train.hit_at[&1].to_bits()
    );
    assert_eq!(
        result.points[0].held_out.hit_at[&1].to_bits(),
        result.baseline_held_out.hit_at[&1].to_bits()
    );

    // Disjoint splits.
    let acc: BTreeSet<_> = partition.attack_accessible.iter().collect();
    let held: BTreeSet<_> = partition.held_out.iter().collect();
    assert!(acc.is_disjoint(&held));

    // The fixture must actually produce a peak-then-decline held-out curve,
    // and the detected peak must equal the brute-force argmax.
    let held_curve: Vec<f64> = result.points.iter().map(|p| p.held_out.hit_at[&1]).collect();
    let brute_force_peak = held_curve
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.total_cmp(b).then_with(|| ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap();
    assert_eq!(result.peak_held_out_index, brute_force_peak);
    assert_eq!(result.peak_metric, "hit@1");
    let peak = result.peak_held_out_index;
    assert!(peak > 0 && peak + 1 < held_curve.len(), "peak must be interior");
    assert!(held_curve[peak] > held_curve[0]);
    assert!(held_curve[peak] > *held_curve.last().unwrap());
    gate.pass();
}

/// Criterion 10 — rerunning any scenario with the same seed yields
/// byte-identical summaries and record streams.
#[test]
fn acceptance_10_end_to_end_determinism() {
    let gate = Gate::open("10 determinism");
    let started = Instant::now();
    let tools = common::retriever_corpus();
    let queries = common::retriever_queries();
    let index = Bm25Index::build(&tools, &all_fields(), 1.2, 0.75).unwrap();
    let mut cfg = conditional_config();
    cfg.budget = AttackBudget::new(30, 1200);
    let partition = partition_queries(&queries, cfg.access_fraction, cfg.seed).unwrap();
    let space = mined_space(&queries, &partition.attack_accessible);

    let run_once = || {
        let run = run_protocol(&cfg, &tools, &queries, &index, &space).unwrap();
        (
            serde_json::to_string(&run.result).unwrap(),
            serde_json::to_string(&run.outcomes).unwrap(),
            serde_json::to_string(&run.state.trace).unwrap(),
        )
    };
    let first = run_once();
    let second = run_once();
    assert_eq!(first.0, second.0, "summaries diverged between reruns");
    assert_eq!(first.1, second.1, "record streams diverged between reruns");
    assert_eq!(first.2, second.2, "attack traces diverged between reruns");

    // The LLM scenario as well.
    let llm_tools = common::llm_corpus();
    let llm_queries = common::llm_queries();
    let selector = LlmSelector::new(
        Arc::new(WordOverlapClient::default()),
        PromptTemplate::default(),
        &llm_tools,
        7,
        64,
    )
    .unwrap();
    let llm_partition = partition_queries(&llm_queries, 0.25, 5).unwrap();
    let llm_space = mined_space(&llm_queries, &llm_partition.attack_accessible);
    let llm_cfg = ProtocolConfig {
        mode: ProtocolMode::Llm,
        target_tool_id: "t_caption".into(),
        access_fraction: 0.25,
        seed: 5,
        hard_query_policy: None,
        goal: GoalFunction::LlmIndicator { max_tools: 7 },
        budget: AttackBudget::new(30, 800),
        ks: vec![1, 3, 5],
        options: AttackOptions::default(),
    };
    let llm_run = || {
        let run = run_protocol(&llm_cfg, &llm_tools, &llm_queries, &selector, &llm_space).unwrap();
        serde_json::to_string(&run.result).unwrap()
    };
    assert_eq!(llm_run(), llm_run(), "llm summaries diverged between reruns");
    assert!(started.elapsed().as_secs() < 300);
    gate.pass();
}

/// Keyboard/homoglyph tables feed the oracle enumerator above; pin their
/// shape so silent table edits surface here rather than as oracle noise.
#[test]
fn oracle_tables_are_single_characters() {
    for table in [CharTable::bundled_keyboard(), CharTable::bundled_homoglyphs()] {
        for ch in ['a', 'e', 'o', 's'] {
            for &value in table.lookup(ch) {
                assert_eq!(value.to_string().chars().count(), 1);
            }
        }
    }
}

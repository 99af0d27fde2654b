import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from bdtr.corpus import Corpus, Document, QASample
from bdtr.engine import (
    EngineConfig,
    PoolEntry,
    ScoredPool,
    fuse_retrievals,
    initialize_pool,
    iterate_dual,
    promote_bridge,
    run_baseline,
    run_bdtr,
    run_query,
    statistical_cutoff,
    union_retrieved,
)
from bdtr.gateway import ScriptedGateway
from bdtr.generation import ThoughtPair, VerifierSelection
from bdtr.retrieval import ScoredDoc, build_index
from scenarios import BRIDGE_ANSWER, BRIDGE_DOC, DIPPER_DOC, TableRetriever, bridge_script


def pool_of(scores):
    pool = ScoredPool({d: PoolEntry(s, 0, frozenset({"initial"})) for d, s in scores.items()})
    pool.resort()
    return pool


# -- initialize / iterate ----------------------------------------------------


def test_initialize_pool():
    pool = initialize_pool(TableRetriever({"Q": [("d1", 0.9), ("d2", 0.4)]}), "Q", 20)
    assert pool.ranking == ["d1", "d2"]
    assert pool.entries["d1"] == PoolEntry(0.9, 0, frozenset({"initial"}))


def test_initialize_empty():
    pool = initialize_pool(TableRetriever({}), "Q", 20)
    assert len(pool) == 0 and pool.ranking == []


def test_iterate_takes_max_of_three():
    r = TableRetriever({"Q": [("d", 0.4)], "fast": [("d", 0.7)], "slow": [("d", 0.5)]})
    pool = iterate_dual(initialize_pool(r, "Q", 5), ThoughtPair("fast", "slow"), r, 1, 5)
    assert pool.score("d") == 0.7
    assert pool.entries["d"].provenance == {"initial", "fast", "slow"}
    assert pool.entries["d"].first_seen_round == 0


def test_iterate_new_doc_from_slow():
    r = TableRetriever({"Q": [("a", 1.0)], "slow": [("n", 0.3)]})
    pool = iterate_dual(initialize_pool(r, "Q", 5), ThoughtPair("fast", "slow"), r, 2, 5)
    assert pool.entries["n"] == PoolEntry(0.3, 2, frozenset({"slow"}))
    assert pool.ranking == ["a", "n"]


def test_iterate_rejects_round_zero():
    r = TableRetriever({})
    with pytest.raises(ValueError):
        iterate_dual(ScoredPool(), ThoughtPair("a", "b"), r, 0, 5)


EIGHT = {
    "e1": "river bank money loan",
    "e2": "river water fish",
    "e3": "bank loan interest rate rate",
    "e4": "fish market price",
    "e5": "money market price price",
    "e6": "water supply river river river",
    "e7": "interest group",
    "e8": "loan shark fish",
}


def test_fusion_matches_bruteforce_on_eight_docs():
    index = build_index(Corpus.from_documents(Document(i, "", t) for i, t in EIGHT.items()))
    question, fast, slow = "river bank", "loan interest", "fish market price"
    k = 4
    pool = initialize_pool(index, question, k)
    pool = iterate_dual(pool, ThoughtPair(fast, slow), index, 1, k)

    docs = list(EIGHT.items())
    lists = [oracles.ranked(oracles.bm25_scores(docs, q), k) for q in (question, fast, slow)]
    expected = oracles.fuse(lists)
    assert set(pool.entries) == set(expected)
    for d, s in expected.items():
        assert pool.score(d) == pytest.approx(s, abs=1e-9)
    assert pool.ranking == [d for d, _ in oracles.ranked(expected)]


# -- promotion ---------------------------------------------------------------


def test_promote_by_rule():
    pool = pool_of({"a": 5, "b": 4, "c": 3, "d": 2, "e": 1})
    out, promoted = promote_bridge(pool, VerifierSelection((4, 2), ""), pool.ranking)
    assert out.ranking == ["d", "b", "a", "c", "e"]
    assert promoted == ["d", "b"]
    assert out.scores() == pool.scores()


def test_promote_empty_and_fixed_point():
    pool = pool_of({"a": 5, "b": 4, "c": 3})
    assert promote_bridge(pool, VerifierSelection((), ""), pool.ranking)[0].ranking == pool.ranking
    assert promote_bridge(pool, [1], pool.ranking)[0].ranking == pool.ranking


def test_promote_does_not_mutate_input():
    pool = pool_of({"a": 2, "b": 1})
    promote_bridge(pool, [2], pool.ranking)
    assert pool.ranking == ["a", "b"]


# -- cutoff ------------------------------------------------------------------


def test_cutoff_uniform_scores_pass_everything():
    pool = pool_of({f"d{i:02d}": 0.1 for i in range(12)})
    res = statistical_cutoff(pool, [], window=50, min_docs=5)
    assert res.stats.sigma == 0.0 and res.stats.threshold == 0.1
    assert res.final_doc_ids == pool.ranking
    assert not res.stats.safeguard_fired


def test_cutoff_small_pool_safeguard():
    pool = pool_of({"a": 3.0, "b": 2.0, "c": 1.0})
    res = statistical_cutoff(pool, [], window=50, min_docs=5, threshold=100.0)
    assert res.final_doc_ids == ["a", "b", "c"]
    assert res.stats.safeguard_fired and res.stats.passed_count == 0


def test_cutoff_derived_example():
    scores = [1.0, 0.9] + [0.1] * 8
    pool = pool_of({f"d{i + 1:02d}": s for i, s in enumerate(scores)})
    mu, sigma, final, passed, fired = oracles.cutoff(pool.ranking, pool.scores(), [])
    assert mu == pytest.approx(0.27, abs=1e-12)
    assert sigma == pytest.approx(math.sqrt(0.1161), abs=1e-12)
    res = statistical_cutoff(pool, [])
    assert res.stats.mu == pytest.approx(mu, abs=1e-9)
    assert res.stats.sigma == pytest.approx(sigma, abs=1e-9)
    assert res.stats.threshold == pytest.approx(0.27 + math.sqrt(0.1161), abs=1e-9)
    assert passed == ["d01", "d02"] and res.stats.passed_count == 2
    assert res.final_doc_ids == final == ["d01", "d02", "d03", "d04", "d05"]
    assert res.stats.safeguard_fired and fired


def test_cutoff_keeps_promoted_first():
    pool = pool_of({"a": 10.0, "b": 9.0, "c": 1.0, "d": 1.0, "e": 1.0, "f": 0.5})
    promoted_pool, promoted = promote_bridge(pool, [6], pool.ranking)
    res = statistical_cutoff(promoted_pool, promoted, min_docs=2)
    assert res.final_doc_ids[0] == "f"
    assert res.final_doc_ids[1:] == ["a", "b"]


def test_cutoff_empty_pool():
    res = statistical_cutoff(ScoredPool(), [])
    assert res.final_doc_ids == [] and res.stats is None and res.warnings


def test_cutoff_window_limits_statistics():
    scores = {f"d{i:02d}": float(100 - i) for i in range(10)}
    pool = pool_of(scores)
    res = statistical_cutoff(pool, [], window=5, min_docs=1)
    assert res.stats.window_size == 5
    assert res.stats.mu == pytest.approx(98.0)


# -- full runs on the bridge scenario ---------------------------------------


def test_bdtr_promotes_bridge(bridge_index, bridge):
    gw = ScriptedGateway(bridge_script({2: [11, 1]}))
    trace = run_bdtr(bridge, bridge_index, gw, EngineConfig())
    assert trace.status == "ok", trace.error
    assert trace.final_doc_ids[0] == BRIDGE_DOC
    assert trace.promoted_doc_ids == [BRIDGE_DOC, DIPPER_DOC]
    assert trace.answer == BRIDGE_ANSWER
    assert set(trace.final_doc_ids) <= union_retrieved(trace)
    assert len(trace.final_doc_ids) >= 5
    assert [r.round for r in trace.rounds] == [0, 1, 2]
    assert trace.reasoning_chain.nodes[-1] == "North Avenue and First Avenue"


def test_dtr_only_leaves_bridge_buried(bridge_index, bridge):
    gw = ScriptedGateway(bridge_script({}))
    trace = run_bdtr(bridge, bridge_index, gw, EngineConfig(strategy="bdtr_dtr_only"))
    assert trace.status == "ok", trace.error
    assert BRIDGE_DOC in trace.pool_ranking
    assert BRIDGE_DOC not in trace.final_doc_ids
    assert trace.final_doc_ids == trace.pool_ranking[:5]
    assert trace.reasoning_chain is None and trace.verifier_selection is None
    assert not any(c.role in ("verifier", "reasoning_chain") for c in gw.calls)


def test_bgec_only_runs_on_initial_pool(bridge_index, bridge):
    gw = ScriptedGateway(bridge_script({0: [11, 1]}))
    trace = run_bdtr(bridge, bridge_index, gw, EngineConfig(strategy="bdtr_bgec_only"))
    assert trace.status == "ok", trace.error
    assert [r.round for r in trace.rounds] == [0]
    assert trace.final_doc_ids[:2] == [BRIDGE_DOC, DIPPER_DOC]
    assert not any(c.role == "dual_thought" for c in gw.calls)


def test_more_rounds_grow_pool(bridge_index, bridge):
    script = bridge_script({1: [], 2: []})
    t1 = run_bdtr(bridge, bridge_index, ScriptedGateway(script), EngineConfig(rounds=1))
    t2 = run_bdtr(bridge, bridge_index, ScriptedGateway(script), EngineConfig(rounds=2))
    assert set(t1.pool_ranking) <= set(t2.pool_ranking)


def test_stage_failure_yields_error_trace(bridge_index, bridge):
    script = bridge_script({2: [1]})
    del script[("q_dipper", "dual_thought", 2)]
    trace = run_bdtr(bridge, bridge_index, ScriptedGateway(script), EngineConfig())
    assert trace.status == "error"
    assert "MissingScript" in trace.error
    assert [r.round for r in trace.rounds] == [0, 1]
    assert trace.pool_ranking and trace.answer == ""


def test_unparseable_thoughts_recorded(bridge_index, bridge):
    script = bridge_script({2: [1]})
    script[("q_dipper", "dual_thought", 1)] = "just one line"
    trace = run_bdtr(bridge, bridge_index, ScriptedGateway(script), EngineConfig())
    assert trace.status == "error" and "UnparseableThoughts" in trace.error


def test_malformed_verifier_does_not_abort(bridge_index, bridge):
    script = bridge_script({})
    script[("q_dipper", "verifier", 2)] = "I think documents 3 and 4"
    trace = run_bdtr(bridge, bridge_index, ScriptedGateway(script), EngineConfig())
    assert trace.status == "ok"
    assert trace.promoted_doc_ids == []
    assert any("MalformedVerifierOutput" in w for w in trace.warnings)


def test_run_bdtr_rejects_baseline_strategy(bridge_index, bridge):
    with pytest.raises(ValueError):
        run_bdtr(bridge, bridge_index, ScriptedGateway({}), EngineConfig(strategy="ircot"))


def test_ablation_consistency(bridge_index, bridge):
    script = bridge_script({2: []})
    full = run_bdtr(bridge, bridge_index, ScriptedGateway(script), EngineConfig(force_threshold=-math.inf))
    dtr = run_bdtr(bridge, bridge_index, ScriptedGateway(script), EngineConfig(strategy="bdtr_dtr_only"))
    assert full.final_doc_ids[:5] == dtr.final_doc_ids


# -- baselines ---------------------------------------------------------------

SAMPLE = QASample("b1", "Q", ("X",))


def baseline_retriever():
    return TableRetriever(
        {
            "Q": [("a", 2.0), ("b", 1.0)],
            "need c": [("c", 3.0)],
            "need d": [("d", 0.5)],
            "Reasoning: need c. Final answer: X": [("c", 3.0)],
            "Reasoning: need d. Final answer: X": [("d", 0.5)],
        }
    )


def bscript(strategy_rounds):
    script = {("b1", "answer", None): "X"}
    for rnd, text in strategy_rounds.items():
        script[("b1", "single_thought", rnd)] = text
    return script


def retrieval_rounds(trace):
    return [r.round for r in trace.rounds if r.round > 0 and r.retrieved]


@pytest.mark.parametrize("strategy", ["ircot", "gcot"])
def test_sentinel_stops_at_round_two(strategy):
    gw = ScriptedGateway(bscript({1: "need c", 2: "So the answer is: X", 3: "need d"}))
    trace = run_baseline(SAMPLE, strategy, baseline_retriever(), gw, EngineConfig(rounds=3, strategy=strategy))
    assert retrieval_rounds(trace) == [1]
    assert trace.rounds[-1].terminal and trace.rounds[-1].round == 2
    assert trace.answer_seed == "X"
    assert "d" not in trace.pool_ranking
    assert trace.pool_ranking == ["c", "a", "b"]


def test_tog_immediate_stop():
    gw = ScriptedGateway(bscript({1: "So the answer is: X"}))
    trace = run_baseline(SAMPLE, "tog", baseline_retriever(), gw, EngineConfig(rounds=2, strategy="tog"))
    assert retrieval_rounds(trace) == []
    assert [c.role for c in gw.calls] == ["single_thought", "answer"]


def test_irgs_runs_full_budget():
    gw = ScriptedGateway(
        bscript({1: "Reasoning: need c. Final answer: X", 2: "Reasoning: need d. Final answer: X"})
    )
    gw._script[("b1", "single_thought", 1)] = "So the answer is: X"
    trace = run_baseline(SAMPLE, "irgs", baseline_retriever(), gw, EngineConfig(rounds=2, strategy="irgs"))
    assert [c.role for c in gw.calls].count("single_thought") == 2
    assert [r.round for r in trace.rounds] == [0, 1, 2]
    assert trace.final_doc_ids == ["a", "b", "d"]


def test_baseline_uses_same_fusion():
    gw = ScriptedGateway(bscript({1: "need c", 2: "need d"}))
    trace = run_query(SAMPLE, baseline_retriever(), gw, EngineConfig(rounds=2, strategy="ircot"))
    assert trace.pool_ranking == ["c", "a", "b", "d"]
    assert trace.final_doc_ids == ["c", "a", "b", "d"]


# -- invariants over random instances ---------------------------------------

doc_ids = st.sampled_from([f"x{i:02d}" for i in range(20)])
ranked_list = st.dictionaries(doc_ids, st.floats(0, 50, allow_nan=False), max_size=8)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(ranked_list, ranked_list), min_size=1, max_size=3), ranked_list)
def test_pool_and_score_monotone(rounds, initial):
    pool = fuse_retrievals(ScoredPool(), [("initial", list(_hits(initial)))], 0)
    for t, (fast, slow) in enumerate(rounds, start=1):
        nxt = fuse_retrievals(pool, [("fast", list(_hits(fast))), ("slow", list(_hits(slow)))], t)
        assert set(pool.entries) <= set(nxt.entries)
        assert all(nxt.score(d) >= pool.score(d) for d in pool.entries)
        assert sorted(nxt.ranking) == sorted(nxt.entries)
        keys = [(-nxt.score(d), d) for d in nxt.ranking]
        assert keys == sorted(keys)
        pool = nxt


@settings(max_examples=150, deadline=None)
@given(ranked_list, st.lists(st.integers(-2, 12), max_size=10))
def test_promotion_is_permutation_with_prefix(scores, indices):
    pool = pool_of(scores)
    out, promoted = promote_bridge(pool, indices, pool.ranking)
    assert sorted(out.ranking) == sorted(pool.ranking)
    assert out.ranking[: len(promoted)] == promoted
    expected = []
    for i in indices:
        if 1 <= i <= len(pool.ranking) and pool.ranking[i - 1] not in expected:
            expected.append(pool.ranking[i - 1])
    assert promoted == expected


def _hits(table):
    return sorted((ScoredDoc(d, s) for d, s in table.items()), key=lambda h: (-h.score, h.doc_id))


def test_cutoff_two_score_window_top_sits_on_threshold():
    # for two scores, max - mean equals the population std exactly; the float
    # sum mu + sigma rounds one ulp above 25.914987292904808 here
    pool = pool_of({"hi": 25.914987292904808, "lo": 0.44071151581807855})
    result = statistical_cutoff(pool, [], window=50, min_docs=1)
    assert result.final_doc_ids == ["hi"]
    assert result.stats.passed_count == 1 and not result.stats.safeguard_fired

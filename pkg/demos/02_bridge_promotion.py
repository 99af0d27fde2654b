"""Dual-thought retrieval followed by bridge-guided calibration, step by step.

The scripted gateway replays recorded model responses, so the run is exact
and needs no network.  We follow one question through the rounds, the
verifier's pick, the promotion and the statistical cutoff, then rerun with
each half of the method switched off.
"""

# %%
from __future__ import annotations

from pathlib import Path

from bdtr import EngineConfig, ScriptedGateway, build_index, load_corpus, load_qa_dataset, run_query
from bdtr.evaluation import recall_at_k

DATA = Path(__file__).parent / "data"
index = build_index(load_corpus(DATA / "corpus.jsonl"))
sample = next(s for s in load_qa_dataset(DATA / "qa.jsonl") if s.id == "q_dipper")
gateway = ScriptedGateway.from_file(DATA / "script.jsonl")

config = EngineConfig(rounds=2, thought_context_depth=20)
trace = run_query(sample, index, gateway, config)

# %% Rounds: round 0 is the plain question; each later round adds a fast and a slow thought.
for rec in trace.rounds:
    print(f"round {rec.round}: pool={rec.pool_size}  queries={rec.queries}")
    print("   ranking:", ", ".join(rec.top[:6]), "...")

# %% The final stage: reasoning chain, verifier pick, promotion, cutoff.
print("reasoning chain:", trace.reasoning_chain.canonical())
print("verifier picked listing indices", list(trace.verifier_selection.covered_indices), "->", trace.promoted_doc_ids)
stats = trace.cutoff_stats
print(f"cutoff: mu={stats.mu:.3f} sigma={stats.sigma:.3f} threshold={stats.threshold:.3f} "
      f"passed={stats.passed_count} safeguard={stats.safeguard_fired}")
print("final evidence:", trace.final_doc_ids)
print("answer:", trace.answer)

# %% Ablations: retrieval loop alone, and calibration applied to the first retrieval only.
p0 = trace.rounds[0].top
print(f"{'round-0 pool':<16} Recall@5 = {recall_at_k(p0, sample.gold_doc_ids, 5):.2f}")
for strategy in ("bdtr_dtr_only", "bdtr_bgec_only", "bdtr"):
    t = run_query(sample, index, gateway, config.with_(strategy=strategy))
    r5 = recall_at_k(t.final_doc_ids, sample.gold_doc_ids, 5)
    print(f"{strategy:<16} Recall@5 = {r5:.2f}  final = {t.final_doc_ids}")

"""Single-thought baselines next to BDTR, and which questions each one gets right.

The baselines (IRCoT, ToG, GCoT, IRGS) share the engine's pool fusion and
differ only in how one thought per round is produced and when the loop stops.
"""

# %%
from __future__ import annotations

from pathlib import Path

from bdtr import EngineConfig, ScriptedGateway, build_index, load_corpus, load_qa_dataset
from bdtr.evaluation import complementarity, evaluate_run
from bdtr.runner import run_samples

DATA = Path(__file__).parent / "data"
index = build_index(load_corpus(DATA / "corpus.jsonl"))
samples = load_qa_dataset(DATA / "qa.jsonl")
gateway = ScriptedGateway.from_file(DATA / "script.jsonl")

# %% Run every strategy over the three demo questions.
reports = {}
for strategy in ("bdtr", "ircot", "tog", "gcot", "irgs"):
    traces = run_samples(samples, index, gateway, EngineConfig(rounds=2, strategy=strategy))
    reports[strategy] = evaluate_run(traces, samples, ks=[5])
    stops = [len(t.rounds) - 1 for t in traces]
    print(f"{strategy:<6} EM={reports[strategy].em:.3f}  Recall@5={reports[strategy].recall_at_final[5]:.3f}  "
          f"rounds used per question={stops}")

# IRCoT, ToG and GCoT stop on "So the answer is:"; on q_melrose that happens
# in round 1 with a wrong answer.  IRGS ignores the sentinel and keeps going.

# %% Success sets and their overlaps.
comp = complementarity({name: rep.em_by_sample() for name, rep in reports.items()})
for (a, b), pair in comp.pairwise.items():
    if pair.only_first or pair.only_second:
        print(f"{a} vs {b}: only {a} {sorted(pair.only_first)}, only {b} {sorted(pair.only_second)}")

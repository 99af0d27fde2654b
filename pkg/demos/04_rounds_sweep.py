"""How many dual-thought rounds are worth paying for?

In this scenario the first round's thoughts miss the bridge document and the
second round names it.  Sweeping the round budget shows the recall jump at
R=2 and the flat line after it, while the pool keeps its size or grows.
"""

# %%
from __future__ import annotations

from pathlib import Path

from bdtr import EngineConfig, ScriptedGateway, build_index, load_corpus, load_qa_dataset
from bdtr.evaluation import rounds_sweep
from bdtr.retrieval import RetrieverConfig

DATA = Path(__file__).parent / "data"
# a shallow retrieval depth keeps the pool from swallowing the whole corpus at once
index = build_index(load_corpus(DATA / "corpus.jsonl"), RetrieverConfig(k=6))
samples = [s for s in load_qa_dataset(DATA / "qa.jsonl") if s.id == "q_late"]
gateway = ScriptedGateway.from_file(DATA / "script.jsonl")

# %%
reports = rounds_sweep(samples, index, gateway, EngineConfig(retrieve_k=6), [1, 2, 3, 4], ks=[5])
print(f"{'R':>2} {'pool':>6} {'Recall@5':>9} {'EM':>5}")
for r, rep in reports.items():
    print(f"{r:>2} {rep.mean_pool_size:>6.1f} {rep.recall_at_final[5]:>9.2f} {rep.em:>5.2f}")

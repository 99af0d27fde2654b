"""Batch execution: overlapping gateway latency across questions.

Each question's pipeline is sequential, but questions run side by side on a
bounded thread pool.  With a simulated 50 ms per model call, eight workers
should cut wall time roughly eightfold while producing byte-identical traces.
"""

# %%
from __future__ import annotations

import tempfile
import time
from pathlib import Path

from bdtr import EngineConfig, ScriptedGateway, build_index, load_corpus, load_qa_dataset
from bdtr.corpus import QASample
from bdtr.runner import TraceSink, run_samples, timing_summary
from bdtr.trace import load_traces, write_traces

DATA = Path(__file__).parent / "data"
index = build_index(load_corpus(DATA / "corpus.jsonl"))
base = load_qa_dataset(DATA / "qa.jsonl")
script = ScriptedGateway.from_file(DATA / "script.jsonl")._script

# %% Sixteen questions: copies of the demo set with their scripts re-keyed.
samples, batch_script = [], {}
for i in range(16):
    src = base[i % len(base)]
    sid = f"{src.id}_{i:02d}"
    samples.append(QASample(sid, src.question, src.answers, src.question_type, src.gold_doc_ids))
    batch_script.update({(sid, role, rnd): text for (s, role, rnd), text in script.items() if s == src.id})

# %% Sequential versus eight workers; the sink keeps a crash-safe partial log.
config = EngineConfig(rounds=2)
results = {}
with tempfile.TemporaryDirectory() as tmp:
    for workers in (1, 8):
        gateway = ScriptedGateway(batch_script, latency=0.05)
        with TraceSink(Path(tmp) / f"partial_{workers}.jsonl") as sink:
            start = time.perf_counter()
            traces = run_samples(samples, index, gateway, config, concurrency=workers, sink=sink)
            wall = time.perf_counter() - start
        write_traces(traces, Path(tmp) / f"traces_{workers}.jsonl")
        results[workers] = (wall, (Path(tmp) / f"traces_{workers}.jsonl").read_bytes())
        print(f"concurrency {workers}: {wall:.2f}s, {len(gateway.calls)} model calls")
    print("stage totals (s):", {k: round(v, 2) for k, v in timing_summary(traces).items()})
    print("reloaded", len(load_traces(Path(tmp) / "traces_8.jsonl")), "traces")

print(f"speed-up {results[1][0] / results[8][0]:.1f}x, identical traces: {results[1][1] == results[8][1]}")

"""Talking to a real OpenAI-compatible endpoint.

Nothing here is exercised in the test suite.  Without ``OPENAI_API_KEY`` the
script shows the first prompt and the configuration error; with a key it runs
one question end to end using the default prompt templates.
"""

# %%
from __future__ import annotations

import json
import os
from pathlib import Path

import sys

from bdtr import EngineConfig, HttpGateway, build_index, load_corpus, load_qa_dataset, run_query
from bdtr.errors import GatewayConfigError
from bdtr.gateway import GenerationRequest
from bdtr.prompts import default_prompts

DATA = Path(__file__).parent / "data"
sample = load_qa_dataset(DATA / "qa.jsonl")[0]
prompt = default_prompts().render("dual_thought", question=sample.question, context="(no documents yet)", round=1)
print(prompt[:400], "...")

# %% The key is checked up front, so a misconfigured run fails before any work starts.
try:
    gateway = HttpGateway(
        base_url=os.environ.get("BDTR_BASE_URL", "https://api.openai.com"),
        model=os.environ.get("BDTR_MODEL", "gpt-4o-mini"),
        max_retries=3,
        max_in_flight=4,
    )
except GatewayConfigError as exc:
    print(f"not running live: {exc}")
    sys.exit(0)

# %% The wire format: one user message per call, temperature 0.
print(json.dumps(gateway.payload(GenerationRequest("dual_thought", prompt)), indent=2)[:600])

# %%
index = build_index(load_corpus(DATA / "corpus.jsonl"))
trace = run_query(sample, index, gateway, EngineConfig(rounds=2))
print(trace.status, trace.error or "")
print("final evidence:", trace.final_doc_ids)
print("answer:", trace.answer)

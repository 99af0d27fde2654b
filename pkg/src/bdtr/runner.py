"""Bounded-concurrency batch execution over many QA samples.

Each query runs sequentially on one worker; queries run side by side on a
thread pool so gateway latency overlaps.  Results come back in sample order no
matter the completion order.
"""

from __future__ import annotations

import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from .corpus import QASample
from .engine import EngineConfig, run_query
from .gateway import Gateway
from .prompts import PromptSet
from .retrieval import Retriever
from .trace import RunTrace

logger = logging.getLogger(__name__)


class TraceSink:
    """Append-only JSON-lines writer shared by workers.

    Each trace is written as one line and flushed under a lock, so an
    interrupted run leaves only complete lines behind.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._fh = open(self.path, "a", encoding="utf-8")

    def write(self, trace: RunTrace) -> None:
        line = trace.to_json(include_timing=True) + "\n"
        with self._lock:
            self._fh.write(line)
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        with self._lock:
            self._fh.close()

    def __enter__(self) -> "TraceSink":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def run_samples(
    samples: Sequence[QASample],
    retriever: Retriever,
    gateway: Gateway,
    config: EngineConfig,
    *,
    concurrency: int = 1,
    prompts: PromptSet | None = None,
    sink: TraceSink | None = None,
    on_done: Callable[[RunTrace], None] | None = None,
) -> list[RunTrace]:
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")

    def one(sample: QASample) -> RunTrace:
        trace = run_query(sample, retriever, gateway, config, prompts)
        if sink is not None:
            sink.write(trace)
        if on_done is not None:
            on_done(trace)
        return trace

    if concurrency == 1:
        return [one(s) for s in samples]
    with ThreadPoolExecutor(max_workers=concurrency, thread_name_prefix="bdtr") as pool:
        return list(pool.map(one, samples))


def timing_summary(traces: Sequence[RunTrace]) -> dict[str, float]:
    total: dict[str, float] = {}
    for t in traces:
        for stage, secs in t.timing.items():
            total[stage] = total.get(stage, 0.0) + secs
    return dict(sorted(total.items()))

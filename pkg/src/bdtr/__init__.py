"""Bridge-guided dual-thought iterative retrieval for multi-hop QA.

The main entry points:

* :func:`bdtr.corpus.load_corpus`, :func:`bdtr.corpus.load_qa_dataset`
* :func:`bdtr.retrieval.build_index` for the BM25 reference backbone
* :class:`bdtr.gateway.ScriptedGateway` / :class:`bdtr.gateway.HttpGateway`
* :func:`bdtr.engine.run_query` with an :class:`bdtr.engine.EngineConfig`
* :func:`bdtr.evaluation.evaluate_run` for EM / F1 / Recall@K
"""

from .corpus import Corpus, Document, QASample, get_document, load_corpus, load_qa_dataset
from .engine import (
    STRATEGIES,
    EngineConfig,
    ScoredPool,
    fuse_retrievals,
    initialize_pool,
    iterate_dual,
    promote_bridge,
    run_baseline,
    run_bdtr,
    run_query,
    statistical_cutoff,
)
from .evaluation import (
    MetricReport,
    complementarity,
    evaluate_run,
    exact_match,
    normalize_answer,
    recall_at_k,
    rounds_sweep,
    token_f1,
)
from .gateway import GenerationRequest, GenerationResponse, HttpGateway, ScriptedGateway
from .generation import ReasoningChain, ThoughtPair, VerifierSelection
from .retrieval import LexicalIndex, RetrieverConfig, ScoredDoc, build_index, retrieve
from .runner import run_samples
from .trace import RunTrace, load_traces, write_traces

__version__ = "0.1.0"

__all__ = [
    "Corpus", "Document", "QASample", "get_document", "load_corpus", "load_qa_dataset",
    "STRATEGIES", "EngineConfig", "ScoredPool", "fuse_retrievals", "initialize_pool", "iterate_dual",
    "promote_bridge", "run_baseline", "run_bdtr", "run_query", "statistical_cutoff",
    "MetricReport", "complementarity", "evaluate_run", "exact_match", "normalize_answer",
    "recall_at_k", "rounds_sweep", "token_f1",
    "GenerationRequest", "GenerationResponse", "HttpGateway", "ScriptedGateway",
    "ReasoningChain", "ThoughtPair", "VerifierSelection",
    "LexicalIndex", "RetrieverConfig", "ScoredDoc", "build_index", "retrieve",
    "run_samples", "RunTrace", "load_traces", "write_traces",
]

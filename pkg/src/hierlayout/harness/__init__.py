"""Corpus tooling: ingestion, evaluation runs, the judge client, the CLI."""

from .evalrun import EvalConfig, EvalRun, eval_corpus, score_draft
from .judge import JudgeClient, judge_rating, judge_voting
from .store import CorpusRecord, CorpusStore, ingest

__all__ = [
    "EvalConfig",
    "EvalRun",
    "eval_corpus",
    "score_draft",
    "JudgeClient",
    "judge_rating",
    "judge_voting",
    "CorpusRecord",
    "CorpusStore",
    "ingest",
]

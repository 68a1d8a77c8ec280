"""Recall/MRR metrics, explanation relevance, path-count sweeps and timing."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .assignment import doc_representation
from .corpus import Document, Query
from .decoder import decode_docids, generate_paths
from .embedding import Encoder, cosine, default_encoder
from .ranking import (
    DecodeConfig,
    RetrievalAnswer,
    RetrievalIndex,
    answer_from_sets,
    decode_for_paths,
)
from .scorer import Scorer
from .taxonomy import CategoryPath, linearize
from .tokens import tokenize

DEFAULT_METRICS = ("r1", "r10", "r100", "mrr100")


class EvaluationError(ValueError):
    pass


def _answer_map(answers) -> Mapping[str, RetrievalAnswer]:
    if isinstance(answers, Mapping):
        return answers
    return {a.query_id: a for a in answers}


def gold_ranks(answers, queries: Sequence[Query]) -> dict[str, int | None]:
    amap = _answer_map(answers)
    ranks = {}
    for q in queries:
        if q.query_id not in amap:
            raise EvaluationError(f"no answer for query {q.query_id!r}")
        ranks[q.query_id] = amap[q.query_id].rank_of(q.gold_docid)
    return ranks


def recall_at_k(answers, queries: Sequence[Query], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not queries:
        return 0.0
    ranks = gold_ranks(answers, queries)
    return sum(1 for r in ranks.values() if r is not None and r <= k) / len(queries)


def mrr_at_k(answers, queries: Sequence[Query], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not queries:
        return 0.0
    ranks = gold_ranks(answers, queries)
    return sum(1.0 / r for r in ranks.values() if r is not None and r <= k) / len(queries)


def parse_metric(name: str) -> tuple[str, int]:
    name = name.strip().lower()
    for prefix, kind in (("mrr", "mrr"), ("r", "recall")):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            return kind, int(name[len(prefix):])
    raise ValueError(f"unknown metric {name!r}; expected e.g. r10 or mrr100")


def compute_metrics(answers, queries, metrics: Iterable[str] = DEFAULT_METRICS) -> dict[str, float]:
    out = {}
    for name in metrics:
        kind, k = parse_metric(name)
        fn = recall_at_k if kind == "recall" else mrr_at_k
        out[f"{kind}@{k}"] = fn(answers, queries, k)
    return out


def clamped_geometric_mean(a: float, b: float) -> float:
    return math.sqrt(max(0.0, a) * max(0.0, b))


def explanation_relevance(
    query: Query | str,
    doc: Document,
    p: CategoryPath,
    encoder: Encoder | None = None,
) -> float:
    """Geometric mean of the clamped query-path and document-path similarities."""
    enc = encoder or default_encoder()
    text = query if isinstance(query, str) else query.text
    pv = enc.embed(linearize(p))
    a = cosine(enc.embed(text), pv)
    b = cosine(enc.embed(doc_representation(doc)), pv)
    return clamped_geometric_mean(a, b)


@dataclass
class EvalReport:
    metrics: dict[str, float]
    ranks: dict[str, int | None]
    config: dict
    timings: dict[str, float] = field(default_factory=dict)

    def to_json(self, with_timings: bool = False) -> dict:
        d = {"metrics": self.metrics, "ranks": self.ranks, "config": self.config}
        if with_timings:
            d["timings"] = self.timings
        return d

    def save(self, path: str | Path) -> None:
        """Timings vary run to run and go to a sibling ``*.timings.json``."""
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n",
                        encoding="utf-8")
        if self.timings:
            path.with_suffix(".timings.json").write_text(
                json.dumps(self.timings, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _splits(queries: Sequence[Query]) -> dict[str, list[Query]]:
    groups: dict[str, list[Query]] = {}
    for q in queries:
        if q.split:
            groups.setdefault(q.split, []).append(q)
    return groups


def build_report(
    answers: Sequence[RetrievalAnswer],
    queries: Sequence[Query],
    metrics: Sequence[str] = DEFAULT_METRICS,
    config: dict | None = None,
    docs: Mapping[str, Document] | None = None,
    encoder: Encoder | None = None,
) -> EvalReport:
    queries = sorted(queries, key=lambda q: q.query_id)
    values = compute_metrics(answers, queries, metrics)
    for split, group in sorted(_splits(queries).items()):
        for name, v in compute_metrics(answers, group, metrics).items():
            values[f"{split}/{name}"] = v
    if docs:
        amap = _answer_map(answers)
        rel = []
        for q in queries:
            a = amap[q.query_id]
            if a.ranking and a.ranking[0].source_path is not None:
                top = a.ranking[0]
                rel.append(explanation_relevance(q, docs[top.doc_id], top.source_path, encoder))
        values["explanation_relevance"] = sum(rel) / len(rel) if rel else 0.0
    return EvalReport(values, gold_ranks(answers, queries), dict(config or {}))


def evaluate(
    m: Scorer,
    queries: Sequence[Query],
    index: RetrievalIndex,
    cfg: DecodeConfig,
    metrics: Sequence[str] = DEFAULT_METRICS,
    docs: Mapping[str, Document] | None = None,
) -> tuple[list[RetrievalAnswer], EvalReport]:
    """Run retrieval for every query (in query_id order) and score it."""
    queries = sorted(queries, key=lambda q: q.query_id)
    answers = []
    t_paths = t_docids = 0.0
    for q in queries:
        toks = tokenize(q.text)
        t0 = time.perf_counter()
        paths = generate_paths(m, toks, index.path_trie, cfg.k_paths, cfg.max_len,
                               beam=cfg.path_beam, constrained=cfg.constrain_paths)
        t1 = time.perf_counter()
        per_path = decode_for_paths(m, toks, paths, index, cfg)
        t_docids += time.perf_counter() - t1
        t_paths += t1 - t0
        answers.append(answer_from_sets(q.query_id, paths, per_path, cfg.top_k))
    report = build_report(answers, queries, metrics, asdict(cfg), docs)
    report.timings = {"path_stage_s": t_paths, "docid_stage_s": t_docids}
    return answers, report


@dataclass
class SweepResult:
    reports: dict[int, EvalReport]
    answers: dict[int, list[RetrievalAnswer]]
    aggregated: dict[int, dict[str, dict[str, float]]]

    def to_tsv(self) -> str:
        names = sorted({n for r in self.reports.values() for n in r.metrics})
        lines = ["k_paths\t" + "\t".join(names)]
        for k in sorted(self.reports):
            vals = self.reports[k].metrics
            lines.append(f"{k}\t" + "\t".join(f"{vals.get(n, float('nan')):.6f}" for n in names))
        return "\n".join(lines) + "\n"


def sweep_paths(
    m: Scorer,
    queries: Sequence[Query],
    index: RetrievalIndex,
    k_list: Sequence[int],
    cfg: DecodeConfig | None = None,
    metrics: Sequence[str] = DEFAULT_METRICS,
) -> SweepResult:
    """Evaluate for each path count in ``k_list``.

    One path beam of width ``max(k_list)`` (or ``cfg.path_beam`` if wider)
    is run per query; each K keeps its first K paths, so path order is fixed
    across K.  Per-path docid decodes are shared.
    """
    if not k_list:
        raise ValueError("k_list must be nonempty")
    base = cfg or DecodeConfig()
    kmax = max(k_list)
    width = max(kmax, base.path_beam or 0)
    queries = sorted(queries, key=lambda q: q.query_id)
    cache: dict = {}
    answers: dict[int, list[RetrievalAnswer]] = {k: [] for k in k_list}
    aggregated: dict[int, dict[str, dict[str, float]]] = {k: {} for k in k_list}
    for q in queries:
        toks = tokenize(q.text)
        paths = generate_paths(m, toks, index.path_trie, kmax, base.max_len,
                               beam=width, constrained=base.constrain_paths)
        for k in k_list:
            per_path = decode_for_paths(m, toks, paths[:k], index, base, cache)
            ans = answer_from_sets(q.query_id, paths[:k], per_path, base.top_k)
            answers[k].append(ans)
            merged: dict[str, float] = {}
            for _, items in per_path:
                for d, s in items:
                    merged[d] = max(s, merged.get(d, -math.inf))
            aggregated[k][q.query_id] = merged
    reports = {}
    for k in k_list:
        snap = asdict(base)
        snap.update(k_paths=k, path_beam=width)
        reports[k] = build_report(answers[k], queries, metrics, snap)
    return SweepResult(reports, answers, aggregated)


def bench(
    m: Scorer,
    queries: Sequence[Query],
    index: RetrievalIndex,
    cfg: DecodeConfig | None = None,
) -> dict[str, float]:
    """Mean per-query seconds: docid decoding alone vs. one path plus docid decoding."""
    cfg = cfg or DecodeConfig()
    queries = sorted(queries, key=lambda q: q.query_id)
    if not queries:
        return {"docid_only_s": 0.0, "path_and_docid_s": 0.0, "n_queries": 0}
    t_doc = t_both = 0.0
    for q in queries:
        toks = tokenize(q.text)
        t0 = time.perf_counter()
        paths = generate_paths(m, toks, index.path_trie, 1, cfg.max_len,
                               constrained=cfg.constrain_paths)
        t1 = time.perf_counter()
        decode_docids(m, toks, paths[0][0], index.docid_trie, cfg.beam, cfg.max_len)
        t2 = time.perf_counter()
        t_doc += t2 - t1
        t_both += t2 - t0
    n = len(queries)
    return {"docid_only_s": t_doc / n, "path_and_docid_s": t_both / n, "n_queries": n}

"""Path-aware ranking: max-score merge of per-path docid lists, and the retrieval pipeline."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .assignment import CandidatePathSet
from .corpus import DocidTable, Query, Trie, docid_trie
from .decoder import DecodeResult, build_path_trie, decode_docids, generate_paths
from .scorer import Scorer
from .taxonomy import CategoryPath, linearize, parse_path
from .tokens import tokenize


@dataclass(frozen=True)
class ScoredDocid:
    doc_id: str
    score: float
    source_path: CategoryPath | None = None


@dataclass(frozen=True)
class RetrievalAnswer:
    query_id: str
    paths: tuple[tuple[CategoryPath, float], ...]
    ranking: tuple[ScoredDocid, ...]

    def doc_ids(self) -> list[str]:
        return [s.doc_id for s in self.ranking]

    def rank_of(self, doc_id: str) -> int | None:
        for i, s in enumerate(self.ranking, 1):
            if s.doc_id == doc_id:
                return i
        return None

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "paths": [{"path": linearize(p), "logprob": lp} for p, lp in self.paths],
            "ranking": [{"doc_id": s.doc_id, "score": s.score,
                         "source_path": linearize(s.source_path) if s.source_path else None}
                        for s in self.ranking],
        }

    @classmethod
    def from_json(cls, rec: dict) -> "RetrievalAnswer":
        return cls(
            rec["query_id"],
            tuple((parse_path(p["path"]), p["logprob"]) for p in rec["paths"]),
            tuple(ScoredDocid(r["doc_id"], r["score"],
                              parse_path(r["source_path"]) if r.get("source_path") else None)
                  for r in rec["ranking"]),
        )


def aggregate(
    result_sets: Sequence[tuple[CategoryPath | None, DecodeResult | Iterable]]
) -> dict[str, ScoredDocid]:
    """Keep each docid once, with its highest score across the per-path sets.

    Items of each set are ``(doc_id, score)`` pairs or decoder sequences.
    Equal maxima keep the earliest path.
    """
    best: dict[str, ScoredDocid] = {}
    for path, results in result_sets:
        for item in results:
            doc_id, score = (item[2], item[1]) if len(item) == 3 else item
            cur = best.get(doc_id)
            if cur is None or score > cur.score:
                best[doc_id] = ScoredDocid(doc_id, score, path)
    return best


def final_ranking(scored: Mapping[str, ScoredDocid] | Iterable[ScoredDocid], k: int) -> list[ScoredDocid]:
    if k < 1:
        raise ValueError("k must be >= 1")
    items = scored.values() if isinstance(scored, Mapping) else scored
    return sorted(items, key=lambda s: (-s.score, s.doc_id))[:k]


@dataclass
class DecodeConfig:
    k_paths: int = 3
    beam: int = 100
    max_len: int = 64
    top_k: int = 100
    path_beam: int | None = None
    constrain_paths: bool = True
    path_filtered_trie: bool = False
    include_path_score: bool = False


@dataclass
class RetrievalIndex:
    """Tries and assignments needed at query time."""

    docids: DocidTable
    assignments: Mapping[str, CandidatePathSet]
    path_trie: Trie
    docid_trie: Trie
    _filtered: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(
        cls,
        docids: DocidTable,
        assignments: Iterable[CandidatePathSet],
        all_paths: Sequence[CategoryPath] | None = None,
    ) -> "RetrievalIndex":
        """``all_paths`` switches the path stage to the whole taxonomy."""
        amap = {cs.doc_id: cs for cs in assignments}
        paths = list(all_paths) if all_paths else [p for cs in amap.values() for p in cs.paths]
        return cls(docids, amap, build_path_trie(paths), docid_trie(docids))

    def trie_for(self, p: CategoryPath, filtered: bool) -> Trie:
        if not filtered:
            return self.docid_trie
        if p not in self._filtered:
            ids = [d for d, cs in self.assignments.items() if p in cs.paths and d in self.docids.entries]
            self._filtered[p] = docid_trie(self.docids, ids) if ids else self.docid_trie
        return self._filtered[p]


def decode_for_paths(
    m: Scorer,
    query_tokens: Sequence[str],
    paths: Sequence[tuple[CategoryPath, float]],
    index: RetrievalIndex,
    cfg: DecodeConfig,
    cache: dict | None = None,
) -> list[tuple[CategoryPath, list[tuple[str, float]]]]:
    """Per-path (doc_id, score) lists, optionally memoized in ``cache``."""
    out = []
    for p, plp in paths:
        key = (tuple(query_tokens), p)
        if cache is not None and key in cache:
            res = cache[key]
        else:
            res = decode_docids(m, query_tokens, p, index.trie_for(p, cfg.path_filtered_trie),
                                cfg.beam, cfg.max_len)
            if cache is not None:
                cache[key] = res
        bonus = plp if cfg.include_path_score else 0.0
        out.append((p, [(doc_id, s + bonus) for _, s, doc_id in res.sequences]))
    return out


def answer_from_sets(
    query_id: str,
    paths: Sequence[tuple[CategoryPath, float]],
    per_path: Sequence[tuple[CategoryPath, list[tuple[str, float]]]],
    top_k: int,
) -> RetrievalAnswer:
    return RetrievalAnswer(query_id, tuple(paths),
                           tuple(final_ranking(aggregate(per_path), top_k)))


def retrieve(
    m: Scorer,
    query: Query | str,
    index: RetrievalIndex,
    cfg: DecodeConfig | None = None,
) -> RetrievalAnswer:
    """Generate paths, decode docids under each, merge and rank."""
    cfg = cfg or DecodeConfig()
    qid, text = (query.query_id, query.text) if isinstance(query, Query) else ("", query)
    toks = tokenize(text)
    paths = generate_paths(m, toks, index.path_trie, cfg.k_paths, cfg.max_len,
                           beam=cfg.path_beam, constrained=cfg.constrain_paths)
    per_path = decode_for_paths(m, toks, paths, index, cfg)
    return answer_from_sets(qid, paths, per_path, cfg.top_k)


def save_answers(answers: Iterable[RetrievalAnswer], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in answers:
            fh.write(json.dumps(a.to_json(), ensure_ascii=False) + "\n")


def load_answers(path: str | Path) -> list[RetrievalAnswer]:
    with open(path, encoding="utf-8") as fh:
        return [RetrievalAnswer.from_json(json.loads(line)) for line in fh if line.strip()]

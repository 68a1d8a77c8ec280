"""Per-document candidate paths, query-path linking, and the augmented training set."""

from __future__ import annotations

import hashlib
import json
import logging
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .corpus import DocidTable, Document, Query
from .embedding import Encoder, cosine, default_encoder, rank_vectors
from .taxonomy import CategoryPath, TaxonomyError, linearize, parse_path

logger = logging.getLogger(__name__)

MAX_CANDIDATES = 3
DEFAULT_PRECANDIDATES = 30
DEFAULT_FIRSTP_TOKENS = 64
MAX_SYNTHETIC = 5
DOC_REPR_CHARS = 256
SELECTOR_CONTENT_CHARS = 2000

EXTERNAL = "external-selector"
FALLBACK = "fallback"

KIND_RETRIEVAL = "retrieval"
KIND_FIRSTP = "indexing-firstp"
KIND_SYNTHETIC = "indexing-synthetic"

# Default prompt for selector services that wrap an instruction-tuned LLM.
DEFAULT_PROMPT_TEMPLATE = (
    "You're a taxonomy expert. You will receive a document along with a set of "
    "candidate taxonomy hierarchy paths for the document. Your task is to select "
    "the path that can represent the document. Exclude paths that are too broad or "
    "less relevant or contain too specific information such as year.\n"
    "You may list up to 3 paths, using only the paths in the candidate set. "
    "Do not include any explanation.\n\n"
    "<Document title>: {title}\n\n"
    "<Document contents>: {contents}\n\n"
    "<Candidate hierarchy paths>: {candidates}\n\n"
    "<Selected hierarchy paths>: "
)


class AssignmentError(ValueError):
    pass


@dataclass(frozen=True)
class CandidatePathSet:
    doc_id: str
    paths: tuple[CategoryPath, ...]
    provenance: str

    def __post_init__(self):
        if not 1 <= len(self.paths) <= MAX_CANDIDATES:
            raise AssignmentError(f"{self.doc_id}: candidate set must hold 1..3 paths")

    def to_json(self) -> dict:
        return {"doc_id": self.doc_id, "paths": [linearize(p) for p in self.paths],
                "provenance": self.provenance}

    @classmethod
    def from_json(cls, rec: dict) -> "CandidatePathSet":
        return cls(rec["doc_id"], tuple(parse_path(p) for p in rec["paths"]),
                   rec.get("provenance", FALLBACK))


@dataclass(frozen=True)
class PathAugmentedExample:
    input: str
    target_path: CategoryPath
    target_docid: tuple[str, ...]
    kind: str
    doc_id: str = ""


def doc_representation(doc: Document) -> str:
    return doc.representation(DOC_REPR_CHARS)


class PathIndex:
    """Embedding matrix over a fixed path set, for repeated top-k queries."""

    def __init__(self, paths: Sequence[CategoryPath], encoder: Encoder | None = None):
        if not paths:
            raise AssignmentError("path set is empty")
        self.encoder = encoder or default_encoder()
        self.paths = list(paths)
        self.ids = [linearize(p) for p in self.paths]
        self._by_id = dict(zip(self.ids, self.paths))
        self.matrix = np.stack([self.encoder.embed(i) for i in self.ids])

    def top_k(self, text: str, k: int) -> list[tuple[CategoryPath, float]]:
        ranked = rank_vectors(self.encoder.embed(text), self.ids, self.matrix, k)
        return [(self._by_id[i], s) for i, s in ranked]


def precandidates(
    doc: Document,
    all_paths: Sequence[CategoryPath] | PathIndex,
    k: int = DEFAULT_PRECANDIDATES,
    encoder: Encoder | None = None,
) -> list[tuple[CategoryPath, float]]:
    """Top-``k`` taxonomy paths by similarity to the document's title and opening text."""
    if k < MAX_CANDIDATES:
        raise ValueError(f"k must be >= {MAX_CANDIDATES} so the selector has a real choice")
    index = all_paths if isinstance(all_paths, PathIndex) else PathIndex(all_paths, encoder)
    return index.top_k(doc_representation(doc), k)


# --- selection --------------------------------------------------------------

class PathSelector(Protocol):
    def select(self, title: str, contents: str, candidates: list[str]) -> list[str]: ...


class SelectorError(RuntimeError):
    pass


def render_prompt(template: str, title: str, contents: str, candidates: Sequence[str]) -> str:
    return template.format(title=title, contents=contents, candidates="\n".join(candidates))


class HttpPathSelector:
    """Client for a path-selection service.

    POSTs ``{"title", "contents", "candidates"}`` and expects
    ``{"selected": [...]}``.  Responses are cached on disk by request hash
    when ``cache_dir`` is set.
    """

    def __init__(
        self,
        url: str,
        timeout: float = 30.0,
        cache_dir: str | Path | None = None,
        prompt_template: str | None = None,
    ):
        self.url = url
        self.timeout = timeout
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.prompt_template = prompt_template

    def _body(self, title: str, contents: str, candidates: list[str]) -> bytes:
        payload = {"title": title, "contents": contents, "candidates": candidates}
        if self.prompt_template:
            payload["prompt"] = render_prompt(self.prompt_template, title, contents, candidates)
        return json.dumps(payload, ensure_ascii=False, sort_keys=True).encode("utf-8")

    def select(self, title: str, contents: str, candidates: list[str]) -> list[str]:
        body = self._body(title, contents, candidates)
        cache_file = None
        if self.cache_dir:
            cache_file = self.cache_dir / (hashlib.sha256(body).hexdigest() + ".json")
            if cache_file.exists():
                return json.loads(cache_file.read_text(encoding="utf-8"))["selected"]
        req = urllib.request.Request(
            self.url, data=body, method="POST",
            headers={"Content-Type": "application/json"},
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                data = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, OSError, ValueError) as exc:
            raise SelectorError(f"selector request failed: {exc}") from exc
        selected = data.get("selected") if isinstance(data, dict) else None
        if not isinstance(selected, list) or not all(isinstance(s, str) for s in selected):
            raise SelectorError("selector response lacks a 'selected' string list")
        if cache_file is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            cache_file.write_text(json.dumps({"selected": selected}), encoding="utf-8")
        return selected


def _related(a: CategoryPath, b: CategoryPath) -> bool:
    return a.is_prefix_of(b) or b.is_prefix_of(a)


def fallback_select(pre: Sequence[CategoryPath]) -> list[CategoryPath]:
    """Greedy pick in similarity order, skipping prefixes/extensions of picked paths."""
    chosen: list[CategoryPath] = []
    for p in pre:
        if len(chosen) == MAX_CANDIDATES:
            break
        if not any(_related(p, c) for c in chosen):
            chosen.append(p)
    return chosen or list(pre[:1])


def _normalize_pre(pre) -> list[CategoryPath]:
    # accepts ranked (path, score) pairs or bare paths already in rank order
    return [p[0] if isinstance(p, tuple) else p for p in pre]


def select_candidates(
    doc: Document,
    pre: Sequence[CategoryPath] | Sequence[tuple[CategoryPath, float]],
    selector: PathSelector | None = None,
) -> CandidatePathSet:
    paths = _normalize_pre(pre)
    if not paths:
        raise AssignmentError(f"{doc.doc_id}: no pre-candidate paths")
    if selector is not None:
        allowed = {linearize(p): p for p in paths}
        try:
            reply = selector.select(doc.title or "", doc.text[:SELECTOR_CONTENT_CHARS],
                                    list(allowed))
        except Exception as exc:  # any selector failure falls back
            logger.warning("%s: selector failed (%s); using fallback", doc.doc_id, exc)
            reply = []
        picked: list[CategoryPath] = []
        for s in reply:
            try:
                key = linearize(parse_path(s))
            except TaxonomyError:
                continue
            p = allowed.get(key)
            if p is not None and p not in picked:
                picked.append(p)
            if len(picked) == MAX_CANDIDATES:
                break
        if picked:
            return CandidatePathSet(doc.doc_id, tuple(picked), EXTERNAL)
        logger.info("%s: no valid selector paths; using fallback", doc.doc_id)
    return CandidatePathSet(doc.doc_id, tuple(fallback_select(paths)), FALLBACK)


def assign_paths(
    docs: Sequence[Document],
    all_paths: Sequence[CategoryPath],
    k: int = DEFAULT_PRECANDIDATES,
    selector: PathSelector | None = None,
    max_concurrency: int = 4,
    encoder: Encoder | None = None,
) -> list[CandidatePathSet]:
    """Candidate path sets for every document, returned in doc_id order."""
    index = PathIndex(all_paths, encoder)
    ordered = sorted(docs, key=lambda d: d.doc_id)
    pres = [precandidates(d, index, k) for d in ordered]
    if selector is None or max_concurrency <= 1:
        return [select_candidates(d, pre, selector) for d, pre in zip(ordered, pres)]
    with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
        return list(pool.map(lambda a: select_candidates(a[0], a[1], selector),
                             zip(ordered, pres)))


def save_assignments(sets: Iterable[CandidatePathSet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cs in sets:
            fh.write(json.dumps(cs.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def load_assignments(path: str | Path) -> list[CandidatePathSet]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(CandidatePathSet.from_json(json.loads(line)))
                except (KeyError, ValueError) as exc:
                    raise AssignmentError(f"{path}:{n}: {exc}") from exc
    return out


# --- linking and training data ----------------------------------------------

def _best_path(text: str, paths: Sequence[CategoryPath], encoder: Encoder) -> CategoryPath:
    q = encoder.embed(text)
    scored = [(cosine(q, encoder.embed(linearize(p))), p) for p in paths]
    return min(scored, key=lambda sp: (-sp[0], len(sp[1]), linearize(sp[1])))[1]


def link_query_path(
    q: Query | str, cand: CandidatePathSet, encoder: Encoder | None = None
) -> CategoryPath:
    """Most similar candidate path; ties prefer fewer segments, then lexicographic."""
    text = q if isinstance(q, str) else q.text
    return _best_path(text, cand.paths, encoder or default_encoder())


def firstp(text: str, n_tokens: int = DEFAULT_FIRSTP_TOKENS) -> str:
    return " ".join(text.split()[:n_tokens])


def build_training_set(
    docs: Sequence[Document],
    queries: Sequence[Query],
    assignments: Mapping[str, CandidatePathSet] | Iterable[CandidatePathSet],
    docids: DocidTable,
    firstp_tokens: int = DEFAULT_FIRSTP_TOKENS,
    max_synthetic: int = MAX_SYNTHETIC,
    encoder: Encoder | None = None,
) -> list[PathAugmentedExample]:
    """Retrieval and indexing examples, each carrying its linked category path."""
    enc = encoder or default_encoder()
    if not isinstance(assignments, Mapping):
        assignments = {cs.doc_id: cs for cs in assignments}
    by_id = {d.doc_id: d for d in docs}
    for d in docs:
        if d.doc_id not in assignments:
            raise AssignmentError(f"document {d.doc_id!r} has no candidate path set")
        if d.doc_id not in docids.entries:
            raise AssignmentError(f"document {d.doc_id!r} has no docid")

    out: list[PathAugmentedExample] = []
    for doc_id in sorted(by_id):
        doc, cand, did = by_id[doc_id], assignments[doc_id], docids.entries[doc_id]
        doc_path = _best_path(doc_representation(doc), cand.paths, enc)
        out.append(PathAugmentedExample(firstp(doc.text, firstp_tokens), doc_path, did,
                                        KIND_FIRSTP, doc_id))
        for sq in doc.synthetic_queries[:max_synthetic]:
            out.append(PathAugmentedExample(sq, _best_path(sq, cand.paths, enc), did,
                                            KIND_SYNTHETIC, doc_id))
    for q in sorted(queries, key=lambda q: q.query_id):
        if q.gold_docid not in by_id:
            raise AssignmentError(
                f"query {q.query_id!r} references unknown doc {q.gold_docid!r}"
            )
        cand = assignments[q.gold_docid]
        out.append(PathAugmentedExample(q.text, _best_path(q.text, cand.paths, enc),
                                        docids.entries[q.gold_docid], KIND_RETRIEVAL,
                                        q.gold_docid))
    return out


def save_examples(examples: Iterable[PathAugmentedExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            rec = {"input": ex.input, "target_path": linearize(ex.target_path),
                   "target_docid": list(ex.target_docid), "kind": ex.kind,
                   "doc_id": ex.doc_id}
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def load_examples(path: str | Path) -> list[PathAugmentedExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                out.append(PathAugmentedExample(r["input"], parse_path(r["target_path"]),
                                                tuple(r["target_docid"]), r["kind"],
                                                r.get("doc_id", "")))
    return out

"""Corpus and query ingestion, docid schemes, and prefix tries for decoding."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Hashable, Iterable, Iterator, Sequence

from .tokens import DOC, EOS, SPECIALS, UNK, tokenize

SCHEMES = ("title", "keyword", "summary", "atomic")
TITLE_FALLBACK_TOKENS = 16
SUMMARY_MAX_TOKENS = 24


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    title: str | None = None
    synthetic_queries: tuple[str, ...] = ()

    def representation(self, n_chars: int = 256) -> str:
        """Title plus the first ``n_chars`` characters of text."""
        return f"{self.title or ''} {self.text[:n_chars]}".strip()


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    gold_docid: str
    split: str | None = None


def _read_jsonl(path: Path) -> Iterator[tuple[int, dict[str, Any]]]:
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{n}: malformed JSON: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise CorpusError(f"{path}:{n}: expected a JSON object")
            yield n, rec


def load_documents(path: str | Path) -> list[Document]:
    path = Path(path)
    docs: list[Document] = []
    seen: set[str] = set()
    for n, rec in _read_jsonl(path):
        try:
            doc_id = str(rec["doc_id"])
            text = rec["text"]
        except KeyError as exc:
            raise CorpusError(f"{path}:{n}: missing field {exc.args[0]!r}") from exc
        if not isinstance(text, str) or not text.strip():
            raise CorpusError(f"{path}:{n}: document text must be a nonempty string")
        if doc_id in seen:
            raise CorpusError(f"{path}:{n}: duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        title = rec.get("title")
        docs.append(Document(
            doc_id=doc_id,
            text=text,
            title=title if title else None,
            synthetic_queries=tuple(rec.get("synthetic_queries") or ()),
        ))
    return docs


def load_queries(path: str | Path, docs: Sequence[Document] | None = None) -> list[Query]:
    path = Path(path)
    known = None if docs is None else {d.doc_id for d in docs}
    out: list[Query] = []
    for n, rec in _read_jsonl(path):
        try:
            q = Query(
                query_id=str(rec["query_id"]),
                text=rec["text"],
                gold_docid=str(rec["gold_docid"]),
                split=rec.get("split"),
            )
        except KeyError as exc:
            raise CorpusError(f"{path}:{n}: missing field {exc.args[0]!r}") from exc
        if not isinstance(q.text, str) or not q.text.strip():
            raise CorpusError(f"{path}:{n}: query {q.query_id!r} has empty text")
        if known is not None and q.gold_docid not in known:
            raise CorpusError(
                f"{path}:{n}: query {q.query_id!r} references unknown doc {q.gold_docid!r}"
            )
        out.append(q)
    return out


def ingest_corpus(corpus_file, queries_file) -> tuple[list[Document], list[Query]]:
    docs = load_documents(corpus_file)
    return docs, load_queries(queries_file, docs)


def write_documents(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            rec = {"doc_id": d.doc_id, "title": d.title, "text": d.text,
                   "synthetic_queries": list(d.synthetic_queries)}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def write_queries(queries: Iterable[Query], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            rec = {"query_id": q.query_id, "text": q.text, "gold_docid": q.gold_docid}
            if q.split:
                rec["split"] = q.split
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


# --- docids -----------------------------------------------------------------

_term_re = re.compile(r"[^\W_]+")
_sentence_re = re.compile(r"[.!?]")


def terms(text: str) -> list[str]:
    return _term_re.findall(text.lower())


def _content_tokens(text: str) -> list[str]:
    return [t for t in tokenize(text) if t not in SPECIALS or t == ">"]


def tfidf_keywords(docs: Sequence[Document], n: int) -> dict[str, list[str]]:
    """Top-``n`` terms per document by raw tf * ln(N / df), ties by term."""
    counts = {d.doc_id: Counter(terms(d.text)) for d in docs}
    df: Counter[str] = Counter()
    for c in counts.values():
        df.update(c.keys())
    N = len(docs)
    out = {}
    for doc_id, c in counts.items():
        scored = sorted(c.items(), key=lambda kv: (-kv[1] * math.log(N / df[kv[0]]), kv[0]))
        out[doc_id] = [t for t, _ in scored[:n]]
    return out


def first_sentence(text: str) -> str:
    for piece in _sentence_re.split(text):
        if piece.strip():
            return piece.strip()
    return text.strip()


@dataclass
class DocidTable:
    scheme: str
    entries: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def by_tokens(self) -> dict[tuple[str, ...], str]:
        return {v: k for k, v in self.entries.items()}

    def vocabulary(self) -> set[str]:
        return {t for toks in self.entries.values() for t in toks}

    def to_json(self) -> dict[str, Any]:
        return {"scheme": self.scheme,
                "entries": {k: list(v) for k, v in sorted(self.entries.items())}}

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "DocidTable":
        return cls(data["scheme"], {k: tuple(v) for k, v in data["entries"].items()})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), ensure_ascii=False, indent=1, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "DocidTable":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def assign_docids(
    docs: Sequence[Document],
    scheme: str = "title",
    n_keywords: int = 3,
) -> DocidTable:
    """Build a docid table for ``docs`` under ``scheme``.

    Colliding identifiers get ``#2``, ``#3``, ... appended, handed out in
    doc_id order.
    """
    if not docs:
        raise CorpusError("cannot assign docids to an empty corpus")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown docid scheme {scheme!r}; expected one of {SCHEMES}")

    keywords = tfidf_keywords(docs, n_keywords) if scheme == "keyword" else {}
    raw: dict[str, list[str]] = {}
    for d in docs:
        if scheme == "title":
            toks = _content_tokens(d.title or "")
            if not toks:
                toks = _content_tokens(d.text)[:TITLE_FALLBACK_TOKENS]
        elif scheme == "keyword":
            toks = keywords[d.doc_id]
        elif scheme == "summary":
            toks = _content_tokens(first_sentence(d.text))[:SUMMARY_MAX_TOKENS]
        else:
            toks = [f"doc_{d.doc_id}"]
        if not toks:
            toks = [f"doc_{d.doc_id}"]
        raw[d.doc_id] = toks

    entries: dict[str, tuple[str, ...]] = {}
    used: set[tuple[str, ...]] = set()
    for doc_id in sorted(raw):
        base = tuple(raw[doc_id])
        seq, n = base, 1
        while seq in used:
            n += 1
            seq = base + (f"#{n}",)
        used.add(seq)
        entries[doc_id] = seq
    return DocidTable(scheme, entries)


# --- trie -------------------------------------------------------------------

class TrieNode:
    __slots__ = ("children", "payload", "terminal")

    def __init__(self):
        self.children: dict[str, TrieNode] = {}
        self.payload: Hashable = None
        self.terminal = False


class Trie:
    """Prefix tree over end-token-terminated token sequences."""

    def __init__(self, end_token: str = EOS):
        self.root = TrieNode()
        self.end_token = end_token
        self.size = 0
        self.depth = 0

    def add(self, tokens: Sequence[str], payload: Hashable) -> None:
        if not tokens:
            raise ValueError("cannot add an empty token sequence")
        if self.end_token in tokens:
            raise ValueError(f"sequence contains the end token {self.end_token!r}")
        node = self.root
        for tok in list(tokens) + [self.end_token]:
            node = node.children.setdefault(tok, TrieNode())
        if node.terminal:
            if node.payload != payload:
                raise ValueError(
                    f"duplicate sequence {list(tokens)} for {node.payload!r} and {payload!r}"
                )
            return
        node.terminal = True
        node.payload = payload
        self.size += 1
        self.depth = max(self.depth, len(tokens) + 1)

    def __len__(self) -> int:
        return self.size

    def find(self, tokens: Sequence[str]) -> TrieNode | None:
        node = self.root
        for tok in tokens:
            node = node.children.get(tok)
            if node is None:
                return None
        return node

    def accepts(self, tokens: Sequence[str]) -> bool:
        """True for a complete sequence including its end token."""
        node = self.find(tokens)
        return node is not None and node.terminal

    def lookup(self, tokens: Sequence[str]) -> Hashable:
        node = self.find(list(tokens) + [self.end_token])
        if node is None or not node.terminal:
            raise KeyError(tuple(tokens))
        return node.payload

    def words(self) -> list[tuple[tuple[str, ...], Hashable]]:
        """All (sequence-without-end-token, payload) pairs, sorted by sequence."""
        out = []
        stack: list[tuple[TrieNode, tuple[str, ...]]] = [(self.root, ())]
        while stack:
            node, prefix = stack.pop()
            if node.terminal:
                out.append((prefix[:-1], node.payload))
            for tok, child in node.children.items():
                stack.append((child, prefix + (tok,)))
        return sorted(out, key=lambda w: w[0])


def build_trie(
    sequences: Iterable[tuple[Sequence[str], Hashable]], end_token: str = EOS
) -> Trie:
    trie = Trie(end_token)
    for tokens, payload in sequences:
        trie.add(tokens, payload)
    if not len(trie):
        raise ValueError("cannot build a trie from no sequences")
    return trie


def docid_trie(table: DocidTable, doc_ids: Iterable[str] | None = None) -> Trie:
    keys = sorted(table.entries) if doc_ids is None else sorted(doc_ids)
    return build_trie((table.entries[k], k) for k in keys)


__all__ = [
    "CorpusError", "Document", "Query", "DocidTable", "Trie", "TrieNode",
    "SCHEMES", "assign_docids", "build_trie", "docid_trie", "ingest_corpus",
    "load_documents", "load_queries", "tfidf_keywords", "first_sentence",
    "write_documents", "write_queries", "DOC", "EOS", "UNK",
]

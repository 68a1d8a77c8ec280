"""Conditional next-token models over ``path [DOC] docid </s>`` targets.

Two count-based models implement the same interface:

* :class:`TabularScorer` memorizes ``input -> target`` counts exactly and is
  used where an exact oracle is needed.
* :class:`MixtureScorer` interpolates an add-alpha smoothed target bigram,
  an input-to-target translation table, and a target unigram.

Any object with ``vocab`` and ``next_token_dist(input, prefix)`` can stand in
for these in the decoder.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .taxonomy import CategoryPath, linearize
from .tokens import BOS, DOC, EOS, SPECIALS, UNK, tokenize

PROB_FLOOR = 1e-12
LOG_FLOOR = math.log(PROB_FLOOR)
DEFAULT_LAMBDA = (0.4, 0.5, 0.1)
DEFAULT_ALPHA = 0.1


def floored_log(p: float) -> float:
    return max(math.log(p), LOG_FLOOR) if p > 0 else LOG_FLOOR


class Vocabulary:
    def __init__(self, tokens: Iterable[str] = ()):
        rest = sorted(set(tokens) - set(SPECIALS))
        self.tokens: list[str] = list(SPECIALS) + rest
        self.index: dict[str, int] = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, tok: str) -> bool:
        return tok in self.index

    def id(self, tok: str) -> int:
        return self.index.get(tok, self.index[UNK])

    def map_unknown(self, toks: Sequence[str]) -> tuple[str, ...]:
        return tuple(t if t in self.index else UNK for t in toks)


def target_sequence(p: CategoryPath, docid: Sequence[str]) -> list[str]:
    if not docid:
        raise ValueError("docid must be nonempty")
    return tokenize(linearize(p)) + [DOC] + list(docid) + [EOS]


def split_target(target: Sequence[str]) -> tuple[list[str], list[str]]:
    """Inverse of :func:`target_sequence`: (path tokens, docid tokens)."""
    i = list(target).index(DOC)
    tail = list(target[i + 1:])
    if tail and tail[-1] == EOS:
        tail = tail[:-1]
    return list(target[:i]), tail


class Scorer:
    """Base class; subclasses provide :meth:`next_token_dist`."""

    kind = "base"
    vocab: Vocabulary

    def next_token_dist(self, input: Sequence[str], prefix: Sequence[str]) -> np.ndarray:
        raise NotImplementedError

    def token_probs(
        self, input: Sequence[str], prefix: Sequence[str], candidates: Sequence[str]
    ) -> list[float]:
        """Probabilities of ``candidates`` as the next token (decoder fast path)."""
        dist = self.next_token_dist(input, prefix)
        return [float(dist[self.vocab.id(t)]) for t in candidates]

    def sequence_logprob(self, input: Sequence[str], target: Sequence[str]) -> float:
        return sequence_logprob(self, input, target)


def sequence_logprob(m: Scorer, input: Sequence[str], target: Sequence[str]) -> float:
    """Sum of floored next-token log-probabilities along ``target``."""
    if not target or target[-1] != EOS:
        raise ValueError("target must end with </s>")
    total = 0.0
    for i, tok in enumerate(target):
        total += floored_log(m.next_token_dist(input, target[:i])[m.vocab.id(tok)])
    return total


@dataclass(frozen=True)
class TrainingPair:
    input: tuple[str, ...]
    target: tuple[str, ...]


class TabularScorer(Scorer):
    """Exact empirical P(target | input) with chain-rule conditionals."""

    kind = "tabular"

    def __init__(self, vocab: Vocabulary, table: dict[tuple[str, ...], Counter]):
        self.vocab = vocab
        self.table = table
        self._uniform = np.full(len(vocab), 1.0 / len(vocab))
        self._uniform.setflags(write=False)

    def _next_counts(self, input, prefix) -> Counter | None:
        targets = self.table.get(tuple(input))
        if not targets:
            return None
        prefix = tuple(prefix)
        n = len(prefix)
        nxt: Counter = Counter()
        for tgt, c in targets.items():
            if len(tgt) > n and tgt[:n] == prefix:
                nxt[tgt[n]] += c
        return nxt or None

    def next_token_dist(self, input, prefix) -> np.ndarray:
        nxt = self._next_counts(input, prefix)
        if nxt is None:
            return self._uniform
        total = sum(nxt.values())
        dist = np.zeros(len(self.vocab))
        for tok, c in nxt.items():
            dist[self.vocab.id(tok)] += c / total
        return dist

    def token_probs(self, input, prefix, candidates) -> list[float]:
        nxt = self._next_counts(input, prefix)
        if nxt is None:
            return [1.0 / len(self.vocab)] * len(candidates)
        total = sum(nxt.values())
        return [nxt.get(t, 0) / total for t in candidates]

    def to_json(self) -> dict[str, Any]:
        rows = []
        for inp in sorted(self.table):
            targets = [{"target": list(t), "count": c}
                       for t, c in sorted(self.table[inp].items())]
            rows.append({"input": list(inp), "targets": targets})
        return {"kind": self.kind, "lambda": None, "alpha": None,
                "vocab": self.vocab.tokens, "counts": rows}

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "TabularScorer":
        vocab = Vocabulary(data["vocab"])
        table = {tuple(r["input"]): Counter({tuple(t["target"]): t["count"]
                                             for t in r["targets"]})
                 for r in data["counts"]}
        return cls(vocab, table)


class MixtureScorer(Scorer):
    """Interpolated bigram / translation / unigram model, add-alpha smoothed.

    ``P(t | x, h) = l1*P_bi(t | h[-1]) + l2*mean_{w in x} P_tr(t | w) + l3*P_uni(t)``
    """

    kind = "mixture"

    def __init__(
        self,
        vocab: Vocabulary,
        bigram: dict[str, Counter],
        translation: dict[str, Counter],
        unigram: Counter,
        lam: Sequence[float] = DEFAULT_LAMBDA,
        alpha: float = DEFAULT_ALPHA,
    ):
        lam = tuple(float(x) for x in lam)
        if len(lam) != 3 or any(x < 0 for x in lam) or abs(sum(lam) - 1.0) > 1e-9:
            raise ValueError(f"lambda must be 3 nonnegative weights summing to 1, got {lam}")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.vocab = vocab
        self.bigram = bigram
        self.translation = translation
        self.unigram = unigram
        self.lam = lam
        self.alpha = float(alpha)
        V = len(vocab)
        self._bi_tot = {k: sum(c.values()) for k, c in bigram.items()}
        self._tr_tot = {k: sum(c.values()) for k, c in translation.items()}
        self._uni_tot = sum(unigram.values())
        self._uni_vec = self._smoothed(unigram, self._uni_tot)
        self._row = lru_cache(maxsize=4096)(self._row_uncached)
        self._input_vec = lru_cache(maxsize=256)(self._input_uncached)
        self._input_sparse = lru_cache(maxsize=256)(self._input_sparse_uncached)
        self._V = V

    def _smoothed(self, counts: Counter, total: float) -> np.ndarray:
        vec = np.full(len(self.vocab), self.alpha)
        for tok, c in counts.items():
            vec[self.vocab.id(tok)] += c
        return vec / (total + self.alpha * len(self.vocab))

    def _row_uncached(self, table: str, ctx: str) -> np.ndarray:
        if table == "bi":
            return self._smoothed(self.bigram.get(ctx, Counter()), self._bi_tot.get(ctx, 0))
        return self._smoothed(self.translation.get(ctx, Counter()), self._tr_tot.get(ctx, 0))

    def _weights(self, input: tuple[str, ...]) -> tuple[float, float, float]:
        l1, l2, l3 = self.lam
        if input:
            return l1, l2, l3
        z = l1 + l3
        if z == 0:
            return 0.0, 0.0, 0.0
        return l1 / z, 0.0, l3 / z

    def _context(self, prefix: Sequence[str]) -> str:
        if not prefix:
            return BOS
        last = prefix[-1]
        return last if last in self.vocab else UNK

    def _input_uncached(self, input: tuple[str, ...]) -> np.ndarray:
        # input-dependent part: l2 * translation average + l3 * unigram
        _, l2, l3 = self._weights(input)
        vec = l3 * self._uni_vec
        if input:
            tr = sum(self._row("tr", w) for w in input) / len(input)
            vec = vec + l2 * tr
        return vec

    def next_token_dist(self, input, prefix) -> np.ndarray:
        x = self.vocab.map_unknown(input)
        l1, _, _ = self._weights(x)
        dist = self._input_vec(x)
        if l1:
            dist = dist + l1 * self._row("bi", self._context(prefix))
        if not any(self._weights(x)):
            return np.full(self._V, 1.0 / self._V)
        return dist

    def _input_sparse_uncached(self, input: tuple[str, ...]):
        # (constant, sparse dict) decomposition of the input-dependent part
        _, l2, l3 = self._weights(input)
        a, V = self.alpha, self._V
        const = l3 * a / (self._uni_tot + a * V)
        sparse: dict[str, float] = defaultdict(float)
        for tok, c in self.unigram.items():
            sparse[tok] += l3 * c / (self._uni_tot + a * V)
        if input:
            scale = l2 / len(input)
            for w in input:
                denom = self._tr_tot.get(w, 0) + a * V
                const += scale * a / denom
                for tok, c in self.translation.get(w, {}).items():
                    sparse[tok] += scale * c / denom
        return const, dict(sparse)

    def token_probs(self, input, prefix, candidates) -> list[float]:
        x = self.vocab.map_unknown(input)
        l1, _, _ = self._weights(x)
        if not any(self._weights(x)):
            return [1.0 / self._V] * len(candidates)
        const, sparse = self._input_sparse(x)
        ctx = self._context(prefix)
        bi = self.bigram.get(ctx, {})
        bden = self._bi_tot.get(ctx, 0) + self.alpha * self._V
        out = []
        for t in candidates:
            t = t if t in self.vocab else UNK
            p = const + sparse.get(t, 0.0)
            if l1:
                p += l1 * (bi.get(t, 0) + self.alpha) / bden
            out.append(p)
        return out

    def to_json(self) -> dict[str, Any]:
        def dump(table: dict[str, Counter]) -> dict[str, dict[str, int]]:
            return {k: dict(sorted(v.items())) for k, v in sorted(table.items())}

        return {
            "kind": self.kind,
            "lambda": list(self.lam),
            "alpha": self.alpha,
            "vocab": self.vocab.tokens,
            "counts": {
                "bigram": dump(self.bigram),
                "translation": dump(self.translation),
                "unigram": dict(sorted(self.unigram.items())),
            },
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "MixtureScorer":
        c = data["counts"]
        return cls(
            Vocabulary(data["vocab"]),
            {k: Counter(v) for k, v in c["bigram"].items()},
            {k: Counter(v) for k, v in c["translation"].items()},
            Counter(c["unigram"]),
            lam=data["lambda"],
            alpha=data["alpha"],
        )


def _pairs(examples) -> list[TrainingPair]:
    pairs = []
    for ex in examples:
        if isinstance(ex, TrainingPair):
            pair = ex
        else:
            pair = TrainingPair(tuple(tokenize(ex.input)),
                                tuple(target_sequence(ex.target_path, ex.target_docid)))
        if not pair.target:
            raise ValueError("training example with empty target")
        pairs.append(pair)
    if not pairs:
        raise ValueError("no training examples")
    return pairs


def train(
    examples: Sequence,
    kind: str = "mixture",
    lam: Sequence[float] = DEFAULT_LAMBDA,
    alpha: float = DEFAULT_ALPHA,
    extra_tokens: Iterable[str] = (),
) -> Scorer:
    """Fit a scorer on path-augmented examples (or raw :class:`TrainingPair`).

    ``extra_tokens`` (typically the docid table vocabulary) are added to the
    vocabulary.  Counts do not depend on example order.
    """
    pairs = _pairs(examples)
    toks: set[str] = set(extra_tokens)
    for p in pairs:
        toks.update(p.input)
        toks.update(p.target)
    vocab = Vocabulary(toks)

    if kind == "tabular":
        table: dict[tuple[str, ...], Counter] = defaultdict(Counter)
        for p in pairs:
            table[p.input][p.target] += 1
        return TabularScorer(vocab, dict(table))
    if kind != "mixture":
        raise ValueError(f"unknown scorer kind {kind!r}")

    bigram: dict[str, Counter] = defaultdict(Counter)
    translation: dict[str, Counter] = defaultdict(Counter)
    unigram: Counter = Counter()
    for p in pairs:
        tgt_counts = Counter(p.target)
        unigram.update(tgt_counts)
        prev = BOS
        for t in p.target:
            bigram[prev][t] += 1
            prev = t
        for w in p.input:
            translation[w].update(tgt_counts)
    return MixtureScorer(vocab, dict(bigram), dict(translation), unigram, lam, alpha)


def save_model(m: Scorer, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(m.to_json(), ensure_ascii=False, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_model(path: str | Path) -> Scorer:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data["kind"] == "tabular":
        return TabularScorer.from_json(data)
    if data["kind"] == "mixture":
        return MixtureScorer.from_json(data)
    raise ValueError(f"unknown model kind {data['kind']!r}")

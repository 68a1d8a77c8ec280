"""Trie-constrained beam search and two-stage (path, then docid) decoding."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Hashable, Sequence

from .corpus import Trie, TrieNode, build_trie
from .scorer import Scorer, floored_log
from .taxonomy import CategoryPath, linearize
from .tokens import DOC, EOS, SEP, tokenize


@dataclass(frozen=True)
class BeamHypothesis:
    tokens: tuple[str, ...]
    logprob: float
    node: TrieNode | None = field(compare=False, default=None)
    finished: bool = False


@dataclass(frozen=True)
class DecodeResult:
    sequences: tuple[tuple[tuple[str, ...], float, Hashable], ...]

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    @property
    def payloads(self) -> list[Hashable]:
        return [p for _, _, p in self.sequences]


def _rank_key(h: BeamHypothesis):
    return (-h.logprob, h.tokens)


def constrained_beam_search(
    m: Scorer,
    input: Sequence[str],
    trie: Trie,
    beam: int,
    max_len: int = 64,
    prefix: Sequence[str] = (),
) -> DecodeResult:
    """Beam search restricted to ``trie`` continuations.

    ``prefix`` is fed to the model as already-generated context; its tokens
    are not scored.  Finished hypotheses leave the beam, so live slots are
    never spent on them.  Scores are raw summed log-probabilities.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    if not len(trie):
        raise ValueError("empty trie")
    if max_len < trie.depth:
        raise ValueError(f"max_len {max_len} shorter than longest trie word ({trie.depth})")
    input = tuple(input)
    prefix = tuple(prefix)
    end = trie.end_token

    live = [BeamHypothesis((), 0.0, trie.root)]
    finished: list[BeamHypothesis] = []
    for _ in range(max_len):
        candidates: list[BeamHypothesis] = []
        for h in live:
            toks = list(h.node.children)
            probs = m.token_probs(input, prefix + h.tokens, toks)
            for tok, p in zip(toks, probs):
                child = h.node.children[tok]
                nh = BeamHypothesis(h.tokens + (tok,), h.logprob + floored_log(p), child,
                                    tok == end and child.terminal)
                (finished if nh.finished else candidates).append(nh)
        if not candidates:
            break
        live = heapq.nsmallest(beam, candidates, key=_rank_key)
        if len(finished) >= beam:
            worst = heapq.nsmallest(beam, finished, key=_rank_key)[-1].logprob
            # scores only fall as hypotheses grow
            if live[0].logprob < worst:
                break
    best = sorted(finished, key=_rank_key)[:beam]
    return DecodeResult(tuple((h.tokens[:-1], h.logprob, h.node.payload) for h in best))


def unconstrained_beam_search(
    m: Scorer,
    input: Sequence[str],
    stop_token: str,
    beam: int,
    max_len: int = 64,
) -> list[tuple[tuple[str, ...], float]]:
    """Free beam search over the whole vocabulary until ``stop_token``.

    The stop token is not allowed as the first token (empty output).
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    vocab = [t for t in m.vocab.tokens if t != EOS or stop_token == EOS]
    input = tuple(input)
    live: list[tuple[tuple[str, ...], float]] = [((), 0.0)]
    finished: list[tuple[tuple[str, ...], float]] = []
    for _ in range(max_len):
        cand = []
        for toks, lp in live:
            for tok, p in zip(vocab, m.token_probs(input, toks, vocab)):
                if tok == stop_token and not toks:
                    continue
                item = (toks + (tok,), lp + floored_log(p))
                (finished if tok == stop_token else cand).append(item)
        if not cand:
            break
        live = heapq.nsmallest(beam, cand, key=lambda x: (-x[1], x[0]))
        done = sorted(finished, key=lambda x: (-x[1], x[0]))[:beam]
        if len(done) >= beam and live[0][1] < done[-1][1]:
            break
    return sorted(finished, key=lambda x: (-x[1], x[0]))[:beam]


def path_tokens(p: CategoryPath) -> list[str]:
    return tokenize(linearize(p))


def build_path_trie(paths: Sequence[CategoryPath]) -> Trie:
    """Trie over tokenized paths, terminated by the ``[DOC]`` separator.

    Paths that tokenize identically (case-only differences) keep the first
    in sorted order.
    """
    seen: dict[tuple[str, ...], CategoryPath] = {}
    for p in sorted(set(paths)):
        seen.setdefault(tuple(path_tokens(p)), p)
    return build_trie(seen.items(), end_token=DOC)


def _path_from_tokens(toks: Sequence[str]) -> CategoryPath | None:
    segs, cur = [], []
    for t in toks:
        if t == SEP:
            segs.append(" ".join(cur))
            cur = []
        else:
            cur.append(t)
    segs.append(" ".join(cur))
    if any(not s for s in segs):
        return None
    return CategoryPath(tuple(segs))


def generate_paths(
    m: Scorer,
    query: Sequence[str],
    path_trie: Trie,
    k_paths: int = 3,
    max_len: int = 64,
    beam: int | None = None,
    constrained: bool = True,
) -> list[tuple[CategoryPath, float]]:
    """Up to ``k_paths`` distinct category paths for ``query``.

    ``beam`` widens the search beyond ``k_paths`` when given; the result is
    still cut to ``k_paths``.  The score of a path includes its closing
    ``[DOC]`` token, so path score plus docid score is the full target
    log-likelihood.
    """
    if k_paths < 1:
        raise ValueError("k_paths must be >= 1")
    width = max(k_paths, beam or 0)
    if constrained:
        res = constrained_beam_search(m, query, path_trie, width, max(max_len, path_trie.depth))
        return [(p, lp) for _, lp, p in res.sequences[:k_paths]]
    out: list[tuple[CategoryPath, float]] = []
    known = {toks: p for toks, p in path_trie.words()}
    for toks, lp in unconstrained_beam_search(m, query, DOC, width, max_len):
        body = toks[:-1]
        p = known.get(body) or _path_from_tokens(body)
        if p is not None and p not in [q for q, _ in out]:
            out.append((p, lp))
        if len(out) == k_paths:
            break
    return out


def decode_docids(
    m: Scorer,
    query: Sequence[str],
    p: CategoryPath,
    docid_trie: Trie,
    m_beam: int = 100,
    max_len: int = 64,
) -> DecodeResult:
    """Docids under path ``p``; scores cover docid tokens and ``</s>`` only."""
    return constrained_beam_search(m, query, docid_trie, m_beam, max_len,
                                   prefix=path_tokens(p) + [DOC])

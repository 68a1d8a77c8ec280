import math
import random
from collections import Counter
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathgr.scorer import (
    LOG_FLOOR,
    TrainingPair,
    Vocabulary,
    load_model,
    save_model,
    sequence_logprob,
    split_target,
    target_sequence,
    train,
)
from pathgr.taxonomy import CategoryPath
from pathgr.tokens import DOC, EOS, SPECIALS, UNK


def pair(inp, tgt):
    return TrainingPair(tuple(inp.split()), tuple(tgt.split()))


def test_vocab_specials_first():
    v = Vocabulary(["b", "a", EOS])
    assert v.tokens == list(SPECIALS) + ["a", "b"]
    assert v.id("zzz") == v.index[UNK]


def test_target_sequence():
    assert target_sequence(CategoryPath(("economy",)), ["dubai"]) == ["economy", DOC, "dubai", EOS]
    t = target_sequence(CategoryPath(("Economy", "Economy by cities")), ["dubai", "#2"])
    assert t.count(">") == 1
    assert split_target(t) == (["economy", ">", "economy", "by", "cities"], ["dubai", "#2"])


def test_tabular_single_pair():
    m = train([pair("q", "a b </s>")], kind="tabular")
    tgt = ["a", "b", EOS]
    for j in range(3):
        dist = m.next_token_dist(["q"], tgt[:j])
        assert dist[m.vocab.id(tgt[j])] == 1.0
    assert sequence_logprob(m, ["q"], tgt) == 0.0


def test_tabular_unseen_is_uniform():
    m = train([pair("q", "a </s>")], kind="tabular")
    dist = m.next_token_dist(["nope"], [])
    assert np.allclose(dist, 1 / len(m.vocab))
    dist = m.next_token_dist(["q"], ["b"])
    assert np.allclose(dist, 1 / len(m.vocab))


def test_tabular_chain_rule_matches_empirical():
    pairs = [pair("q", "a b </s>"), pair("q", "a c </s>"), pair("q", "a b </s>"),
             pair("q", "d </s>"), pair("r", "a </s>")]
    m = train(pairs, kind="tabular")
    counts = Counter((p.input, p.target) for p in pairs)
    totals = Counter(p.input for p in pairs)
    for (inp, tgt), c in counts.items():
        assert math.exp(sequence_logprob(m, inp, tgt)) == pytest.approx(c / totals[inp], abs=1e-12)


def test_mixture_hand_counts():
    m = train([pair("q", "a </s>")])
    assert m.bigram == {"<s>": Counter({"a": 1}), "a": Counter({EOS: 1})}
    assert m.translation == {"q": Counter({"a": 1, EOS: 1})}
    assert m.unigram == Counter({"a": 1, EOS: 1})


def test_mixture_counts_double():
    one = train([pair("q", "a </s>")])
    two = train([pair("q", "a </s>")] * 2)
    for table in ("bigram", "translation"):
        for ctx, row in getattr(one, table).items():
            assert getattr(two, table)[ctx] == Counter({t: 2 * c for t, c in row.items()})
            ratios = {t: c / sum(row.values()) for t, c in row.items()}
            row2 = getattr(two, table)[ctx]
            assert ratios == {t: c / sum(row2.values()) for t, c in row2.items()}


def test_mixture_formula_spreadsheet():
    # vocab = </s> [DOC] [UNK] > a q  (V=6), lambda=(.4,.5,.1), alpha=.1
    m = train([pair("q", "a </s>")], lam=(0.4, 0.5, 0.1), alpha=0.1)
    l1, l2, l3, a, V = F(2, 5), F(1, 2), F(1, 10), F(1, 10), 6
    bi_s = {"a": (1 + a) / (1 + a * V)}          # context <s>: one count on a
    bi_a = {EOS: (1 + a) / (1 + a * V)}          # context a: one count on </s>
    tr = {"a": (1 + a) / (2 + a * V), EOS: (1 + a) / (2 + a * V)}
    uni = dict(tr)                               # unigram counts equal the q row

    def p(tok, bi_row, bi_tot):
        bi = bi_row.get(tok, a / (bi_tot + a * V))
        return l1 * bi + l2 * tr.get(tok, a / (2 + a * V)) + l3 * uni.get(tok, a / (2 + a * V))

    for prefix, row in (([], bi_s), (["a"], bi_a)):
        dist = m.next_token_dist(["q"], prefix)
        for tok in m.vocab.tokens:
            assert dist[m.vocab.id(tok)] == pytest.approx(float(p(tok, row, 1)), abs=1e-12)
    # a few frozen values for the empty prefix
    dist = m.next_token_dist(["q"], [])
    assert dist[m.vocab.id("a")] == pytest.approx(0.5288461538461539, abs=1e-12)
    assert dist[m.vocab.id(EOS)] == pytest.approx(0.2788461538461538, abs=1e-12)
    assert dist[m.vocab.id("q")] == pytest.approx(0.04807692307692308, abs=1e-12)


def test_mixture_empty_input_renormalizes():
    m = train([pair("q", "a </s>")], lam=(0.4, 0.5, 0.1), alpha=0.1)
    dist = m.next_token_dist([], [])
    bi = m._row("bi", "<s>")
    assert np.allclose(dist, 0.8 * bi + 0.2 * m._uni_vec, atol=1e-12)
    assert dist.sum() == pytest.approx(1.0, abs=1e-9)


def test_mixture_unigram_only_limit():
    m = train([pair("q", "a a b </s>")], lam=(0, 0, 1), alpha=1e-9)
    dist = m.next_token_dist(["q"], [])
    assert dist[m.vocab.id("a")] == pytest.approx(0.5, abs=1e-6)
    assert dist[m.vocab.id("b")] == pytest.approx(0.25, abs=1e-6)


def test_unknown_input_tokens():
    m = train([pair("q", "a </s>")])
    dist = m.next_token_dist(["never", "seen"], [])
    assert np.all(dist > 0) and dist.sum() == pytest.approx(1.0, abs=1e-9)


def test_bad_lambda():
    with pytest.raises(ValueError):
        train([pair("q", "a </s>")], lam=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        train([pair("q", "a </s>")], alpha=0)
    with pytest.raises(ValueError):
        train([])


def test_token_probs_agree_with_full_distribution():
    rng = random.Random(2)
    words = "a b c d e f".split()
    pairs = [TrainingPair(tuple(rng.sample(words, 2)), tuple(rng.sample(words, 3)) + (EOS,))
             for _ in range(20)]
    for kind in ("mixture", "tabular"):
        m = train(pairs, kind=kind)
        for p in pairs[:5]:
            for j in range(len(p.target)):
                dist = m.next_token_dist(p.input, p.target[:j])
                fast = m.token_probs(p.input, p.target[:j], m.vocab.tokens)
                assert np.allclose(fast, dist, atol=1e-12)


def test_sequence_logprob_sum_and_floor():
    m = train([pair("q", "a </s>"), pair("r", "b </s>")], kind="tabular")
    tgt = ["b", EOS]
    steps = [math.log(max(m.next_token_dist(["q"], tgt[:i])[m.vocab.id(t)], 1e-12))
             for i, t in enumerate(tgt)]
    assert sequence_logprob(m, ["q"], tgt) == pytest.approx(sum(steps), abs=1e-12)
    # "b" has no mass after input q (floored), then the unmatched prefix is uniform
    assert sequence_logprob(m, ["q"], tgt) == pytest.approx(LOG_FLOOR - math.log(len(m.vocab)))
    with pytest.raises(ValueError):
        sequence_logprob(m, ["q"], ["a"])


@pytest.mark.parametrize("kind", ["mixture", "tabular"])
def test_model_round_trip(kind, tmp_path):
    m = train([pair("q r", "a > b [DOC] x </s>"), pair("s", "c [DOC] y </s>")], kind=kind)
    save_model(m, tmp_path / "m.json")
    m2 = load_model(tmp_path / "m.json")
    save_model(m2, tmp_path / "m2.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()
    assert np.array_equal(m.next_token_dist(["q"], ["a"]), m2.next_token_dist(["q"], ["a"]))


examples = st.lists(
    st.tuples(st.lists(st.sampled_from("xyz"), max_size=3),
              st.lists(st.sampled_from("abc"), min_size=1, max_size=3)),
    min_size=1, max_size=8,
).map(lambda rows: [TrainingPair(tuple(i), tuple(t) + (EOS,)) for i, t in rows])


@settings(max_examples=50, deadline=None)
@given(examples, st.randoms(use_true_random=False))
def test_distributions_normalized_and_order_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    for kind in ("mixture", "tabular"):
        m, m2 = train(pairs, kind=kind), train(shuffled, kind=kind)
        assert m.to_json() == m2.to_json()
        for p in pairs:
            for j in range(len(p.target) + 1):
                dist = m.next_token_dist(p.input, p.target[:j])
                assert abs(dist.sum() - 1.0) <= 1e-9
                if kind == "mixture":
                    assert np.all(dist > 0)
            assert sequence_logprob(m, p.input, p.target) <= 0.0

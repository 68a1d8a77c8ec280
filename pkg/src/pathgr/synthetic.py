"""Seeded toy corpora for demos, tests and the acceptance suite."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import Document, Query
from .taxonomy import CategoryPath, Taxonomy, build_taxonomy

TREE = {
    "Science": {
        "Physics": ["Astronomy", "Optics", "Mechanics"],
        "Biology": ["Genetics", "Ecology", "Zoology"],
        "Chemistry": ["Polymers", "Catalysis", "Electrochemistry"],
    },
    "Culture": {
        "Music": ["Opera", "Jazz", "Folk music"],
        "Literature": ["Poetry", "Novels", "Drama"],
        "Cinema": ["Animation", "Documentaries", "Film festivals"],
    },
    "Economy": {
        "Trade": ["Shipping", "Tariffs", "Markets"],
        "Finance": ["Banking", "Insurance", "Investment"],
        "Industry": ["Mining", "Textiles", "Automotive industry"],
    },
}

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "st", "tr"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["", "", "n", "r", "l", "s", "k"]

_FILLER = [
    "the subject is discussed in several sources",
    "it has been studied for many years",
    "records describe its early history",
    "many people consider it notable",
    "the topic appears in general references",
    "there are several related works",
]

_QUERY_TEMPLATES = [
    "what is {k1} in {t}",
    "who described the {k2} of {k1}",
    "{t} {k3} history",
    "where does {k1} {k2} come from",
    "how is {k3} related to {t}",
    "meaning of {k2} {k1}",
    "{k1} and {k3} facts",
]


@dataclass
class SyntheticData:
    taxonomy: Taxonomy
    docs: list[Document]
    queries: list[Query]
    test_queries: list[Query]
    leaf_of: dict[str, CategoryPath]


def toy_taxonomy(root: str = "Main topic classifications") -> Taxonomy:
    pairs = []
    for top, mids in TREE.items():
        pairs.append((root, top))
        for mid, leaves in mids.items():
            pairs.append((top, mid))
            pairs.extend((mid, leaf) for leaf in leaves)
    return build_taxonomy(pairs, root_name=root, max_depth=3)


def _leaves() -> list[CategoryPath]:
    return [CategoryPath((top, mid, leaf))
            for top, mids in TREE.items() for mid, leaves in mids.items() for leaf in leaves]


class _Words:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set()

    def __call__(self, syllables: int = 3) -> str:
        while True:
            w = "".join(self.rng.choice(_ONSETS) + self.rng.choice(_VOWELS) + self.rng.choice(_CODAS)
                        for _ in range(syllables))
            if w not in self.used and len(w) > 4:
                self.used.add(w)
                return w


def generate(n_docs: int = 200, seed: int = 0, untitled_every: int = 23,
             duplicate_title_every: int = 0) -> SyntheticData:
    """Documents with distinctive pseudo-word vocabulary under one leaf category each.

    Every ``untitled_every``-th document lacks a title.  When
    ``duplicate_title_every`` is set, every such document reuses the
    previous document's title (exercises docid disambiguation).
    """
    rng = random.Random(seed)
    words = _Words(rng)
    leaves = _leaves()
    docs, queries, tests, leaf_of = [], [], [], {}
    prev_title = None
    for i in range(n_docs):
        doc_id = f"d{i:04d}"
        leaf = leaves[i % len(leaves)]
        leaf_of[doc_id] = leaf
        name = f"{words().capitalize()} {words(2).capitalize()}"
        if duplicate_title_every and i and i % duplicate_title_every == 0 and prev_title:
            name = prev_title
        k1, k2, k3 = words(), words(), words()
        top, mid, low = leaf.segments
        sentences = [
            f"{name} is a subject in {low.lower()} within {mid.lower()} and {top.lower()}",
            f"It is known for {k1} and the {k2} tradition",
            f"Writers link {name} with {k3}",
            rng.choice(_FILLER),
            f"The {k1} of {name} remains part of {low.lower()}",
            rng.choice(_FILLER),
        ]
        text = ". ".join(s[0].upper() + s[1:] for s in sentences) + "."
        title = None if untitled_every and i % untitled_every == untitled_every - 1 else name
        prev_title = name
        t = name.split()[0].lower()
        fills = {"k1": k1, "k2": k2, "k3": k3, "t": t}
        order = rng.sample(range(len(_QUERY_TEMPLATES)), len(_QUERY_TEMPLATES))
        synth = tuple(_QUERY_TEMPLATES[j].format(**fills) for j in order[:5])
        docs.append(Document(doc_id=doc_id, text=text, title=title, synthetic_queries=synth))
        queries.append(Query(f"q{i:04d}", _QUERY_TEMPLATES[order[5]].format(**fills), doc_id, "seen"))
        tests.append(Query(f"t{i:04d}", _QUERY_TEMPLATES[order[6]].format(**fills), doc_id, "seen"))
    return SyntheticData(toy_taxonomy(), docs, queries, tests, leaf_of)

"""Tokenization shared by docid construction, training and decoding."""

from __future__ import annotations

import re

EOS = "</s>"
DOC = "[DOC]"
UNK = "[UNK]"
SEP = ">"
BOS = "<s>"  # bigram context sentinel only, never emitted

SPECIALS = (EOS, DOC, UNK, SEP)
PROTECTED = (DOC, EOS)

_protected_re = re.compile("(" + "|".join(re.escape(t) for t in PROTECTED) + ")")


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokenization keeping ``[DOC]`` and ``</s>`` verbatim.

    A standalone ``>`` is a token like any other word.
    """
    out: list[str] = []
    for piece in _protected_re.split(text):
        if piece in PROTECTED:
            out.append(piece)
        elif piece:
            out.extend(piece.lower().split())
    return out

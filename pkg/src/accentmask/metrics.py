"""WER / CER scoring.

Error counts come from a unit-cost Levenshtein alignment. Among minimum-cost
alignments the one with the most substitutions (fewest insertions plus
deletions) is chosen, which fixes (S, I, D) uniquely: with ``n`` reference
and ``m`` hypothesis tokens, ``I - D = m - n`` for every alignment.

Corpus rates are micro-averaged: ``100 * sum(S + I + D) / sum(len(ref))``.
They can exceed 100 when the hypotheses carry many insertions.
"""
from __future__ import annotations

import re
import unicodedata
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import UndefinedRateError, ValidationError

NORMALIZATION_VERSION = "1"

# Arabic-script variants folded onto their Persian forms
_FA_MAP = {
    "\u064a": "\u06cc",  # ARABIC LETTER YEH -> FARSI YEH
    "\u0649": "\u06cc",  # ALEF MAKSURA -> FARSI YEH
    "\u0643": "\u06a9",  # ARABIC LETTER KAF -> KEHEH
    "\u200c": " ",        # ZERO WIDTH NON-JOINER
    "\u0640": "",         # TATWEEL
}
_WS = re.compile(r"\s+")


def normalize_text(s: str, lang: str = "en") -> str:
    """Lowercase, drop punctuation (Unicode categories P*) and collapse whitespace.

    For ``lang="fa"`` Arabic Yeh/Kaf are folded to Persian forms, Tatweel and
    combining marks (diacritics) are removed and ZWNJ becomes a space.
    """
    if lang not in ("en", "fa"):
        raise ValueError(f"unsupported language {lang!r}")
    s = unicodedata.normalize("NFC", s)
    if lang == "fa":
        s = "".join(_FA_MAP.get(ch, ch) for ch in s)
        s = "".join(ch for ch in s if unicodedata.category(ch) != "Mn")
    s = s.lower()
    s = "".join(ch for ch in s if not unicodedata.category(ch).startswith("P"))
    return _WS.sub(" ", s).strip()


def edit_distance(ref: Sequence, hyp: Sequence) -> tuple[int, int, int]:
    """Return ``(substitutions, insertions, deletions)`` of the preferred minimal alignment."""
    n, m = len(ref), len(hyp)
    if n == 0 or m == 0:
        return 0, m, n
    # cost encoded as edits * big + indels: lexicographic (edits, indels) minimization
    big = n + m + 1
    indel = big + 1
    last = _dp_small(ref, hyp, big, indel) if n * m <= 4096 else _dp_rows(ref, hyp, big, indel)
    edits, indels = divmod(last, big)
    subs = edits - indels
    ins = (indels + (m - n)) // 2
    return subs, ins, indels - ins


def _dp_small(ref, hyp, big, indel) -> int:
    prev = [j * indel for j in range(len(hyp) + 1)]
    for i, r in enumerate(ref, start=1):
        cur = [i * indel]
        left = cur[0]
        for j, h in enumerate(hyp, start=1):
            best = prev[j - 1] + (0 if h == r else big)
            if prev[j] + indel < best:
                best = prev[j] + indel
            if left + indel < best:
                best = left + indel
            cur.append(best)
            left = best
        prev = cur
    return prev[-1]


def _dp_rows(ref, hyp, big, indel) -> int:
    # one vectorized row at a time; O(len(hyp)) memory
    vocab: dict = {}
    r = np.array([vocab.setdefault(t, len(vocab)) for t in ref])
    h = np.array([vocab.setdefault(t, len(vocab)) for t in hyp])
    m = len(hyp)
    cols = np.arange(m + 1, dtype=np.int64)
    prev = cols * indel
    for i in range(1, len(ref) + 1):
        diag = prev[:-1] + np.where(h == r[i - 1], 0, big)
        best = np.empty(m + 1, dtype=np.int64)
        best[0] = i * indel
        best[1:] = np.minimum(diag, prev[1:] + indel)
        # horizontal moves (insertions) via a running minimum
        prev = np.minimum.accumulate(best - cols * indel) + cols * indel
    return int(prev[-1])


@dataclass
class ScoredPair:
    id: str
    ref: list[str]
    hyp: list[str]
    substitutions: int
    insertions: int
    deletions: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float | None:
        return 100.0 * self.errors / len(self.ref) if self.ref else None


@dataclass
class CorpusScore:
    rate: float
    errors: int
    ref_length: int
    unit: str
    per_utterance: list[ScoredPair] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        for row, pair in zip(d["per_utterance"], self.per_utterance):
            row["rate"] = pair.rate
        return d


def _tokens(text: str, unit: str, lang: str) -> list[str]:
    norm = normalize_text(text, lang)
    return norm.split() if unit == "word" else list(norm.replace(" ", ""))


def _score(refs, hyps, unit: str, lang: str, ids=None) -> CorpusScore:
    refs, hyps = list(refs), list(hyps)
    if len(refs) != len(hyps):
        raise ValidationError(f"{len(refs)} references but {len(hyps)} hypotheses")
    ids = list(ids) if ids is not None else [str(i) for i in range(len(refs))]
    pairs = []
    for uid, ref, hyp in zip(ids, refs, hyps):
        rt, ht = _tokens(ref, unit, lang), _tokens(hyp, unit, lang)
        pairs.append(ScoredPair(uid, rt, ht, *edit_distance(rt, ht)))
    ref_len = sum(len(p.ref) for p in pairs)
    if ref_len == 0:
        raise UndefinedRateError(f"{unit} error rate undefined: references contain no {unit}s")
    errors = sum(p.errors for p in pairs)
    return CorpusScore(100.0 * errors / ref_len, errors, ref_len, unit, pairs)


def wer(refs, hyps, lang: str = "en", ids=None) -> CorpusScore:
    return _score(refs, hyps, "word", lang, ids)


def cer(refs, hyps, lang: str = "en", ids=None) -> CorpusScore:
    return _score(refs, hyps, "char", lang, ids)


def pair_by_id(refs: dict[str, str], hyps: dict[str, str]) -> tuple[list[str], list[str], list[str]]:
    """Align two id->text maps; unpaired ids raise a ValidationError listing them."""
    missing = sorted(set(refs) ^ set(hyps))
    if missing:
        raise ValidationError(f"unpaired ids: {', '.join(missing)}")
    ids = list(refs)
    return ids, [refs[i] for i in ids], [hyps[i] for i in ids]

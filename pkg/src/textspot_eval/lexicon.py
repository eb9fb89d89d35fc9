"""Lexicons and lexicon-constrained correction of recognized words.

Correction picks the lexicon word with the lowest weighted edit distance to
the recognized string. Costs come from the recognizer's per-step character
probabilities:

* keeping ``pred[i]`` against the same candidate character costs 0;
* substituting ``pred[i]`` by ``c`` costs ``1 - p_i(c)``;
* deleting ``pred[i]`` costs ``p_i(pred[i])``;
* inserting any candidate character costs 1.

With one-hot rows this is the plain Levenshtein distance.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .textnorm import DEFAULT_POLICY, NormalizationPolicy, normalize_transcription

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-6
LENGTH_WINDOW = 4


class LexiconError(ValueError):
    pass


class LexiconMode(str, Enum):
    NONE = "none"
    STRONG = "strong"
    WEAK = "weak"
    GENERIC = "generic"


@dataclass(frozen=True, eq=False)
class CharProbMatrix:
    """Per-step character distributions emitted by a recognizer."""

    alphabet: str
    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim == 1 and rows.size == 0:
            rows = rows.reshape(0, len(self.alphabet))
        if rows.ndim != 2 or rows.shape[1] != len(self.alphabet):
            raise LexiconError(
                f"probability rows must have shape (steps, {len(self.alphabet)}), got {rows.shape}"
            )
        if len(set(self.alphabet)) != len(self.alphabet):
            raise LexiconError("alphabet has repeated characters")
        if rows.size and (np.any(rows < 0.0) or np.any(rows > 1.0) or not np.all(np.isfinite(rows))):
            raise LexiconError("probabilities must lie in [0, 1]")
        sums = rows.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)
        if bad.size:
            raise LexiconError(f"row {int(bad[0])} sums to {sums[bad[0]]:.9f}, expected 1")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "_index", {ch: k for k, ch in enumerate(self.alphabet)})

    def __len__(self) -> int:
        return self.rows.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CharProbMatrix):
            return NotImplemented
        return self.alphabet == other.alphabet and np.array_equal(self.rows, other.rows)

    @classmethod
    def one_hot(cls, text: str, alphabet: str | None = None) -> CharProbMatrix:
        alphabet = alphabet if alphabet is not None else "".join(dict.fromkeys(text))
        rows = np.zeros((len(text), len(alphabet)))
        for i, ch in enumerate(text):
            rows[i, alphabet.index(ch)] = 1.0
        return cls(alphabet, rows)

    def prob(self, step: int, ch: str) -> float:
        k = self._index.get(ch)
        return 0.0 if k is None else float(self.rows[step, k])

    def column(self, ch: str) -> np.ndarray:
        k = self._index.get(ch)
        return np.zeros(len(self)) if k is None else self.rows[:, k]

    def sliced(self, start: int, stop: int) -> CharProbMatrix:
        return CharProbMatrix(self.alphabet, self.rows[start:stop])

    def case_folded(self) -> CharProbMatrix:
        """Merge columns of characters that upper-case to the same symbol."""
        targets = [ch.upper() if len(ch.upper()) == 1 else ch for ch in self.alphabet]
        alphabet = "".join(dict.fromkeys(targets))
        if alphabet == self.alphabet:
            return self
        rows = np.zeros((len(self), len(alphabet)))
        for k, ch in enumerate(targets):
            rows[:, alphabet.index(ch)] += self.rows[:, k]
        return CharProbMatrix(alphabet, np.clip(rows, 0.0, 1.0))


@dataclass(frozen=True)
class Lexicon:
    mode: LexiconMode
    global_words: tuple[str, ...] = ()
    per_image_words: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def words_for(self, image_id: object) -> tuple[str, ...]:
        if self.mode is LexiconMode.STRONG:
            try:
                return self.per_image_words[str(image_id)]
            except KeyError:
                raise LexiconError(f"no strong lexicon for image {image_id!r}") from None
        return self.global_words


def _normalized_unique(words: Iterable[str], policy: NormalizationPolicy) -> tuple[str, ...]:
    out = (normalize_transcription(w.strip(), policy) for w in words)
    return tuple(dict.fromkeys(w for w in out if w))


def _read_words(path: Path) -> list[str]:
    return path.read_bytes().decode("utf-8-sig").splitlines()


def _per_image_from_path(path: Path) -> dict[str, list[str]]:
    if path.is_dir():
        out = {}
        for file in sorted(path.glob("*.txt")):
            stem = file.stem
            image_id = stem[len("voc_") :] if stem.startswith("voc_") else stem
            out[image_id] = _read_words(file)
        return out
    data = json.loads(path.read_bytes().decode("utf-8-sig"))
    if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
        raise LexiconError(f"{path}: expected a JSON object mapping image ids to word lists")
    return {str(k): [str(w) for w in v] for k, v in data.items()}


def load_lexicon(
    mode: LexiconMode | str,
    words: str | Path | Iterable[str] | None = None,
    per_image: str | Path | Mapping[object, Iterable[str]] | None = None,
    *,
    policy: NormalizationPolicy = DEFAULT_POLICY,
    image_ids: Iterable[object] | None = None,
) -> Lexicon:
    """Load word lists and normalize them under ``policy``.

    ``words`` is a word-per-line file (or iterable) for weak/generic mode.
    ``per_image`` is a directory of ``<image_id>.txt`` files, a JSON map, or
    a mapping, for strong mode. When ``image_ids`` is given in strong mode,
    every listed image must have a vocabulary.
    """
    mode = LexiconMode(mode)
    if mode is LexiconMode.NONE:
        return Lexicon(mode)
    if mode is LexiconMode.STRONG:
        if per_image is None:
            raise LexiconError("strong lexicon mode needs per-image vocabularies")
        raw = _per_image_from_path(Path(per_image)) if isinstance(per_image, (str, Path)) else per_image
        table = {str(k): _normalized_unique(v, policy) for k, v in raw.items()}
        for image_id in image_ids or ():
            if str(image_id) not in table:
                raise LexiconError(f"strong lexicon has no vocabulary for image {image_id!r}")
        return Lexicon(mode, per_image_words=table)
    if words is None:
        raise LexiconError(f"{mode.value} lexicon mode needs a word list")
    raw_words = _read_words(Path(words)) if isinstance(words, (str, Path)) else list(words)
    return Lexicon(mode, global_words=_normalized_unique(raw_words, policy))


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit insert, delete and substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _check_rows(pred: str, probs: CharProbMatrix) -> None:
    if len(probs) != len(pred):
        raise LexiconError(f"{len(probs)} probability rows for a {len(pred)}-character prediction")


def weighted_edit_distance(pred: str, probs: CharProbMatrix, candidate: str) -> float:
    """Minimal cost of editing ``pred`` into ``candidate`` (see module docs)."""
    _check_rows(pred, probs)
    prev = [float(j) for j in range(len(candidate) + 1)]
    for i, ch in enumerate(pred):
        delete = probs.prob(i, ch)
        cur = [prev[0] + delete]
        for j, target in enumerate(candidate, start=1):
            sub = 0.0 if ch == target else 1.0 - probs.prob(i, target)
            cur.append(min(prev[j] + delete, prev[j - 1] + sub, cur[j - 1] + 1.0))
        prev = cur
    return prev[-1]


def _bucket_costs(pred: str, probs: CharProbMatrix | None, words: Sequence[str]) -> np.ndarray:
    """Distances from ``pred`` to equal-length ``words``, vectorized over words.

    Performs the same additions and comparisons, in the same order, as the
    scalar routines, so results match them exactly.
    """
    n_words = len(words)
    width = len(words[0])
    codes = np.array([[ord(c) for c in w] for w in words], dtype=np.int64).reshape(n_words, width)
    prev = np.tile(np.arange(width + 1, dtype=np.float64), (n_words, 1))
    symbols = np.unique(codes) if codes.size else np.empty(0, dtype=np.int64)
    for i, ch in enumerate(pred):
        delete = probs.prob(i, ch) if probs is not None else 1.0
        sub = np.empty((n_words, width))
        for sym in symbols:
            if chr(sym) == ch:
                cost = 0.0
            else:
                cost = 1.0 - probs.prob(i, chr(sym)) if probs is not None else 1.0
            sub[codes == sym] = cost
        diag = np.minimum(prev[:, 1:] + delete, prev[:, :-1] + sub)
        cur = np.empty_like(prev)
        cur[:, 0] = prev[:, 0] + delete
        for j in range(1, width + 1):
            cur[:, j] = np.minimum(diag[:, j - 1], cur[:, j - 1] + 1.0)
        prev = cur
    return prev[:, -1]


def lexicon_costs(
    pred: str, probs: CharProbMatrix | None, words: Sequence[str]
) -> list[float]:
    """Distance from ``pred`` to each word, in word order."""
    if probs is not None:
        _check_rows(pred, probs)
    costs = [0.0] * len(words)
    buckets: dict[int, list[int]] = {}
    for k, w in enumerate(words):
        buckets.setdefault(len(w), []).append(k)
    for idx in buckets.values():
        values = _bucket_costs(pred, probs, [words[k] for k in idx])
        for k, v in zip(idx, values):
            costs[k] = float(v)
    return costs


def best_match_with_cost(
    pred: str,
    probs: CharProbMatrix | None,
    lex: Lexicon,
    image_id: object = None,
    reject_threshold: float = 0.5,
) -> tuple[str | None, float]:
    """Best lexicon word and its cost, or ``(None, cost)`` when rejected.

    Strong-mode lookups always substitute; weak and generic lookups are
    rejected when ``cost / max(len(pred), len(word))`` exceeds
    ``reject_threshold``. Generic lookups only consider words within
    ``LENGTH_WINDOW`` characters of the prediction's length.
    """
    if lex.mode is LexiconMode.NONE:
        raise LexiconError("best_match needs a lexicon")
    words: Sequence[str] = lex.words_for(image_id)
    if lex.mode is LexiconMode.GENERIC:
        words = [w for w in words if abs(len(w) - len(pred)) <= LENGTH_WINDOW]
    if not words:
        return None, float("inf")
    costs = lexicon_costs(pred, probs, words)
    best = min(range(len(words)), key=costs.__getitem__)
    word, cost = words[best], costs[best]
    if lex.mode is not LexiconMode.STRONG:
        scale = max(len(pred), len(word))
        if scale and cost / scale > reject_threshold:
            return None, cost
    return word, cost


def best_match(
    pred: str,
    probs: CharProbMatrix | None,
    lex: Lexicon,
    image_id: object = None,
    reject_threshold: float = 0.5,
) -> str | None:
    return best_match_with_cost(pred, probs, lex, image_id, reject_threshold)[0]

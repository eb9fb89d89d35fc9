"""Transcription normalization shared by scoring and lexicon loading."""

from __future__ import annotations

from dataclasses import dataclass


def _is_alnum(ch: str) -> bool:
    return ("0" <= ch <= "9") or ("A" <= ch <= "Z") or ("a" <= ch <= "z")


@dataclass(frozen=True)
class NormalizationPolicy:
    case_fold: bool = True
    strip_edge_punctuation: bool = True
    word_spotting_min_len: int = 3
    word_spotting_alnum_only: bool = True

    def __post_init__(self) -> None:
        if self.word_spotting_min_len < 1:
            raise ValueError("word_spotting_min_len must be >= 1")


DEFAULT_POLICY = NormalizationPolicy()


def edge_span(s: str) -> tuple[int, int]:
    """Bounds of ``s`` after dropping leading/trailing non-alphanumerics."""
    start, stop = 0, len(s)
    while start < stop and not _is_alnum(s[start]):
        start += 1
    while stop > start and not _is_alnum(s[stop - 1]):
        stop -= 1
    return start, stop


def normalize_transcription(s: str, policy: NormalizationPolicy = DEFAULT_POLICY) -> str:
    """Upper-case and trim edge punctuation, as configured. May return ``""``."""
    if policy.case_fold:
        s = s.upper()
    if policy.strip_edge_punctuation:
        start, stop = edge_span(s)
        s = s[start:stop]
    return s


def word_spotting_eligible(gt_transcription: str | None, policy: NormalizationPolicy = DEFAULT_POLICY) -> bool:
    if not gt_transcription:
        return False
    norm = normalize_transcription(gt_transcription, policy)
    if len(norm) < policy.word_spotting_min_len:
        return False
    return not policy.word_spotting_alnum_only or all(_is_alnum(ch) for ch in norm)


def transcription_match(pred: str, gt: str, policy: NormalizationPolicy = DEFAULT_POLICY) -> bool:
    return normalize_transcription(pred, policy) == normalize_transcription(gt, policy)

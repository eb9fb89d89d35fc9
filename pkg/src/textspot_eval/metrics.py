"""Word Spotting and End-to-end recognition scoring.

A detection counts as a true positive when it is matched to a legible
ground-truth word (IoU above threshold) and the normalized transcriptions
agree. A matched detection with the wrong transcription is both a false
positive and a false negative. Word spotting additionally turns short or
non-alphanumeric ground-truth words into don't-care regions.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Sequence

from . import _jsonfmt
from .annotation import TextInstance
from .lexicon import CharProbMatrix, Lexicon, LexiconMode, best_match
from .matching import Prediction, match_instances
from .textnorm import (
    DEFAULT_POLICY,
    NormalizationPolicy,
    edge_span,
    normalize_transcription,
    transcription_match,
    word_spotting_eligible,
)

__all__ = [
    "EvalReport",
    "ImageCounts",
    "NormalizationPolicy",
    "Protocol",
    "evaluate",
    "evaluate_image",
    "hmean",
    "normalize_transcription",
    "transcription_match",
    "word_spotting_eligible",
]

logger = logging.getLogger(__name__)

REPORT_DIGITS = 6


class EvaluationError(ValueError):
    pass


class Protocol(str, Enum):
    END_TO_END = "end_to_end"
    WORD_SPOTTING = "word_spotting"


def hmean(p: float, r: float) -> float:
    if p + r == 0:
        return 0.0
    return 2.0 * p * r / (p + r)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class ImageCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    errors: tuple[dict[str, Any], ...] = ()

    def __add__(self, other: ImageCounts) -> ImageCounts:
        return ImageCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.errors + other.errors)

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def hmean(self) -> float:
        return hmean(self.precision, self.recall)


@dataclass(frozen=True)
class EvalReport:
    protocol: Protocol
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    hmean: float
    per_image: dict[str, ImageCounts] | None = None
    errors: tuple[dict[str, Any], ...] = field(default=())

    @classmethod
    def from_counts(
        cls, protocol: Protocol, per_image: Mapping[str, ImageCounts], keep_per_image: bool = True
    ) -> EvalReport:
        total = ImageCounts()
        errors: list[dict[str, Any]] = []
        for image_id in sorted(per_image):
            counts = per_image[image_id]
            total = ImageCounts(total.tp + counts.tp, total.fp + counts.fp, total.fn + counts.fn)
            errors.extend({"image_id": image_id, **e} for e in counts.errors)
        return cls(
            protocol=protocol,
            true_positives=total.tp,
            false_positives=total.fp,
            false_negatives=total.fn,
            precision=total.precision,
            recall=total.recall,
            hmean=total.hmean,
            per_image=dict(sorted(per_image.items())) if keep_per_image else None,
            errors=tuple(errors),
        )

    def summary(self) -> str:
        return f"P={self.precision:.6f} R={self.recall:.6f} H={self.hmean:.6f}"

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "protocol": self.protocol.value,
            "tp": self.true_positives,
            "fp": self.false_positives,
            "fn": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "hmean": self.hmean,
            "errors": list(self.errors),
        }
        if self.per_image is not None:
            doc["per_image"] = {
                image_id: {
                    "tp": c.tp,
                    "fp": c.fp,
                    "fn": c.fn,
                    "precision": c.precision,
                    "recall": c.recall,
                    "hmean": c.hmean,
                }
                for image_id, c in self.per_image.items()
            }
        return doc

    def to_json(self) -> str:
        return _jsonfmt.dumps(self.to_dict(), float_digits=REPORT_DIGITS) + "\n"


def _lexicon_view(pred: Prediction, policy: NormalizationPolicy) -> tuple[str, CharProbMatrix | None]:
    """Prediction text and probabilities in the lexicon's normalized space."""
    text, probs = pred.transcription, pred.char_probs
    if policy.case_fold:
        folded = text.upper()
        if len(folded) != len(text):
            probs = None
        elif probs is not None:
            probs = probs.case_folded()
        text = folded
    if policy.strip_edge_punctuation:
        start, stop = edge_span(text)
        text = text[start:stop]
        if probs is not None:
            probs = probs.sliced(start, stop)
    return text, probs


def corrected_transcription(
    pred: Prediction,
    lexicon: Lexicon | None,
    policy: NormalizationPolicy = DEFAULT_POLICY,
    wed_threshold: float = 0.5,
) -> str:
    """Replace the predicted word with its best lexicon match, if accepted."""
    if lexicon is None or lexicon.mode is LexiconMode.NONE:
        return pred.transcription
    text, probs = _lexicon_view(pred, policy)
    word = best_match(text, probs, lexicon, pred.image_id, wed_threshold)
    return pred.transcription if word is None else word


def _as_dont_care(gt: TextInstance) -> TextInstance:
    return replace(gt, legible=False)


def evaluate_image(
    gts: Sequence[TextInstance],
    preds: Sequence[Prediction],
    protocol: Protocol = Protocol.END_TO_END,
    policy: NormalizationPolicy = DEFAULT_POLICY,
    iou_threshold: float = 0.5,
    lexicon: Lexicon | None = None,
    *,
    wed_threshold: float = 0.5,
    suppress_first: bool = True,
) -> ImageCounts:
    """Score one image.

    Legible ground truth without a transcription cannot be recognized and is
    treated as don't-care, as are ineligible words under word spotting.
    """
    protocol = Protocol(protocol)
    scored = []
    for gt in gts:
        if gt.legible and (
            not gt.transcription
            or (protocol is Protocol.WORD_SPOTTING and not word_spotting_eligible(gt.transcription, policy))
        ):
            gt = _as_dont_care(gt)
        scored.append(gt)
    # positional ids keep matching independent of caller id schemes
    local_gts = [replace(g, id=i, image_id=0) for i, g in enumerate(scored)]
    local_preds = [replace(p, id=j, image_id=0) for j, p in enumerate(preds)]
    result = match_instances(local_gts, local_preds, iou_threshold, suppress_first=suppress_first)

    tp = fp = 0
    for i, j, _ in result.pairs:
        text = corrected_transcription(preds[j], lexicon, policy, wed_threshold)
        if transcription_match(text, scored[i].transcription, policy):
            tp += 1
        else:
            fp += 1
    fn = len(result.unmatched_gt) + (len(result.pairs) - tp)
    fp += len(result.unmatched_pred)
    errors = tuple(
        {
            "kind": e["kind"],
            "id": gts[e["id"]].id if e["kind"] == "gt" else e["id"],
            "error": e["error"],
        }
        for e in result.errors
    )
    return ImageCounts(tp, fp, fn, errors)


@dataclass(frozen=True)
class _Settings:
    protocol: Protocol
    policy: NormalizationPolicy
    iou_threshold: float
    lexicon: Lexicon | None
    wed_threshold: float
    suppress_first: bool


_worker_settings: _Settings | None = None


def _init_worker(settings: _Settings) -> None:
    global _worker_settings
    _worker_settings = settings


def _score(settings: _Settings, gts: Sequence[TextInstance], preds: Sequence[Prediction]) -> ImageCounts:
    return evaluate_image(
        gts,
        preds,
        settings.protocol,
        settings.policy,
        settings.iou_threshold,
        settings.lexicon,
        wed_threshold=settings.wed_threshold,
        suppress_first=settings.suppress_first,
    )


def _score_in_worker(task: tuple[str, Sequence[TextInstance], Sequence[Prediction]]) -> tuple[str, ImageCounts]:
    image_id, gts, preds = task
    assert _worker_settings is not None
    return image_id, _score(_worker_settings, gts, preds)


def evaluate(
    gt_by_image: Mapping[Any, Sequence[TextInstance]],
    preds_by_image: Mapping[Any, Sequence[Prediction]],
    protocol: Protocol | str = Protocol.END_TO_END,
    policy: NormalizationPolicy = DEFAULT_POLICY,
    iou_threshold: float = 0.5,
    lexicon: Lexicon | None = None,
    *,
    wed_threshold: float = 0.5,
    suppress_first: bool = True,
    jobs: int = 1,
    keep_per_image: bool = True,
) -> EvalReport:
    """Score a collection of images and aggregate into one report.

    Image ids are compared as strings. Every image of ``gt_by_image`` is
    scored, with or without predictions. Results do not depend on ``jobs``.

    Raises:
        EvaluationError: a prediction refers to an image without ground truth.
    """
    protocol = Protocol(protocol)
    gts = {str(k): list(v) for k, v in gt_by_image.items()}
    preds: dict[str, list[Prediction]] = {}
    for k, v in preds_by_image.items():
        preds.setdefault(str(k), []).extend(v)
    unknown = sorted(set(preds) - set(gts))
    if unknown:
        raise EvaluationError(f"predictions reference unknown image id {unknown[0]!r}")

    settings = _Settings(protocol, policy, iou_threshold, lexicon, wed_threshold, suppress_first)
    tasks = [(image_id, gts[image_id], preds.get(image_id, [])) for image_id in sorted(gts)]
    per_image: dict[str, ImageCounts] = {}
    if jobs <= 1 or len(tasks) <= 1:
        for image_id, g, p in tasks:
            per_image[image_id] = _score(settings, g, p)
    else:
        chunk = max(1, len(tasks) // (jobs * 4))
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(settings,)) as pool:
            for image_id, counts in pool.map(_score_in_worker, tasks, chunksize=chunk):
                per_image[image_id] = counts
    return EvalReport.from_counts(protocol, per_image, keep_per_image)

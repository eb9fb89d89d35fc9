"""One-to-one assignment of predictions to ground truth within one image.

Predictions mostly covering an illegible (don't-care) region are set aside
first; the remaining predictions are matched greedily to legible instances
in descending IoU order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Sequence

from .annotation import Identifier, TextInstance
from .geometry import GeometryError, Polygon, intersection_area_normalized, normalize_polygon

if TYPE_CHECKING:
    from .lexicon import CharProbMatrix

DONT_CARE_OVERLAP = 0.5


class MatchingError(ValueError):
    pass


@dataclass(frozen=True)
class Prediction:
    image_id: Identifier
    polygon: Polygon
    transcription: str
    confidence: float = 1.0
    char_probs: CharProbMatrix | None = None
    id: Identifier | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0) or math.isnan(self.confidence):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if any(ch.isspace() for ch in self.transcription):
            raise ValueError(f"transcription {self.transcription!r} contains whitespace")
        if self.char_probs is not None and len(self.char_probs) != len(self.transcription):
            raise ValueError(
                f"{len(self.char_probs)} probability rows for transcription {self.transcription!r}"
            )


@dataclass(frozen=True)
class MatchResult:
    """Matching outcome; ids are positions in the input lists unless the
    inputs carry their own ids."""

    pairs: tuple[tuple[Identifier, Identifier, float], ...] = ()
    unmatched_gt: tuple[Identifier, ...] = ()
    unmatched_pred: tuple[Identifier, ...] = ()
    suppressed_pred: tuple[Identifier, ...] = ()
    errors: tuple[dict[str, Any], ...] = field(default=())


def _prepared(polygon: Polygon) -> Polygon | None:
    try:
        p = normalize_polygon(polygon)
    except GeometryError:
        return None
    if not p.is_simple or abs(p.signed_area) <= 0.0:
        return None
    return p


def _iou(a: Polygon, b: Polygon) -> float:
    inter = intersection_area_normalized(a, b)
    union = abs(a.signed_area) + abs(b.signed_area) - inter
    return min(1.0, max(0.0, inter / union))


def match_instances(
    gts: Sequence[TextInstance],
    preds: Sequence[Prediction],
    iou_threshold: float = 0.5,
    *,
    suppress_first: bool = True,
) -> MatchResult:
    """Match predictions to ground truth of a single image.

    Candidate pairs need IoU strictly above ``iou_threshold``; they are
    accepted greedily by descending IoU, ties going to the lower GT index and
    then the lower prediction index. A prediction whose area lies more than
    half inside some illegible GT is suppressed. With ``suppress_first=False``
    suppression only applies to predictions left unmatched.

    Polygons that are degenerate or self-intersecting cannot match or
    suppress anything; they are listed in ``errors``.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold {iou_threshold} outside (0, 1)")
    image_ids = {g.image_id for g in gts} | {p.image_id for p in preds}
    if len(image_ids) > 1:
        raise MatchingError("cross-image matching")

    def gt_key(i: int) -> Identifier:
        return gts[i].id

    def pred_key(j: int) -> Identifier:
        return preds[j].id if preds[j].id is not None else j

    errors: list[dict[str, Any]] = []
    gt_polys: list[Polygon | None] = []
    for g in gts:
        p = _prepared(g.polygon)
        if p is None:
            errors.append({"kind": "gt", "id": g.id, "error": "non-simple or degenerate polygon"})
        gt_polys.append(p)
    pred_polys: list[Polygon | None] = []
    for j, pr in enumerate(preds):
        p = _prepared(pr.polygon)
        if p is None:
            errors.append({"kind": "pred", "id": pred_key(j), "error": "non-simple or degenerate polygon"})
        pred_polys.append(p)

    care = [i for i, g in enumerate(gts) if g.legible]
    dont_care = [i for i, g in enumerate(gts) if not g.legible and gt_polys[i] is not None]

    def absorbed(j: int) -> bool:
        p = pred_polys[j]
        if p is None:
            return False
        area = abs(p.signed_area)
        return any(
            intersection_area_normalized(p, gt_polys[i]) / area > DONT_CARE_OVERLAP for i in dont_care
        )

    suppressed: set[int] = set()
    if suppress_first:
        suppressed = {j for j in range(len(preds)) if absorbed(j)}

    candidates = []
    for i in care:
        if gt_polys[i] is None:
            continue
        box = gt_polys[i].bbox
        for j, p in enumerate(pred_polys):
            if p is None or j in suppressed or not box.overlaps(p.bbox):
                continue
            value = _iou(gt_polys[i], p)
            if value > iou_threshold:
                candidates.append((-value, i, j))
    candidates.sort()

    used_gt: set[int] = set()
    used_pred: set[int] = set()
    pairs = []
    for neg_iou, i, j in candidates:
        if i in used_gt or j in used_pred:
            continue
        used_gt.add(i)
        used_pred.add(j)
        pairs.append((gt_key(i), pred_key(j), -neg_iou))

    if not suppress_first:
        suppressed = {j for j in range(len(preds)) if j not in used_pred and absorbed(j)}

    return MatchResult(
        pairs=tuple(pairs),
        unmatched_gt=tuple(gt_key(i) for i in care if i not in used_gt),
        unmatched_pred=tuple(pred_key(j) for j in range(len(preds)) if j not in used_pred and j not in suppressed),
        suppressed_pred=tuple(pred_key(j) for j in sorted(suppressed)),
        errors=tuple(errors),
    )

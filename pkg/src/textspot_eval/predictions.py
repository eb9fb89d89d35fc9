"""Reading and writing detection results.

Two layouts are supported: JSON lines with one image per line, and a
directory of ICDAR submission files (``res_<image_id>.txt``).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Mapping

from . import _jsonfmt
from .annotation import ParseError, icdar_image_id, parse_icdar_polygons
from .geometry import GeometryError, Polygon
from .lexicon import CharProbMatrix, LexiconError
from .matching import Prediction


def _canonical_order(preds: list[Prediction]) -> list[Prediction]:
    # independent of line order in the source file
    return sorted(preds, key=lambda p: (-p.confidence, p.polygon.vertices, p.transcription))


def _detection(image_id: Any, det: Any, number: int, source: str | None) -> Prediction:
    def fail(message: str) -> ParseError:
        return ParseError(message, source=source, line=number)

    if not isinstance(det, dict):
        raise fail("detection must be an object")
    points = det.get("points")
    if not isinstance(points, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in points
    ):
        raise fail("'points' must be a list of numbers")
    if len(points) < 6 or len(points) % 2:
        raise fail(f"'points' needs an even count of at least 6 numbers, got {len(points)}")
    text = det.get("transcription", "")
    if not isinstance(text, str):
        raise fail("'transcription' must be a string")
    score = det.get("score", 1.0)
    probs = None
    if det.get("char_probs") is not None:
        raw = det["char_probs"]
        if not isinstance(raw, dict) or not isinstance(raw.get("alphabet"), str) or "rows" not in raw:
            raise fail("'char_probs' needs 'alphabet' and 'rows'")
        try:
            probs = CharProbMatrix(raw["alphabet"], raw["rows"])
        except (LexiconError, ValueError, TypeError) as exc:
            raise fail(f"bad char_probs: {exc}") from None
    try:
        return Prediction(image_id, Polygon.from_flat(points), text, float(score), probs)
    except (GeometryError, ValueError, TypeError) as exc:
        raise fail(str(exc)) from None


def parse_predictions_jsonl(text: str, source: str | None = None) -> dict[str, list[Prediction]]:
    """Parse ``{"image_id", "detections": [...]}`` records, one per line."""
    out: dict[str, list[Prediction]] = {}
    for number, line in enumerate(text.lstrip("\ufeff").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON: {exc.msg} (column {exc.colno})", source=source, line=number) from None
        if not isinstance(record, dict) or "image_id" not in record:
            raise ParseError("record needs an 'image_id'", source=source, line=number)
        dets = record.get("detections", [])
        if not isinstance(dets, list):
            raise ParseError("'detections' must be a list", source=source, line=number)
        image_id = record["image_id"]
        bucket = out.setdefault(str(image_id), [])
        bucket.extend(_detection(image_id, det, number, source) for det in dets)
    return {k: _canonical_order(v) for k, v in out.items()}


def load_icdar_submission_dir(directory: str | Path) -> dict[str, list[Prediction]]:
    out = {}
    for path in sorted(Path(directory).glob("*.txt")):
        image_id = icdar_image_id(path)
        text = path.read_bytes().decode("utf-8-sig")
        preds = []
        for poly, transcription in parse_icdar_polygons(text, source=str(path)):
            try:
                preds.append(Prediction(image_id, poly, transcription))
            except ValueError as exc:
                raise ParseError(str(exc), source=str(path)) from None
        out[image_id] = _canonical_order(preds)
    return out


def load_predictions(path: str | Path) -> dict[str, list[Prediction]]:
    path = Path(path)
    if path.is_dir():
        return load_icdar_submission_dir(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"invalid UTF-8: {exc.reason}", source=str(path), offset=exc.start) from None
    return parse_predictions_jsonl(text, source=str(path))


def _detection_doc(p: Prediction) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "points": p.polygon.flat(),
        "transcription": p.transcription,
        "score": p.confidence,
    }
    if p.char_probs is not None:
        doc["char_probs"] = {"alphabet": p.char_probs.alphabet, "rows": p.char_probs.rows.tolist()}
    return doc


def dump_predictions_jsonl(preds_by_image: Mapping[Any, Iterable[Prediction]]) -> str:
    lines = []
    for image_id, preds in preds_by_image.items():
        record = {"image_id": image_id, "detections": [_detection_doc(p) for p in preds]}
        lines.append(_jsonfmt.dumps(record))
    return "".join(line + "\n" for line in lines)

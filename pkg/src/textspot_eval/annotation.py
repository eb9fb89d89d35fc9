"""Open Images V5 Text annotations: data model, I/O, validation and statistics.

Two on-disk formats are handled:

* the COCO-like JSON export, where every annotation carries ``bbox``,
  ``segmentation`` and an ``attributes`` object with ``transcription``,
  ``legible`` and ``machine_printed``;
* ICDAR 2013/2015 style text files, one ``x1,y1,...,x4,y4,transcription``
  record per line, with ``###`` marking illegible (don't-care) words.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import _jsonfmt
from .geometry import EPS, GeometryError, Polygon, bounding_box, normalize_polygon, polygon_area

Identifier = int | str

DONT_CARE = "###"
COORD_DIGITS = 2

_ANNOTATION_KEYS = {"id", "image_id", "bbox", "segmentation", "attributes"}
_ATTRIBUTE_KEYS = {"transcription", "legible", "machine_printed", "machine-printed"}
_IMAGE_KEYS = {"id", "file_name", "width", "height"}


class ParseError(ValueError):
    """Input could not be read; carries file/line/offset context when known."""

    def __init__(
        self,
        message: str,
        *,
        source: str | None = None,
        line: int | None = None,
        offset: int | None = None,
    ) -> None:
        self.message = message
        self.source = source
        self.line = line
        self.offset = offset
        super().__init__(str(self))

    def __str__(self) -> str:
        where = []
        if self.source:
            where.append(self.source)
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.offset is not None:
            where.append(f"byte {self.offset}")
        return f"{': '.join(where)}: {self.message}" if where else self.message


class SchemaError(ParseError):
    """A required field is missing or has the wrong type."""

    def __init__(self, message: str, *, field_name: str, **kwargs: Any) -> None:
        self.field_name = field_name
        super().__init__(message, **kwargs)


class SegmentationError(ParseError):
    """A segmentation cannot be turned into a polygon."""


@dataclass(frozen=True)
class TextInstance:
    id: Identifier
    image_id: Identifier
    polygon: Polygon
    transcription: str | None = None
    legible: bool = True
    machine_printed: bool = True
    # pass-through data kept for lossless round trips
    extra_rings: tuple[tuple[float, ...], ...] = ()
    attributes_extra: dict[str, Any] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def is_care(self) -> bool:
        return self.legible


@dataclass(frozen=True)
class ImageRecord:
    image_id: Identifier
    file_name: str
    width: int
    height: int
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Dataset:
    subset_name: str = ""
    images: tuple[ImageRecord, ...] = ()
    instances: tuple[TextInstance, ...] = ()
    extra: dict[str, Any] = field(default_factory=dict)

    def instances_by_image(self) -> dict[Identifier, list[TextInstance]]:
        grouped: dict[Identifier, list[TextInstance]] = {im.image_id: [] for im in self.images}
        for inst in self.instances:
            grouped.setdefault(inst.image_id, []).append(inst)
        return grouped


@dataclass(frozen=True)
class SubsetStats:
    images: int = 0
    instances: int = 0
    legible: int = 0

    def __post_init__(self) -> None:
        if min(self.images, self.instances, self.legible) < 0:
            raise ValueError(f"negative count in {self}")

    def __add__(self, other: SubsetStats) -> SubsetStats:
        return SubsetStats(
            self.images + other.images,
            self.instances + other.instances,
            self.legible + other.legible,
        )

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.images, self.instances, self.legible)


@dataclass(frozen=True)
class Violation:
    subject: Identifier
    rule: str
    message: str
    severity: str = "error"

    def to_dict(self) -> dict[str, Any]:
        return {
            "subject": self.subject,
            "rule": self.rule,
            "message": self.message,
            "severity": self.severity,
        }


@dataclass(frozen=True)
class ViolationReport:
    violations: tuple[Violation, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    @property
    def errors(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == "error"]

    @property
    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def to_dict(self) -> dict[str, Any]:
        return {"violations": [v.to_dict() for v in self.violations]}


# -- COCO-like JSON --------------------------------------------------------


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _require(obj: dict, key: str, where: str, source: str | None) -> Any:
    if key not in obj:
        raise SchemaError(f"{where}: missing field '{key}'", field_name=key, source=source)
    return obj[key]


def _parse_ring(ring: Any, where: str, source: str | None) -> tuple[float, ...]:
    if not isinstance(ring, list) or not all(_is_number(v) for v in ring):
        raise SegmentationError(f"{where}: segmentation ring must be a list of numbers", source=source)
    if len(ring) < 6 or len(ring) % 2:
        raise SegmentationError(
            f"{where}: segmentation ring needs an even count of at least 6 numbers, got {len(ring)}",
            source=source,
        )
    return tuple(float(v) for v in ring)


def _parse_annotation(ann: Any, index: int, source: str | None) -> TextInstance:
    where = f"annotations[{index}]"
    if not isinstance(ann, dict):
        raise SchemaError(f"{where}: expected an object", field_name="annotations", source=source)
    ann_id = _require(ann, "id", where, source)
    image_id = _require(ann, "image_id", where, source)
    bbox = _require(ann, "bbox", where, source)
    if not isinstance(bbox, list) or len(bbox) != 4 or not all(_is_number(v) for v in bbox):
        raise SchemaError(f"{where}: bbox must be [x, y, w, h]", field_name="bbox", source=source)
    seg = _require(ann, "segmentation", where, source)
    if not isinstance(seg, list) or not seg:
        raise SegmentationError(f"{where}: segmentation must be a non-empty list of rings", source=source)
    rings = [seg] if _is_number(seg[0]) else seg
    parsed = [_parse_ring(r, where, source) for r in rings]
    try:
        polygon = Polygon.from_flat(parsed[0])
    except GeometryError as exc:
        raise SegmentationError(f"{where}: {exc}", source=source) from exc

    attrs = _require(ann, "attributes", where, source)
    if not isinstance(attrs, dict):
        raise SchemaError(f"{where}: attributes must be an object", field_name="attributes", source=source)
    legible = _require(attrs, "legible", f"{where}.attributes", source)
    if "machine_printed" in attrs:
        printed = attrs["machine_printed"]
    else:
        printed = _require(attrs, "machine-printed", f"{where}.attributes", source)
    for name, value in (("legible", legible), ("machine_printed", printed)):
        if not isinstance(value, bool):
            raise SchemaError(f"{where}.attributes: '{name}' must be a boolean", field_name=name, source=source)
    text = attrs.get("transcription")
    if text is not None and not isinstance(text, str):
        raise SchemaError(
            f"{where}.attributes: 'transcription' must be a string", field_name="transcription", source=source
        )
    return TextInstance(
        id=ann_id,
        image_id=image_id,
        polygon=polygon,
        transcription=text or None,
        legible=legible,
        machine_printed=printed,
        extra_rings=tuple(parsed[1:]),
        attributes_extra={k: v for k, v in attrs.items() if k not in _ATTRIBUTE_KEYS},
        extra={k: v for k, v in ann.items() if k not in _ANNOTATION_KEYS},
    )


def _parse_image(img: Any, index: int, source: str | None) -> ImageRecord:
    where = f"images[{index}]"
    if not isinstance(img, dict):
        raise SchemaError(f"{where}: expected an object", field_name="images", source=source)
    dims = []
    for key in ("width", "height"):
        value = _require(img, key, where, source)
        if not _is_number(value) or value != int(value):
            raise SchemaError(f"{where}: '{key}' must be an integer", field_name=key, source=source)
        dims.append(int(value))
    file_name = _require(img, "file_name", where, source)
    return ImageRecord(
        image_id=_require(img, "id", where, source),
        file_name=str(file_name),
        width=dims[0],
        height=dims[1],
        extra={k: v for k, v in img.items() if k not in _IMAGE_KEYS},
    )


def parse_coco_text(document: bytes | str, subset_name: str = "", source: str | None = None) -> Dataset:
    """Parse a COCO-like text annotation document.

    Raises:
        ParseError: malformed JSON (with byte offset) or undecodable UTF-8.
        SchemaError: a required field is missing; names the field.
        SegmentationError: a segmentation ring has fewer than 6 numbers.
    """
    if isinstance(document, bytes):
        try:
            text = document.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise ParseError(f"invalid UTF-8: {exc.reason}", source=source, offset=exc.start) from exc
        bom = 3 if document.startswith(b"\xef\xbb\xbf") else 0
    else:
        text, bom = document, 0
    try:
        root = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = bom + len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"malformed JSON: {exc.msg}", source=source, line=exc.lineno, offset=offset) from exc
    if not isinstance(root, dict):
        raise SchemaError("top level must be an object", field_name="images", source=source)
    images = _require(root, "images", "document", source)
    annotations = _require(root, "annotations", "document", source)
    for key, value in (("images", images), ("annotations", annotations)):
        if not isinstance(value, list):
            raise SchemaError(f"'{key}' must be an array", field_name=key, source=source)
    return Dataset(
        subset_name=subset_name,
        images=tuple(_parse_image(img, i, source) for i, img in enumerate(images)),
        instances=tuple(_parse_annotation(ann, i, source) for i, ann in enumerate(annotations)),
        extra={k: v for k, v in root.items() if k not in ("images", "annotations")},
    )


def load_coco_text(path: str | Path) -> Dataset:
    path = Path(path)
    return parse_coco_text(path.read_bytes(), subset_name=path.stem, source=str(path))


def _fixed(values: Iterable[float]) -> list[_jsonfmt.Fixed]:
    return [_jsonfmt.Fixed(v, COORD_DIGITS) for v in values]


def _annotation_doc(inst: TextInstance) -> dict[str, Any]:
    attrs: dict[str, Any] = dict(inst.attributes_extra)
    attrs["legible"] = inst.legible
    attrs["machine_printed"] = inst.machine_printed
    if inst.transcription is not None:
        attrs["transcription"] = inst.transcription
    doc = dict(inst.extra)
    doc.update(
        id=inst.id,
        image_id=inst.image_id,
        bbox=_fixed(bounding_box(inst.polygon).as_xywh()),
        segmentation=[_fixed(inst.polygon.flat()), *(_fixed(r) for r in inst.extra_rings)],
        attributes=attrs,
    )
    return doc


def _image_doc(img: ImageRecord) -> dict[str, Any]:
    doc = dict(img.extra)
    doc.update(id=img.image_id, file_name=img.file_name, width=img.width, height=img.height)
    return doc


def serialize_coco_text(d: Dataset) -> bytes:
    """Canonical UTF-8 JSON: sorted keys, 2-decimal coordinates, trailing LF.

    ``bbox`` is always recomputed from the polygon.
    """
    root = dict(d.extra)
    root["images"] = [_image_doc(img) for img in d.images]
    root["annotations"] = [_annotation_doc(inst) for inst in d.instances]
    return (_jsonfmt.dumps(root) + "\n").encode("utf-8")


# -- ICDAR text files -------------------------------------------------------


def _split_record(line: str, n_coords: int | None) -> tuple[list[str], str]:
    """Split ``coords...,transcription``; a quoted transcription may hold commas."""
    if n_coords is None:
        fields = next(csv.reader([line]))
        return fields[:-1], fields[-1] if fields else ""
    parts = line.split(",", n_coords)
    if len(parts) <= n_coords:
        return parts, ""
    coords, rest = parts[:n_coords], parts[n_coords]
    stripped = rest.strip()
    if len(stripped) >= 2 and stripped[0] == '"' and stripped[-1] == '"':
        rest = next(csv.reader([stripped]))[0]
    return coords, rest


def _text_lines(text: str) -> Iterable[tuple[int, str]]:
    if text.startswith("\ufeff"):
        text = text[1:]
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\r")
        if line.strip():
            yield number, line


def _coords(fields: Sequence[str], number: int, source: str | None) -> list[float]:
    values = []
    for raw in fields:
        try:
            value = float(raw)
        except ValueError:
            raise ParseError(f"non-numeric coordinate {raw.strip()!r}", source=source, line=number) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite coordinate {raw.strip()!r}", source=source, line=number)
        values.append(value)
    return values


def parse_icdar_quad_gt(
    lines: str, image_id: Identifier, *, start_id: int = 0, source: str | None = None
) -> list[TextInstance]:
    """Parse ICDAR 2013/2015 quadrilateral ground truth.

    ``###`` maps to an illegible instance without transcription. Instance ids
    are consecutive integers from ``start_id``.
    """
    out = []
    for number, line in _text_lines(lines):
        fields, text = _split_record(line, 8)
        if len(fields) < 8:
            raise ParseError(f"expected 8 coordinates, got {len(fields)}", source=source, line=number)
        coords = _coords(fields, number, source)
        legible = text != DONT_CARE
        out.append(
            TextInstance(
                id=start_id + len(out),
                image_id=image_id,
                polygon=Polygon.from_flat(coords),
                transcription=(text or None) if legible else None,
                legible=legible,
            )
        )
    return out


def parse_icdar_polygons(lines: str, *, source: str | None = None) -> list[tuple[Polygon, str]]:
    """Parse submission-style lines with any even number (>= 6) of coordinates.

    The last CSV field is the transcription, so transcriptions holding commas
    must be quoted (as :func:`export_icdar_submission` does).
    """
    out = []
    for number, line in _text_lines(lines):
        fields, text = _split_record(line, None)
        if len(fields) < 6 or len(fields) % 2:
            raise ParseError(
                f"expected an even number (>= 6) of coordinates, got {len(fields)}", source=source, line=number
            )
        coords = _coords(fields, number, source)
        out.append((Polygon.from_flat(coords), text))
    return out


def _quote(text: str) -> str:
    if any(ch in text for ch in ',"\r\n') or text != text.strip():
        return '"' + text.replace('"', '""') + '"'
    return text


def export_icdar_submission(preds: Iterable[Any]) -> str:
    """One ``x1,y1,...,xn,yn,transcription`` line per prediction, LF-terminated.

    Vertices are rounded to integers. Accepts anything with ``polygon`` and
    ``transcription`` attributes; a missing transcription is written as ``###``.
    """
    lines = []
    for pred in preds:
        coords = ",".join(str(int(round(c))) for c in pred.polygon.flat())
        text = pred.transcription if pred.transcription is not None else DONT_CARE
        lines.append(f"{coords},{_quote(text)}")
    return "".join(line + "\n" for line in lines)


def icdar_image_id(path: Path) -> str:
    """``gt_img_12.txt`` / ``res_img_12.txt`` -> ``img_12``."""
    stem = path.stem
    for prefix in ("gt_", "res_"):
        if stem.startswith(prefix):
            return stem[len(prefix) :]
    return stem


def load_icdar_gt_dir(directory: str | Path, subset_name: str | None = None) -> Dataset:
    """Read a directory of ICDAR quad ground-truth files into a Dataset.

    Image sizes are unknown without pixel access, so each image gets the
    smallest integer extent that contains its polygons.
    """
    directory = Path(directory)
    images: list[ImageRecord] = []
    instances: list[TextInstance] = []
    for path in sorted(directory.glob("*.txt")):
        image_id = icdar_image_id(path)
        text = path.read_bytes().decode("utf-8-sig")
        found = parse_icdar_quad_gt(text, image_id, start_id=len(instances), source=str(path))
        xs = [x for inst in found for x, _ in inst.polygon.vertices] or [0.0]
        ys = [y for inst in found for _, y in inst.polygon.vertices] or [0.0]
        width = max(1, math.ceil(max(xs)))
        height = max(1, math.ceil(max(ys)))
        images.append(ImageRecord(image_id, image_id, width, height))
        instances.extend(found)
    return Dataset(subset_name or directory.name, tuple(images), tuple(instances))


# -- validation and statistics ----------------------------------------------


def _printable_ascii(ch: str) -> bool:
    return " " <= ch <= "~"


def validate(d: Dataset, charset: str | None = None) -> ViolationReport:
    """Check a dataset against the annotation rules.

    ``charset`` restricts transcription characters; by default anything
    outside printable ASCII is reported as a warning.
    """
    out: list[Violation] = []

    def add(subject: Identifier, rule: str, message: str, severity: str = "error") -> None:
        out.append(Violation(subject, rule, message, severity))

    image_ids = Counter(img.image_id for img in d.images)
    sizes = {}
    for img in d.images:
        if image_ids[img.image_id] > 1 and img.image_id not in sizes:
            add(img.image_id, "DUPLICATE_IMAGE_ID", f"image id {img.image_id!r} appears {image_ids[img.image_id]} times")
        if img.width <= 0 or img.height <= 0:
            add(img.image_id, "INVALID_IMAGE_SIZE", f"image size {img.width}x{img.height} is not positive")
        sizes.setdefault(img.image_id, (img.width, img.height))

    instance_ids = Counter(inst.id for inst in d.instances)
    reported_dups = set()
    for inst in d.instances:
        if instance_ids[inst.id] > 1 and inst.id not in reported_dups:
            reported_dups.add(inst.id)
            add(inst.id, "DUPLICATE_INSTANCE_ID", f"instance id {inst.id!r} appears {instance_ids[inst.id]} times")
        if inst.image_id not in sizes:
            add(inst.id, "DANGLING_IMAGE_ID", f"image id {inst.image_id!r} has no image record")

        try:
            poly = normalize_polygon(inst.polygon)
        except GeometryError as exc:
            add(inst.id, "INVALID_POLYGON", str(exc))
            poly = None
        if poly is not None:
            if not poly.is_simple:
                add(inst.id, "NON_SIMPLE_POLYGON", "polygon edges intersect each other")
            elif polygon_area(poly) <= EPS:
                add(inst.id, "ZERO_AREA_POLYGON", "polygon has no area")
        if inst.image_id in sizes and sizes[inst.image_id][0] > 0 and sizes[inst.image_id][1] > 0:
            w, h = sizes[inst.image_id]
            outside = [
                (x, y) for x, y in inst.polygon.vertices if not (-0.5 <= x <= w + 0.5 and -0.5 <= y <= h + 0.5)
            ]
            if outside:
                add(inst.id, "VERTEX_OUT_OF_BOUNDS", f"{len(outside)} vertices outside {w}x{h} image, first {outside[0]}")
        if inst.extra_rings:
            add(inst.id, "MULTI_RING", f"{len(inst.extra_rings)} extra segmentation rings ignored", "warning")

        text = inst.transcription
        if text is None:
            if inst.legible:
                add(inst.id, "MISSING_TRANSCRIPTION", "legible instance has no transcription", "warning")
            continue
        if any(ch.isspace() for ch in text):
            add(inst.id, "SPACE_IN_TRANSCRIPTION", f"transcription {text!r} spans several words")
        if charset is None:
            bad = sorted({ch for ch in text if not _printable_ascii(ch)})
        else:
            bad = sorted({ch for ch in text if ch not in charset and not ch.isspace()})
        if bad:
            add(inst.id, "CHARSET", f"characters outside charset: {''.join(bad)!r}", "warning")
    return ViolationReport(tuple(out))


def subset_stats(d: Dataset) -> SubsetStats:
    return SubsetStats(
        images=len(d.images),
        instances=len(d.instances),
        legible=sum(1 for inst in d.instances if inst.legible),
    )


def aggregate_stats(rows: Iterable[SubsetStats]) -> SubsetStats:
    total = SubsetStats()
    for row in rows:
        total = total + row
    return total


def parse_stats_rows(text: str, source: str | None = None) -> list[tuple[str, SubsetStats]]:
    """Read ``subset,images,instances,legible`` CSV rows (header optional).

    A ``TOTAL`` row, as written by the ``stats`` command, is skipped.
    """
    rows = []
    reader = csv.reader(io.StringIO(text.lstrip("\ufeff")))
    for number, fields in enumerate(reader, start=1):
        if not fields or not "".join(fields).strip():
            continue
        if len(fields) != 4:
            raise ParseError(f"expected 4 fields, got {len(fields)}", source=source, line=number)
        name = fields[0].strip()
        try:
            counts = [int(f.strip().replace(",", "")) for f in fields[1:]]
        except ValueError:
            if number == 1:
                continue  # header
            raise ParseError(f"non-integer count in {fields!r}", source=source, line=number) from None
        if name.upper() == "TOTAL":
            continue
        try:
            rows.append((name, SubsetStats(*counts)))
        except ValueError as exc:
            raise ParseError(str(exc), source=source, line=number) from None
    return rows

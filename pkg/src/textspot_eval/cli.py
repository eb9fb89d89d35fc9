"""Command line front end: ``textspot-eval validate|stats|convert|evaluate``.

Exit status: 0 success, 1 validation errors found, 2 usage error, 3 input
could not be parsed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import _jsonfmt
from .annotation import (
    DONT_CARE,
    Dataset,
    ImageRecord,
    ParseError,
    SubsetStats,
    TextInstance,
    aggregate_stats,
    export_icdar_submission,
    icdar_image_id,
    load_coco_text,
    load_icdar_gt_dir,
    parse_coco_text,
    parse_icdar_polygons,
    parse_stats_rows,
    serialize_coco_text,
    subset_stats,
    validate,
)
from .lexicon import LexiconError, LexiconMode, load_lexicon
from .metrics import EvalReport, EvaluationError, Protocol, evaluate
from .predictions import load_predictions
from .textnorm import NormalizationPolicy

logger = logging.getLogger("textspot_eval")

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_USAGE = 2
EXIT_INPUT = 3

NO_PARALLEL_ENV = "TEXTSPOT_EVAL_NO_PARALLEL"
FORMATS = ("coco-text", "icdar-quad", "icdar-submission", "pred-jsonl")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    inputs: list[Path] = field(default_factory=list)
    gt: Path | None = None
    pred: Path | None = None
    protocol: Protocol = Protocol.END_TO_END
    iou_threshold: float = 0.5
    lexicon_mode: LexiconMode = LexiconMode.NONE
    lexicon: Path | None = None
    per_image_lexicon: Path | None = None
    wed_threshold: float = 0.5
    score_threshold: float | None = None
    case_sensitive: bool = False
    match_before_suppress: bool = False
    jobs: int = 1
    output: Path | None = None
    format: str = "json"
    source_format: str | None = None
    target_format: str | None = None
    charset: str | None = None
    warn_only: bool = False

    def policy(self) -> NormalizationPolicy:
        return NormalizationPolicy(case_fold=not self.case_sensitive)


# -- argument parsing ---------------------------------------------------------


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1)")
    return value


def _non_negative(text: str) -> float:
    value = float(text)
    if value < 0.0:
        raise argparse.ArgumentTypeError(f"{text} is negative")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textspot-eval",
        description="Text annotation tooling and end-to-end text spotting evaluation.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check annotation files against the annotation rules")
    p.add_argument("inputs", nargs="+", type=Path, metavar="PATH")
    p.add_argument("--charset", help="allowed transcription characters (default: printable ASCII)")
    p.add_argument("--warn-only", action="store_true", help="exit 0 even when errors are found")
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.add_argument("--output", type=Path)

    p = sub.add_parser("stats", help="count images, instances and legible instances")
    p.add_argument(
        "inputs",
        nargs="+",
        type=Path,
        metavar="PATH",
        help="COCO-like JSON, ICDAR ground-truth directory, or subset,images,instances,legible CSV",
    )
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--output", type=Path)

    p = sub.add_parser("convert", help="convert between annotation formats")
    p.add_argument("--from", dest="source_format", choices=FORMATS, required=True)
    p.add_argument("--to", dest="target_format", choices=FORMATS[:3], required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True, help="file for coco-text, directory for icdar-*")

    p = sub.add_parser(
        "evaluate",
        help="score predictions",
        description="Score predictions against ground truth. Precision of an empty prediction set is 0.",
    )
    p.add_argument("--gt", type=Path, required=True, help="COCO-like JSON or ICDAR ground-truth directory")
    p.add_argument("--pred", type=Path, required=True, help="JSON-lines predictions or ICDAR submission directory")
    p.add_argument("--protocol", choices=("e2e", "word-spotting"), default="e2e")
    p.add_argument("--iou", type=_probability, default=0.5, dest="iou_threshold")
    p.add_argument("--lexicon-mode", choices=[m.value for m in LexiconMode], default="none")
    p.add_argument("--lexicon", type=Path, help="word-per-line file for weak/generic mode")
    p.add_argument("--per-image-lexicon", type=Path, help="directory of <image_id>.txt or JSON map (strong mode)")
    p.add_argument("--wed-threshold", type=_non_negative, default=0.5)
    p.add_argument("--score-threshold", type=float, help="drop predictions with lower confidence")
    p.add_argument("--case-sensitive", action="store_true")
    p.add_argument("--match-before-suppress", action="store_true")
    p.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
    p.add_argument("--output", type=Path)
    p.add_argument("--format", choices=("json", "table", "csv"), default="json")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command)
    for name in vars(args):
        if name in ("verbose", "command"):
            continue
        setattr(cfg, name, getattr(args, name))
    if args.command == "evaluate":
        cfg.protocol = Protocol.END_TO_END if args.protocol == "e2e" else Protocol.WORD_SPOTTING
        cfg.lexicon_mode = LexiconMode(args.lexicon_mode)
        mode = cfg.lexicon_mode
        if mode is not LexiconMode.STRONG and cfg.per_image_lexicon is not None:
            raise UsageError("--per-image-lexicon is only valid with --lexicon-mode strong")
        if mode in (LexiconMode.NONE, LexiconMode.STRONG) and cfg.lexicon is not None:
            raise UsageError(f"--lexicon cannot be combined with --lexicon-mode {mode.value}")
        if os.environ.get(NO_PARALLEL_ENV) == "1":
            cfg.jobs = 1
        required = [cfg.gt, cfg.pred, cfg.lexicon, cfg.per_image_lexicon]
    elif args.command == "convert":
        if cfg.source_format == cfg.target_format:
            raise UsageError("--from and --to name the same format")
        required = [args.input]
        cfg.inputs = [args.input]
    else:
        required = list(cfg.inputs)
    for path in required:
        if path is not None and not os.access(path, os.R_OK):
            raise UsageError(f"{path}: not found or not readable")
    return cfg


# -- commands -----------------------------------------------------------------


def _emit(text: str, output: Path | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        output.write_text(text, encoding="utf-8", newline="\n")


def _load_dataset(path: Path) -> Dataset:
    if path.is_dir():
        return load_icdar_gt_dir(path)
    return load_coco_text(path)


def run_validate(cfg: RunConfig) -> int:
    reports = []
    failed = False
    for path in cfg.inputs:
        report = validate(_load_dataset(path), cfg.charset)
        failed = failed or bool(report.errors)
        reports.append((path, report))
    if cfg.format == "json":
        doc = {"files": [{"path": str(p), **r.to_dict()} for p, r in reports]}
        text = _jsonfmt.dumps(doc) + "\n"
    else:
        lines = []
        for path, report in reports:
            for v in report.violations:
                lines.append(f"{path}\t{v.subject}\t{v.rule}\t{v.severity}\t{v.message}")
            if not report:
                lines.append(f"{path}\tOK")
        text = "".join(line + "\n" for line in lines)
    _emit(text, cfg.output)
    return EXIT_VIOLATIONS if failed and not cfg.warn_only else EXIT_OK


def _stats_rows(path: Path) -> list[tuple[str, SubsetStats]]:
    if path.is_dir():
        return [(path.name, subset_stats(load_icdar_gt_dir(path)))]
    data = path.read_bytes()
    if path.suffix.lower() == ".csv":
        return parse_stats_rows(data.decode("utf-8-sig"), source=str(path))
    try:
        root = json.loads(data.decode("utf-8-sig"))
    except (json.JSONDecodeError, UnicodeDecodeError):
        root = None  # let the annotation parser report the position
    if isinstance(root, dict) and "subsets" in root and "annotations" not in root:
        try:
            return [
                (str(row["subset"]), SubsetStats(int(row["images"]), int(row["instances"]), int(row["legible"])))
                for row in root["subsets"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad stats row: {exc}", source=str(path)) from None
    return [(path.stem, subset_stats(parse_coco_text(data, path.stem, source=str(path))))]


def format_stats(rows: Sequence[tuple[str, SubsetStats]], total: SubsetStats, fmt: str) -> str:
    if fmt == "json":
        doc = {
            "subsets": [{"subset": name, **_counts(s)} for name, s in rows],
            "total": _counts(total),
        }
        return _jsonfmt.dumps(doc) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["subset", "images", "instances", "legible"])
        for name, s in [*rows, ("TOTAL", total)]:
            writer.writerow([name, *s.as_tuple()])
        return buf.getvalue()
    body = [("Subset", "Images", "Instances", "Legible")]
    body += [(name, *map(str, s.as_tuple())) for name, s in rows]
    body.append(("TOTAL", *map(str, total.as_tuple())))
    widths = [max(len(r[k]) for r in body) for k in range(4)]
    return "".join(
        f"{r[0]:<{widths[0]}}  " + "  ".join(f"{r[k]:>{widths[k]}}" for k in (1, 2, 3)) + "\n" for r in body
    )


def _counts(s: SubsetStats) -> dict[str, int]:
    return {"images": s.images, "instances": s.instances, "legible": s.legible}


def run_stats(cfg: RunConfig) -> int:
    rows = []
    for path in cfg.inputs:
        rows.extend(_stats_rows(path))
    total = aggregate_stats(s for _, s in rows)
    _emit(format_stats(rows, total, cfg.format), cfg.output)
    return EXIT_OK


class ConversionError(ParseError):
    pass


def _read_source(fmt: str, path: Path) -> Dataset:
    if fmt == "coco-text":
        return load_coco_text(path)
    if fmt == "icdar-quad":
        return load_icdar_gt_dir(path)
    if fmt == "icdar-submission":
        images, instances = [], []
        for file in sorted(path.glob("*.txt")):
            image_id = icdar_image_id(file)
            polys = parse_icdar_polygons(file.read_bytes().decode("utf-8-sig"), source=str(file))
            for poly, text in polys:
                legible = text != DONT_CARE
                instances.append(
                    TextInstance(len(instances), image_id, poly, (text or None) if legible else None, legible)
                )
            images.append(_extent_image(image_id, [p for p, _ in polys]))
        return Dataset(path.name, tuple(images), tuple(instances))
    preds = load_predictions(path)
    images, instances = [], []
    for image_id, plist in preds.items():
        images.append(_extent_image(image_id, [p.polygon for p in plist]))
        for p in plist:
            instances.append(TextInstance(len(instances), p.image_id, p.polygon, p.transcription or None))
    return Dataset(path.stem, tuple(images), tuple(instances))


def _extent_image(image_id: str, polys: Sequence[Any]) -> ImageRecord:
    xs = [x for p in polys for x, _ in p.vertices] or [0.0]
    ys = [y for p in polys for _, y in p.vertices] or [0.0]
    return ImageRecord(image_id, image_id, max(1, int(-(-max(xs) // 1))), max(1, int(-(-max(ys) // 1))))


def _coord(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return _jsonfmt.format_fixed(value, 2)


def _write_target(fmt: str, d: Dataset, out: Path) -> None:
    if fmt == "coco-text":
        out.write_bytes(serialize_coco_text(d))
        return
    out.mkdir(parents=True, exist_ok=True)
    grouped = d.instances_by_image()
    for image_id, instances in grouped.items():
        if fmt == "icdar-submission":
            text = export_icdar_submission(instances)
            name = f"res_{image_id}.txt"
        else:
            lines = []
            for inst in instances:
                if len(inst.polygon) != 4:
                    raise ConversionError(
                        f"instance {inst.id!r} has {len(inst.polygon)} vertices; icdar-quad needs 4"
                    )
                coords = ",".join(_coord(c) for c in inst.polygon.flat())
                label = inst.transcription if inst.legible and inst.transcription else DONT_CARE
                if any(ch in label for ch in ',"'):
                    label = '"' + label.replace('"', '""') + '"'
                lines.append(f"{coords},{label}\n")
            text = "".join(lines)
            name = f"gt_{image_id}.txt"
        (out / name).write_text(text, encoding="utf-8", newline="\n")


def run_convert(cfg: RunConfig) -> int:
    assert cfg.source_format and cfg.target_format and cfg.output
    dataset = _read_source(cfg.source_format, cfg.inputs[0])
    _write_target(cfg.target_format, dataset, cfg.output)
    return EXIT_OK


def format_report(report: EvalReport, fmt: str) -> str:
    if fmt == "json":
        return report.to_json()
    rows = [(image_id, c.tp, c.fp, c.fn, c.precision, c.recall, c.hmean) for image_id, c in (report.per_image or {}).items()]
    rows.append(
        (
            "TOTAL",
            report.true_positives,
            report.false_positives,
            report.false_negatives,
            report.precision,
            report.recall,
            report.hmean,
        )
    )
    header = ("image_id", "tp", "fp", "fn", "precision", "recall", "hmean")
    cells = [header] + [
        (str(r[0]), str(r[1]), str(r[2]), str(r[3]), *(f"{v:.6f}" for v in r[4:])) for r in rows
    ]
    if fmt == "csv":
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(cells)
        return buf.getvalue()
    widths = [max(len(c[k]) for c in cells) for k in range(len(header))]
    return "".join("  ".join(c[k].rjust(widths[k]) for k in range(len(header))) + "\n" for c in cells)


def run_evaluate(cfg: RunConfig) -> int:
    assert cfg.gt and cfg.pred
    dataset = _load_dataset(cfg.gt)
    gt_by_image = {str(k): v for k, v in dataset.instances_by_image().items()}
    preds = load_predictions(cfg.pred)
    if cfg.score_threshold is not None:
        preds = {k: [p for p in v if p.confidence >= cfg.score_threshold] for k, v in preds.items()}
    policy = cfg.policy()
    lexicon = None
    if cfg.lexicon is None and cfg.per_image_lexicon is None:
        if cfg.lexicon_mode is not LexiconMode.NONE:
            # lexicon-free runs of every mode are legitimate
            logger.warning("--lexicon-mode %s without a word list: no correction applied", cfg.lexicon_mode.value)
    else:
        lexicon = load_lexicon(
            cfg.lexicon_mode,
            cfg.lexicon,
            cfg.per_image_lexicon,
            policy=policy,
            image_ids=gt_by_image if cfg.lexicon_mode is LexiconMode.STRONG else None,
        )
    logger.info("scoring %d images with %d job(s)", len(gt_by_image), cfg.jobs)
    report = evaluate(
        gt_by_image,
        preds,
        cfg.protocol,
        policy,
        cfg.iou_threshold,
        lexicon,
        wed_threshold=cfg.wed_threshold,
        suppress_first=not cfg.match_before_suppress,
        jobs=cfg.jobs,
    )
    _emit(format_report(report, cfg.format), cfg.output)
    summary_stream = sys.stdout if cfg.output is not None else sys.stderr
    print(report.summary(), file=summary_stream)
    return EXIT_OK


COMMANDS = {
    "validate": run_validate,
    "stats": run_stats,
    "convert": run_convert,
    "evaluate": run_evaluate,
}


def run(cfg: RunConfig) -> int:
    return COMMANDS[cfg.command](cfg)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"textspot-eval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run(cfg)
    except ParseError as exc:
        print(f"textspot-eval: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (LexiconError, EvaluationError, OSError) as exc:
        print(f"textspot-eval: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

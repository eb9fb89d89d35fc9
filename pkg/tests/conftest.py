from __future__ import annotations

import math
import random
import string
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from textspot_eval.annotation import Dataset, ImageRecord, SubsetStats, TextInstance, serialize_coco_text  # noqa: E402
from textspot_eval.geometry import Polygon  # noqa: E402
from textspot_eval.matching import Prediction  # noqa: E402
from textspot_eval.predictions import dump_predictions_jsonl  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

# published per-subset rows: images, instances, legible instances
TABLE_1 = [
    ("train_1", SubsetStats(50_878, 540_057, 444_001)),
    ("train_2", SubsetStats(48_877, 594_836, 503_171)),
    ("train_5", SubsetStats(49_329, 621_057, 496_203)),
    ("train_f", SubsetStats(41_975, 597_352, 471_050)),
    ("validation", SubsetStats(16_731, 218_308, 158_962)),
]


def rect(x0: float, y0: float, x1: float, y1: float) -> Polygon:
    return Polygon(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def square(x: float, y: float, side: float) -> Polygon:
    return rect(x, y, x + side, y + side)


def hand_fixture(image_id: str = "img_1") -> tuple[list[TextInstance], list[Prediction]]:
    """One legible "HELLO", one don't-care region, a correct and a stray prediction."""
    gts = [
        TextInstance(1, image_id, rect(0, 0, 100, 20), "HELLO"),
        TextInstance(2, image_id, rect(200, 0, 260, 20), None, legible=False),
    ]
    preds = [
        # IoU 0.8 with the legible word
        Prediction(image_id, rect(0, 0, 100, 16), "HELLO", 0.9),
        Prediction(image_id, rect(400, 400, 440, 420), "XYZ", 0.8),
    ]
    return gts, preds


def random_dataset(rng: random.Random, max_images: int = 100, max_instances: int = 1000) -> Dataset:
    """Valid dataset with 2-decimal coordinates (exactly representable in the canonical form)."""
    n_images = rng.randint(0, max_images)
    images = [
        ImageRecord(k, f"{k:06d}.jpg", rng.randint(64, 2000), rng.randint(64, 2000)) for k in range(n_images)
    ]
    instances = []
    if images:
        for k in range(rng.randint(0, max_instances)):
            img = rng.choice(images)
            w = rng.uniform(5, img.width / 2)
            h = rng.uniform(5, img.height / 2)
            x0 = rng.uniform(0, img.width - w)
            y0 = rng.uniform(0, img.height - h)
            n = rng.choice([4, 4, 6, 8])
            # convex: points on an ellipse inscribed in the box
            pts = []
            for v in range(n):
                t = 2 * math.pi * v / n
                pts.append(
                    (round(x0 + w / 2 + w / 2 * math.cos(t), 2), round(y0 + h / 2 + h / 2 * math.sin(t), 2))
                )
            legible = rng.random() < 0.8
            text = "".join(rng.choice(string.ascii_letters + string.digits) for _ in range(rng.randint(1, 12)))
            instances.append(
                TextInstance(
                    id=k,
                    image_id=img.image_id,
                    polygon=Polygon(tuple(pts)),
                    transcription=text if legible else None,
                    legible=legible,
                    machine_printed=rng.random() < 0.9,
                )
            )
    return Dataset("generated", tuple(images), tuple(instances), {"info": {"version": 1}})


@pytest.fixture
def fixture_pair():
    return hand_fixture()


def random_scene(rng: random.Random, max_gt: int = 5, max_pred: int = 5) -> tuple[list[TextInstance], list[Prediction]]:
    """Small image with jittered copies of ground truth plus stray boxes.

    Boxes are snapped to a 0.5 px grid so exact IoU ties and shared edges occur.
    """

    def snap(v: float) -> float:
        return round(v * 2) / 2

    def box_near(x: float, y: float, w: float, h: float, jitter: float) -> Polygon:
        x0 = snap(x + rng.uniform(-jitter, jitter))
        y0 = snap(y + rng.uniform(-jitter, jitter))
        x1 = max(x0 + 0.5, snap(x + w + rng.uniform(-jitter, jitter)))
        y1 = max(y0 + 0.5, snap(y + h + rng.uniform(-jitter, jitter)))
        return rect(x0, y0, x1, y1)

    gts = []
    for k in range(rng.randint(0, max_gt)):
        w, h = rng.uniform(4, 20), rng.uniform(2, 8)
        poly = box_near(rng.uniform(0, 30), rng.uniform(0, 30), w, h, 0)
        legible = rng.random() < 0.75
        gts.append(TextInstance(k, "scene", poly, f"W{k}" if legible else None, legible))
    preds = []
    for k in range(rng.randint(0, max_pred)):
        text = f"P{k}"
        if gts and rng.random() < 0.7:
            target = rng.choice(gts)
            g = target.polygon.bbox
            poly = box_near(g.x_min, g.y_min, g.width, g.height, 2.0)
            if target.transcription and rng.random() < 0.7:
                text = target.transcription.lower()
        else:
            poly = box_near(rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(3, 20), rng.uniform(2, 8), 0)
        preds.append(Prediction("scene", poly, text, rng.random()))
    return gts, preds


def write_corpus(directory: Path, gt_by_image, preds_by_image, sizes=None) -> tuple[Path, Path]:
    """Write ground truth as COCO-like JSON and predictions as JSON lines."""
    images = [ImageRecord(k, f"{k}.jpg", *(sizes or {}).get(k, (640, 480))) for k in gt_by_image]
    instances = []
    for image_id, gts in gt_by_image.items():
        for g in gts:
            instances.append(TextInstance(len(instances), image_id, g.polygon, g.transcription, g.legible))
    gt_path = directory / "gt.json"
    gt_path.write_bytes(serialize_coco_text(Dataset("fixture", images, instances)))
    pred_path = directory / "pred.jsonl"
    pred_path.write_text(dump_predictions_jsonl(preds_by_image), encoding="utf-8")
    return gt_path, pred_path


def synthetic_corpus(seed: int, n_images: int) -> tuple[dict, dict]:
    """Scenes from :func:`random_scene` keyed by integer image id."""
    rng = random.Random(seed)
    gt_by_image, preds_by_image = {}, {}
    for k in range(n_images):
        gts, preds = random_scene(rng, max_gt=8, max_pred=8)
        gt_by_image[k] = [TextInstance(g.id, k, g.polygon, g.transcription, g.legible) for g in gts]
        preds_by_image[k] = [Prediction(k, p.polygon, p.transcription, p.confidence) for p in preds]
    return gt_by_image, preds_by_image


# acceptance outcomes, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

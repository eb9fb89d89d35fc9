import json
import random
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import hand_fixture, random_scene, rect
from oracles import reference_rect_scorer
from textspot_eval.annotation import TextInstance
from textspot_eval.geometry import Polygon
from textspot_eval.lexicon import CharProbMatrix, Lexicon, LexiconMode
from textspot_eval.matching import Prediction, match_instances
from textspot_eval.metrics import EvalReport, EvaluationError, Protocol, evaluate, evaluate_image, hmean
from textspot_eval.textnorm import (
    NormalizationPolicy,
    normalize_transcription,
    transcription_match,
    word_spotting_eligible,
)

printable = st.text(st.characters(min_codepoint=32, max_codepoint=126), min_size=1, max_size=12)


def as_boxes(gts, preds):
    def box(p):
        b = p.bbox
        return (b.x_min, b.y_min, b.x_max, b.y_max)

    return (
        [(box(g.polygon), g.transcription if g.legible and g.transcription else None) for g in gts],
        [(box(p.polygon), p.transcription) for p in preds],
    )


# -- normalization -------------------------------------------------------------------


def test_normalize_strips_edge_punctuation():
    assert normalize_transcription("Door,") == "DOOR"


def test_normalize_fixed_point():
    assert normalize_transcription("HELLO") == "HELLO"


def test_normalize_can_return_empty():
    assert normalize_transcription("...") == ""


def test_normalize_case_sensitive_policy():
    assert normalize_transcription("Door,", NormalizationPolicy(case_fold=False)) == "Door"


@given(printable)
def test_normalize_idempotent(s):
    once = normalize_transcription(s)
    assert normalize_transcription(once) == once


def test_eligibility():
    assert not word_spotting_eligible("ab")
    assert word_spotting_eligible("HOTEL")
    assert not word_spotting_eligible("Wi-Fi")
    assert word_spotting_eligible("(Door)")
    assert word_spotting_eligible("ab", NormalizationPolicy(word_spotting_min_len=2))


def test_policy_rejects_zero_min_len():
    with pytest.raises(ValueError):
        NormalizationPolicy(word_spotting_min_len=0)


def test_transcription_match_examples():
    assert transcription_match("hello", "HELLO")
    assert not transcription_match("HELL0", "HELLO")
    assert not transcription_match("hello", "HELLO", NormalizationPolicy(case_fold=False))


@given(printable, printable)
def test_transcription_match_symmetric_reflexive(a, b):
    assert transcription_match(a, a)
    assert transcription_match(a, b) == transcription_match(b, a)


# -- hmean ---------------------------------------------------------------------------


def test_hmean_examples():
    assert hmean(1.0, 1.0) == 1.0
    assert hmean(0.5, 1.0) == pytest.approx(2 / 3)
    assert hmean(0.0, 0.0) == 0.0


@given(st.floats(0, 1), st.floats(0, 1))
def test_hmean_bounds(p, r):
    h = hmean(p, r)
    assert 0.0 <= h <= max(p, r) + 1e-15
    assert hmean(p, p) == pytest.approx(p, abs=1e-15)


# -- evaluation --------------------------------------------------------------------


def test_hand_fixture():
    gts, preds = hand_fixture()
    report = evaluate({"img_1": gts}, {"img_1": preds}, Protocol.END_TO_END)
    assert (report.true_positives, report.false_positives, report.false_negatives) == (1, 1, 0)
    assert report.precision == 0.5 and report.recall == 1.0
    assert report.hmean == pytest.approx(2 / 3, abs=1e-15)
    assert report.summary() == "P=0.500000 R=1.000000 H=0.666667"
    assert reference_rect_scorer(*as_boxes(gts, preds)) == (1, 1, 0)


def test_perfect_predictions():
    gts = [TextInstance(k, "a", rect(30 * k, 0, 30 * k + 20, 10), f"WORD{k}") for k in range(4)]
    preds = [Prediction("a", g.polygon, g.transcription.lower()) for g in gts]
    r = evaluate({"a": gts}, {"a": preds})
    assert (r.precision, r.recall, r.hmean) == (1.0, 1.0, 1.0)


def test_empty_predictions():
    gts, _ = hand_fixture()
    r = evaluate({"img_1": gts}, {})
    assert (r.precision, r.recall, r.hmean) == (0.0, 0.0, 0.0)
    assert r.false_negatives == 1


def test_wrong_transcription_counts_fp_and_fn():
    gts = [TextInstance(0, "a", rect(0, 0, 10, 5), "CAT")]
    r = evaluate({"a": gts}, {"a": [Prediction("a", rect(0, 0, 10, 5), "CAR")]})
    assert (r.true_positives, r.false_positives, r.false_negatives) == (0, 1, 1)


def test_word_spotting_variant():
    gts, preds = hand_fixture()
    gts.append(TextInstance(3, "img_1", rect(0, 100, 30, 120), "ab"))
    preds = preds[:1]
    ws = evaluate({"img_1": gts}, {"img_1": preds}, Protocol.WORD_SPOTTING)
    assert (ws.precision, ws.recall, ws.hmean) == (1.0, 1.0, 1.0)
    e2e = evaluate({"img_1": gts}, {"img_1": preds}, Protocol.END_TO_END)
    assert e2e.false_negatives == 1


def test_legible_without_transcription_is_dont_care():
    gts = [TextInstance(0, "a", rect(0, 0, 10, 5), None, legible=True)]
    r = evaluate({"a": gts}, {"a": [Prediction("a", rect(1, 1, 9, 4), "X")]})
    assert (r.true_positives, r.false_positives, r.false_negatives) == (0, 0, 0)


def test_unknown_image_rejected():
    gts, preds = hand_fixture()
    with pytest.raises(EvaluationError, match="img_2"):
        evaluate({"img_1": gts}, {"img_2": preds})


def test_image_ids_compared_as_strings():
    gts, preds = hand_fixture(image_id=5)
    assert evaluate({5: gts}, {"5": preds}).summary() == "P=0.500000 R=1.000000 H=0.666667"


def test_lexicon_correction_rescues_prediction():
    gts = [TextInstance(0, "a", rect(0, 0, 50, 10), "HELLO")]
    probs = CharProbMatrix("HEL0O", [[1, 0, 0, 0, 0], [0, 1, 0, 0, 0], [0, 0, 1, 0, 0], [0, 0, 1, 0, 0], [0, 0, 0, 0.6, 0.4]])
    preds = [Prediction("a", rect(0, 0, 50, 10), "HELL0", char_probs=probs)]
    plain = evaluate({"a": gts}, {"a": preds})
    assert plain.true_positives == 0
    weak = Lexicon(LexiconMode.WEAK, ("WORLD", "HELLO"))
    fixed = evaluate({"a": gts}, {"a": preds}, lexicon=weak)
    assert fixed.true_positives == 1
    # a lexicon that cannot help within the rejection threshold keeps the raw word
    far = Lexicon(LexiconMode.WEAK, ("ZZZZZZZZ",))
    assert evaluate({"a": gts}, {"a": preds}, lexicon=far).true_positives == 0


def test_strong_lexicon_per_image():
    gts = [TextInstance(0, "a", rect(0, 0, 50, 10), "PARK")]
    preds = [Prediction("a", rect(0, 0, 50, 10), "PAKR")]
    lex = Lexicon(LexiconMode.STRONG, per_image_words={"a": ("PARK", "BANK")})
    assert evaluate({"a": gts}, {"a": preds}, lexicon=lex).true_positives == 1


def test_report_json_shape():
    gts, preds = hand_fixture()
    text = evaluate({"img_1": gts}, {"img_1": preds}).to_json()
    doc = json.loads(text)
    assert {"protocol", "tp", "fp", "fn", "precision", "recall", "hmean", "per_image"} <= set(doc)
    assert '"hmean":0.666667' in text
    assert doc["per_image"]["img_1"]["tp"] == 1


def test_non_simple_prediction_reported():
    gts = [TextInstance(0, "a", rect(0, 0, 10, 10), "CAT")]
    bow = Polygon(((0, 0), (10, 10), (10, 0), (0, 10)))
    r = evaluate({"a": gts}, {"a": [Prediction("a", bow, "CAT")]})
    assert r.false_positives == 1 and len(r.errors) == 1
    assert r.errors[0]["image_id"] == "a"


# -- invariants --------------------------------------------------------------------


def _scenes(seed, n):
    rng = random.Random(seed)
    return [random_scene(rng, max_gt=6, max_pred=6) for _ in range(n)]


def test_counts_partition_and_reference_agreement():
    for gts, preds in _scenes(5, 300):
        result = match_instances(gts, preds)
        counts = evaluate_image(gts, preds)
        care = sum(1 for g in gts if g.legible and g.transcription)
        assert counts.tp + counts.fn == care
        assert counts.tp + counts.fp == len(preds) - len(result.suppressed_pred)
        assert (counts.tp, counts.fp, counts.fn) == reference_rect_scorer(*as_boxes(gts, preds))


def test_suppressed_prediction_does_not_change_report():
    gts, preds = hand_fixture()
    base = evaluate({"img_1": gts}, {"img_1": preds})
    # fully inside the don't-care region
    extra = Prediction("img_1", rect(210, 2, 250, 18), "NOISE", 0.99)
    grown = evaluate({"img_1": gts}, {"img_1": [*preds, extra]})
    assert grown.to_json() == base.to_json()


def test_word_spotting_equals_e2e_when_all_eligible():
    for k, (gts, preds) in enumerate(_scenes(8, 100)):
        gts = [replace(g, transcription=f"WORD{g.id}") if g.legible else g for g in gts]
        preds = [replace(p, transcription=f"WORD{j % 3}") for j, p in enumerate(preds)]
        a = evaluate({k: gts}, {k: preds}, Protocol.WORD_SPOTTING, keep_per_image=False)
        b = evaluate({k: gts}, {k: preds}, Protocol.END_TO_END, keep_per_image=False)
        assert (a.true_positives, a.false_positives, a.false_negatives) == (
            b.true_positives,
            b.false_positives,
            b.false_negatives,
        )


def _corpus(seed, n):
    gt_by_image, pred_by_image = {}, {}
    for k, (gts, preds) in enumerate(_scenes(seed, n)):
        gt_by_image[f"im{k}"] = [replace(g, image_id=f"im{k}") for g in gts]
        pred_by_image[f"im{k}"] = [replace(p, image_id=f"im{k}") for p in preds]
    return gt_by_image, pred_by_image


def test_aggregation_permutation_invariant():
    gt_by_image, pred_by_image = _corpus(13, 60)
    base = evaluate(gt_by_image, pred_by_image).to_json()
    keys = list(gt_by_image)
    random.Random(1).shuffle(keys)
    shuffled = evaluate({k: gt_by_image[k] for k in keys}, {k: pred_by_image[k] for k in reversed(keys)})
    assert shuffled.to_json() == base


def test_parallel_matches_serial():
    gt_by_image, pred_by_image = _corpus(21, 40)
    serial = evaluate(gt_by_image, pred_by_image, jobs=1).to_json()
    assert evaluate(gt_by_image, pred_by_image, jobs=3).to_json() == serial


def test_from_counts_zero_denominators():
    r = EvalReport.from_counts(Protocol.END_TO_END, {})
    assert (r.precision, r.recall, r.hmean) == (0.0, 0.0, 0.0)

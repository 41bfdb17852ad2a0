import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_state
from coalition_scope.detection.classifier import (
    FEATURE_NAMES,
    THRESHOLD_GRID,
    ClassifierError,
    IntentFeatures,
    LogisticModel,
    compute_features,
    f1_at,
    train_classifier,
    tune_threshold,
)
from coalition_scope.detection.pipeline import (
    candidate_filter,
    construct_agreements,
    detect,
    featurize_tuples,
    ordered_pair,
    round_view,
)
from coalition_scope.engine import DialogueRound, Message, Order, Play, Round, legal_orders
from coalition_scope.intent import ActionDistribution, HeuristicBackend, TableBackend

O = Order.parse


def test_features_follow_the_after_dialogue_top_order():
    before = ActionDistribution.from_pairs("u", [(O("A A H"), 0.5), (O("A A - B"), 0.5)])
    after = ActionDistribution.from_pairs("u", [(O("A A H"), 0.1), (O("A A - B"), 0.9)])
    f = compute_features(before, after)
    assert f.a_star == O("A A - B")
    assert (f.p_star_before, f.p_star_after) == (0.5, 0.9)
    assert f.delta_p == pytest.approx(0.4)
    assert f.h_before == pytest.approx(1.0)  # bits
    after_h = -(0.1 * math.log2(0.1) + 0.9 * math.log2(0.9))
    assert f.delta_h == pytest.approx(after_h - 1.0)
    assert f.vector().shape == (len(FEATURE_NAMES),)


def test_features_reject_mismatched_inputs():
    a = ActionDistribution.from_pairs("u", [(O("A A H"), 1.0)])
    with pytest.raises(ClassifierError, match="mixes"):
        compute_features(a, ActionDistribution.from_pairs("v", [(O("A A H"), 1.0)]))
    with pytest.raises(ClassifierError, match="supports"):
        compute_features(a, ActionDistribution.from_pairs("u", [(O("A A - B"), 1.0)]))


def _brute_threshold(probs, labels):
    scores = [f1_at(probs, labels, t) for t in THRESHOLD_GRID]
    return THRESHOLD_GRID[int(np.argmax(scores))]  # argmax keeps the first, i.e. lowest, maximizer


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=40))
def test_threshold_is_exhaustive_grid_argmax(pairs):
    probs = np.array([p for p, _ in pairs])
    labels = np.array([lbl for _, lbl in pairs])
    assert tune_threshold(probs, labels) == _brute_threshold(probs, labels)


def test_threshold_ties_prefer_lower_value():
    # every threshold in (0.2, 0.8] gives the same F1
    assert tune_threshold([0.2, 0.8], [False, True]) == 0.21


def _separable(n=80, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n):
        pos = k % 4 == 0
        shift = 0.6 if pos else 0.0
        pb = rng.uniform(0.1, 0.3)
        rows.append((IntentFeatures(pb, pb + shift + rng.uniform(0, 0.05), 1.0, 0.6 if pos else 1.0), pos))
    return rows


def test_classifier_learns_separable_shift(tmp_path):
    rows = _separable()
    model = train_classifier(rows)
    preds = model.predict(np.array([f.vector() for f, _ in rows]))
    assert list(preds) == [lbl for _, lbl in rows]
    model.save(tmp_path / "m.json")
    back = LogisticModel.load(tmp_path / "m.json")
    assert back == model
    x = np.array([f.vector() for f, _ in rows])
    assert np.array_equal(back.probability(x), model.probability(x))


def test_classifier_input_checks(tmp_path):
    with pytest.raises(ClassifierError):
        train_classifier([])
    with pytest.raises(ClassifierError, match="both classes"):
        train_classifier([(f, False) for f, _ in _separable()])
    (tmp_path / "bad.json").write_text('{"weights": [1]}')
    with pytest.raises(ClassifierError):
        LogisticModel.load(tmp_path / "bad.json")
    with pytest.raises(ClassifierError):
        LogisticModel((0.0,) * 6, 0.0, 1.5)


def test_training_is_deterministic():
    rows = _separable(seed=3)
    assert train_classifier(rows, seed=1) == train_classifier(rows, seed=2)


# -- pipeline on the grid ------------------------------------------------------------

def _board(grid):
    return make_state({"A": "P1", "C": "P2", "I": "P3"}, m=grid)


def test_candidate_filter_rules(grid):
    s = _board(grid)
    assert candidate_filter(grid, s, "P1", "P2", "P1_A", {"B"})
    assert not candidate_filter(grid, s, "P1", "P2", "P1_A", set())
    assert not candidate_filter(grid, s, "P1", "P2", "P1_A", {"H"})  # no legal order touches H
    assert not candidate_filter(grid, s, "P1", "P3", "P1_A", {"B"})  # P3 is four steps away
    with pytest.raises(ValueError):
        candidate_filter(grid, s, "P1", "P2", "P3_I", {"H"})


def _play(grid, texts, action=None):
    s = _board(grid)
    msgs = tuple(Message("P1" if k % 2 == 0 else "P2", "P2" if k % 2 == 0 else "P1", t)
                 for k, t in enumerate(texts))
    return Play(grid, (Round(s, DialogueRound(msgs), action),))


def test_filter_only_mode_labels_every_passing_unit(grid):
    play = _play(grid, ["Shall I take B while you hold?"])
    res = detect(play, 0, "P2", "P1", HeuristicBackend(), None)
    assert [r.power1 for r in res] == ["P1", "P1"]
    assert {r.unit: r.label for r in res} == {"P1_A": True, "P2_C": True}
    assert all(r.passed_filter for r in res)


def test_detect_with_classifier_scores_passing_units(grid):
    play = _play(grid, ["A A - B please.", "Sure."])
    model = LogisticModel((0.0, 0.0, 5.0, 0.0, 0.0, 0.0), 0.0, 0.5)
    res = {r.unit: r for r in detect(play, 0, "P1", "P2", HeuristicBackend(), model)}
    assert res["P1_A"].a_star == O("A A - B")
    assert res["P1_A"].features.delta_p > 0
    assert res["P1_A"].label
    assert 0.0 <= res["P2_C"].probability <= 1.0


def test_unfiltered_mode_scores_everything(grid):
    play = _play(grid, ["nothing useful"])
    model = LogisticModel((0.0,) * 6, 0.0, 0.5)
    res = detect(play, 0, "P1", "P2", HeuristicBackend(), model, use_filter=False)
    assert all(r.passed_filter and r.features is not None for r in res)


def test_backend_failure_marks_unit(grid):
    play = _play(grid, ["A A - B and C C - F"])
    table = TableBackend.from_entries([
        {"unit": "P1_A", "support": [{"order": "A A - B", "p": 1.0}]},
    ])
    model = LogisticModel((0.0,) * 6, 0.0, 0.5)
    res = {r.unit: r for r in detect(play, 0, "P1", "P2", table, model)}
    assert res["P1_A"].error is None
    assert res["P2_C"].error is not None and not res["P2_C"].label


def test_support_pledge_pairs_with_supported_unit(grid):
    play = _play(grid, ["A A S A C - B, and C C - B."])
    s = play.last_state
    assert O("A A S A C - B") in legal_orders(grid, s, "P1_A")
    table = TableBackend.from_entries([
        {"unit": "P1_A", "support": [{"order": "A A S A C - B", "p": 0.9}, {"order": "A A H", "p": 0.1}]},
        {"unit": "P2_C", "support": [{"order": "A C - B", "p": 0.8}, {"order": "A C H", "p": 0.2}]},
    ])
    model = LogisticModel((0.0,) * 6, 5.0, 0.5)  # everything positive
    res = detect(play, 0, "P1", "P2", table, model)
    ags = construct_agreements(res, round_view(play, 0, "P1", "P2"), table)
    assert len(ags) == 1
    ag = ags[0]
    assert (ag.u1, ag.a1, ag.u2, ag.a2) == ("P1_A", O("A A S A C - B"), "P2_C", O("A C - B"))


def test_no_positives_no_agreements(grid):
    play = _play(grid, ["hello"])
    res = detect(play, 0, "P1", "P2", HeuristicBackend(), LogisticModel((0.0,) * 6, -9.0, 0.5))
    assert construct_agreements(res, round_view(play, 0, "P1", "P2"), HeuristicBackend()) == []


def test_ordered_pair_uses_map_order(grid):
    assert ordered_pair(grid, "P3", "P1") == ("P1", "P3")


def test_featurize_tuples_covers_corpus(small_corpus):
    games, tuples = small_corpus
    by_id = {g.metadata["game_id"]: g for g in games}
    rows = featurize_tuples(by_id, tuples, HeuristicBackend())
    assert [r.tuple for r in rows] == list(tuples)
    positives = [r for r in rows if r.tuple.label]
    assert sum(r.passed for r in positives) / len(positives) > 0.8
    assert all(0.0 <= r.features.p_star_after <= 1.0 for r in rows)

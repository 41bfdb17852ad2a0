from dataclasses import replace

import pytest
from hypothesis import example, given
from hypothesis import strategies as st

from coalition_scope.corpus import generate_labeled_corpus
from coalition_scope.engine import bundled_map
from coalition_scope.equilibrium import EquilibriumConfig, ValueFunction
from coalition_scope.evaluation import (
    EvalReport,
    EvaluationError,
    RankedCase,
    RankingConfig,
    brier_by_group,
    cases_csv,
    labeled_cases,
    mrr_at_k,
    prf1,
    run_detection_experiment,
    run_ranking_experiment,
)
from coalition_scope.intent import HeuristicBackend
from coalition_scope.plotting import plot_detection, plot_mrr, plot_rank_histogram


def case(rank, honored=True, p=1.0, universe=11):
    return RankedCase(universe, rank, honored, p)


def test_mrr_hand_cases():
    assert mrr_at_k([case(0)], 1) == 1.0
    assert mrr_at_k([case(1), case(3)], 5) == pytest.approx(0.375, abs=1e-12)
    assert mrr_at_k([case(2)], 1) == 0.0


def test_mrr_input_checks():
    with pytest.raises(EvaluationError):
        mrr_at_k([], 1)
    with pytest.raises(EvaluationError):
        mrr_at_k([case(0)], 0)


ranks = st.lists(st.integers(0, 10), min_size=1, max_size=30)


@given(ranks, st.integers(1, 10))
def test_mrr_monotone_in_k_and_bounded(rs, k):
    cs = [case(r) for r in rs]
    assert 0.0 <= mrr_at_k(cs, k) <= mrr_at_k(cs, k + 1) <= 1.0


def test_brier_hand_cases():
    assert brier_by_group([case(0, True, 1.0)]) == (0.0, None)
    assert brier_by_group([case(0, False, 0.0)]) == (None, 1.0)
    hon, _ = brier_by_group([case(0, True, 0.8), case(1, True, 0.6)])
    assert hon == pytest.approx(0.10, abs=1e-12)


@given(st.lists(st.tuples(st.booleans(), st.floats(0, 1)), min_size=1, max_size=30), st.randoms())
def test_brier_order_invariant(items, rnd):
    cs = [case(0, h, p) for h, p in items]
    shuffled = list(cs)
    rnd.shuffle(shuffled)
    assert brier_by_group(cs) == brier_by_group(shuffled)


def test_prf1_reported_pairs():
    p, r = 0.63, 0.48
    assert 2 * p * r / (p + r) == pytest.approx(0.545, abs=1e-3)
    assert prf1([True, True], [True, True]) == (1.0, 1.0, 1.0)
    assert prf1([False, False], [True, False]) == (0.0, 0.0, 0.0)
    with pytest.raises(EvaluationError):
        prf1([True], [True, False])
    with pytest.raises(EvaluationError):
        prf1([], [])


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=50))
@example([(False, True), (True, False)] + [(True, True)] * 4)  # p == r == 0.8
def test_prf1_is_harmonic_mean(pairs):
    p, r, f = prf1([a for a, _ in pairs], [b for _, b in pairs])
    assert 0.0 <= f <= max(p, r) <= 1.0
    if p + r > 0:
        assert abs(f - 2 * p * r / (p + r)) <= 1e-12


def test_ranked_case_invariants():
    with pytest.raises(EvaluationError):
        RankedCase(3, 3, True, 0.5)
    with pytest.raises(EvaluationError):
        RankedCase(3, 0, True, 1.5)


@pytest.fixture(scope="module")
def fixture_games():
    return generate_labeled_corpus(bundled_map("fixture7"), 2, 0.5, seed=4)


RCFG = RankingConfig(k_alternatives=5, equilibrium=EquilibriumConfig(k=2, iters=100))


def _run(games, seed=0, cfg=RCFG):
    m = games[0].map
    return run_ranking_experiment(games, ValueFunction.default(m), HeuristicBackend(), cfg, seed)


def test_ranking_experiment_is_deterministic(fixture_games):
    games, _ = fixture_games
    a, ra = _run(games, seed=3)
    b, rb = _run(games, seed=3)
    assert a.to_json() == b.to_json()
    assert cases_csv(ra) == cases_csv(rb)
    threaded, _ = _run(games, seed=3, cfg=RankingConfig(5, RCFG.equilibrium, workers=3))
    assert threaded.to_json() == a.to_json()


def test_report_fields_and_round_trip(fixture_games, tmp_path):
    games, _ = fixture_games
    report, results = _run(games)
    assert report.counts["cases"] == len(results) == len(labeled_cases(games))
    for method in ("rscore", "value"):
        for name in ("mrr_at_1", "mrr_at_5"):
            assert set(report.metric(method, name)) == {"honored", "violated"}
        assert "brier_honored" in report.ranking[method]
    report.save(tmp_path / "r.json")
    assert EvalReport.load(tmp_path / "r.json").to_json() == report.to_json()


def test_all_violated_corpus_flags_absent_group():
    games, _ = generate_labeled_corpus(bundled_map("fixture7"), 2, 0.0, seed=1)
    report, _ = _run(games)
    assert report.counts["honored"] == 0
    assert report.metric("rscore", "mrr_at_1", "honored") is None
    assert report.ranking["rscore"]["brier_honored"] is None
    assert any("honored" in f for f in report.flags)


def test_report_rejects_out_of_range_metrics():
    with pytest.raises(EvaluationError):
        EvalReport(0, {}, {}, {"rscore": {"mrr_at_1": {"honored": 1.2}}})


def test_no_agreements_is_an_error(fixture_games):
    games, _ = fixture_games
    bare = [replace(g, metadata={**g.metadata, "agreements": []}) for g in games]
    with pytest.raises(EvaluationError):
        _run(bare)


def test_detection_experiment_reports_three_arms(fixture_games):
    games, tuples = fixture_games
    out = run_detection_experiment(games, tuples, HeuristicBackend(), seed=0)
    doc = out.to_document()
    assert set(doc) == {"hybrid", "classifier_only", "filter_only"}
    assert all(0.0 <= v <= 1.0 for arm in doc.values() for v in arm.values())
    assert out.n_train + out.n_test == len(tuples)


def test_figures_are_byte_stable(fixture_games, tmp_path):
    games, tuples = fixture_games
    report, results = _run(games)
    det = run_detection_experiment(games, tuples, HeuristicBackend(), seed=0).to_document()
    for sub in ("a", "b"):
        (tmp_path / sub).mkdir()
        plot_mrr(report, tmp_path / sub / "mrr.png")
        plot_rank_histogram(results, tmp_path / sub / "ranks.png")
        plot_detection(det, tmp_path / sub / "det.png")
    for name in ("mrr.png", "ranks.png", "det.png"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a[:8] == b"\x89PNG\r\n\x1a\n"
        assert a == (tmp_path / "b" / name).read_bytes()

import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from coalition_scope.corpus import (
    CorpusError,
    LabeledTuple,
    LogError,
    agreement_outcomes,
    dataset_stats,
    game_agreements,
    generate_game,
    generate_labeled_corpus,
    honored_rate,
    load_corpus,
    load_game_log,
    load_tuples,
    play_to_lines,
    positive_rate,
    save_corpus,
    save_game_log,
    save_tuples,
    split_train_test,
)
from coalition_scope.engine import bundled_map, find_orders


def test_positive_rate_matches_reported_dataset_share():
    assert positive_rate(444, 16962) == pytest.approx(0.026, abs=1e-3)


def test_rates_reject_empty_denominator():
    with pytest.raises(CorpusError):
        positive_rate(0, 0)
    assert honored_rate(8344, 11008) == pytest.approx(0.758, abs=1e-3)


def test_game_log_round_trip_is_lossless(small_corpus, tmp_path):
    games, _ = small_corpus
    for play in games:
        save_game_log(play, tmp_path / "g.jsonl")
        back = load_game_log(tmp_path / "g.jsonl")
        assert play_to_lines(back) == play_to_lines(play)
        assert back.metadata == play.metadata


def test_game_log_from_stream_and_lines(small_corpus):
    play = small_corpus[0][0]
    buf = io.StringIO()
    save_game_log(play, buf)
    assert play_to_lines(load_game_log(io.StringIO(buf.getvalue()))) == play_to_lines(play)
    assert play_to_lines(load_game_log(buf.getvalue().splitlines())) == play_to_lines(play)


def test_truncated_log_is_rejected(small_corpus, tmp_path):
    lines = play_to_lines(small_corpus[0][0])
    (tmp_path / "bad.jsonl").write_text(lines[0] + "\n" + lines[1][:-5] + "\n")
    with pytest.raises(LogError):
        load_game_log(tmp_path / "bad.jsonl")


def test_tuples_round_trip(small_corpus, tmp_path):
    _, tuples = small_corpus
    save_tuples(tuples, tmp_path / "t.csv")
    assert load_tuples(tmp_path / "t.csv") == tuples


@pytest.mark.parametrize("text, needle", [
    ("a,b\n", "header"),
    ("game_id,round,power1,power2,unit,label,agreed_order,split\ng,0,P1,P2,u,2,,\n", "label"),
    ("game_id,round,power1,power2,unit,label,agreed_order,split\ng,x,P1,P2,u,1,,\n", "line 2"),
    ("game_id,round,power1,power2,unit,label,agreed_order,split\ng,0,P1,P2,u,1,,\ng,0,P1,P2,u,0,,\n", "duplicate"),
])
def test_malformed_tuple_files(text, needle):
    with pytest.raises(CorpusError, match=needle):
        load_tuples(io.StringIO(text))


def _tuples(n_pos, n_neg):
    return [LabeledTuple("g", k, "P1", "P2", f"u{k}", k < n_pos) for k in range(n_pos + n_neg)]


@given(st.integers(2, 30), st.integers(2, 60), st.integers(0, 2**31 - 1))
def test_split_is_stratified_and_partitions(n_pos, n_neg, seed):
    tuples = _tuples(n_pos, n_neg)
    train, test = split_train_test(tuples, 0.8, seed)
    assert {t.key for t in train}.isdisjoint(t.key for t in test)
    assert len(train) + len(test) == len(tuples)
    for label in (True, False):
        assert any(t.label == label for t in train)
        assert any(t.label == label for t in test)
    assert {t.split for t in train} == {"train"} and {t.split for t in test} == {"test"}
    assert split_train_test(tuples, 0.8, seed) == (train, test)


def test_split_needs_two_per_class():
    with pytest.raises(CorpusError, match="stratify"):
        split_train_test(_tuples(1, 10), 0.8, 0)


def test_generation_is_deterministic():
    m = bundled_map("fixture7")
    a = generate_game(m, 0.5, seed=5)
    b = generate_game(m, 0.5, seed=5)
    assert play_to_lines(a) == play_to_lines(b)
    assert play_to_lines(generate_game(m, 0.5, seed=6)) != play_to_lines(a)


def test_labels_match_recorded_agreements(small_corpus):
    games, tuples = small_corpus
    positives = {(t.game_id, t.round, t.unit): t.agreed_order for t in tuples if t.label}
    expected = {}
    for play in games:
        for ag, _ in game_agreements(play):
            expected[(play.metadata["game_id"], ag.round, ag.u1)] = ag.a1.notation
            expected[(play.metadata["game_id"], ag.round, ag.u2)] = ag.a2.notation
    assert positives == expected
    assert dataset_stats(tuples).positives == len(expected)


def test_honesty_extremes_drive_honored_rate():
    m = bundled_map("fixture7")
    for honesty, check in ((1.0, lambda r: r == 1.0), (0.0, lambda r: r < 0.2)):
        games, _ = generate_labeled_corpus(m, 3, honesty, seed=2)
        flags = [ok for g in games for _, ok in agreement_outcomes(g)]
        assert flags
        assert check(honored_rate(sum(flags), len(flags)))


def test_keepers_restate_their_pledge_in_notation(small_corpus):
    games, _ = small_corpus
    seen_keep = seen_break = False
    for play in games:
        by_round = {r.state.round: r for r in play.rounds}
        for ag, intends in game_agreements(play):
            text = by_round[ag.round].dialogue.between(ag.power_i, ag.power_j).text
            quoted = set(find_orders(text))
            if intends[0]:
                seen_keep = True
                assert ag.a1 in quoted
            else:
                seen_break = True
    assert seen_keep and seen_break


def test_corpus_directory_round_trip(small_corpus, tmp_path):
    games, tuples = small_corpus
    save_corpus(tmp_path / "c", games, tuples, {"seed": 11})
    back = load_corpus(tmp_path / "c")
    assert list(back.games) == [g.metadata["game_id"] for g in games]
    assert list(back.tuples) == tuples
    assert back.manifest["seed"] == 11
    for g in games:
        assert play_to_lines(back.games[g.metadata["game_id"]]) == play_to_lines(g)


def test_missing_manifest(tmp_path):
    with pytest.raises(CorpusError, match="manifest"):
        load_corpus(tmp_path)


def test_generator_argument_checks():
    m = bundled_map("fixture7")
    with pytest.raises(CorpusError):
        generate_labeled_corpus(m, 0, 0.5, 0)
    with pytest.raises(CorpusError):
        generate_labeled_corpus(m, 1, 1.5, 0)

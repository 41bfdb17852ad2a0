import math
import threading
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_state
from fake_service import serve
from coalition_scope.detection.mentions import Lexicon, RemoteAnnotator, extract_mentions, map_lexicon
from coalition_scope.engine import (
    DialogueRound,
    Message,
    Order,
    Play,
    Round,
    bundled_map,
    legal_orders,
    load_map,
)
from coalition_scope.intent import (
    ActionDistribution,
    HeuristicBackend,
    IntentError,
    RemoteBackend,
    TableBackend,
    entropy,
    filter_view,
    intent_distribution,
    make_backend,
    top_action,
)
from coalition_scope.remote import ProtocolError

O = Order.parse


def dist(pairs):
    return ActionDistribution.from_pairs("u", [(O(t), p) for t, p in pairs])


def one_round(m, state, *msgs):
    return Play(m, (Round(state, DialogueRound(tuple(Message(*x) for x in msgs))),))


# -- distributions -----------------------------------------------------------------

def test_entropy_hand_cases():
    four = dist([("A A H", 0.25), ("A A - B", 0.25), ("A A - D", 0.25), ("A A S A B", 0.25)])
    assert entropy(four) == pytest.approx(2.0, abs=1e-12)
    assert entropy(dist([("A A H", 1.0)])) == 0.0
    assert entropy(dist([("A A H", 0.5), ("A A - B", 0.25), ("A A - D", 0.25)])) == pytest.approx(1.5, abs=1e-12)


@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=6))
def test_entropy_bounds(weights):
    orders = ["A A H", "A A - B", "A A - C", "A A - D", "A A - E", "A A - F"][: len(weights)]
    w = np.array(weights) / sum(weights)
    d = dist(zip(orders, w.tolist()))
    h = entropy(d)
    assert -1e-12 <= h <= math.log2(len(weights)) + 1e-9


def test_distribution_validation():
    with pytest.raises(ValueError, match="sum"):
        dist([("A A H", 0.5)])
    with pytest.raises(ValueError, match="negative"):
        dist([("A A H", 1.5), ("A A - B", -0.5)])
    with pytest.raises(ValueError, match="duplicate"):
        dist([("A A H", 0.5), ("A A H", 0.5)])


def test_top_action_and_ties():
    assert top_action(dist([("A A H", 0.7), ("A A - B", 0.3)])) == (O("A A H"), 0.7)
    assert top_action(dist([("A A - B", 0.5), ("A A H", 0.5)]))[0] == O("A A H")


def test_top_action_matches_linear_scan():
    m = bundled_map("europe")
    from coalition_scope.engine import initial_state

    s = initial_state(m)
    uid = max(s.units, key=lambda u: len(legal_orders(m, s, u)))
    orders = legal_orders(m, s, uid)
    rng = np.random.default_rng(3)
    p = rng.dirichlet(np.ones(len(orders)))
    d = ActionDistribution.from_pairs(uid, list(zip(orders, p.tolist())))
    best = None
    for o, q in zip(orders, p):
        if best is None or q > best[1]:
            best = (o, q)
    assert top_action(d)[0] == best[0]


# -- hypergame view ----------------------------------------------------------------

def test_filter_view_keeps_pair_messages(grid):
    s = make_state({"A": "P1", "E": "P2", "I": "P3"}, m=grid)
    play = one_round(grid, s, ("P1", "P2", "hi"), ("P2", "P1", "hey"), ("P1", "P3", "psst"))
    v = filter_view(play, "P1", "P2")
    assert [m.text for m in v.dialogue.messages] == ["hi", "hey"]
    assert v.state == s
    assert filter_view(v, "P1", "P2") == v
    empty = filter_view(play, "P2", "P3")
    assert empty.dialogue.messages == () and empty.state == s
    with pytest.raises(KeyError):
        filter_view(play, "P1", "P9")


# -- backends ----------------------------------------------------------------------

def test_table_backend_verbatim(grid):
    s = make_state({"A": "P1"}, m=grid)
    table = TableBackend.from_entries(
        [{"unit": "P1_A", "support": [{"order": "A A H", "p": 0.7}, {"order": "A A - B", "p": 0.3}]}]
    )
    d = intent_distribution(table, filter_view(one_round(grid, s), "P1", "P2"), "P1", "P1_A", True)
    assert d.as_dict() == {"A A H": 0.7, "A A - B": 0.3}
    with pytest.raises(IntentError, match="not owned"):
        intent_distribution(table, filter_view(one_round(grid, s), "P1", "P2"), "P2", "P1_A", True)


def test_heuristic_uniform_on_symmetric_map():
    m = load_map({
        "provinces": [{"id": "H", "kind": "land", "adjacent": ["N", "S", "E", "W"]}]
        + [{"id": x, "kind": "land", "adjacent": []} for x in "NSEW"],
        "powers": ["P1", "P2"], "start_units": [],
    })
    s = make_state({"H": "P1"}, m=m)
    d = intent_distribution(HeuristicBackend(), filter_view(one_round(m, s), "P1", "P2"), "P1", "P1_H", False)
    assert np.allclose(d.probs, 1 / 5, atol=1e-12)


def test_dialogue_raises_mentioned_move(grid):
    s = make_state({"A": "P1", "I": "P2"}, m=grid)
    view = filter_view(one_round(grid, s, ("P2", "P1", "please move to D")), "P1", "P2")
    before = intent_distribution(HeuristicBackend(), view, "P1", "P1_A", False)
    after = intent_distribution(HeuristicBackend(), view, "P1", "P1_A", True)
    assert after.prob(O("A A - D")) > before.prob(O("A A - D"))


def test_quoted_order_dominates(grid):
    s = make_state({"A": "P1", "I": "P2"}, m=grid)
    view = filter_view(one_round(grid, s, ("P2", "P1", "I suggest A A - D this turn")), "P1", "P2")
    after = intent_distribution(HeuristicBackend(order_boost=8.0), view, "P1", "P1_A", True)
    assert top_action(after)[0] == O("A A - D") and top_action(after)[1] > 0.9


def test_heuristic_is_deterministic(grid):
    s = make_state({"A": "P1", "E": "P2"}, m=grid)
    view = filter_view(one_round(grid, s, ("P1", "P2", "B is mine")), "P1", "P2")
    a = intent_distribution(HeuristicBackend(), view, "P2", "P2_E", True)
    b = intent_distribution(HeuristicBackend(), view, "P2", "P2_E", True)
    assert a == b


def intent_route(payload):
    assert set(payload) == {"view", "power", "unit", "use_dialogue"}
    return 200, {"support": [{"order": "A A H", "p": 0.25}, {"order": "A A - B", "p": 0.75}]}


def test_remote_backend_roundtrip(grid):
    s = make_state({"A": "P1"}, m=grid)
    view = filter_view(one_round(grid, s, ("P1", "P2", "x"), ("P1", "P3", "y")), "P1", "P2")
    with serve({"/v1/intent": intent_route}) as (url, calls):
        d = intent_distribution(RemoteBackend(url), view, "P1", "P1_A", True)
    assert d.as_dict() == {"A A H": 0.25, "A A - B": 0.75}
    sent = calls[0][1]["view"][0]["messages"]
    assert sent == [{"from": "P1", "to": "P2", "text": "x"}]


def test_remote_backend_errors(grid):
    s = make_state({"A": "P1"}, m=grid)
    view = filter_view(one_round(grid, s), "P1", "P2")
    with serve({"/v1/intent": lambda p: (500, {"error": "boom"})}) as (url, calls):
        with pytest.raises(ProtocolError):
            intent_distribution(RemoteBackend(url, timeout=2), view, "P1", "P1_A", True)
        assert len(calls) == 2  # one retry
    with serve({"/v1/intent": lambda p: (200, {"support": "nope"})}) as (url, _):
        with pytest.raises(ProtocolError, match="malformed"):
            intent_distribution(RemoteBackend(url, timeout=2), view, "P1", "P1_A", True)
    with serve({"/v1/intent": lambda p: (200, "not json")}) as (url, _):
        with pytest.raises(ProtocolError):
            intent_distribution(RemoteBackend(url, timeout=2), view, "P1", "P1_A", True)
    with serve({"/v1/intent": lambda p: (200, {"support": [{"order": "A A - I", "p": 1.0}]})}) as (url, _):
        with pytest.raises(IntentError, match="illegal"):
            intent_distribution(RemoteBackend(url, timeout=2), view, "P1", "P1_A", True)


def test_remote_backend_bounds_in_flight(grid):
    s = make_state({"A": "P1"}, m=grid)
    view = filter_view(one_round(grid, s), "P1", "P2")
    active = [0]
    peak = [0]
    lock = threading.Lock()

    def slow(payload):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.05)
        with lock:
            active[0] -= 1
        return intent_route(payload)

    with serve({"/v1/intent": slow}) as (url, _):
        backend = RemoteBackend(url, max_in_flight=2)
        threads = [
            threading.Thread(target=intent_distribution, args=(backend, view, "P1", "P1_A", True))
            for _ in range(8)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    assert 1 <= peak[0] <= 2


def test_make_backend():
    assert isinstance(make_backend("heuristic", temperature=2.0), HeuristicBackend)
    with pytest.raises(ValueError):
        make_backend("remote")
    with pytest.raises(ValueError):
        make_backend("oracle")


# -- mentions ----------------------------------------------------------------------

def msgs(*texts):
    return DialogueRound(tuple(Message("P1", "P2", t) for t in texts))


def test_mentions_examples():
    m = bundled_map("europe")
    lex = map_lexicon(m)
    assert extract_mentions(msgs("Move F ION to EAS please"), lex) == {"ION", "EAS"}
    assert extract_mentions(msgs("the Eastern Mediterranean is yours"), lex) == {"EAS"}
    assert extract_mentions(msgs("io need help"), lex) == frozenset()
    assert extract_mentions(msgs(), lex) == frozenset()


def test_longest_match_first():
    lex = Lexicon.build(aliases={"north": "NTH", "north atlantic": "NAO", "atlantic": "MAO"})
    assert lex.match("The North Atlantic is calm") == {"NAO"}
    assert lex.match("north, then atlantic") == {"NTH", "MAO"}


def test_remote_annotator_and_fallback():
    m = bundled_map("europe")
    lex = map_lexicon(m)
    d = msgs("Move F ION to EAS please")
    with serve({"/v1/mentions": lambda p: (200, {"mentions": ["ION"]})}) as (url, calls):
        assert RemoteAnnotator(url).extract(d, m, lex) == {"ION"}
    payload = calls[0][1]
    assert set(payload) == {"messages", "provinces", "aliases"}
    assert payload["aliases"]["eastern mediterranean"] == "EAS"
    with serve({"/v1/mentions": lambda p: (503, {})}) as (url, _):
        assert RemoteAnnotator(url, timeout=2).extract(d, m, lex) == {"ION", "EAS"}
    with serve({"/v1/mentions": lambda p: (200, {"mentions": ["ATLANTIS"]})}) as (url, _):
        assert RemoteAnnotator(url).extract(d, m, lex) == {"ION", "EAS"}

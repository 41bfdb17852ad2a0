import pytest

from coalition_scope.engine import GameState, Order, Unit, load_map


def grid_doc():
    """3x3 land grid A..I with a sea S east of C and F.

        A B C
        D E F   S
        G H I
    """
    adj = {
        "A": ["B", "D"], "B": ["C", "E"], "C": ["F", "S"], "D": ["E", "G"],
        "E": ["F", "H"], "F": ["I", "S"], "G": ["H"], "H": ["I"], "I": [], "S": [],
    }
    kinds = {"C": "coast", "F": "coast", "S": "sea"}
    scs = {"B", "E", "I"}
    return {
        "provinces": [
            {"id": p, "kind": kinds.get(p, "land"), "supply": p in scs, "adjacent": a}
            for p, a in adj.items()
        ],
        "powers": ["P1", "P2", "P3"],
        "start_units": [{"power": "P1", "kind": "army", "province": "A"}],
    }


@pytest.fixture
def grid():
    return load_map(grid_doc())


def make_state(units, round=0, owners=None, m=None):
    """``units`` like {"A": "P1", "S": "P2:fleet"}; unit ids are P1_A style."""
    out = {}
    for prov, spec in units.items():
        power, _, kind = spec.partition(":")
        out[f"{power}_{prov}"] = Unit(power, kind or "army", prov)
    ownership = {}
    if m is not None:
        ownership = {sc: None for sc in m.supply_centers}
    ownership.update(owners or {})
    return GameState(round, out, ownership)


def joint_from(state, *notations):
    """Orders by notation; every unit not named holds."""
    joint = {uid: Order.hold(u.kind, u.province) for uid, u in state.units.items()}
    for text in notations:
        o = Order.parse(text)
        uid = state.unit_at(o.origin)
        assert uid is not None, text
        joint[uid] = o
    return joint


@pytest.fixture(scope="session")
def small_corpus():
    """Three mixed-honesty games on the seven-power fixture map."""
    from coalition_scope.corpus import generate_labeled_corpus
    from coalition_scope.engine import bundled_map

    return generate_labeled_corpus(bundled_map("fixture7"), 3, 0.5, seed=11)

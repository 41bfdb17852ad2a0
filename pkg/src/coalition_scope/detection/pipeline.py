"""Per-round agreement detection: mention filter, intent-shift features, classifier, pairing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from coalition_scope.coalition import Agreement
from coalition_scope.detection.classifier import IntentFeatures, LogisticModel, compute_features
from coalition_scope.detection.mentions import Lexicon, extract_mentions, map_lexicon
from coalition_scope.engine import GameState, MapGraph, Order, Play, legal_orders
from coalition_scope.engine.state import SUPPORT_HOLD, SUPPORT_MOVE
from coalition_scope.intent import HypergameView, IntentError, filter_view, intent_distribution, top_action
from coalition_scope.remote import ProtocolError

PROXIMITY_RADIUS = 2


@dataclass(frozen=True)
class DetectionResult:
    round: int
    power1: str
    power2: str
    unit: str
    passed_filter: bool
    probability: float
    label: bool
    a_star: Order | None = None
    features: IntentFeatures | None = None
    error: str | None = None

    @property
    def key(self) -> tuple[int, str, str, str]:
        return (self.round, self.power1, self.power2, self.unit)


def ordered_pair(m: MapGraph, p1: str, p2: str) -> tuple[str, str]:
    return (p1, p2) if m.powers.index(p1) <= m.powers.index(p2) else (p2, p1)


def candidate_filter(m: MapGraph, state: GameState, p1: str, p2: str, uid: str,
                     mentions: Iterable[str], radius: int = PROXIMITY_RADIUS) -> bool:
    """Near some unit of the other power, and some legal order touches a mentioned province."""
    unit = state.units[uid]
    if unit.power not in (p1, p2):
        raise ValueError(f"unit {uid} belongs to neither {p1} nor {p2}")
    other = p2 if unit.power == p1 else p1
    near = any(
        m.distance(unit.province, state.units[v].province) <= radius for v in state.units_of(other)
    )
    if not near:
        return False
    mentioned = set(mentions)
    if not mentioned:
        return False
    return any(mentioned.intersection(o.provinces) for o in legal_orders(m, state, uid))


def unit_features(backend, view: HypergameView, power: str, uid: str) -> IntentFeatures:
    before = intent_distribution(backend, view, power, uid, False)
    after = intent_distribution(backend, view, power, uid, True)
    return compute_features(before, after)


def round_view(play: Play, round_index: int, p1: str, p2: str) -> HypergameView:
    """The pair's view of the history up to round ``round_index``'s dialogue."""
    return filter_view(play.upto(round_index), p1, p2)


def detect(
    play: Play,
    round_index: int,
    p1: str,
    p2: str,
    backend,
    model: LogisticModel | None,
    lexicon: Lexicon | None = None,
    use_filter: bool = True,
    annotator=None,
    radius: int = PROXIMITY_RADIUS,
) -> list[DetectionResult]:
    """Classify every unit of both powers at one round.

    With ``use_filter`` off every unit is scored; with ``model`` None every
    unit passing the filter is labeled positive (the filter-only baseline).
    Backend failures mark the unit with ``error`` instead of dropping it.
    """
    m = play.map
    p1, p2 = ordered_pair(m, p1, p2)
    view = round_view(play, round_index, p1, p2)
    state = view.state
    lexicon = lexicon or map_lexicon(m)
    if annotator is not None:
        mentions = annotator.extract(view.dialogue, m, lexicon)
    else:
        mentions = extract_mentions(view.dialogue, lexicon)
    out = []
    for uid in sorted(state.units_of(p1) + state.units_of(p2)):
        power = state.units[uid].power
        passed = candidate_filter(m, state, p1, p2, uid, mentions, radius) if use_filter else True
        if not passed:
            out.append(DetectionResult(state.round, p1, p2, uid, False, 0.0, False))
            continue
        if model is None:
            out.append(DetectionResult(state.round, p1, p2, uid, True, 1.0, True))
            continue
        try:
            feats = unit_features(backend, view, power, uid)
        except (IntentError, ProtocolError) as exc:
            out.append(DetectionResult(state.round, p1, p2, uid, True, 0.0, False, error=str(exc)))
            continue
        prob = float(model.probability(feats.vector())[0])
        out.append(DetectionResult(state.round, p1, p2, uid, True, prob, prob >= model.threshold,
                                   feats.a_star, feats))
    return sorted(out, key=lambda r: r.key)


def _after_top(backend, view: HypergameView, uid: str) -> Order:
    power = view.state.units[uid].power
    return top_action(intent_distribution(backend, view, power, uid, True))[0]


def construct_agreements(results: Sequence[DetectionResult], view: HypergameView, backend) -> list[Agreement]:
    """Pair positive units into agreements.

    A positive unit whose top order supports a unit of the other power is
    paired with that unit and its top order. Otherwise it is paired with the
    other power's most probable positive unit, or failing that with the
    nearest unit of the other power.
    """
    state = view.state
    m = view.map
    positives = [r for r in results if r.label and r.a_star is not None]
    if not positives:
        return []
    tops = {r.unit: r.a_star for r in results if r.a_star is not None}

    def top(uid: str) -> Order:
        if uid not in tops:
            tops[uid] = _after_top(backend, view, uid)
        return tops[uid]

    found: dict[tuple, Agreement] = {}
    for r in positives:
        u = r.unit
        power = state.units[u].power
        other = r.power2 if power == r.power1 else r.power1
        a = r.a_star
        partner = None
        if a.variant in (SUPPORT_HOLD, SUPPORT_MOVE):
            v = state.unit_at(a.target)
            if v is not None and state.units[v].power == other:
                partner = v
        if partner is None:
            theirs = [p for p in positives if state.units[p.unit].power == other]
            if theirs:
                partner = min(theirs, key=lambda p: (-p.probability, p.unit)).unit
            else:
                mine = state.units[u].province
                partner = min(
                    state.units_of(other),
                    key=lambda v: (m.distance(mine, state.units[v].province), v),
                    default=None,
                )
        if partner is None:
            continue
        ag = Agreement(power, other, u, partner, a, top(partner), state.round).canonical()
        found.setdefault(ag.key, ag)
    return [found[k] for k in sorted(found)]


@dataclass(frozen=True)
class TupleRow:
    """A labeled tuple with its filter decision and intent-shift features."""

    tuple: object
    passed: bool
    features: IntentFeatures


def round_index(play: Play, state_round: int) -> int:
    for k, r in enumerate(play.rounds):
        if r.state.round == state_round:
            return k
    raise IndexError(f"round {state_round} not in play")


def featurize_tuples(games, tuples, backend, lexicon: Lexicon | None = None,
                     radius: int = PROXIMITY_RADIUS) -> list[TupleRow]:
    """Filter decision and features for every tuple; views are built once per round and pair."""
    views: dict[tuple, tuple[HypergameView, frozenset]] = {}
    rows = []
    for t in tuples:
        play = games[t.game_id]
        ck = (t.game_id, t.round, t.power1, t.power2)
        if ck not in views:
            view = round_view(play, round_index(play, t.round), t.power1, t.power2)
            views[ck] = (view, extract_mentions(view.dialogue, lexicon or map_lexicon(play.map)))
        view, mentions = views[ck]
        power = view.state.units[t.unit].power
        passed = candidate_filter(play.map, view.state, t.power1, t.power2, t.unit, mentions, radius)
        rows.append(TupleRow(t, passed, unit_features(backend, view, power, t.unit)))
    return rows

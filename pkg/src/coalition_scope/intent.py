"""Per-unit order distributions and the pairwise filtered view of a play.

Three interchangeable backends produce an :class:`ActionDistribution` for a
unit, optionally conditioned on the dialogue between the pair of powers in
the view: a feature-softmax heuristic, a fixture table, and a remote HTTP
service.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from coalition_scope.detection.mentions import extract_mentions, map_lexicon
from coalition_scope.engine import (
    DialogueRound,
    GameState,
    MapGraph,
    Order,
    Play,
    find_orders,
    legal_orders,
)
from coalition_scope.engine.records import round_record
from coalition_scope.engine.state import MOVE, SUPPORT_HOLD, SUPPORT_MOVE
from coalition_scope.remote import ProtocolError, post_json


class IntentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ActionDistribution:
    unit: str
    support: tuple[tuple[Order, float], ...]

    def __post_init__(self):
        probs = [p for _, p in self.support]
        if any(p < 0 for p in probs):
            raise ValueError(f"{self.unit}: negative probability")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"{self.unit}: probabilities sum to {sum(probs)}")
        orders = [o for o, _ in self.support]
        if len(set(orders)) != len(orders):
            raise ValueError(f"{self.unit}: duplicate orders")

    @classmethod
    def from_pairs(cls, unit: str, pairs) -> "ActionDistribution":
        pairs = sorted(((o, float(p)) for o, p in pairs), key=lambda op: op[0].sort_key)
        return cls(unit, tuple(pairs))

    @classmethod
    def from_logits(cls, unit: str, orders: Sequence[Order], logits) -> "ActionDistribution":
        z = np.asarray(logits, dtype=float)
        z = z - z.max()
        w = np.exp(z)
        w /= w.sum()
        return cls.from_pairs(unit, zip(orders, w.tolist()))

    @property
    def orders(self) -> list[Order]:
        return [o for o, _ in self.support]

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.support])

    def prob(self, order: Order) -> float:
        for o, p in self.support:
            if o == order:
                return p
        return 0.0

    def as_dict(self) -> dict[str, float]:
        return {o.notation: p for o, p in self.support}


def entropy(dist: ActionDistribution) -> float:
    """Shannon entropy in bits."""
    return float(-sum(p * math.log2(p) for _, p in dist.support if p > 0))


def top_action(dist: ActionDistribution) -> tuple[Order, float]:
    """Most likely order; exact ties go to the canonically first order."""
    order, p = min(dist.support, key=lambda op: (-op[1], op[0].sort_key))
    return order, p


@dataclass(frozen=True)
class HypergameView:
    """A play seen by one pair of powers: only their mutual messages remain."""

    play: Play
    pair: tuple[str, str]

    @property
    def map(self) -> MapGraph:
        return self.play.map

    @property
    def state(self) -> GameState:
        return self.play.last_state

    @property
    def dialogue(self) -> DialogueRound:
        return self.play.rounds[-1].dialogue

    def without_dialogue(self) -> "HypergameView":
        rounds = tuple(replace(r, dialogue=DialogueRound()) for r in self.play.rounds)
        return HypergameView(replace(self.play, rounds=rounds), self.pair)


def filter_view(play: Play | HypergameView, i: str, j: str) -> HypergameView:
    if isinstance(play, HypergameView):
        play = play.play
    for p in (i, j):
        if p not in play.map.powers:
            raise KeyError(f"unknown power {p!r}")
    rounds = tuple(replace(r, dialogue=r.dialogue.between(i, j)) for r in play.rounds)
    return HypergameView(replace(play, rounds=rounds), (i, j))


# -- heuristic backend ------------------------------------------------------

ORDER_FEATURES = ("sc_gain", "safety", "support_coherence")


def order_features(m: MapGraph, state: GameState, uid: str, order: Order) -> np.ndarray:
    """One-step SC gain, exposure of the resulting province, support of own units."""
    unit = state.units[uid]
    sc_gain = 0.0
    if order.variant == MOVE and m.provinces[order.dest].supply_center:
        if state.sc_ownership.get(order.dest) != unit.power:
            sc_gain = 1.0
    where = order.resulting_province
    threats = sum(
        1 for vid, v in state.units.items()
        if vid != uid and v.power != unit.power and m.is_adjacent(v.province, where)
    )
    coherence = 0.0
    if order.variant in (SUPPORT_HOLD, SUPPORT_MOVE):
        tid = state.unit_at(order.target)
        if tid is not None and state.units[tid].power == unit.power:
            coherence = 1.0
    return np.array([sc_gain, -float(threats), coherence])


@dataclass(frozen=True)
class HeuristicBackend:
    """Softmax over order features plus additive dialogue boosts.

    Each province of an order's destination or support target that is
    mentioned in the pair's last dialogue adds ``mention_boost`` to the
    order's logit; an order quoted verbatim in canonical notation adds
    ``order_boost`` on top.
    """

    temperature: float = 1.0
    mention_boost: float = 2.0
    order_boost: float = 4.0
    weights: tuple[float, float, float] = (1.0, 0.5, 0.5)
    kind: str = field(default="heuristic", init=False)

    def distribution(self, view: HypergameView, power: str, uid: str, use_dialogue: bool) -> ActionDistribution:
        m, state = view.map, view.state
        orders = legal_orders(m, state, uid)
        feats = np.array([order_features(m, state, uid, o) for o in orders])
        logits = feats @ np.asarray(self.weights)
        if use_dialogue and view.dialogue.messages:
            mentions = extract_mentions(view.dialogue, map_lexicon(m))
            quoted = set(find_orders(view.dialogue.text))
            for k, o in enumerate(orders):
                hits = sum(1 for p in (o.dest, o.target) if p is not None and p in mentions)
                logits[k] += self.mention_boost * hits
                if o in quoted:
                    logits[k] += self.order_boost
        return ActionDistribution.from_logits(uid, orders, logits / self.temperature)


# -- table backend -------------------------------------------------------------

@dataclass(frozen=True)
class TableBackend:
    """Fixture lookup keyed by (round, unit, use_dialogue).

    Entries with ``round`` or ``use_dialogue`` set to None act as wildcards;
    the most specific entry wins.
    """

    table: Mapping[tuple, tuple[tuple[str, float], ...]]
    kind: str = field(default="table", init=False)

    @classmethod
    def from_entries(cls, entries) -> "TableBackend":
        table = {}
        for e in entries:
            key = (e.get("round"), e["unit"], e.get("use_dialogue"))
            table[key] = tuple((s["order"], float(s["p"])) for s in e["support"])
        return cls(table)

    @classmethod
    def load(cls, path) -> "TableBackend":
        return cls.from_entries(json.loads(Path(path).read_text()))

    def distribution(self, view: HypergameView, power: str, uid: str, use_dialogue: bool) -> ActionDistribution:
        t = view.state.round
        for key in ((t, uid, use_dialogue), (t, uid, None), (None, uid, use_dialogue), (None, uid, None)):
            if key in self.table:
                return ActionDistribution.from_pairs(
                    uid, [(Order.parse(o), p) for o, p in self.table[key]]
                )
        raise IntentError(f"no table entry for unit {uid} at round {t}")


# -- remote backend ------------------------------------------------------------

@dataclass(frozen=True)
class RemoteBackend:
    """Client for ``POST /v1/intent``. Immutable, safe to share across threads."""

    endpoint: str
    timeout: float = 10.0
    retries: int = 1
    max_in_flight: int = 4
    kind: str = field(default="remote", init=False)

    def distribution(self, view: HypergameView, power: str, uid: str, use_dialogue: bool) -> ActionDistribution:
        payload = {
            "view": [round_record(r) for r in view.play.rounds],
            "power": power,
            "unit": uid,
            "use_dialogue": use_dialogue,
        }
        body = post_json(self.endpoint, "/v1/intent", payload, self.timeout, self.retries, self.max_in_flight)
        try:
            pairs = [(Order.parse(s["order"]), float(s["p"])) for s in body["support"]]
            return ActionDistribution.from_pairs(uid, pairs)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed intent response: {exc}") from exc


IntentBackend = HeuristicBackend | TableBackend | RemoteBackend


def make_backend(kind: str, endpoint: str | None = None, table: str | None = None, **params) -> IntentBackend:
    if kind == "heuristic":
        return HeuristicBackend(**params)
    if kind == "table":
        if table is None:
            raise ValueError("table backend needs a fixture file")
        return TableBackend.load(table)
    if kind == "remote":
        if not endpoint:
            raise ValueError("remote backend needs an endpoint")
        return RemoteBackend(endpoint, **params)
    raise ValueError(f"unknown backend {kind!r}")


def intent_distribution(
    backend: IntentBackend,
    view: HypergameView,
    power: str,
    uid: str,
    use_dialogue: bool,
) -> ActionDistribution:
    """Order distribution for ``uid`` before (``use_dialogue=False``) or after dialogue."""
    unit = view.state.units.get(uid)
    if unit is None or unit.power != power:
        raise IntentError(f"unit {uid} is not owned by {power}")
    if not use_dialogue:
        view = view.without_dialogue()
    dist = backend.distribution(view, power, uid, use_dialogue)
    legal = set(legal_orders(view.map, view.state, uid))
    stray = [o.notation for o in dist.orders if o not in legal]
    if stray:
        raise IntentError(f"backend returned illegal orders for {uid}: {stray}")
    return dist

"""Game state and unit orders with canonical notation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

from coalition_scope.engine.mapgraph import MapGraph

KIND_LETTER = {"army": "A", "fleet": "F"}
LETTER_KIND = {v: k for k, v in KIND_LETTER.items()}

HOLD = "hold"
MOVE = "move"
SUPPORT_HOLD = "support_hold"
SUPPORT_MOVE = "support_move"
_VARIANT_RANK = {HOLD: 0, MOVE: 1, SUPPORT_HOLD: 2, SUPPORT_MOVE: 3}

ORDER_RE = re.compile(
    r"\b([AF]) ([A-Z0-9]+) (?:(H)\b|- ([A-Z0-9]+)\b|S ([AF]) ([A-Z0-9]+)(?: - ([A-Z0-9]+))?\b)"
)


class OrderError(ValueError):
    """Raised for malformed, illegal or missing orders."""


@dataclass(frozen=True)
class Order:
    """An order for the unit standing in ``origin``.

    Support orders name their target by the province it occupies; within a
    state that is equivalent to naming the unit, and it keeps the notation
    self-contained.
    """

    unit_kind: str
    origin: str
    variant: str = HOLD
    dest: str | None = None
    target_kind: str | None = None
    target: str | None = None

    @classmethod
    def hold(cls, unit_kind: str, origin: str) -> "Order":
        return cls(unit_kind, origin, HOLD)

    @classmethod
    def move(cls, unit_kind: str, origin: str, dest: str) -> "Order":
        return cls(unit_kind, origin, MOVE, dest=dest)

    @classmethod
    def support_hold(cls, unit_kind: str, origin: str, target_kind: str, target: str) -> "Order":
        return cls(unit_kind, origin, SUPPORT_HOLD, target_kind=target_kind, target=target)

    @classmethod
    def support_move(cls, unit_kind, origin, target_kind, target, dest) -> "Order":
        return cls(unit_kind, origin, SUPPORT_MOVE, dest=dest, target_kind=target_kind, target=target)

    @property
    def notation(self) -> str:
        head = f"{KIND_LETTER[self.unit_kind]} {self.origin}"
        if self.variant == HOLD:
            return f"{head} H"
        if self.variant == MOVE:
            return f"{head} - {self.dest}"
        tgt = f"{KIND_LETTER[self.target_kind]} {self.target}"
        if self.variant == SUPPORT_HOLD:
            return f"{head} S {tgt}"
        return f"{head} S {tgt} - {self.dest}"

    def __str__(self) -> str:
        return self.notation

    @property
    def sort_key(self) -> tuple[int, str]:
        # holds first, then moves, support-holds, support-moves
        return (_VARIANT_RANK[self.variant], self.notation)

    def __lt__(self, other: "Order") -> bool:
        return self.sort_key < other.sort_key

    @property
    def is_support(self) -> bool:
        return self.variant in (SUPPORT_HOLD, SUPPORT_MOVE)

    @property
    def provinces(self) -> tuple[str, ...]:
        """Every province the order involves: origin, destination, target."""
        out = [self.origin]
        if self.target is not None:
            out.append(self.target)
        if self.dest is not None:
            out.append(self.dest)
        return tuple(out)

    @property
    def resulting_province(self) -> str:
        return self.dest if self.variant == MOVE else self.origin

    @classmethod
    def parse(cls, text: str) -> "Order":
        m = ORDER_RE.fullmatch(text.strip())
        if not m:
            raise OrderError(f"cannot parse order {text!r}")
        return _from_match(m)


def _from_match(m: re.Match) -> Order:
    kind = LETTER_KIND[m.group(1)]
    origin = m.group(2)
    if m.group(3):
        return Order.hold(kind, origin)
    if m.group(4):
        return Order.move(kind, origin, m.group(4))
    tkind = LETTER_KIND[m.group(5)]
    if m.group(7):
        return Order.support_move(kind, origin, tkind, m.group(6), m.group(7))
    return Order.support_hold(kind, origin, tkind, m.group(6))


def find_orders(text: str) -> list[Order]:
    """All canonical order strings appearing verbatim in ``text``."""
    return [_from_match(m) for m in ORDER_RE.finditer(text)]


@dataclass(frozen=True)
class Unit:
    power: str
    kind: str
    province: str


@dataclass(frozen=True)
class GameState:
    round: int
    units: Mapping[str, Unit]
    sc_ownership: Mapping[str, str | None]
    _by_province: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.round < 0:
            raise ValueError("round must be non-negative")
        index = {}
        for uid, u in self.units.items():
            if u.province in index:
                raise ValueError(f"two units in {u.province}: {index[u.province]} and {uid}")
            index[u.province] = uid
        self._by_province.update(index)

    def __hash__(self):
        return hash(self.key)

    @property
    def key(self) -> tuple:
        return (
            self.round,
            tuple(sorted((uid, u.power, u.kind, u.province) for uid, u in self.units.items())),
            tuple(sorted((p, o or "") for p, o in self.sc_ownership.items())),
        )

    def unit_at(self, province: str) -> str | None:
        return self._by_province.get(province)

    def units_of(self, power: str) -> list[str]:
        return sorted(uid for uid, u in self.units.items() if u.power == power)

    def owner_of_unit(self, uid: str) -> str:
        return self.units[uid].power

    def check_against(self, m: MapGraph) -> None:
        for uid, u in self.units.items():
            if u.province not in m.provinces:
                raise ValueError(f"unit {uid} in unknown province {u.province}")
            if u.power not in m.powers:
                raise ValueError(f"unit {uid} has unknown power {u.power}")
        for p in self.sc_ownership:
            if p not in m.provinces or not m.provinces[p].supply_center:
                raise ValueError(f"sc_ownership lists non supply center {p}")

    def to_record(self) -> dict:
        return {
            "round": self.round,
            "units": {
                uid: {"power": u.power, "kind": u.kind, "province": u.province}
                for uid, u in sorted(self.units.items())
            },
            "sc_ownership": {p: o for p, o in sorted(self.sc_ownership.items())},
        }

    @classmethod
    def from_record(cls, rec: dict, round: int | None = None) -> "GameState":
        units = {
            uid: Unit(u["power"], u["kind"], u["province"]) for uid, u in rec["units"].items()
        }
        return cls(
            round=rec.get("round", round) if round is None else round,
            units=units,
            sc_ownership=dict(rec["sc_ownership"]),
        )


def unit_id(power: str, index: int) -> str:
    return f"{power}_{index}"


def initial_state(m: MapGraph) -> GameState:
    units = {}
    counts: dict[str, int] = {}
    for su in m.start_units:
        counts[su.power] = counts.get(su.power, 0) + 1
        units[unit_id(su.power, counts[su.power])] = Unit(su.power, su.kind, su.province)
    ownership: dict[str, str | None] = {sc: None for sc in m.supply_centers}
    for u in units.values():
        if u.province in ownership:
            ownership[u.province] = u.power
    return GameState(0, units, ownership)


def order_for_unit(state: GameState, uid: str, order: Order) -> bool:
    """Whether ``order`` is written for the unit ``uid`` as it stands."""
    u = state.units[uid]
    return order.origin == u.province and order.unit_kind == u.kind

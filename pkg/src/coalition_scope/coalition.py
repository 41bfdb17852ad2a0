"""Agreements and the weighted coalition multigraph."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from coalition_scope.engine import GameState, MapGraph, Order, is_legal


class AgreementError(ValueError):
    pass


@dataclass(frozen=True)
class Agreement:
    """Pledge that ``u1`` (of ``power_i``) plays ``a1`` and ``u2`` (of ``power_j``) plays ``a2``."""

    power_i: str
    power_j: str
    u1: str
    u2: str
    a1: Order
    a2: Order
    round: int

    def swapped(self) -> "Agreement":
        return Agreement(self.power_j, self.power_i, self.u2, self.u1, self.a2, self.a1, self.round)

    def canonical(self) -> "Agreement":
        """Orientation with the lexicographically smaller power first."""
        if (self.power_i, self.u1) > (self.power_j, self.u2):
            return self.swapped()
        return self

    @property
    def key(self) -> tuple:
        c = self.canonical()
        return (c.power_i, c.power_j, c.round, c.a1.sort_key, c.a2.sort_key, c.u1, c.u2)

    def orders_key(self) -> tuple:
        """Tie-break key: canonical notation of (a1, a2) in this orientation."""
        return (self.a1.sort_key, self.a2.sort_key)

    def validate(self, m: MapGraph, state: GameState) -> None:
        if self.power_i == self.power_j:
            raise AgreementError("agreement needs two distinct powers")
        for uid, power, order in ((self.u1, self.power_i, self.a1), (self.u2, self.power_j, self.a2)):
            unit = state.units.get(uid)
            if unit is None:
                raise AgreementError(f"unit {uid} not on the board")
            if unit.power != power:
                raise AgreementError(f"unit {uid} is owned by {unit.power}, not {power}")
            if not is_legal(m, state, uid, order):
                raise AgreementError(f"order {order.notation} is not legal for {uid}")

    def to_record(self) -> dict:
        return {
            "power_i": self.power_i, "power_j": self.power_j,
            "u1": self.u1, "u2": self.u2,
            "a1": self.a1.notation, "a2": self.a2.notation,
            "round": self.round,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Agreement":
        return cls(
            rec["power_i"], rec["power_j"], rec["u1"], rec["u2"],
            Order.parse(rec["a1"]), Order.parse(rec["a2"]), int(rec["round"]),
        )


class Honored(tuple):
    """``(power_i honored, power_j honored)`` plus units missing from the joint action."""

    missing: tuple[str, ...]

    def __new__(cls, i: bool, j: bool, missing=()):
        obj = super().__new__(cls, (bool(i), bool(j)))
        obj.missing = tuple(missing)
        return obj

    @property
    def both(self) -> bool:
        return self[0] and self[1]


def honored(agreement: Agreement, joint: Mapping[str, Order]) -> Honored:
    missing = [u for u in (agreement.u1, agreement.u2) if u not in joint]
    return Honored(
        joint.get(agreement.u1) == agreement.a1,
        joint.get(agreement.u2) == agreement.a2,
        missing,
    )


@dataclass(frozen=True)
class CoalitionStructure:
    players: tuple[str, ...]
    edges: tuple[Agreement, ...] = ()
    weights: Mapping[Agreement, float] = field(default_factory=dict)

    def between(self, i: str, j: str) -> list[Agreement]:
        pair = {i, j}
        return [e for e in self.edges if {e.power_i, e.power_j} == pair]

    def weight(self, edge: Agreement) -> float | None:
        return self.weights.get(edge.canonical())

    def __len__(self) -> int:
        return len(self.edges)


def empty_structure(players) -> CoalitionStructure:
    return CoalitionStructure(tuple(players))


def add_agreement(
    structure: CoalitionStructure,
    agreement: Agreement,
    m: MapGraph | None = None,
    state: GameState | None = None,
) -> CoalitionStructure:
    """Return a structure with one more parallel edge.

    Identical agreements are stored once. Ownership and legality are checked
    when the round's ``state`` (and map) are supplied.
    """
    if state is not None:
        agreement.validate(m, state)
    for p in (agreement.power_i, agreement.power_j):
        if p not in structure.players:
            raise AgreementError(f"unknown player {p}")
    edge = agreement.canonical()
    if edge in structure.edges:
        return structure
    edges = tuple(sorted(structure.edges + (edge,), key=lambda e: e.key))
    return CoalitionStructure(structure.players, edges, dict(structure.weights))


def set_weight(structure: CoalitionStructure, edge: Agreement, w: float) -> CoalitionStructure:
    edge = edge.canonical()
    if edge not in structure.edges:
        raise AgreementError("unknown edge")
    if not 0.0 <= w <= 1.0:
        raise AgreementError(f"weight {w} outside [0, 1]")
    weights = dict(structure.weights)
    weights[edge] = float(w)
    return CoalitionStructure(structure.players, structure.edges, weights)


def edge_label(edge: Agreement, weight: float | None) -> str:
    wt = "NA" if weight is None else f"{weight:.2f}"
    return f"{edge.u1}:{edge.a1.notation} | {edge.u2}:{edge.a2.notation} | wt={wt}"


def export_dot(structure: CoalitionStructure, name: str = "coalition") -> str:
    lines = [f"graph {name} {{"]
    for p in sorted(structure.players):
        lines.append(f'  "{p}";')
    for e in sorted(structure.edges, key=lambda e: e.key):
        label = edge_label(e, structure.weights.get(e))
        lines.append(f'  "{e.power_i}" -- "{e.power_j}" [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def structure_to_record(structure: CoalitionStructure) -> dict:
    return {
        "players": list(structure.players),
        "edges": [
            {**e.to_record(), "weight": structure.weights.get(e)} for e in structure.edges
        ],
    }


def structure_from_record(rec: Mapping) -> CoalitionStructure:
    s = empty_structure(rec["players"])
    for er in rec["edges"]:
        a = Agreement.from_record(er)
        s = add_agreement(s, a)
        if er.get("weight") is not None:
            s = set_weight(s, a, er["weight"])
    return s

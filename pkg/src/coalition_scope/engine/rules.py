"""Movement-phase rules: legal orders, simultaneous adjudication, rewards.

Rule subset:
  * strength of a move or hold is 1 plus its valid, uncut supports;
  * a support is cut by any move from another power into the supporting
    unit's province, unless that move comes from the province the support is
    directed into;
  * a move succeeds iff it beats the defending hold strength (or, in a
    head-to-head battle, the opposing move) and every competing move;
  * a power never dislodges its own unit, and its supports do not count
    toward dislodging one of its own units;
  * equal strengths bounce; dislodged units are disbanded immediately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from coalition_scope.engine.mapgraph import MapGraph
from coalition_scope.engine.state import (
    HOLD,
    MOVE,
    SUPPORT_HOLD,
    SUPPORT_MOVE,
    GameState,
    Order,
    OrderError,
    Unit,
)

JointAction = Mapping[str, Order]


def legal_orders(m: MapGraph, state: GameState, uid: str) -> list[Order]:
    if uid not in state.units:
        raise KeyError(f"unknown unit {uid!r}")
    u = state.units[uid]
    here = u.province
    out = [Order.hold(u.kind, here)]
    reach = sorted(d for d in m.neighbors(here) if m.unit_can_enter(u.kind, d))
    out.extend(Order.move(u.kind, here, d) for d in reach)
    for vid, v in sorted(state.units.items()):
        if vid == uid:
            continue
        if v.province in reach:
            out.append(Order.support_hold(u.kind, here, v.kind, v.province))
        for d in reach:
            if m.is_adjacent(v.province, d) and m.unit_can_enter(v.kind, d):
                out.append(Order.support_move(u.kind, here, v.kind, v.province, d))
    return sorted(set(out), key=lambda o: o.sort_key)


def is_legal(m: MapGraph, state: GameState, uid: str, order: Order) -> bool:
    u = state.units.get(uid)
    if u is None or order.origin != u.province or order.unit_kind != u.kind:
        return False
    if order.variant == HOLD:
        return True
    if order.dest is not None:
        if not m.is_adjacent(u.province, order.dest) or not m.unit_can_enter(u.kind, order.dest):
            return False
    if order.variant == MOVE:
        return True
    tid = state.unit_at(order.target)
    if tid is None or tid == uid or state.units[tid].kind != order.target_kind:
        return False
    tgt = state.units[tid]
    if order.variant == SUPPORT_HOLD:
        return m.is_adjacent(u.province, tgt.province) and m.unit_can_enter(u.kind, tgt.province)
    return (
        order.dest != u.province
        and m.is_adjacent(tgt.province, order.dest)
        and m.unit_can_enter(tgt.kind, order.dest)
    )


def validate_joint(m: MapGraph, state: GameState, joint: JointAction) -> None:
    for uid in sorted(state.units):
        if uid not in joint:
            raise OrderError(f"missing order for unit {uid}")
        if not is_legal(m, state, uid, joint[uid]):
            raise OrderError(f"illegal order for unit {uid}: {joint[uid].notation}")
    extra = sorted(set(joint) - set(state.units))
    if extra:
        raise OrderError(f"order for unknown unit {extra[0]}")


@dataclass(frozen=True)
class Resolution:
    succeeded: frozenset[str]
    dislodged: frozenset[str]
    cut: frozenset[str]


_UNRESOLVED, _GUESSING, _RESOLVED = 0, 1, 2


class _Resolver:
    """Move resolution with the guess-and-check cycle handling.

    Support validity is fixed by the orders alone, so the only decisions are
    whether each move succeeds. Circular movement is the only cycle that can
    have two consistent outcomes; the backup rule lets the whole ring move.
    """

    def __init__(self, state: GameState, joint: JointAction):
        self.state = state
        self.joint = joint
        self.moves = {
            uid: o.dest for uid, o in joint.items() if o.variant == MOVE
        }
        self.at = {u.province: uid for uid, u in state.units.items()}
        self.cut = self._cut_supports()
        self.move_supporters: dict[str, list[str]] = {uid: [] for uid in self.moves}
        self.hold_supporters: dict[str, list[str]] = {uid: [] for uid in state.units}
        for sid, o in joint.items():
            if sid in self.cut or not o.is_support:
                continue
            tid = self.at.get(o.target)
            if tid is None:
                continue
            if o.variant == SUPPORT_MOVE and self.moves.get(tid) == o.dest:
                self.move_supporters[tid].append(sid)
            elif o.variant == SUPPORT_HOLD and tid not in self.moves:
                self.hold_supporters[tid].append(sid)
        self.into: dict[str, list[str]] = {}
        for uid, dest in self.moves.items():
            self.into.setdefault(dest, []).append(uid)
        self.status = {uid: _UNRESOLVED for uid in self.moves}
        self.result = {uid: False for uid in self.moves}
        self.deps: list[str] = []

    def _cut_supports(self) -> set[str]:
        cut = set()
        for sid, o in self.joint.items():
            if not o.is_support:
                continue
            supporter = self.state.units[sid]
            into = o.dest if o.variant == SUPPORT_MOVE else o.target
            for aid, dest in ((a, ao.dest) for a, ao in self.joint.items() if ao.variant == MOVE):
                if dest != supporter.province:
                    continue
                attacker = self.state.units[aid]
                if attacker.power == supporter.power:
                    continue
                if attacker.province == into:
                    continue
                cut.add(sid)
                break
        return cut

    def power(self, uid: str) -> str:
        return self.state.units[uid].power

    def head_to_head(self, uid: str) -> str | None:
        dest = self.moves[uid]
        occ = self.at.get(dest)
        if occ is not None and self.moves.get(occ) == self.state.units[uid].province:
            return occ
        return None

    def attack_strength(self, uid: str) -> int:
        dest = self.moves[uid]
        occ = self.at.get(dest)
        opp = self.head_to_head(uid)
        vacating = occ is not None and occ in self.moves and opp is None and self.resolve(occ)
        if occ is None or vacating:
            return 1 + len(self.move_supporters[uid])
        occ_power = self.power(occ)
        if occ_power == self.power(uid):
            return 0
        return 1 + sum(1 for s in self.move_supporters[uid] if self.power(s) != occ_power)

    def defend_strength(self, uid: str) -> int:
        return 1 + len(self.move_supporters[uid])

    def prevent_strength(self, uid: str) -> int:
        opp = self.head_to_head(uid)
        if opp is not None and self.resolve(opp):
            return 0
        return 1 + len(self.move_supporters[uid])

    def hold_strength(self, province: str) -> int:
        occ = self.at.get(province)
        if occ is None:
            return 0
        if occ in self.moves:
            return 0 if self.resolve(occ) else 1
        return 1 + len(self.hold_supporters[occ])

    def adjudicate(self, uid: str) -> bool:
        dest = self.moves[uid]
        attack = self.attack_strength(uid)
        opp = self.head_to_head(uid)
        if opp is not None:
            if attack <= self.defend_strength(opp):
                return False
        elif attack <= self.hold_strength(dest):
            return False
        for other in self.into[dest]:
            if other != uid and attack <= self.prevent_strength(other):
                return False
        return True

    def resolve(self, uid: str) -> bool:
        st = self.status[uid]
        if st == _RESOLVED:
            return self.result[uid]
        if st == _GUESSING:
            if uid not in self.deps:
                self.deps.append(uid)
            return self.result[uid]
        mark = len(self.deps)
        self.result[uid] = False
        self.status[uid] = _GUESSING
        first = self.adjudicate(uid)
        if len(self.deps) == mark:
            if self.status[uid] != _RESOLVED:
                self.result[uid] = first
                self.status[uid] = _RESOLVED
            return first
        if self.deps[mark] != uid:
            self.deps.append(uid)
            self.result[uid] = first
            return first
        for d in self.deps[mark:]:
            self.status[d] = _UNRESOLVED
        del self.deps[mark:]
        self.result[uid] = True
        self.status[uid] = _GUESSING
        second = self.adjudicate(uid)
        if first == second:
            for d in self.deps[mark:]:
                self.status[d] = _UNRESOLVED
            del self.deps[mark:]
            self.result[uid] = first
            self.status[uid] = _RESOLVED
            return first
        # both or neither guess consistent: a ring of moves, let it rotate
        ring = list(dict.fromkeys(self.deps[mark:] + [uid]))
        del self.deps[mark:]
        for d in ring:
            self.result[d] = True
            self.status[d] = _RESOLVED
        return self.resolve(uid)

    def run(self) -> Resolution:
        for uid in sorted(self.moves):
            self.resolve(uid)
        succeeded = frozenset(uid for uid in self.moves if self.result[uid])
        taken = {self.moves[uid] for uid in succeeded}
        dislodged = frozenset(
            uid
            for uid, u in self.state.units.items()
            if u.province in taken and uid not in succeeded
        )
        return Resolution(succeeded, dislodged, frozenset(self.cut))


def resolve_orders(m: MapGraph, state: GameState, joint: JointAction) -> Resolution:
    validate_joint(m, state, joint)
    return _Resolver(state, joint).run()


def adjudicate(m: MapGraph, state: GameState, joint: JointAction) -> GameState:
    """Apply a total, legal joint action and return the successor state."""
    res = resolve_orders(m, state, joint)
    units = {}
    for uid, u in state.units.items():
        if uid in res.dislodged:
            continue
        prov = joint[uid].dest if uid in res.succeeded else u.province
        units[uid] = Unit(u.power, u.kind, prov)
    ownership = dict(state.sc_ownership)
    for u in units.values():
        if u.province in ownership:
            ownership[u.province] = u.power
    return GameState(state.round + 1, units, ownership)


def reward(m: MapGraph, state: GameState) -> np.ndarray:
    """Per-power supply-center share, in map power order."""
    scs = m.supply_centers
    out = np.zeros(len(m.powers))
    if not scs:
        return out
    idx = {p: i for i, p in enumerate(m.powers)}
    for sc in scs:
        owner = state.sc_ownership.get(sc)
        if owner is not None:
            out[idx[owner]] += 1.0
    return out / len(scs)


def all_hold(state: GameState) -> dict[str, Order]:
    return {uid: Order.hold(u.kind, u.province) for uid, u in state.units.items()}

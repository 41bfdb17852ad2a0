"""Scoring candidate agreements by value and perceived honoring likelihood.

For an agreement between i and j, each side's value is the expected next-state
value under the equilibrium conditioned on both pledges. Each side's belief
that the other keeps its pledge is the mass the other's dialogue-conditioned
intent puts on the pledged order. Values are min-max normalized within the
candidate set, then ``wt_i = v_hat_i * b_ji``, ``wt_j = v_hat_j * b_ij`` and
``wt = wt_i * wt_j``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from coalition_scope.coalition import Agreement, AgreementError
from coalition_scope.engine import GameState, MapGraph, Play, legal_orders
from coalition_scope.equilibrium import EquilibriumConfig, ValueFunction, conditioned_joint_distribution
from coalition_scope.intent import HypergameView, filter_view, intent_distribution
from coalition_scope.seeding import derive_seed


@dataclass(frozen=True)
class ScoredAgreement:
    agreement: Agreement
    v_i: float
    v_j: float
    v_hat_i: float
    v_hat_j: float
    b_ji: float
    b_ij: float
    wt_i: float
    wt_j: float
    wt: float
    rank: int = -1

    def to_record(self) -> dict:
        return {
            **self.agreement.to_record(),
            "v_i": self.v_i, "v_j": self.v_j, "v_hat_i": self.v_hat_i, "v_hat_j": self.v_hat_j,
            "b_ji": self.b_ji, "b_ij": self.b_ij,
            "wt_i": self.wt_i, "wt_j": self.wt_j, "wt": self.wt, "rank": self.rank,
        }


def _agreement_seed(seed: int, agreement: Agreement) -> int:
    # position-free, so scoring does not depend on candidate order
    return derive_seed(seed, zlib.crc32(repr(agreement.key).encode()))


def agreement_values(play: Play, agreement: Agreement, value_fn: ValueFunction,
                     config: EquilibriumConfig | None = None, seed: int = 0) -> tuple[float, float]:
    """``(V_i, V_j)``: expected successor values under the pledge-conditioned equilibrium."""
    jd = conditioned_joint_distribution(play, agreement, value_fn, config, _agreement_seed(seed, agreement))
    v = jd.expected_value(play.map, value_fn)
    m = play.map
    return float(v[m.powers.index(agreement.power_i)]), float(v[m.powers.index(agreement.power_j)])


def agreement_value(play: Play, agreement: Agreement, value_fn: ValueFunction,
                    config: EquilibriumConfig | None = None, perspective: str | None = None,
                    seed: int = 0) -> float:
    perspective = perspective or agreement.power_i
    if perspective not in (agreement.power_i, agreement.power_j):
        raise AgreementError(f"{perspective} is not party to the agreement")
    v_i, v_j = agreement_values(play, agreement, value_fn, config, seed)
    return v_i if perspective == agreement.power_i else v_j


def perceived_value(view: HypergameView, backend, agreement: Agreement, of: str) -> float:
    """Mass the dialogue-conditioned intent of ``of`` puts on its pledged order."""
    if of == agreement.power_j:
        uid, pledged = agreement.u2, agreement.a2
    elif of == agreement.power_i:
        uid, pledged = agreement.u1, agreement.a1
    else:
        raise AgreementError(f"{of} is not party to the agreement")
    unit = view.state.units.get(uid)
    if unit is None or unit.power != of:
        raise AgreementError(f"unit {uid} is not owned by {of}")
    return intent_distribution(backend, view, of, uid, True).prob(pledged)


def minmax(values: Sequence[float]) -> list[float]:
    """Affine rescale to [0, 1]; a constant collection maps to all ones."""
    arr = np.asarray(values, dtype=float)
    lo, hi = arr.min(), arr.max()
    if hi - lo <= 0:
        return [1.0] * len(arr)
    return [float(x) for x in (arr - lo) / (hi - lo)]


def compose(v_hat_i: float, b_ji: float, v_hat_j: float, b_ij: float) -> tuple[float, float, float]:
    wt_i = v_hat_i * b_ji
    wt_j = v_hat_j * b_ij
    return wt_i, wt_j, wt_i * wt_j


def _tiebreak(a: Agreement) -> tuple:
    return (a.a1.sort_key, a.a2.sort_key, a.u1, a.u2)


def rank_scored(items: Sequence[ScoredAgreement], by: str = "wt") -> list[ScoredAgreement]:
    """Sort by descending score (``"wt"`` or the raw-value sum ``"value"``) and set ranks."""
    if by == "wt":
        score = lambda s: s.wt  # noqa: E731
    elif by == "value":
        score = lambda s: s.v_i + s.v_j  # noqa: E731
    else:
        raise ValueError(f"unknown ranking {by!r}")
    ordered = sorted(items, key=lambda s: (-score(s), _tiebreak(s.agreement)))
    return [ScoredAgreement(**{**s.__dict__, "rank": k}) for k, s in enumerate(ordered)]


def score_agreement_set(
    play: Play,
    candidates: Sequence[Agreement],
    value_fn: ValueFunction,
    backend,
    config: EquilibriumConfig | None = None,
    seed: int = 0,
) -> list[ScoredAgreement]:
    """Score and rank candidates sharing a round and a pair of powers.

    ``play`` is the history up to the round's dialogue; its last state is the
    state the pledges refer to.
    """
    if not candidates:
        raise AgreementError("empty candidate set")
    first = candidates[0]
    i, j = first.power_i, first.power_j
    cands = []
    for a in candidates:
        if (a.power_i, a.power_j) == (j, i):
            a = a.swapped()
        if (a.power_i, a.power_j) != (i, j) or a.round != first.round:
            raise AgreementError("candidates must share round and pair")
        a.validate(play.map, play.last_state)
        cands.append(a)
    view = filter_view(play, i, j)
    values = [agreement_values(play, a, value_fn, config, seed) for a in cands]
    b_cache: dict[tuple, float] = {}

    def belief(a: Agreement, of: str) -> float:
        k = (of, a.u2, a.a2) if of == j else (of, a.u1, a.a1)
        if k not in b_cache:
            b_cache[k] = perceived_value(view, backend, a, of)
        return b_cache[k]

    hat_i = minmax([v[0] for v in values])
    hat_j = minmax([v[1] for v in values])
    scored = []
    for a, (v_i, v_j), h_i, h_j in zip(cands, values, hat_i, hat_j):
        b_ji, b_ij = belief(a, j), belief(a, i)
        wt_i, wt_j, wt = compose(h_i, b_ji, h_j, b_ij)
        scored.append(ScoredAgreement(a, v_i, v_j, h_i, h_j, b_ji, b_ij, wt_i, wt_j, wt))
    return rank_scored(scored, "wt")


def sample_alternatives(m: MapGraph, state: GameState, agreement: Agreement, k: int,
                        seed: int = 0) -> tuple[list[Agreement], bool]:
    """Up to ``k`` other (a1, a2) pairs for the same units; flag set when the universe ran out."""
    if k < 1:
        raise AgreementError("k must be >= 1")
    agreement.validate(m, state)
    universe = [
        Agreement(agreement.power_i, agreement.power_j, agreement.u1, agreement.u2, o1, o2, agreement.round)
        for o1 in legal_orders(m, state, agreement.u1)
        for o2 in legal_orders(m, state, agreement.u2)
        if (o1, o2) != (agreement.a1, agreement.a2)
    ]
    if k >= len(universe):
        return universe, True
    rng = np.random.default_rng(seed)
    picks = sorted(rng.choice(len(universe), size=k, replace=False).tolist())
    return [universe[p] for p in picks], False

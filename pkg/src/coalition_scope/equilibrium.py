"""Sampled matrix subgames, regret matching and bootstrapped state values.

The pipeline per state: sample a handful of high-likelihood order
assignments per power from a heuristic proposal, adjudicate every profile of
the resulting matrix game, score cells by ``r(s) + gamma * V(T(s, a))``,
solve with regret matching, and move ``V(s)`` toward the equilibrium
expectation with step ``beta``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from coalition_scope.engine import (
    GameState,
    MapGraph,
    Order,
    Play,
    adjudicate,
    initial_state,
    is_legal,
    legal_orders,
    reward,
)
from coalition_scope.intent import ActionDistribution, order_features

Assignment = tuple[tuple[str, Order], ...]

VALUE_FEATURES = ("bias", "sc_share", "unit_share", "centrality", "sc_distance")
DEFAULT_VALUE_WEIGHTS = (0.05, 0.7, 0.2, 0.1, -0.1)


class EquilibriumError(ValueError):
    pass


# -- value function -----------------------------------------------------------

def value_features(m: MapGraph, state: GameState) -> np.ndarray:
    """Hand features per power (rows in map power order), all within [0, 1]."""
    n = len(m.powers)
    out = np.zeros((n, len(VALUE_FEATURES)))
    out[:, 0] = 1.0
    out[:, 1] = reward(m, state)
    total_units = len(state.units)
    max_degree = max(len(v) for v in m.adjacency.values()) or 1
    diameter = max(m.diameter, 1)
    for k, p in enumerate(m.powers):
        mine = [u for u in state.units.values() if u.power == p]
        if not mine:
            continue
        out[k, 2] = len(mine) / total_units
        out[k, 3] = float(np.mean([len(m.neighbors(u.province)) / max_degree for u in mine]))
        targets = [sc for sc in m.supply_centers if state.sc_ownership.get(sc) != p]
        if targets:
            dists = []
            for u in mine:
                d = min(m.distance(u.province, sc) for sc in targets)
                dists.append(min(d, diameter) / diameter)
            out[k, 4] = float(np.mean(dists))
    return out


@dataclass(frozen=True)
class ValueFunction:
    """State values per power: linear in :data:`VALUE_FEATURES`, or a table.

    States whose round reaches ``horizon`` are terminal and valued by their
    reward. ``fixed`` table entries are never updated.
    """

    powers: tuple[str, ...]
    weights: np.ndarray
    gamma: float = 0.99
    mode: str = "linear"
    table: Mapping[tuple, np.ndarray] = field(default_factory=dict)
    fixed: Mapping[tuple, np.ndarray] = field(default_factory=dict)
    horizon: int | None = None
    lr: float = 0.5
    features: tuple[str, ...] = VALUE_FEATURES

    @classmethod
    def default(cls, m: MapGraph, gamma: float = 0.99) -> "ValueFunction":
        w = np.tile(np.asarray(DEFAULT_VALUE_WEIGHTS, dtype=float), (len(m.powers), 1))
        return cls(tuple(m.powers), w, gamma)

    @classmethod
    def zeros(cls, m: MapGraph, gamma: float = 0.99) -> "ValueFunction":
        return cls(tuple(m.powers), np.zeros((len(m.powers), len(VALUE_FEATURES))), gamma)

    @classmethod
    def tabular(cls, m: MapGraph, gamma: float = 0.99, horizon: int | None = None, fixed=None) -> "ValueFunction":
        return cls(
            tuple(m.powers), np.zeros((len(m.powers), len(VALUE_FEATURES))), gamma,
            mode="tabular", fixed=dict(fixed or {}), horizon=horizon,
        )

    def is_terminal(self, state: GameState) -> bool:
        return self.horizon is not None and state.round >= self.horizon

    def evaluate(self, m: MapGraph, state: GameState) -> np.ndarray:
        key = state.key
        if key in self.fixed:
            return np.asarray(self.fixed[key], dtype=float)
        if self.is_terminal(state):
            return reward(m, state)
        if self.mode == "tabular":
            return np.asarray(self.table.get(key, np.zeros(len(self.powers))), dtype=float)
        raw = np.einsum("pf,pf->p", value_features(m, state), self.weights)
        return np.clip(raw, 0.0, 1.0)

    def to_document(self) -> dict:
        def entries(table):
            return [{"state": list(k), "values": [float(x) for x in v]} for k, v in sorted(table.items())]

        doc = {
            "powers": list(self.powers),
            "features": list(self.features),
            "weights": {p: [float(x) for x in self.weights[k]] for k, p in enumerate(self.powers)},
            "gamma": self.gamma,
            "mode": self.mode,
            "horizon": self.horizon,
            "lr": self.lr,
        }
        if self.mode == "tabular":
            doc["table"] = entries(self.table)
        if self.fixed:
            doc["fixed"] = entries(self.fixed)
        return doc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_document(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def from_document(cls, doc: Mapping) -> "ValueFunction":
        def as_key(x):
            return tuple(as_key(y) for y in x) if isinstance(x, list) else x

        def table(entries):
            return {as_key(e["state"]): np.asarray(e["values"], dtype=float) for e in entries}

        try:
            powers = tuple(doc["powers"])
            features = tuple(doc["features"])
            if features != VALUE_FEATURES:
                raise EquilibriumError(f"unexpected value features {features}")
            mode = doc.get("mode", "linear")
            if mode not in ("linear", "tabular"):
                raise EquilibriumError(f"unknown value mode {mode!r}")
            w = np.array([doc["weights"][p] for p in powers], dtype=float)
            horizon = doc.get("horizon")
            return cls(
                powers, w, float(doc["gamma"]), mode, table(doc.get("table", [])), table(doc.get("fixed", [])),
                None if horizon is None else int(horizon), float(doc.get("lr", 0.5)),
            )
        except (KeyError, TypeError) as exc:
            raise EquilibriumError(f"malformed value document: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ValueFunction":
        return cls.from_document(json.loads(Path(path).read_text()))


# -- proposal and candidate sampling ----------------------------------------------

@dataclass(frozen=True)
class PolicyProposal:
    """Order-scoring proposal: softmax of weighted order features."""

    temperature: float = 1.0
    weights: tuple[float, float, float] = (1.0, 0.5, 0.5)

    def distribution(self, m: MapGraph, state: GameState, uid: str) -> ActionDistribution:
        orders = legal_orders(m, state, uid)
        feats = np.array([order_features(m, state, uid, o) for o in orders])
        return ActionDistribution.from_logits(uid, orders, feats @ np.asarray(self.weights) / self.temperature)

    def modal(self, m: MapGraph, state: GameState, uids: Sequence[str]) -> dict[str, Order]:
        out = {}
        for uid in uids:
            d = self.distribution(m, state, uid)
            out[uid] = min(d.support, key=lambda op: (-op[1], op[0].sort_key))[0]
        return out


def _assignment_key(a: Assignment) -> tuple:
    return tuple((uid, o.sort_key) for uid, o in a)


def sample_candidates(
    m: MapGraph,
    state: GameState,
    power: str,
    k: int,
    proposal: PolicyProposal | None = None,
    seed: int = 0,
    n_samples: int = 256,
    pins: Mapping[str, Order] | None = None,
) -> list[Assignment]:
    """The ``k`` most likely distinct assignments for ``power``'s units.

    Small assignment spaces (at most ``n_samples`` profiles) are enumerated
    exactly; larger ones are sampled. The modal assignment is always
    considered, and for ``k >= 2`` the all-hold assignment is guaranteed a
    slot. Pinned units keep their pinned order in every candidate.
    """
    if k < 1:
        raise EquilibriumError("k must be >= 1")
    proposal = proposal or PolicyProposal()
    pins = dict(pins or {})
    uids = state.units_of(power)
    if not uids:
        return [()]
    dists = []
    for uid in uids:
        if uid in pins:
            if not is_legal(m, state, uid, pins[uid]):
                raise EquilibriumError(f"pinned order {pins[uid].notation} is illegal for {uid}")
            dists.append(([pins[uid]], np.array([1.0])))
        else:
            d = proposal.distribution(m, state, uid)
            dists.append((d.orders, d.probs))

    def loglik(idx) -> float:
        return float(sum(math.log(max(dists[u][1][i], 1e-300)) for u, i in enumerate(idx)))

    sizes = [len(o) for o, _ in dists]
    pool: set[tuple[int, ...]] = set()
    if math.prod(sizes) <= n_samples:
        pool.update(itertools.product(*(range(s) for s in sizes)))
    else:
        rng = np.random.default_rng(seed)
        draws = [rng.choice(s, size=n_samples, p=p) for s, (_, p) in zip(sizes, dists)]
        pool.update(zip(*(d.tolist() for d in draws)))
    modal = tuple(min(range(s), key=lambda i, u=u: (-dists[u][1][i], dists[u][0][i].sort_key))
                  for u, s in enumerate(sizes))
    pool.add(modal)

    def as_assignment(idx) -> Assignment:
        return tuple((uid, dists[u][0][i]) for u, (uid, i) in enumerate(zip(uids, idx)))

    ranked = sorted(pool, key=lambda idx: (-loglik(idx), _assignment_key(as_assignment(idx))))
    chosen = ranked[:k]
    if k >= 2:
        # hold sorts first in every unit's list; pinned units have one option
        hold = (0,) * len(uids)
        if hold not in chosen:
            chosen = chosen[: k - 1] + [hold] if len(chosen) >= k else chosen + [hold]
    return [as_assignment(idx) for idx in chosen]


# -- subgames ----------------------------------------------------------------------

@dataclass(frozen=True)
class SubgameMatrix:
    """Payoff tensor over candidate assignments of the participating powers.

    ``payoffs[i0, ..., i_{n-1}, k]`` is participant ``k``'s payoff for the
    profile that picks candidate ``i_j`` of every participant ``j``.
    """

    payoffs: np.ndarray
    powers: tuple[str, ...] = ()
    candidates: tuple[tuple[Assignment, ...], ...] = ()
    state: GameState | None = None
    map: MapGraph | None = None
    base: Mapping[str, Order] = field(default_factory=dict)
    rewards: np.ndarray | None = None
    successors: Mapping[tuple[int, ...], GameState] = field(default_factory=dict)
    gamma: float = 0.99

    @classmethod
    def from_payoffs(cls, payoffs) -> "SubgameMatrix":
        return cls(np.asarray(payoffs, dtype=float))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.payoffs.shape[:-1]

    def joint_for(self, cell: Sequence[int]) -> dict[str, Order]:
        joint = dict(self.base)
        for cands, i in zip(self.candidates, cell):
            joint.update(dict(cands[i]))
        return joint


def build_subgame(
    m: MapGraph,
    state: GameState,
    candidates: Mapping[str, Sequence[Assignment]],
    value_fn: ValueFunction,
    gamma: float = 0.99,
    base: Mapping[str, Order] | None = None,
    proposal: PolicyProposal | None = None,
) -> SubgameMatrix:
    """Adjudicate every candidate profile once and score it per participant.

    Units of non-participating powers play ``base`` (default: the proposal's
    modal order).
    """
    powers = tuple(p for p in m.powers if p in candidates)
    unknown = set(candidates) - set(powers)
    if unknown:
        raise EquilibriumError(f"unknown powers {sorted(unknown)}")
    for p in powers:
        if not candidates[p]:
            raise EquilibriumError(f"no candidates for {p}")
    others = [uid for uid, u in sorted(state.units.items()) if u.power not in powers]
    if base is None:
        base = (proposal or PolicyProposal()).modal(m, state, others)
    base = {uid: base[uid] for uid in others}
    r = reward(m, state)
    idx = [m.powers.index(p) for p in powers]
    cands = tuple(tuple(candidates[p]) for p in powers)
    shape = tuple(len(c) for c in cands)
    payoffs = np.zeros(shape + (len(powers),))
    successors = {}
    for cell in itertools.product(*(range(s) for s in shape)):
        joint = dict(base)
        for c, i in zip(cands, cell):
            joint.update(dict(c[i]))
        nxt = adjudicate(m, state, joint)
        successors[cell] = nxt
        payoffs[cell] = r[idx] + gamma * value_fn.evaluate(m, nxt)[idx]
    return SubgameMatrix(payoffs, powers, cands, state, m, base, r, successors, gamma)


# -- regret matching ---------------------------------------------------------------

@dataclass(frozen=True)
class SubgameSolution:
    strategies: tuple[np.ndarray, ...]
    iterations: int
    exploitability: float

    def profile_probs(self) -> np.ndarray:
        out = np.ones(())
        for s in self.strategies:
            out = np.multiply.outer(out, s)
        return out


def _positive_part_strategy(regret: np.ndarray) -> np.ndarray:
    pos = np.maximum(regret, 0.0)
    total = pos.sum()
    if total <= 0.0:
        return np.full(regret.shape, 1.0 / regret.size)
    return pos / total


def action_values(payoffs: np.ndarray, strategies: Sequence[np.ndarray], k: int) -> np.ndarray:
    """Expected payoff to player ``k`` of each of its actions vs the others' mixes."""
    t = payoffs[..., k]
    for ax in reversed(range(len(strategies))):
        if ax != k:
            t = np.tensordot(t, strategies[ax], axes=([ax], [0]))
    return t


def exploitability(payoffs: np.ndarray, strategies: Sequence[np.ndarray]) -> float:
    """Largest gain any single player gets by deviating to a best response."""
    gaps = []
    for k in range(len(strategies)):
        vals = action_values(payoffs, strategies, k)
        gaps.append(float(vals.max() - strategies[k] @ vals))
    return max(0.0, max(gaps))


def regret_matching(matrix: SubgameMatrix | np.ndarray, iters: int = 2000, seed: int = 0) -> SubgameSolution:
    """Simultaneous regret matching; returns time-averaged strategies.

    Updates use exact expectations against the opponents' current mixes, so
    the result does not depend on ``seed``; it is accepted for interface
    symmetry with sampled variants.
    """
    if iters < 1:
        raise EquilibriumError("iters must be >= 1")
    payoffs = matrix.payoffs if isinstance(matrix, SubgameMatrix) else np.asarray(matrix, dtype=float)
    shape = payoffs.shape[:-1]
    n = len(shape)
    if all(s == 1 for s in shape):
        strategies = tuple(np.ones(1) for _ in shape)
        return SubgameSolution(strategies, iters, 0.0)
    regrets = [np.zeros(s) for s in shape]
    sums = [np.zeros(s) for s in shape]
    if n == 1:
        # payoffs are fixed, so once play is pure on a maximizer it stays there
        v = payoffs[..., 0]
        r = regrets[0]
        for t in range(iters):
            s = _positive_part_strategy(r)
            if np.count_nonzero(s) == 1 and v[np.argmax(s)] >= v.max():
                sums[0] += s * (iters - t)
                break
            r += v - s @ v
            sums[0] += s
    elif n == 2:
        a, b = payoffs[..., 0], payoffs[..., 1].T
        r0, r1 = regrets
        u0, u1 = np.full(shape[0], 1.0 / shape[0]), np.full(shape[1], 1.0 / shape[1])
        for _ in range(iters):
            p0, p1 = np.maximum(r0, 0.0), np.maximum(r1, 0.0)
            t0, t1 = p0.sum(), p1.sum()
            s0 = p0 / t0 if t0 > 0 else u0
            s1 = p1 / t1 if t1 > 0 else u1
            v0, v1 = a @ s1, b @ s0
            r0 += v0 - s0 @ v0
            r1 += v1 - s1 @ v1
            sums[0] += s0
            sums[1] += s1
    else:
        for _ in range(iters):
            current = [_positive_part_strategy(r) for r in regrets]
            for k in range(n):
                v = action_values(payoffs, current, k)
                regrets[k] += v - current[k] @ v
                sums[k] += current[k]
    avg = tuple(s / iters for s in sums)
    return SubgameSolution(avg, iters, exploitability(payoffs, avg))


# -- value updates and self-play ---------------------------------------------------

def bootstrap_target(value_fn: ValueFunction, matrix: SubgameMatrix, solution: SubgameSolution,
                     gamma: float) -> np.ndarray:
    """``r(s) + gamma * E_sigma[V(T(s, a))]`` for every power."""
    probs = solution.profile_probs()
    expect = np.zeros(len(value_fn.powers))
    for cell, nxt in matrix.successors.items():
        p = probs[cell]
        if p > 0:
            expect += p * value_fn.evaluate(matrix.map, nxt)
    return matrix.rewards + gamma * expect


def dora_update(
    value_fn: ValueFunction,
    state: GameState,
    solution: SubgameSolution,
    matrix: SubgameMatrix,
    beta: float,
    gamma: float,
) -> ValueFunction:
    """Move ``V(state)`` toward the subgame's bootstrap target with step ``beta``.

    Tabular values are assigned ``(1 - beta) V + beta * target`` exactly;
    linear weights take one squared-error gradient step toward that value.
    """
    if not 0.0 < beta <= 1.0:
        raise EquilibriumError("beta must lie in (0, 1]")
    m = matrix.map
    if value_fn.is_terminal(state) or state.key in value_fn.fixed:
        return value_fn
    target = bootstrap_target(value_fn, matrix, solution, gamma)
    current = value_fn.evaluate(m, state)
    goal = (1.0 - beta) * current + beta * target
    if value_fn.mode == "tabular":
        table = dict(value_fn.table)
        table[state.key] = goal
        return replace(value_fn, table=table)
    phi = value_features(m, state)
    weights = value_fn.weights + value_fn.lr * (goal - current)[:, None] * phi
    return replace(value_fn, weights=weights)


@dataclass(frozen=True)
class EquilibriumConfig:
    k: int = 8
    n_samples: int = 256
    iters: int = 2000
    gamma: float = 0.99
    beta: float = 0.1
    horizon: int = 4
    mode: str = "linear"
    max_participants: int = 3
    lr: float = 0.5
    proposal: PolicyProposal = field(default_factory=PolicyProposal)


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(2**31))


def train_values(m: MapGraph, episodes: int, config: EquilibriumConfig | None = None,
                 seed: int = 0, start: ValueFunction | None = None) -> ValueFunction:
    """Self-play value learning over sampled subgames from the initial state."""
    if episodes < 1:
        raise EquilibriumError("episodes must be >= 1")
    cfg = config or EquilibriumConfig()
    rng = np.random.default_rng(seed)
    if start is not None:
        vf = replace(start, horizon=cfg.horizon, gamma=cfg.gamma)
    elif cfg.mode == "tabular":
        vf = ValueFunction.tabular(m, cfg.gamma, cfg.horizon)
    else:
        vf = replace(ValueFunction.default(m, cfg.gamma), horizon=cfg.horizon, lr=cfg.lr)
    for _ in range(episodes):
        state = initial_state(m)
        while not vf.is_terminal(state):
            active = [p for p in m.powers if state.units_of(p)] or list(m.powers[:1])
            if len(active) > cfg.max_participants:
                pick = rng.choice(len(active), size=cfg.max_participants, replace=False)
                active = [active[i] for i in sorted(pick)]
            cands = {
                p: sample_candidates(m, state, p, cfg.k, cfg.proposal, _seed(rng), cfg.n_samples)
                for p in active
            }
            matrix = build_subgame(m, state, cands, vf, cfg.gamma, proposal=cfg.proposal)
            sol = regret_matching(matrix, cfg.iters)
            vf = dora_update(vf, state, sol, matrix, cfg.beta, cfg.gamma)
            cell = tuple(int(rng.choice(len(s), p=s / s.sum())) for s in sol.strategies)
            state = matrix.successors[cell]
    return replace(vf, horizon=None) if cfg.mode == "linear" else vf


# -- agreement-conditioned joint distribution -------------------------------------

@dataclass(frozen=True)
class JointDistribution:
    entries: tuple[tuple[Mapping[str, Order], float, GameState], ...]
    matrix: SubgameMatrix
    solution: SubgameSolution

    def __len__(self) -> int:
        return len(self.entries)

    def expected_value(self, m: MapGraph, value_fn: ValueFunction) -> np.ndarray:
        out = np.zeros(len(m.powers))
        for _, p, nxt in self.entries:
            out += p * value_fn.evaluate(m, nxt)
        return out


def conditioned_joint_distribution(
    play: Play,
    agreement,
    value_fn: ValueFunction,
    config: EquilibriumConfig | None = None,
    seed: int = 0,
) -> JointDistribution:
    """Equilibrium joint-action distribution with both pledged orders fixed.

    Only the two agreeing powers are solved for; everyone else plays the
    proposal's modal assignment.
    """
    cfg = config or EquilibriumConfig()
    m, state = play.map, play.last_state
    agreement.validate(m, state)
    pins = {agreement.u1: agreement.a1, agreement.u2: agreement.a2}
    rng = np.random.default_rng(seed)
    cands = {
        p: sample_candidates(m, state, p, cfg.k, cfg.proposal, _seed(rng), cfg.n_samples, pins)
        for p in (agreement.power_i, agreement.power_j)
    }
    matrix = build_subgame(m, state, cands, value_fn, cfg.gamma, proposal=cfg.proposal)
    sol = regret_matching(matrix, cfg.iters)
    probs = sol.profile_probs()
    entries = []
    for cell, nxt in sorted(matrix.successors.items()):
        p = float(probs[cell])
        if p > 0.0:
            entries.append((matrix.joint_for(cell), p, nxt))
    total = sum(p for _, p, _ in entries)
    entries = tuple((j, p / total, s) for j, p, s in entries)
    return JointDistribution(entries, matrix, sol)

"""Plays (state, dialogue, action histories) and the simulation loop."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from coalition_scope.engine.mapgraph import MapGraph
from coalition_scope.engine.rules import adjudicate, all_hold, is_legal, legal_orders
from coalition_scope.engine.state import GameState, Order, OrderError, initial_state


@dataclass(frozen=True)
class Message:
    sender: str
    recipient: str
    text: str

    def __post_init__(self):
        if self.sender == self.recipient:
            raise ValueError(f"message from {self.sender} to itself")


@dataclass(frozen=True)
class DialogueRound:
    messages: tuple[Message, ...] = ()

    def between(self, i: str, j: str) -> "DialogueRound":
        pair = {i, j}
        return DialogueRound(tuple(m for m in self.messages if {m.sender, m.recipient} == pair))

    def pairs(self) -> set[tuple[str, str]]:
        return {tuple(sorted((m.sender, m.recipient))) for m in self.messages}

    @property
    def text(self) -> str:
        return "\n".join(m.text for m in self.messages)


@dataclass(frozen=True)
class Round:
    state: GameState
    dialogue: DialogueRound
    action: Mapping[str, Order] | None = None


@dataclass(frozen=True)
class Play:
    map: MapGraph
    rounds: tuple[Round, ...]
    final_state: GameState | None = None
    terminal: bool = False
    metadata: Mapping = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.rounds)

    @property
    def last_state(self) -> GameState:
        return self.rounds[-1].state

    def states(self) -> list[GameState]:
        out = [r.state for r in self.rounds]
        if self.final_state is not None:
            out.append(self.final_state)
        return out

    def upto(self, t: int) -> "Play":
        """History up to the dialogue of round ``t``; the action of ``t`` is cut."""
        if not 0 <= t < len(self.rounds):
            raise IndexError(f"round {t} outside play of length {len(self.rounds)}")
        rounds = self.rounds[:t] + (replace(self.rounds[t], action=None),)
        return Play(self.map, rounds, None, False, self.metadata)

    def check_chain(self) -> None:
        for k, r in enumerate(self.rounds):
            r.state.check_against(self.map)
            for msg in r.dialogue.messages:
                for p in (msg.sender, msg.recipient):
                    if p not in self.map.powers:
                        raise ValueError(f"round {k}: message names unknown power {p}")
            if r.action is None:
                if k != len(self.rounds) - 1:
                    raise ValueError(f"round {k}: missing action before the last round")
                continue
            nxt = adjudicate(self.map, r.state, r.action)
            if k + 1 < len(self.rounds):
                expect = self.rounds[k + 1].state
            else:
                expect = self.final_state
            if expect is not None and expect != nxt:
                raise ValueError(f"round {k}: successor state does not match adjudication")


class Agent(Protocol):
    def messages(self, m: MapGraph, state: GameState, history: Sequence[Round], rng) -> list[Message]:
        ...

    def orders(self, m: MapGraph, state: GameState, dialogue: DialogueRound, rng) -> Mapping[str, Order]:
        ...


class HoldAgent:
    """Says nothing, holds everything."""

    def __init__(self, power: str):
        self.power = power

    def messages(self, m, state, history, rng):
        return []

    def orders(self, m, state, dialogue, rng):
        return {uid: o for uid, o in all_hold(state).items() if state.units[uid].power == self.power}


class RandomAgent:
    def __init__(self, power: str):
        self.power = power

    def messages(self, m, state, history, rng):
        return []

    def orders(self, m, state, dialogue, rng):
        out = {}
        for uid in state.units_of(self.power):
            opts = legal_orders(m, state, uid)
            out[uid] = opts[int(rng.integers(len(opts)))]
        return out


NegotiationFn = Callable[[MapGraph, GameState, Sequence[Round], np.random.Generator], DialogueRound]


def simulate(
    m: MapGraph,
    agents: Mapping[str, Agent],
    rounds: int,
    seed: int,
    negotiation: NegotiationFn | None = None,
    start: GameState | None = None,
) -> Play:
    """Alternate dialogue and action phases for ``rounds`` rounds.

    ``negotiation``, when given, produces each round's whole dialogue (for
    scripted bilateral talks); otherwise every agent's messages are
    concatenated in map power order.
    """
    missing = [p for p in m.powers if p not in agents]
    if missing:
        raise ValueError(f"no agent for power {missing[0]}")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    rng = np.random.default_rng(seed)
    state = start or initial_state(m)
    history: list[Round] = []
    for _ in range(rounds):
        if negotiation is not None:
            dialogue = negotiation(m, state, history, rng)
        else:
            msgs = []
            for p in m.powers:
                msgs.extend(agents[p].messages(m, state, history, rng))
            dialogue = DialogueRound(tuple(msgs))
        joint: dict[str, Order] = {}
        for p in m.powers:
            for uid, order in agents[p].orders(m, state, dialogue, rng).items():
                if uid not in state.units or state.units[uid].power != p:
                    raise OrderError(f"agent {p} ordered foreign or unknown unit {uid}")
                if not is_legal(m, state, uid, order):
                    raise OrderError(f"agent {p} issued illegal order for {uid}: {order.notation}")
                joint[uid] = order
        for uid in state.units:
            if uid not in joint:
                raise OrderError(f"no order for unit {uid}")
        history.append(Round(state, dialogue, joint))
        state = adjudicate(m, state, joint)
    return Play(m, tuple(history), state, False, {"seed": seed})

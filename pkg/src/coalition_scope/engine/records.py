"""Newline-delimited game-log records.

One JSON object per round::

    {"round": t, "state": {"units": ..., "sc_ownership": ...},
     "messages": [{"from", "to", "text"}], "orders": {unit: notation}}

A final ``{"round", "state", "terminal": true|false}`` line carries the state
after the last action. The first line is a header with the map and metadata.
"""

from __future__ import annotations

import json
from typing import Iterable, Mapping

from coalition_scope.engine.mapgraph import map_from_document
from coalition_scope.engine.play import DialogueRound, Message, Play, Round
from coalition_scope.engine.state import GameState, Order, OrderError


class LogError(ValueError):
    """A game-log line failed to parse or validate; ``round`` names it."""

    def __init__(self, msg: str, round: int | None = None):
        super().__init__(msg if round is None else f"round {round}: {msg}")
        self.round = round


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def state_record(state: GameState) -> dict:
    rec = state.to_record()
    return {"units": rec["units"], "sc_ownership": rec["sc_ownership"]}


def round_record(r: Round) -> dict:
    rec = {
        "round": r.state.round,
        "state": state_record(r.state),
        "messages": [{"from": m.sender, "to": m.recipient, "text": m.text} for m in r.dialogue.messages],
    }
    if r.action is not None:
        rec["orders"] = {uid: o.notation for uid, o in sorted(r.action.items())}
    return rec


def round_from_record(rec: Mapping, index: int) -> Round:
    try:
        t = int(rec["round"])
        state = GameState.from_record(rec["state"], round=t)
        msgs = tuple(Message(m["from"], m["to"], m["text"]) for m in rec.get("messages", []))
        action = None
        if "orders" in rec and rec["orders"] is not None:
            action = {uid: Order.parse(text) for uid, text in rec["orders"].items()}
    except (KeyError, TypeError, ValueError, OrderError) as exc:
        raise LogError(f"bad round record: {exc}", index) from exc
    return Round(state, DialogueRound(msgs), action)


def play_to_lines(play: Play) -> list[str]:
    header = {"map": play.map.to_document(), "meta": dict(play.metadata)}
    lines = [dumps(header)]
    lines.extend(dumps(round_record(r)) for r in play.rounds)
    if play.final_state is not None:
        lines.append(dumps({
            "round": play.final_state.round,
            "state": state_record(play.final_state),
            "terminal": play.terminal,
        }))
    return lines


def play_from_lines(lines: Iterable[str], check: bool = True) -> Play:
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise LogError("empty game log")
    try:
        header = json.loads(lines[0])
        m = map_from_document(header["map"])
    except (KeyError, ValueError) as exc:
        raise LogError(f"bad header: {exc}") from exc
    rounds = []
    final = None
    terminal = False
    for k, line in enumerate(lines[1:]):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogError(f"parse error: {exc.msg}", k) from exc
        if not isinstance(rec, dict):
            raise LogError("record is not an object", k)
        if "terminal" in rec:
            if k != len(lines) - 2:
                raise LogError("terminal record before the end of the log", k)
            try:
                final = GameState.from_record(rec["state"], round=int(rec["round"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise LogError(f"bad final state: {exc}", k) from exc
            terminal = bool(rec["terminal"])
            continue
        rounds.append(round_from_record(rec, k))
    play = Play(m, tuple(rounds), final, terminal, header.get("meta", {}))
    if check:
        try:
            play.check_chain()
        except (ValueError, OrderError) as exc:
            raise LogError(str(exc)) from exc
    return play

"""Game-log persistence, labeled detection tuples and a scripted negotiation corpus.

The generator runs bilateral talks each round: nearby pairs sometimes strike a
templated agreement (quoted in canonical notation, with province aliases in the
surrounding prose), other pairs exchange small talk, rumours, or proposals that
get turned down. Each party to an agreement independently intends to keep it
with probability ``honesty``. Every deal is chosen to look good for both
sides; a party that does not mean it stays vague, lets its real plan slip in
the chat, and plays that plan instead of its pledge.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from coalition_scope.coalition import Agreement, honored
from coalition_scope.engine import (
    DialogueRound,
    GameState,
    MapGraph,
    Message,
    Order,
    Play,
    Round,
    adjudicate,
    legal_orders,
    simulate,
)
from coalition_scope.engine.records import LogError, play_from_lines, play_to_lines
from coalition_scope.engine.state import HOLD, MOVE, SUPPORT_HOLD, SUPPORT_MOVE
from coalition_scope.equilibrium import EquilibriumConfig, PolicyProposal, ValueFunction
from coalition_scope.rationalizability import agreement_values
from coalition_scope.seeding import derive_seed

__all__ = [
    "GENERATOR_ID", "Corpus", "CorpusError", "DatasetStats", "GeneratorConfig", "LabeledTuple",
    "LogError", "agreement_outcomes", "dataset_stats", "game_agreements", "generate_game",
    "generate_labeled_corpus", "honored_rate", "load_corpus", "load_game_log", "load_tuples",
    "play_from_lines", "play_to_lines", "positive_rate", "save_corpus", "save_game_log",
    "save_tuples", "split_train_test",
]

GENERATOR_ID = "scripted-negotiation-1"


class CorpusError(ValueError):
    pass


# -- game logs ---------------------------------------------------------------------

def save_game_log(play: Play, sink) -> None:
    """Write ``play`` as newline-delimited records to a path or text stream."""
    text = "\n".join(play_to_lines(play)) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        Path(sink).write_text(text)


def load_game_log(source) -> Play:
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    elif isinstance(source, (str, Path)) and "\n" not in str(source):
        lines = Path(source).read_text().splitlines()
    else:
        lines = list(source if not isinstance(source, str) else source.splitlines())
    return play_from_lines(lines)


# -- labeled tuples ----------------------------------------------------------------

TUPLE_COLUMNS = ("game_id", "round", "power1", "power2", "unit", "label", "agreed_order", "split")


@dataclass(frozen=True)
class LabeledTuple:
    """Whether ``unit`` took part in an agreement between the two powers that round."""

    game_id: str
    round: int
    power1: str
    power2: str
    unit: str
    label: bool
    agreed_order: str | None = None
    split: str | None = None

    @property
    def key(self) -> tuple[str, int, str, str, str]:
        return (self.game_id, self.round, self.power1, self.power2, self.unit)


def save_tuples(tuples: Iterable[LabeledTuple], sink) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TUPLE_COLUMNS)
    for t in tuples:
        w.writerow([t.game_id, t.round, t.power1, t.power2, t.unit, int(t.label),
                    t.agreed_order or "", t.split or ""])
    if hasattr(sink, "write"):
        sink.write(buf.getvalue())
    else:
        Path(sink).write_text(buf.getvalue())


def load_tuples(source) -> list[LabeledTuple]:
    text = source.read() if hasattr(source, "read") else Path(source).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != TUPLE_COLUMNS:
        raise CorpusError(f"tuple file header must be {','.join(TUPLE_COLUMNS)}")
    out, seen = [], set()
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(TUPLE_COLUMNS):
            raise CorpusError(f"line {lineno}: expected {len(TUPLE_COLUMNS)} fields")
        gid, rnd, p1, p2, unit, label, agreed, split = row
        if label not in ("0", "1"):
            raise CorpusError(f"line {lineno}: label must be 0 or 1")
        try:
            t = LabeledTuple(gid, int(rnd), p1, p2, unit, label == "1", agreed or None, split or None)
        except ValueError as exc:
            raise CorpusError(f"line {lineno}: {exc}") from exc
        if t.key in seen:
            raise CorpusError(f"line {lineno}: duplicate key {t.key}")
        seen.add(t.key)
        out.append(t)
    return out


def split_train_test(tuples: Sequence[LabeledTuple], ratio: float, seed: int) -> tuple[list, list]:
    """Seeded split, stratified by label; tags each tuple with its side."""
    if not 0.0 < ratio < 1.0:
        raise CorpusError("ratio must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in (False, True):
        group = sorted((t for t in tuples if t.label == label), key=lambda t: t.key)
        if len(group) < 2:
            raise CorpusError(f"cannot stratify: class label={int(label)} has {len(group)} members")
        order = rng.permutation(len(group))
        cut = int(round(ratio * len(group)))
        cut = min(max(cut, 1), len(group) - 1)
        for rank, idx in enumerate(order):
            if rank < cut:
                train.append(replace(group[idx], split="train"))
            else:
                test.append(replace(group[idx], split="test"))
    return sorted(train, key=lambda t: t.key), sorted(test, key=lambda t: t.key)


def positive_rate(positives: int, n: int) -> float:
    if n <= 0:
        raise CorpusError("rate of an empty collection")
    return positives / n


def honored_rate(honored_count: int, agreements: int) -> float:
    return positive_rate(honored_count, agreements)


@dataclass(frozen=True)
class DatasetStats:
    n: int
    positives: int
    positive_rate: float
    honored_rate: float | None


def dataset_stats(tuples: Sequence[LabeledTuple], honored_flags: Sequence[bool] | None = None) -> DatasetStats:
    if not tuples:
        raise CorpusError("dataset_stats of an empty collection")
    pos = sum(1 for t in tuples if t.label)
    hr = None
    if honored_flags:
        hr = honored_rate(sum(bool(h) for h in honored_flags), len(honored_flags))
    return DatasetStats(len(tuples), pos, positive_rate(pos, len(tuples)), hr)


# -- generator ---------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    rounds: int = 6
    near_chat: float = 0.8
    far_chat: float = 0.5
    agree_rate: float = 0.22
    near_reject_rate: float = 0.1
    far_propose_rate: float = 0.5
    gossip_rate: float = 0.5
    radius: int = 2
    choice_temperature: float = 0.02
    proposal: PolicyProposal = field(default_factory=PolicyProposal)
    # shortlisted templates are re-valued under the pledge-conditioned equilibrium
    refine: int = 6
    valuation: EquilibriumConfig = field(default_factory=lambda: EquilibriumConfig(k=4, iters=300))


SMALL_TALK = (
    "Good luck this season.",
    "How are things on your side of the board?",
    "I would like us to stay on friendly terms.",
    "Nothing planned against you, for what it is worth.",
    "Let us keep talking next turn.",
    "Quiet turn for me I think.",
)
REJECTIONS = (
    "I can't commit to that, sorry.",
    "Not this turn.",
    "No, that doesn't work for me.",
)
ACCEPTS = ("Deal.", "Agreed.", "Sounds good, let's do it.")


def _name(m: MapGraph, pid: str, rng) -> str:
    aliases = m.provinces[pid].aliases
    if aliases and rng.random() < 0.6:
        return aliases[int(rng.integers(len(aliases)))]
    return pid


def _kind_word(kind: str) -> str:
    return "fleet" if kind == "fleet" else "army"


def _describe(m: MapGraph, order: Order, rng) -> str:
    where = _name(m, order.origin, rng)
    unit = f"{_kind_word(order.unit_kind)} in {where}"
    if order.variant == HOLD:
        return f"the {unit} holds"
    if order.variant == MOVE:
        return f"the {unit} goes to {_name(m, order.dest, rng)}"
    if order.variant == SUPPORT_HOLD:
        return f"the {unit} supports {_name(m, order.target, rng)} in place"
    return f"the {unit} backs the move from {_name(m, order.target, rng)} into {_name(m, order.dest, rng)}"


def pair_distance(m: MapGraph, state: GameState, i: str, j: str) -> int:
    a = [state.units[u].province for u in state.units_of(i)]
    b = [state.units[u].province for u in state.units_of(j)]
    return min((m.distance(x, y) for x in a for y in b), default=10**9)


def _templates(m: MapGraph, state: GameState, u1: str, u2: str) -> list[tuple[Order, Order]]:
    """Templated order pairs: supported move, supported hold, coordinated moves."""
    l1, l2 = legal_orders(m, state, u1), legal_orders(m, state, u2)
    p1, p2 = state.units[u1].province, state.units[u2].province
    moves1 = {o.dest: o for o in l1 if o.variant == MOVE}
    moves2 = {o.dest: o for o in l2 if o.variant == MOVE}
    out = []
    for a1 in l1:
        if a1.variant == SUPPORT_MOVE and a1.target == p2 and a1.dest in moves2:
            out.append((a1, moves2[a1.dest]))
        if a1.variant == SUPPORT_HOLD and a1.target == p2:
            out.append((a1, l2[0]))
    for a2 in l2:
        if a2.variant == SUPPORT_MOVE and a2.target == p1 and a2.dest in moves1:
            out.append((moves1[a2.dest], a2))
        if a2.variant == SUPPORT_HOLD and a2.target == p1:
            out.append((l1[0], a2))
    for d1, d2 in itertools.product(moves1, moves2):
        if d1 != d2 and not (d1 == p2 and d2 == p1):
            out.append((moves1[d1], moves2[d2]))
    return sorted(set(out), key=lambda ab: (ab[0].sort_key, ab[1].sort_key))


class _Script:
    """Round-by-round negotiation; doubles as the order source for all powers."""

    def __init__(self, m: MapGraph, honesty: float, cfg: GeneratorConfig, value_fn: ValueFunction):
        self.m = m
        self.honesty = honesty
        self.cfg = cfg
        self.value_fn = value_fn
        self.plan: dict[str, Order] = {}
        self.agreements: list[dict] = []

    def __call__(self, m, state, history, rng) -> DialogueRound:
        cfg = self.cfg
        self.plan = {}
        used: set[str] = set()
        msgs: list[Message] = []
        modal = cfg.proposal.modal(m, state, sorted(state.units))
        powers = [p for p in m.powers if state.units_of(p)]
        for i, j in itertools.combinations(powers, 2):
            near = pair_distance(m, state, i, j) <= cfg.radius
            if rng.random() >= (cfg.near_chat if near else cfg.far_chat):
                continue
            if near and rng.random() < cfg.agree_rate:
                talk = self._agree(state, i, j, used, modal, rng)
                if talk:
                    msgs.extend(talk)
                    continue
            if rng.random() < (cfg.near_reject_rate if near else cfg.far_propose_rate):
                msgs.extend(self._rejected(state, i, j, rng))
            elif rng.random() < cfg.gossip_rate:
                msgs.extend(self._gossip(state, i, j, rng))
            else:
                a, b = (i, j) if rng.random() < 0.5 else (j, i)
                msgs.append(Message(a, b, SMALL_TALK[int(rng.integers(len(SMALL_TALK)))]))
                msgs.append(Message(b, a, SMALL_TALK[int(rng.integers(len(SMALL_TALK)))]))
        return DialogueRound(tuple(msgs))

    def _agree(self, state, i, j, used, modal, rng) -> list[Message]:
        m, cfg = self.m, self.cfg
        intends = (bool(rng.random() < self.honesty), bool(rng.random() < self.honesty))
        ii, jj = m.powers.index(i), m.powers.index(j)
        hold = dict(modal)
        shortlist = []
        for u1 in state.units_of(i):
            for u2 in state.units_of(j):
                if u1 in used or u2 in used:
                    continue
                if m.distance(state.units[u1].province, state.units[u2].province) > cfg.radius:
                    continue
                hold[u1], hold[u2] = legal_orders(m, state, u1)[0], legal_orders(m, state, u2)[0]
                base = self.value_fn.evaluate(m, adjudicate(m, state, hold))
                hold[u1], hold[u2] = modal[u1], modal[u2]
                for a1, a2 in _templates(m, state, u1, u2):
                    joint = dict(modal)
                    joint[u1], joint[u2] = a1, a2
                    gain = self.value_fn.evaluate(m, adjudicate(m, state, joint)) - base
                    shortlist.append((min(gain[ii], gain[jj]), u1, u2, a1, a2))
        shortlist.sort(key=lambda o: (-o[0], o[3].sort_key, o[4].sort_key))
        here = Play(m, (Round(state, DialogueRound()),))
        baselines: dict[tuple, tuple[float, float]] = {}
        options = []
        for _, u1, u2, a1, a2 in shortlist[: cfg.refine]:
            if (u1, u2) not in baselines:
                still = Agreement(i, j, u1, u2, legal_orders(m, state, u1)[0],
                                  legal_orders(m, state, u2)[0], state.round)
                baselines[u1, u2] = agreement_values(here, still, self.value_fn, cfg.valuation)
            b_i, b_j = baselines[u1, u2]
            v_i, v_j = agreement_values(here, Agreement(i, j, u1, u2, a1, a2, state.round),
                                        self.value_fn, cfg.valuation)
            options.append((min(v_i - b_i, v_j - b_j), u1, u2, a1, a2))
        if not options:
            return []
        scores = np.array([o[0] for o in options])
        w = np.exp((scores - scores.max()) / cfg.choice_temperature)
        _, u1, u2, a1, a2 = options[int(rng.choice(len(options), p=w / w.sum()))]
        used.update((u1, u2))
        ag = Agreement(i, j, u1, u2, a1, a2, state.round)
        self.agreements.append({**ag.to_record(), "intends": list(intends)})
        real = {}
        for power, uid, order, keep in ((i, u1, a1, intends[0]), (j, u2, a2, intends[1])):
            if not keep:
                order = self._anything_but(state, uid, order, rng)
            self.plan[uid] = real[power] = order
        side = {i: (a1, intends[0]), j: (a2, intends[1])}
        opener, other = (i, j) if rng.random() < 0.5 else (j, i)
        mine, theirs = side[opener][0], side[other][0]
        reply = ACCEPTS[int(rng.integers(len(ACCEPTS)))]
        # only a party that means it restates its own pledge in exact notation
        if side[other][1]:
            reply += f" {theirs.notation} from me"
            reply += f", and {mine.notation} from you." if side[opener][1] else "."
        elif side[opener][1]:
            reply += f" And {mine.notation} from you."
        if not side[other][1]:
            reply += f" Mind you, {real[other].notation} is tempting too."
        if side[opener][1]:
            confirm = f"Confirmed, {mine.notation}."
        else:
            confirm = f"We'll see how it goes. {real[opener].notation} may come first."
        return [
            Message(opener, other, f"Proposal: {_describe(m, mine, rng)} and {_describe(m, theirs, rng)}."),
            Message(other, opener, reply),
            Message(opener, other, confirm),
        ]

    def _anything_but(self, state, uid, pledged, rng) -> Order:
        d = self.cfg.proposal.distribution(self.m, state, uid)
        probs = np.array(d.probs, dtype=float)
        if len(d.orders) > 1:
            probs[d.orders.index(pledged)] = 0.0
        return d.orders[int(rng.choice(len(d.orders), p=probs / probs.sum()))]

    def _rejected(self, state, i, j, rng) -> list[Message]:
        m = self.m
        a, b = (i, j) if rng.random() < 0.5 else (j, i)
        ua = state.units_of(a)[int(rng.integers(len(state.units_of(a))))]
        ub = state.units_of(b)[int(rng.integers(len(state.units_of(b))))]
        oa = self._pick_move(state, ua, rng)
        ob = self._pick_move(state, ub, rng)
        return [
            Message(a, b, f"What if {oa.notation} and you play {ob.notation}? "
                          f"That is, {_describe(m, ob, rng)}."),
            Message(b, a, REJECTIONS[int(rng.integers(len(REJECTIONS)))]),
        ]

    def _pick_move(self, state, uid, rng) -> Order:
        orders = [o for o in legal_orders(self.m, state, uid) if o.variant == MOVE]
        if not orders:
            orders = legal_orders(self.m, state, uid)
        return orders[int(rng.integers(len(orders)))]

    def _gossip(self, state, i, j, rng) -> list[Message]:
        m = self.m
        a, b = (i, j) if rng.random() < 0.5 else (j, i)
        uid = state.units_of(a)[int(rng.integers(len(state.units_of(a))))]
        near = sorted(m.neighbors(state.units[uid].province))
        pid = near[int(rng.integers(len(near)))]
        return [
            Message(a, b, f"Rumour has it someone is eyeing {_name(m, pid, rng)}."),
            Message(b, a, "Thanks for the heads up."),
        ]


class _ScriptedAgent:
    def __init__(self, power: str, script: _Script):
        self.power = power
        self.script = script

    def messages(self, m, state, history, rng):
        return []

    def orders(self, m, state, dialogue, rng):
        out = {}
        for uid in state.units_of(self.power):
            if uid in self.script.plan:
                out[uid] = self.script.plan[uid]
                continue
            d = self.script.cfg.proposal.distribution(m, state, uid)
            out[uid] = d.orders[int(rng.choice(len(d.orders), p=d.probs))]
        return out


def game_agreements(play: Play) -> list[tuple[Agreement, tuple[bool, bool]]]:
    """Templated agreements recorded by the generator, with each party's intent."""
    out = []
    for rec in play.metadata.get("agreements", []):
        intends = tuple(bool(x) for x in rec.get("intends", (True, True)))
        out.append((Agreement.from_record(rec), intends))
    return out


def _tuples_for(game_id: str, play: Play) -> list[LabeledTuple]:
    agreed: dict[tuple, str] = {}
    for ag, _ in game_agreements(play):
        pair = tuple(sorted((ag.power_i, ag.power_j), key=play.map.powers.index))
        agreed[(ag.round, pair, ag.u1)] = ag.a1.notation
        agreed[(ag.round, pair, ag.u2)] = ag.a2.notation
    out = []
    for r in play.rounds:
        pairs = {tuple(sorted(pq, key=play.map.powers.index)) for pq in r.dialogue.pairs()}
        for p1, p2 in sorted(pairs, key=lambda pq: (play.map.powers.index(pq[0]), play.map.powers.index(pq[1]))):
            for uid in r.state.units_of(p1) + r.state.units_of(p2):
                order = agreed.get((r.state.round, (p1, p2), uid))
                out.append(LabeledTuple(game_id, r.state.round, p1, p2, uid, order is not None, order))
    return out


def generate_game(m: MapGraph, honesty: float, seed: int, config: GeneratorConfig | None = None,
                  game_id: str = "g0000") -> Play:
    cfg = config or GeneratorConfig()
    script = _Script(m, honesty, cfg, ValueFunction.default(m))
    agents = {p: _ScriptedAgent(p, script) for p in m.powers}
    play = simulate(m, agents, cfg.rounds, seed, negotiation=script)
    meta = {
        "game_id": game_id, "seed": seed, "generator": GENERATOR_ID,
        "honesty": honesty, "agreements": script.agreements,
    }
    return replace(play, metadata=meta)


def generate_labeled_corpus(m: MapGraph, n_games: int, honesty: float, seed: int,
                            config: GeneratorConfig | None = None) -> tuple[list[Play], list[LabeledTuple]]:
    if n_games < 1:
        raise CorpusError("n_games must be >= 1")
    if not 0.0 <= honesty <= 1.0:
        raise CorpusError("honesty must lie in [0, 1]")
    games, tuples = [], []
    for g in range(n_games):
        gid = f"g{g:04d}"
        play = generate_game(m, honesty, derive_seed(seed, g), config, gid)
        games.append(play)
        tuples.extend(_tuples_for(gid, play))
    return games, tuples


# -- corpus directories ------------------------------------------------------------

@dataclass(frozen=True)
class Corpus:
    games: Mapping[str, Play]
    tuples: tuple[LabeledTuple, ...]
    manifest: Mapping = field(default_factory=dict)

    @property
    def map(self) -> MapGraph:
        return next(iter(self.games.values())).map


def save_corpus(out_dir, games: Sequence[Play], tuples: Sequence[LabeledTuple], manifest: Mapping | None = None) -> None:
    out = Path(out_dir)
    (out / "games").mkdir(parents=True, exist_ok=True)
    ids = []
    for k, play in enumerate(games):
        gid = play.metadata.get("game_id", f"g{k:04d}")
        ids.append(gid)
        save_game_log(play, out / "games" / f"{gid}.jsonl")
    save_tuples(tuples, out / "tuples.csv")
    doc = {**(manifest or {}), "games": ids}
    (out / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_corpus(path) -> Corpus:
    root = Path(path)
    mf = root / "manifest.json"
    if not mf.exists():
        raise CorpusError(f"{mf}: missing corpus manifest")
    manifest = json.loads(mf.read_text())
    games = {}
    for gid in manifest["games"]:
        f = root / "games" / f"{gid}.jsonl"
        try:
            games[gid] = load_game_log(f)
        except LogError as exc:
            raise CorpusError(f"{f}: {exc}") from exc
    tuples = load_tuples(root / "tuples.csv") if (root / "tuples.csv").exists() else []
    return Corpus(games, tuple(tuples), manifest)


def agreement_outcomes(play: Play) -> list[tuple[Agreement, bool]]:
    """Each recorded agreement with whether both pledges appear in the played action."""
    by_round = {r.state.round: r for r in play.rounds}
    out = []
    for ag, _ in game_agreements(play):
        r = by_round[ag.round]
        out.append((ag, r.action is not None and honored(ag, r.action).both))
    return out

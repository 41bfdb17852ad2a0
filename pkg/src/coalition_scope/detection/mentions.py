"""Rule-based province mention extraction with an optional remote annotator."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Mapping

from coalition_scope.engine import DialogueRound, MapGraph

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Lexicon:
    """Alias table: lowercased token sequence -> province id."""

    entries: Mapping[tuple[str, ...], str]
    longest: int

    @classmethod
    def build(cls, provinces: Mapping[str, str] | None = None, aliases: Mapping[str, str] | None = None):
        entries: dict[tuple[str, ...], str] = {}
        for alias, pid in {**(provinces or {}), **(aliases or {})}.items():
            toks = tuple(tokenize(alias))
            if toks:
                entries[toks] = pid
        return cls(entries, max((len(k) for k in entries), default=1))

    @classmethod
    def from_map(cls, m: MapGraph, extra: Mapping[str, str] | None = None) -> "Lexicon":
        aliases = {pid: pid for pid in m.provinces}
        for pid, prov in m.provinces.items():
            for a in prov.aliases:
                aliases[a] = pid
        aliases.update(extra or {})
        return cls.build(aliases=aliases)

    def alias_table(self) -> dict[str, str]:
        return {" ".join(k): v for k, v in sorted(self.entries.items())}

    def match(self, text: str) -> set[str]:
        toks = tokenize(text)
        found = set()
        i = 0
        while i < len(toks):
            for n in range(min(self.longest, len(toks) - i), 0, -1):
                pid = self.entries.get(tuple(toks[i:i + n]))
                if pid is not None:
                    found.add(pid)
                    i += n
                    break
            else:
                i += 1
        return found


_LEXICONS: dict[int, tuple[MapGraph, Lexicon]] = {}


def map_lexicon(m: MapGraph) -> Lexicon:
    hit = _LEXICONS.get(id(m))
    if hit is None or hit[0] is not m:
        hit = _LEXICONS[id(m)] = (m, Lexicon.from_map(m))
    return hit[1]


def extract_mentions(dialogue: DialogueRound, lexicon: Lexicon) -> frozenset[str]:
    """Union of provinces mentioned across the messages, longest alias first."""
    out: set[str] = set()
    for msg in dialogue.messages:
        out |= lexicon.match(msg.text)
    return frozenset(out)


@dataclass(frozen=True)
class RemoteAnnotator:
    """Client for ``POST /v1/mentions``; falls back to the lexicon on failure."""

    endpoint: str
    timeout: float = 10.0
    retries: int = 1

    def extract(self, dialogue: DialogueRound, m: MapGraph, lexicon: Lexicon) -> frozenset[str]:
        from coalition_scope.remote import ProtocolError, post_json

        payload = {
            "messages": [{"from": x.sender, "to": x.recipient, "text": x.text} for x in dialogue.messages],
            "provinces": sorted(m.provinces),
            "aliases": lexicon.alias_table(),
        }
        try:
            body = post_json(self.endpoint, "/v1/mentions", payload, self.timeout, self.retries)
            ids = body["mentions"]
            if not isinstance(ids, list) or any(i not in m.provinces for i in ids):
                raise ProtocolError(f"bad mentions payload: {ids!r}")
            return frozenset(ids)
        except (ProtocolError, KeyError, TypeError) as exc:
            log.warning("mention annotator failed (%s); using lexicon", exc)
            return extract_mentions(dialogue, lexicon)

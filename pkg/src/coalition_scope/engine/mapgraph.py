"""Board topology: provinces, adjacency, powers and starting units."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

PROVINCE_KINDS = ("land", "sea", "coast")
UNIT_KINDS = ("army", "fleet")


class MapError(ValueError):
    """Raised when a map document is malformed or fails validation."""


@dataclass(frozen=True)
class Province:
    id: str
    kind: str
    supply_center: bool = False
    aliases: tuple[str, ...] = ()


@dataclass(frozen=True)
class StartUnit:
    power: str
    kind: str
    province: str


def can_occupy(unit_kind: str, province_kind: str) -> bool:
    """Armies stay on land/coast, fleets on sea/coast."""
    if unit_kind == "army":
        return province_kind in ("land", "coast")
    return province_kind in ("sea", "coast")


@dataclass(frozen=True)
class MapGraph:
    provinces: dict[str, Province]
    adjacency: dict[str, frozenset[str]]
    powers: tuple[str, ...]
    start_units: tuple[StartUnit, ...]
    _distances: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    def __hash__(self):
        return hash((tuple(sorted(self.provinces)), self.powers))

    def validate(self) -> None:
        if len(self.powers) < 2:
            raise MapError("powers: at least 2 powers required")
        if len(set(self.powers)) != len(self.powers):
            raise MapError("powers: duplicate power id")
        for pid, prov in self.provinces.items():
            if pid != prov.id:
                raise MapError(f"provinces: key {pid!r} does not match id {prov.id!r}")
            if prov.kind not in PROVINCE_KINDS:
                raise MapError(f"provinces.{pid}.kind: unknown kind {prov.kind!r}")
        for a, nbrs in self.adjacency.items():
            if a not in self.provinces:
                raise MapError(f"adjacency: unknown province {a!r}")
            for b in nbrs:
                if b not in self.provinces:
                    raise MapError(f"adjacency: unknown province {b!r} in {a}-{b}")
                if a == b:
                    raise MapError(f"adjacency: self-loop {a}-{b}")
                if a not in self.adjacency.get(b, ()):
                    raise MapError(f"adjacency: asymmetric edge {a}-{b}")
        seen = set()
        for su in self.start_units:
            if su.province not in self.provinces:
                raise MapError(f"start_units: unknown province {su.province!r}")
            if su.power not in self.powers:
                raise MapError(f"start_units: unknown power {su.power!r}")
            if su.kind not in UNIT_KINDS:
                raise MapError(f"start_units: unknown unit kind {su.kind!r}")
            if not can_occupy(su.kind, self.provinces[su.province].kind):
                raise MapError(f"start_units: {su.kind} cannot occupy {su.province}")
            if su.province in seen:
                raise MapError(f"start_units: two units in {su.province}")
            seen.add(su.province)

    def neighbors(self, province: str) -> frozenset[str]:
        return self.adjacency.get(province, frozenset())

    def is_adjacent(self, a: str, b: str) -> bool:
        return b in self.adjacency.get(a, ())

    def kind_of(self, province: str) -> str:
        return self.provinces[province].kind

    def unit_can_enter(self, unit_kind: str, province: str) -> bool:
        return can_occupy(unit_kind, self.provinces[province].kind)

    @property
    def supply_centers(self) -> tuple[str, ...]:
        return tuple(sorted(p for p, prov in self.provinces.items() if prov.supply_center))

    def bfs(self, source: str) -> dict[str, int]:
        """Graph distances from ``source`` ignoring terrain."""
        if source in self._distances:
            return self._distances[source]
        dist = {source: 0}
        queue = deque([source])
        while queue:
            cur = queue.popleft()
            for nxt in sorted(self.adjacency.get(cur, ())):
                if nxt not in dist:
                    dist[nxt] = dist[cur] + 1
                    queue.append(nxt)
        self._distances[source] = dist
        return dist

    def distance(self, a: str, b: str) -> float:
        return self.bfs(a).get(b, float("inf"))

    @property
    def diameter(self) -> int:
        best = 0
        for p in self.provinces:
            d = self.bfs(p)
            best = max(best, max(d.values()))
        return best

    def to_document(self) -> dict:
        provinces = []
        for pid in sorted(self.provinces):
            prov = self.provinces[pid]
            rec = {
                "id": pid,
                "kind": prov.kind,
                "supply": prov.supply_center,
                "adjacent": sorted(self.adjacency.get(pid, ())),
            }
            if prov.aliases:
                rec["aliases"] = list(prov.aliases)
            provinces.append(rec)
        return {
            "provinces": provinces,
            "powers": list(self.powers),
            "start_units": [
                {"power": s.power, "kind": s.kind, "province": s.province}
                for s in self.start_units
            ],
        }


def _require(doc: dict, key: str, kind: type, where: str):
    if key not in doc:
        raise MapError(f"{where}: missing key {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise MapError(f"{where}.{key}: expected {kind.__name__}")
    return value


def map_from_document(doc: dict) -> MapGraph:
    """Build a validated map from a parsed map document.

    Adjacency may be listed in one direction only; it is symmetrized here.
    A pair listed in both directions must agree, and a pair that would be
    symmetrized is accepted. Use ``strict=True`` via :func:`load_map` to
    reject one-directional listings instead.
    """
    return _build(doc, strict=False)


def _build(doc: dict, strict: bool) -> MapGraph:
    if not isinstance(doc, dict):
        raise MapError("document: expected an object")
    raw_provs = _require(doc, "provinces", list, "document")
    powers = _require(doc, "powers", list, "document")
    raw_units = _require(doc, "start_units", list, "document")

    provinces: dict[str, Province] = {}
    listed: dict[str, set[str]] = {}
    for i, rec in enumerate(raw_provs):
        where = f"provinces[{i}]"
        if not isinstance(rec, dict):
            raise MapError(f"{where}: expected an object")
        pid = _require(rec, "id", str, where)
        if not pid or pid != pid.upper() or not pid.isalnum():
            raise MapError(f"{where}.id: {pid!r} is not a short uppercase token")
        if pid in provinces:
            raise MapError(f"{where}.id: duplicate province {pid!r}")
        kind = _require(rec, "kind", str, where)
        supply = rec.get("supply", False)
        if not isinstance(supply, bool):
            raise MapError(f"{where}.supply: expected bool")
        aliases = rec.get("aliases", [])
        if not isinstance(aliases, list) or not all(isinstance(a, str) for a in aliases):
            raise MapError(f"{where}.aliases: expected list of strings")
        adjacent = _require(rec, "adjacent", list, where)
        provinces[pid] = Province(pid, kind, supply, tuple(aliases))
        listed[pid] = set(adjacent)

    adjacency: dict[str, set[str]] = {p: set() for p in provinces}
    for a, nbrs in listed.items():
        for b in nbrs:
            if b not in provinces:
                raise MapError(f"adjacency: unknown province {b!r} in {a}-{b}")
            if strict and a not in listed.get(b, ()):
                raise MapError(f"adjacency: asymmetric edge {a}-{b}")
            adjacency[a].add(b)
            adjacency[b].add(a)

    units = []
    for i, rec in enumerate(raw_units):
        where = f"start_units[{i}]"
        if not isinstance(rec, dict):
            raise MapError(f"{where}: expected an object")
        units.append(
            StartUnit(
                _require(rec, "power", str, where),
                _require(rec, "kind", str, where),
                _require(rec, "province", str, where),
            )
        )
    return MapGraph(
        provinces=provinces,
        adjacency={p: frozenset(n) for p, n in adjacency.items()},
        powers=tuple(powers),
        start_units=tuple(units),
    )


def load_map(source, strict: bool = False) -> MapGraph:
    """Load a map from a path, a JSON string, or an already parsed dict.

    With ``strict`` every adjacency must be listed in both directions.
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            text = Path(source).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MapError(f"document: parse error at line {exc.lineno}: {exc.msg}") from exc
    return _build(doc, strict=strict)


def bundled_map(name: str) -> MapGraph:
    """Load one of the maps shipped in ``coalition_scope/data``."""
    text = resources.files("coalition_scope.data").joinpath(f"{name}.json").read_text()
    return load_map(json.loads(text))


def bundled_map_names() -> list[str]:
    return sorted(
        p.name[:-5]
        for p in resources.files("coalition_scope.data").iterdir()
        if p.name.endswith(".json")
    )


def connected_components(m: MapGraph) -> list[set[str]]:
    left = set(m.provinces)
    comps = []
    while left:
        start = min(left)
        comp = set(m.bfs(start))
        comps.append(comp)
        left -= comp
    return comps


def iter_edges(m: MapGraph) -> Iterable[tuple[str, str]]:
    for a in sorted(m.adjacency):
        for b in sorted(m.adjacency[a]):
            if a < b:
                yield a, b

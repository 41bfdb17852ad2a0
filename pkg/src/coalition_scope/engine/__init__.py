"""Mini movement-phase engine: maps, orders, adjudication, simulation."""

from coalition_scope.engine.mapgraph import (
    MapError,
    MapGraph,
    Province,
    StartUnit,
    bundled_map,
    load_map,
    map_from_document,
)
from coalition_scope.engine.play import (
    DialogueRound,
    HoldAgent,
    Message,
    Play,
    RandomAgent,
    Round,
    simulate,
)
from coalition_scope.engine.rules import (
    adjudicate,
    all_hold,
    is_legal,
    legal_orders,
    resolve_orders,
    reward,
    validate_joint,
)
from coalition_scope.engine.state import (
    GameState,
    Order,
    OrderError,
    Unit,
    find_orders,
    initial_state,
)

__all__ = [
    "DialogueRound", "GameState", "HoldAgent", "MapError", "MapGraph", "Message",
    "Order", "OrderError", "Play", "Province", "RandomAgent", "Round", "StartUnit",
    "Unit", "adjudicate", "all_hold", "bundled_map", "find_orders", "initial_state",
    "is_legal", "legal_orders", "load_map", "map_from_document", "resolve_orders",
    "reward", "simulate", "validate_joint",
]

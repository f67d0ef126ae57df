"""DCR graph semantics, their packed on-chain encoding and a metered contract runtime."""

from .dcr import (
    MAX_EVENTS,
    DcrGraph,
    Marking,
    Relation,
    RelationKind,
    enabled,
    enabled_events,
    execute,
    is_accepting,
    new_graph,
    random_graph,
    run_trace,
)

__all__ = [
    "MAX_EVENTS",
    "DcrGraph",
    "Marking",
    "Relation",
    "RelationKind",
    "enabled",
    "enabled_events",
    "execute",
    "is_accepting",
    "new_graph",
    "random_graph",
    "run_trace",
]

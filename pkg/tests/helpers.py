"""Builders for synthetic graph fixtures used by the solver and policy tests."""

from mcgs.envs import StateKey
from mcgs.graph import GraphStore
from mcgs.solver import SolverStatus

_serial = [7000]


def fresh_key(ply: int = 0) -> StateKey:
    _serial[0] += 1
    return StateKey(_serial[0], ply)


def expanded_node(store: GraphStore, actions, priors=None, ply: int = 0,
                  q_init: float = -1.0):
    """A standalone expanded node with the given edges, no children resolved."""
    node, _ = store.lookup_or_insert(fresh_key(ply))
    k = len(actions)
    if priors is None:
        priors = [1.0 / k] * k
    store.attach_edges(node, list(actions), list(priors), q_init)
    return node


def attach_child(store: GraphStore, parent, idx: int,
                 status=SolverStatus.UNKNOWN, eip: int = 0, ply: int = 1):
    """Resolve one parent edge onto a fresh child with a preset status."""
    child, _ = store.lookup_or_insert(fresh_key(ply))
    child.status = status
    child.end_in_ply = eip
    store.link(parent, idx, child, was_existing=False)
    return child

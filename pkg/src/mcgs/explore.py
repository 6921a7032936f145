"""Disconnected exploration trajectories.

A small fraction of simulations branch off the best-known line at a
geometrically sampled depth instead of following PUCT from the root. The
branch point's subtree receives the backup; ancestors above it see nothing
(their statistics would otherwise be polluted by deliberately off-policy
play). Two branch flavors exist: epsilon-greedy expansion of the first
untried action, and forcing-move-first expansion for games that define
check-like actions.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, log2
from typing import Any

from .graph import NEG_INF, Node
from .solver import SolverStatus

EPS_GREEDY = "eps_greedy"
FORCING = "forcing"


@dataclass
class BranchPlan:
    kind: str
    depth: int
    path: tuple[int, ...]  # actions from the root to the branch node
    branch: Node


def sample_branch_depth(r2: float, max_depth: int | None = None) -> int:
    """Geometric depth: P(d) = 2^-(d+1), clamped to the best-path length."""
    if not 0.0 <= r2 < 1.0:
        raise ValueError(f"r2 must lie in [0, 1), got {r2}")
    depth = ceil(-log2(1.0 - r2)) - 1
    if depth < 0:
        depth = 0
    if max_depth is not None and depth > max_depth:
        depth = max_depth
    return depth


def best_path(root: Node) -> tuple[list[Node], list[int]]:
    """Follow the most-visited action from the root while one exists.

    Ties keep the first edge in stored order, i.e. the higher prior. The walk
    stops at unexpanded, terminal, or proven nodes, and at nodes with no
    visited edges.
    """
    nodes = [root]
    actions: list[int] = []
    node = root
    while True:
        if node.is_terminal or not node.expanded:
            break
        if SolverStatus.UNKNOWN < node.status < SolverStatus.TB_WIN:
            break
        en = node.en
        qs = node.q
        best = -1
        best_n = 0
        for j in range(len(en)):
            if qs[j] == NEG_INF:
                continue
            if en[j] > best_n:
                best_n = en[j]
                best = j
        if best < 0:
            break
        child = node.child[best]
        if child is None:
            break
        actions.append(node.actions[best])
        nodes.append(child)
        node = child
    return nodes, actions


def make_plan(engine, root: Node, kind: str) -> BranchPlan | None:
    nodes, actions = best_path(root)
    depth = sample_branch_depth(engine.rng.random(), max_depth=len(actions))
    return BranchPlan(kind=kind, depth=depth,
                      path=tuple(actions[:depth]), branch=nodes[depth])


def execute_branch(engine, plan: BranchPlan):
    """Run one simulation from the branch node, or None to discard the plan.

    The returned trajectory's pairs start at the branch node, so the ensuing
    backpropagation never touches ancestors of the branch point.
    """
    node = plan.branch
    if node.is_terminal or not node.expanded:
        return None
    if SolverStatus.UNKNOWN < node.status < SolverStatus.TB_WIN:
        return None
    env = engine.env
    state = engine._root_state
    for action in plan.path:
        state = env.apply(state, action)
    if plan.kind == EPS_GREEDY:
        idx = _first_unexplored(node)
    else:
        idx = _first_forcing(engine, node, state)
    if idx is None:
        idx = _uniform_fallback(engine, node)
        if idx is None:  # every edge pruned
            return None
    return engine._descend(node, state, [], forced_idx=idx)


def _first_unexplored(node: Node) -> int | None:
    # Stored edge order is descending prior, so a linear scan expands in
    # exactly the order the evaluator ranked the moves.
    en = node.en
    qs = node.q
    for j in range(len(en)):
        if en[j] == 0 and qs[j] != NEG_INF:
            return j
    return None


def _first_forcing(engine, node: Node, state) -> int | None:
    en = node.en
    qs = node.q
    actions = node.actions
    if not node.checks_expanded:
        env = engine.env
        for j in range(len(en)):
            if en[j] == 0 and qs[j] != NEG_INF and env.is_forcing(state, actions[j]):
                return j
        node.checks_expanded = True
    return _first_unexplored(node)


def _uniform_fallback(engine, node: Node) -> int | None:
    candidates = [j for j in range(len(node.en)) if node.q[j] != NEG_INF]
    if not candidates:
        return None
    return candidates[engine.rng.randrange(len(candidates))]

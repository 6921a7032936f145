"""Brute-force solvers used as ground truth for desk-scale games.

negamax_solve gives the exact game-theoretic outcome plus a distance with
fixed optimal-play semantics: winners end the game as fast as possible,
losers drag it out as long as possible, and draws report the shortest
drawing line. Distances are counted in plies to the terminal state.

nim_xor_outcome is an independent second oracle for Nim (Sprague-Grundy):
the mover wins under normal play exactly when the pile XOR is non-zero.
"""

from __future__ import annotations

from collections import deque
from typing import NamedTuple

from .envs import Outcome, StateKey


class SolvedEntry(NamedTuple):
    outcome: Outcome
    distance: int
    optimal_actions: tuple[int, ...]  # actions reaching the best outcome class


class OracleLimitError(RuntimeError):
    """Raised when a solve touches more states than the configured limit."""


_RANK = {Outcome.WIN: 2, Outcome.DRAW: 1, Outcome.LOSS: 0}


def negamax_solve(
    env,
    state,
    cache: dict[StateKey, SolvedEntry] | None = None,
    node_limit: int | None = None,
) -> SolvedEntry:
    """Solve a state exactly, memoized on the transposition key."""
    if cache is None:
        cache = {}

    def solve(st) -> SolvedEntry:
        key = env.state_key(st)
        hit = cache.get(key)
        if hit is not None:
            return hit
        if node_limit is not None and len(cache) >= node_limit:
            raise OracleLimitError(f"oracle node limit {node_limit} exceeded")
        terminal = env.terminal_value(st)
        if terminal is not None:
            entry = SolvedEntry(terminal, 0, ())
        else:
            best_outcome = None
            results = []
            for action in env.legal_actions(st):
                child = solve(env.apply(st, action))
                mine = child.outcome.inverted
                results.append((action, mine, child.distance + 1))
                if best_outcome is None or _RANK[mine] > _RANK[best_outcome]:
                    best_outcome = mine
            optimal = tuple(a for a, o, _ in results if o is best_outcome)
            if best_outcome is Outcome.LOSS:
                distance = max(d for _, _, d in results)
            else:
                distance = min(d for _, o, d in results if o is best_outcome)
            entry = SolvedEntry(best_outcome, distance, optimal)
        cache[key] = entry
        return entry

    return solve(state)


def solved_table(env, node_limit: int | None = None) -> dict[StateKey, SolvedEntry]:
    """Solve every state reachable from the initial position.

    Terminal states are included (distance 0, no actions). The result maps
    transposition keys to SolvedEntry, suitable as an exhaustive reference
    or as a synthetic tablebase when restricted by ply.
    """
    cache: dict[StateKey, SolvedEntry] = {}
    negamax_solve(env, env.initial_state(), cache=cache, node_limit=node_limit)
    # The memoized solve already visited exactly the reachable set: every
    # non-terminal expansion recursed into all children.
    return cache


def reachable_states(env, node_limit: int | None = None) -> dict[StateKey, object]:
    """Enumerate all states reachable in legal play, keyed by transposition key."""
    initial = env.initial_state()
    seen: dict[StateKey, object] = {env.state_key(initial): initial}
    queue = deque([initial])
    while queue:
        state = queue.popleft()
        if env.terminal_value(state) is not None:
            continue
        for action in env.legal_actions(state):
            child = env.apply(state, action)
            key = env.state_key(child)
            if key not in seen:
                if node_limit is not None and len(seen) >= node_limit:
                    raise OracleLimitError(f"enumeration limit {node_limit} exceeded")
                seen[key] = child
                queue.append(child)
    return seen


def nim_xor_outcome(piles) -> Outcome:
    """Normal-play Nim value for the side to move, by the Sprague-Grundy theorem."""
    x = 0
    for p in piles:
        x ^= p
    return Outcome.WIN if x else Outcome.LOSS

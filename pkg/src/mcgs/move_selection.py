"""Final move choice at the root.

Pipeline: visit counts -> temperature -> Q-gap boost -> argmax or sample.
A solved root bypasses all of it and plays the proven line (shortest win,
longest loss, most-explored draw).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .graph import NEG_INF, Node
from .solver import SolverStatus, solved_move


@dataclass
class MovePolicy:
    action: int
    policy: list[float] = field(default_factory=list)  # over the root's stored edge order
    boosted: bool = False
    solver_override: bool = False


def visit_policy(node: Node, tau: float) -> list[float]:
    """Distribution proportional to N^(1/tau); tau=0 is the visits argmax.

    Pruned edges get probability 0 regardless of any visits they collected
    before being pruned. Argmax ties prefer higher Q, then lower action id.
    """
    en = node.en
    qs = node.q
    k = len(en)
    if tau == 0.0:
        best = -1
        for j in range(k):
            if qs[j] == NEG_INF or en[j] == 0:
                continue
            if best < 0:
                best = j
                continue
            if en[j] > en[best]:
                best = j
            elif en[j] == en[best]:
                if qs[j] > qs[best] or (qs[j] == qs[best]
                                        and node.actions[j] < node.actions[best]):
                    best = j
        if best < 0:
            raise ValueError("visit_policy on a root with no visited children")
        out = [0.0] * k
        out[best] = 1.0
        return out
    inv = 1.0 / tau
    weights = [0.0] * k
    total = 0.0
    for j in range(k):
        if qs[j] == NEG_INF or en[j] == 0:
            continue
        w = en[j] ** inv
        weights[j] = w
        total += w
    if total <= 0.0:
        raise ValueError("visit_policy on a root with no visited children")
    return [w / total for w in weights]


def _top_two(node: Node) -> tuple[int, int] | None:
    """Most- and second-most-visited live edges; ties by Q, then action id."""
    en = node.en
    qs = node.q
    actions = node.actions
    order: list[int] = []
    for j in range(len(en)):
        if qs[j] == NEG_INF or en[j] == 0:
            continue
        order.append(j)
    if len(order) < 2:
        return None
    order.sort(key=lambda j: (-en[j], -qs[j], actions[j]))
    return order[0], order[1]


def q_boost(node: Node, policy: list[float], q_weight: float) -> tuple[list[float], bool]:
    """Shift mass to the runner-up when its Q beats the favorite's.

    Applied at most once, to the original (most-visited, second-most-visited)
    pair, then renormalized.
    """
    pair = _top_two(node)
    if pair is None:
        return policy, False
    alpha, beta = pair
    q_delta = node.q[beta] - node.q[alpha]
    if q_delta <= 0.0:
        return policy, False
    boosted = list(policy)
    boosted[beta] += q_weight * q_delta * boosted[alpha]
    total = sum(boosted)
    return [p / total for p in boosted], True


def _argmax_policy(node: Node, policy: list[float]) -> int:
    """Ties fall to more visits, then higher Q, then lower action id."""
    en = node.en
    qs = node.q
    actions = node.actions
    best = 0
    for j in range(1, len(policy)):
        if policy[j] > policy[best]:
            best = j
        elif policy[j] == policy[best]:
            if (en[j], qs[j], -actions[j]) > (en[best], qs[best], -actions[best]):
                best = j
    return best


def _prior_policy(node: Node) -> list[float]:
    live = [p if node.q[j] != NEG_INF else 0.0 for j, p in enumerate(node.p)]
    total = sum(live)
    if total <= 0.0:
        k = sum(1 for j in range(len(live)) if node.q[j] != NEG_INF)
        if k == 0:
            return [1.0 / len(live)] * len(live)
        return [1.0 / k if node.q[j] != NEG_INF else 0.0 for j in range(len(live))]
    return [p / total for p in live]


def select_move(node: Node, config, rng, solver_on: bool) -> MovePolicy:
    if node.is_terminal:
        raise ValueError("select_move on a terminal node")
    if solver_on and node.status != SolverStatus.UNKNOWN:
        try:
            action = solved_move(node)
        except LookupError:
            # Status arrived via an oracle probe without a proving child;
            # fall back to the statistics-driven choice.
            pass
        else:
            policy = [0.0] * len(node.actions)
            policy[node.actions.index(action)] = 1.0
            return MovePolicy(action, policy, solver_override=True)

    visited = any(node.en[j] > 0 and node.q[j] != NEG_INF
                  for j in range(len(node.en)))
    if not visited:
        policy = _prior_policy(node)
        boosted = False
    else:
        policy = visit_policy(node, config.tau)
        boosted = False
        if config.q_boost:
            policy, boosted = q_boost(node, policy, config.q_weight)

    if config.tau == 0.0:
        idx = _argmax_policy(node, policy)
    else:
        r = rng.random()
        acc = 0.0
        idx = len(policy) - 1
        for j, p in enumerate(policy):
            acc += p
            if r < acc:
                idx = j
                break
    return MovePolicy(node.actions[idx], policy, boosted=boosted)


def principal_variation(node: Node, solver_on: bool, limit: int = 64) -> list[int]:
    """Most-visited line from the root, switching to proven lines when known."""
    out: list[int] = []
    while len(out) < limit:
        if node.is_terminal or not node.expanded:
            break
        idx = -1
        if solver_on and node.status != SolverStatus.UNKNOWN:
            try:
                idx = node.actions.index(solved_move(node))
            except LookupError:
                idx = -1
        if idx < 0:
            en = node.en
            qs = node.q
            for j in range(len(en)):
                if qs[j] == NEG_INF or en[j] == 0:
                    continue
                if idx < 0 or en[j] > en[idx] or (en[j] == en[idx] and qs[j] > qs[idx]):
                    idx = j
            if idx < 0:
                break
        out.append(node.actions[idx])
        child = node.child[idx]
        if child is None:
            break
        node = child
    return out

"""PUCT search on a transposition graph with batched evaluation.

The engine runs AlphaZero-style PUCT selection over a DAG instead of a tree.
Nodes reached through different move orders share statistics; the price is
that an edge's Q and its child's value can drift apart (a second parent keeps
improving the child while the first parent's edge sees nothing). Two
mechanisms reconcile them:

- early stop: descending an edge whose child is better informed than the edge
  itself (child visits exceed edge visits), with a value gap above q_epsilon,
  terminates the simulation and backpropagates a correction sample chosen so
  the edge's moving average lands exactly on the child's negated value. No
  evaluator call is spent.
- backprop correction: while backing up through a node with several parents,
  the value handed further up is re-anchored to that node's negated value
  (qTarget) instead of the raw leaf sample.

Trajectory collection is synchronously batched: up to mini_batch_size
simulations are gathered under virtual loss, evaluated in one flush, then
backpropagated in submission order. Terminal, proven, and early-stop
trajectories never occupy an evaluator slot; an evaluations budget counts
only real evaluator work.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field, fields
from math import ceil, log, sqrt
from typing import Any

from .envs import Outcome
from .evaluators import EvalQueue, apply_node_temperature
from .graph import NEG_INF, GraphStore, Node, StoreFullError, update_node_value
from .solver import (
    STATUS_VALUE,
    SolverStatus,
    TerminalSolver,
    is_real,
    make_endgame_oracle,
    status_for_outcome,
)
from . import explore
from . import move_selection

BUDGET_KINDS = ("simulations", "evaluations", "milliseconds")

# Trajectory kinds. "terminal" covers real terminals and solver-proven nodes;
# both backpropagate immediately and are free of evaluator cost.
EVAL = "eval"
TERMINAL = "terminal"
EARLY_STOP = "early_stop"


@dataclass
class Trajectory:
    """One simulation: (node, edge index) pairs from the root downward.

    For kind "eval" the leaf is an unexpanded node awaiting its evaluation;
    for the other kinds value already holds the backup value. early_stop
    values are expressed from the last pair's parent perspective and skip
    the initial sign flip during backpropagation.
    """

    pairs: list[tuple[Node, int]]
    kind: str = EVAL
    value: float = 0.0
    leaf: Node | None = None
    leaf_state: Any = None

    @property
    def early_stop(self) -> bool:
        return self.kind == EARLY_STOP


@dataclass
class SearchConfig:
    """Engine settings. Numeric defaults follow the reference configuration.

    Note the near-namesakes: eps_greedy / check_enhance are feature toggles,
    epsilon_greedy / epsilon_checks are the per-simulation branch
    probabilities those features use.
    """

    # PUCT
    c_puct_init: float = 2.5
    c_puct_base: float = 19652.0
    q_init: float = -1.0
    value_min: float = -1.0
    value_max: float = 1.0
    # graph corrections
    q_epsilon: float = 0.01
    # exploration
    epsilon_greedy: float = 0.01
    epsilon_checks: float = 0.01
    dirichlet_epsilon: float = 0.0
    dirichlet_alpha: float = 0.3
    # evaluation shaping
    node_tau: float = 1.7
    # move selection
    tau: float = 0.0
    q_weight: float = 2.0
    # batching
    mini_batch_size: int = 16
    virtual_loss: float = 1.0
    threads: int = 2  # worker contexts of the batching model; execution is synchronous
    terminal_cap_factor: int = 4  # terminal trajectories per batch <= factor * mini_batch
    # budget
    budget: str = "simulations"
    budget_amount: int = 800
    stall_rounds_limit: int = 16  # evaluation budgets: stop after this many eval-free rounds
    # feature toggles
    transpositions: bool = True
    terminal_solver: bool = True
    eps_greedy: bool = True
    check_enhance: bool = True
    q_boost: bool = True
    # plumbing
    stop_when_solved: bool = True
    capacity: int = 2_000_000
    seed: int = 0
    endgame_oracle: str = "none"

    def validate(self) -> None:
        if self.budget not in BUDGET_KINDS:
            raise ValueError(f"budget must be one of {BUDGET_KINDS}, got {self.budget!r}")
        if self.budget_amount < 1:
            raise ValueError("budget_amount must be >= 1")
        if self.mini_batch_size < 1:
            raise ValueError("mini_batch_size must be >= 1")
        if self.node_tau <= 0:
            raise ValueError("node_tau must be > 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if not 0.0 <= self.epsilon_greedy <= 1.0 or not 0.0 <= self.epsilon_checks <= 1.0:
            raise ValueError("branch probabilities must lie in [0, 1]")
        if not 0.0 <= self.dirichlet_epsilon <= 1.0:
            raise ValueError("dirichlet_epsilon must lie in [0, 1]")
        if self.virtual_loss < 0:
            raise ValueError("virtual_loss must be >= 0")
        if self.value_min >= self.value_max:
            raise ValueError("value_min must be < value_max")
        if not self.value_min <= self.q_init <= self.value_max:
            raise ValueError("q_init must lie in the value range")
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "SearchConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            spec = known.get(key)
            if spec is None:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(value, spec.type)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def _coerce(value, typename):
    if not isinstance(value, str):
        return value
    text = value.strip()
    if typename == "bool":
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse bool from {value!r}")
    if typename == "int":
        return int(text)
    if typename == "float":
        return float(text)
    return text


def cpuct(total_visits: float, c_base: float = 19652.0, c_init: float = 2.5) -> float:
    """Exploration coefficient, growing logarithmically with node visits."""
    return log((total_visits + c_base + 1.0) / c_base) + c_init


def correction_value(q_edge: float, v_star: float, visits: int,
                     vmin: float = -1.0, vmax: float = 1.0) -> float:
    """Backup sample that lands an edge's moving average exactly on v_star.

    With N prior samples averaging q_edge, the SMA over N+1 samples equals
    v_star when the new sample is v_star + N * (v_star - q_edge). The result
    is clipped to the value range, after which the average only moves toward
    v_star as far as the clip allows.
    """
    value = v_star + visits * (v_star - q_edge)
    if value > vmax:
        return vmax
    if value < vmin:
        return vmin
    return value


_SETTLED_VALUE = {
    SolverStatus.UNKNOWN: 1.0,  # only reachable with every edge pruned
    SolverStatus.WIN: 1.0,
    SolverStatus.TB_WIN: 1.0,
    SolverStatus.LOSS: -1.0,
    SolverStatus.TB_LOSS: -1.0,
    SolverStatus.DRAW: 0.0,
    SolverStatus.TB_DRAW: 0.0,
}


def _settled_value(status) -> float:
    return _SETTLED_VALUE[status]


@dataclass
class SearchResult:
    game: str
    ply: int
    actions: list[dict]
    selected_action: int | None
    policy: list[float]
    pv: list[int]
    value: float
    root_status: str
    root_end_in_ply: int
    simulations: int
    evaluations: int
    terminal_trajectories: int
    early_stop_trajectories: int
    stop_reason: str
    wall_ms: float
    memory: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "game": self.game,
            "ply": self.ply,
            "actions": self.actions,
            "selected_action": self.selected_action,
            "policy": self.policy,
            "pv": self.pv,
            "value": self.value,
            "root_status": self.root_status,
            "root_end_in_ply": self.root_end_in_ply,
            "simulations": self.simulations,
            "evaluations": self.evaluations,
            "terminal_trajectories": self.terminal_trajectories,
            "early_stop_trajectories": self.early_stop_trajectories,
            "stop_reason": self.stop_reason,
            "wall_ms": self.wall_ms,
            "memory": self.memory,
        }


class SearchEngine:
    """Persistent search over one game: the store survives across moves.

    reset() places the root; search() runs one budgeted search from the
    current root; advance() pushes the root down an edge after a move is
    played, keeping all statistics (and any pruning) for reuse.
    """

    def __init__(self, env, evaluator, config: SearchConfig, endgame_oracle=None) -> None:
        config.validate()
        self.env = env
        self.evaluator = evaluator
        self.config = config
        self.rng = random.Random(config.seed)
        self.store = GraphStore(transpositions=config.transpositions,
                                capacity=config.capacity)
        if endgame_oracle is None and config.endgame_oracle:
            endgame_oracle = make_endgame_oracle(config.endgame_oracle, env)
        self.solver = TerminalSolver(endgame_oracle) if config.terminal_solver else None
        self._root: Node | None = None
        self._root_state = None
        # per-search counters
        self._sims = 0
        self._terminals = 0
        self._early = 0
        self._store_full = False

    # ----- root management -------------------------------------------------

    def reset(self, state) -> None:
        """Place the root at a state, reusing the node if the store knows it."""
        self._root_state = state
        node, existed = self.store.lookup_or_insert(self.env.state_key(state))
        self._root = node
        if not existed and not node.is_terminal:
            outcome = self.env.terminal_value(state)
            if outcome is not None:
                node.is_terminal = True
                node.v = outcome.score
                if self.solver is not None:
                    self.solver.mark_terminal(node, outcome)

    def advance(self, action: int) -> None:
        """Move the root one ply down after `action` was played."""
        if self._root is None:
            raise RuntimeError("advance() before reset()")
        state = self.env.apply(self._root_state, action)
        root = self._root
        if root.expanded:
            idx = root.actions.index(action)
            child = root.child[idx]
            if child is None:
                child = self._resolve_child(root, idx, state)
            self._root = child
            self._root_state = state
        else:
            self.reset(state)

    # ----- public search ---------------------------------------------------

    def search(self) -> SearchResult:
        if self._root is None:
            raise RuntimeError("search() before reset()")
        cfg = self.config
        t0 = time.perf_counter()
        root = self._root
        state = self._root_state

        self._sims = 0
        self._terminals = 0
        self._early = 0
        self._store_full = False

        if root.is_terminal:
            outcome = self.env.terminal_value(state)
            return self._result(root, t0, "terminal_root",
                                status=status_for_outcome(outcome), evaluations=0)

        queue = EvalQueue(self.evaluator, cfg.mini_batch_size)

        if not root.expanded:
            evaluation = self.evaluator.evaluate(state)
            queue.total_evaluated += 1
            self._expand(root, state, evaluation, is_root=True)
            self._sims += 1
        elif cfg.dirichlet_epsilon > 0.0:
            self._mix_root_noise(root)

        stop_reason = self._run(root, queue, t0)
        status = root.status if self.solver is not None else SolverStatus.UNKNOWN
        return self._result(root, t0, stop_reason, status=status,
                            evaluations=queue.total_evaluated)

    # ----- batched simulation loop ------------------------------------------

    def _run(self, root: Node, queue: EvalQueue, t0: float) -> str:
        cfg = self.config
        budget = cfg.budget
        amount = cfg.budget_amount
        mini_batch = cfg.mini_batch_size
        terminal_cap = cfg.terminal_cap_factor * mini_batch
        stop_when_solved = cfg.stop_when_solved
        stall_rounds = 0
        store = self.store

        while True:
            if self._store_full:
                return "store_full"
            if stop_when_solved and is_real(root.status):
                return "solved"
            if budget == "simulations":
                if self._sims >= amount:
                    return "budget"
            elif budget == "evaluations":
                if queue.total_evaluated >= amount:
                    return "budget"
            else:
                if (time.perf_counter() - t0) * 1000.0 >= amount:
                    return "budget"

            terminals_this_round = 0
            flushed = None
            while terminals_this_round < terminal_cap:
                if stop_when_solved and is_real(root.status):
                    break
                if budget == "simulations" and self._sims + len(queue) >= amount:
                    break
                if budget == "evaluations" and queue.total_evaluated + len(queue) >= amount:
                    break
                if budget == "milliseconds" and (time.perf_counter() - t0) * 1000.0 >= amount:
                    break
                traj = self._simulate(root)
                if traj is None:  # store filled up mid-simulation
                    break
                if traj.kind == EVAL:
                    flushed = queue.submit(traj.leaf_state, traj)
                    if len(queue) > store.trajectory_buffer_peak:
                        store.trajectory_buffer_peak = len(queue)
                    if flushed is not None:
                        break
                else:
                    self._backpropagate(traj.pairs, traj.value, traj.early_stop)
                    self._sims += 1
                    terminals_this_round += 1
                    if traj.kind == EARLY_STOP:
                        self._early += 1
                    else:
                        self._terminals += 1

            if flushed is None:
                flushed = queue.flush()
            had_evals = bool(flushed)
            for traj, evaluation in flushed:
                self._finish_eval(traj, evaluation)

            if budget == "evaluations":
                stall_rounds = 0 if had_evals else stall_rounds + 1
                if stall_rounds >= cfg.stall_rounds_limit:
                    return "stalled"
            elif not had_evals and terminals_this_round == 0:
                # No progress is possible (e.g. every root edge pruned).
                return "stalled"

    def _finish_eval(self, traj: Trajectory, evaluation) -> None:
        leaf = traj.leaf
        if not leaf.expanded:
            self._expand(leaf, traj.leaf_state, evaluation)
        else:
            # A sibling trajectory of this batch expanded the leaf already:
            # count the extra visit, keep N(s,a) <= N(child).
            n1 = leaf.n + 1
            leaf.n = n1
            leaf.v += (evaluation.value - leaf.v) / n1
        self._backpropagate(traj.pairs, evaluation.value, False)
        self._sims += 1

    # ----- simulation ------------------------------------------------------

    def _simulate(self, root: Node) -> Trajectory | None:
        cfg = self.config
        rng = self.rng
        plan = None
        if cfg.eps_greedy or cfg.check_enhance:
            u_greedy = rng.random() if cfg.eps_greedy else 1.0
            u_checks = rng.random() if cfg.check_enhance else 1.0
            if u_greedy <= cfg.epsilon_greedy:
                plan = explore.make_plan(self, root, explore.EPS_GREEDY)
            elif u_checks <= cfg.epsilon_checks:
                plan = explore.make_plan(self, root, explore.FORCING)
        try:
            if plan is not None:
                traj = explore.execute_branch(self, plan)
                if traj is not None:
                    return traj
            return self._descend(root, self._root_state, [])
        except StoreFullError:
            self._store_full = True
            return None

    def _descend(self, node: Node, state, pairs: list, forced_idx: int | None = None) -> Trajectory:
        """Walk the graph from `node` until the simulation terminates.

        Appends (node, edge index) pairs and applies virtual loss as it goes.
        On StoreFullError the virtual loss applied so far is rolled back
        before re-raising.
        """
        env = self.env
        cfg = self.config
        transpositions = cfg.transpositions
        q_eps = cfg.q_epsilon
        vmin = cfg.value_min
        vmax = cfg.value_max
        apply_action = env.apply
        try:
            while True:
                if forced_idx is not None:
                    i = forced_idx
                    forced_idx = None
                else:
                    i = self._select_index(node)
                    if i < 0:
                        # Every edge settled. A solved node backs up its own
                        # class value; all-edges-pruned means every child is a
                        # proven loss for them, i.e. a win here.
                        value = _settled_value(node.status)
                        update_node_value(node, value)
                        return Trajectory(pairs, TERMINAL, value=value)
                node.evl[i] += 1
                pairs.append((node, i))
                state = apply_action(state, node.actions[i])
                child = node.child[i]
                if child is None:
                    child = self._resolve_child(node, i, state)
                # Trajectory endpoints count as a visit of the reached node
                # too, keeping N(s,a) <= N(child) for terminal and proven
                # children. The value is a constant there, so v never moves.
                if child.is_terminal:
                    update_node_value(child, child.v)
                    return Trajectory(pairs, TERMINAL, value=child.v)
                status = child.status
                if SolverStatus.UNKNOWN < status < SolverStatus.TB_WIN:
                    update_node_value(child, STATUS_VALUE[status])
                    return Trajectory(pairs, TERMINAL, value=STATUS_VALUE[status])
                if transpositions:
                    edge_n = node.en[i]
                    if child.n > edge_n:
                        v_star = -child.v
                        q_edge = node.q[i]
                        delta = v_star - q_edge
                        if delta > q_eps or delta < -q_eps:
                            value = v_star + edge_n * delta
                            if value > vmax:
                                value = vmax
                            elif value < vmin:
                                value = vmin
                            return Trajectory(pairs, EARLY_STOP, value=value)
                if not child.expanded:
                    return Trajectory(pairs, EVAL, leaf=child, leaf_state=state)
                node = child
        except StoreFullError:
            for pnode, pi in pairs:
                pnode.evl[pi] -= 1
            raise

    def _select_index(self, node: Node) -> int:
        """PUCT argmax over live edges, reading Q through virtual loss.

        Pruned edges are never candidates. With the solver on, edges into
        proven children are skipped too: their value is exact, so another
        simulation there is search in vain. An unsolved node always keeps a
        live edge (unknown_children_count > 0 guarantees one), so -1 is
        returned only when every edge is settled and the caller can read the
        node's own status.
        """
        en = node.en
        evl = node.evl
        qs = node.q
        ps = node.p
        children = node.child
        cfg = self.config
        vl_weight = cfg.virtual_loss
        solver_on = self.solver is not None
        total = 0
        for j in range(len(en)):
            total += en[j] + evl[j]
        u_scale = (log((total + cfg.c_puct_base + 1.0) / cfg.c_puct_base)
                   + cfg.c_puct_init) * sqrt(total)
        best = -1
        best_score = NEG_INF
        actions = node.actions
        for j in range(len(en)):
            q = qs[j]
            if q == NEG_INF:
                continue
            if solver_on:
                child = children[j]
                if child is not None and 0 < child.status < 4:
                    continue
            n = en[j]
            v = evl[j]
            if v:
                m = n + v
                q = (n * q - v * vl_weight) / m
            else:
                m = n
            score = q + u_scale * ps[j] / (1.0 + m)
            if score > best_score or (score == best_score
                                      and best >= 0 and actions[j] < actions[best]):
                best_score = score
                best = j
        return best

    # ----- node lifecycle ----------------------------------------------------

    def _resolve_child(self, node: Node, idx: int, state) -> Node:
        """First traversal of an edge: find or create the child node."""
        key = self.env.state_key(state)
        child, existed = self.store.lookup_or_insert(key)
        self.store.link(node, idx, child, existed)
        if not existed:
            outcome = self.env.terminal_value(state)
            if outcome is not None:
                child.is_terminal = True
                child.v = outcome.score
                if self.solver is not None:
                    self.solver.mark_terminal(child, outcome)
        if self.solver is not None:
            self.solver.note_link(node, idx, child)
        return child

    def _expand(self, node: Node, state, evaluation, is_root: bool = False) -> None:
        """Create the node's edges from an evaluation and run solver hooks."""
        cfg = self.config
        actions = self.env.legal_actions(state)
        priors = apply_node_temperature(evaluation.priors, cfg.node_tau)
        if is_root and cfg.dirichlet_epsilon > 0.0:
            priors = self._dirichlet_mix(priors)
        order = sorted(range(len(actions)), key=lambda j: -priors[j])
        self.store.attach_edges(
            node,
            [actions[j] for j in order],
            [priors[j] for j in order],
            cfg.q_init,
        )
        node.v = evaluation.value
        node.n = 1
        solver = self.solver
        if solver is not None:
            env = self.env
            try:
                for j, action in enumerate(node.actions):
                    child_state = env.apply(state, action)
                    outcome = env.terminal_value(child_state)
                    if outcome is None:
                        continue
                    key = env.state_key(child_state)
                    child, existed = self.store.lookup_or_insert(key)
                    if not existed:
                        child.is_terminal = True
                        child.v = outcome.score
                        solver.mark_terminal(child, outcome)
                    self.store.link(node, j, child, existed)
                    solver.note_link(node, j, child)
            except StoreFullError:
                self._store_full = True
            solver.probe_expanded(node, state)

    def _dirichlet_mix(self, priors: list[float]) -> list[float]:
        rng = self.rng
        eps = self.config.dirichlet_epsilon
        alpha = self.config.dirichlet_alpha
        noise = [rng.gammavariate(alpha, 1.0) for _ in priors]
        total = sum(noise) or 1.0
        return [(1.0 - eps) * p + eps * (g / total) for p, g in zip(priors, noise)]

    def _mix_root_noise(self, root: Node) -> None:
        keep = [i for i, q in enumerate(root.q) if q != NEG_INF]
        if not keep:
            return
        rng = self.rng
        eps = self.config.dirichlet_epsilon
        alpha = self.config.dirichlet_alpha
        noise = [rng.gammavariate(alpha, 1.0) for _ in keep]
        total = sum(noise) or 1.0
        live = sum(root.p[i] for i in keep) or 1.0
        for i, g in zip(keep, noise):
            root.p[i] = (1.0 - eps) * root.p[i] + eps * live * (g / total)

    # ----- backpropagation ---------------------------------------------------

    def _backpropagate(self, pairs: list, value: float, early_stop: bool) -> None:
        """Algorithm: reverse walk with qTarget re-anchoring at transpositions.

        The first processed pair flips the child-perspective value into the
        parent perspective, except for early-stop values which are already
        expressed there. Above a node with in-degree > 1 the pushed value is
        re-derived from that node's own (fresher) statistics.
        """
        cfg = self.config
        vmin = cfg.value_min
        vmax = cfg.value_max
        qtarget_set = False
        qtarget = 0.0
        first = True
        for node, i in reversed(pairs):
            if first:
                first = False
                if not early_stop:
                    value = -value
            elif qtarget_set:
                q_edge = node.q[i]
                if q_edge != NEG_INF:
                    value = correction_value(q_edge, qtarget, node.en[i], vmin, vmax)
                else:
                    value = qtarget  # node averages never leave the value range
            else:
                value = -value
            n1 = node.en[i] + 1
            node.en[i] = n1
            q_edge = node.q[i]
            if q_edge != NEG_INF:
                node.q[i] = q_edge + (value - q_edge) / n1
            node.evl[i] -= 1
            m1 = node.n + 1
            node.n = m1
            node.v += (value - node.v) / m1
            if node.in_degree > 1:
                qtarget = -node.v
                qtarget_set = True
            else:
                qtarget_set = False

    # ----- result assembly ---------------------------------------------------

    def _result(self, root: Node, t0: float, stop_reason: str,
                status: SolverStatus, evaluations: int) -> SearchResult:
        cfg = self.config
        if self._store_full and stop_reason != "store_full":
            stop_reason = "store_full"
        selected = None
        policy: list[float] = []
        pv: list[int] = []
        actions: list[dict] = []
        if root.expanded:
            move = move_selection.select_move(
                root, cfg, self.rng, solver_on=self.solver is not None)
            selected = move.action
            policy = move.policy
            pv = move_selection.principal_variation(
                root, solver_on=self.solver is not None)
            for j in range(len(root.actions)):
                pruned = root.q[j] == NEG_INF
                actions.append({
                    "action": root.actions[j],
                    "prior": root.p[j],
                    "visits": root.en[j],
                    "q": None if pruned else root.q[j],
                    "pruned": pruned,
                    "policy": policy[j],
                })
        wall_ms = (time.perf_counter() - t0) * 1000.0
        return SearchResult(
            game=self.env.game_id,
            ply=getattr(self._root_state, "ply", 0),
            actions=actions,
            selected_action=selected,
            policy=policy,
            pv=pv,
            value=root.v,
            root_status=status.name,
            root_end_in_ply=root.end_in_ply,
            simulations=self._sims,
            evaluations=evaluations,
            terminal_trajectories=self._terminals,
            early_stop_trajectories=self._early,
            stop_reason=stop_reason,
            wall_ms=wall_ms,
            memory=self.store.memory_report(),
        )


def run_search(env, evaluator, state, config: SearchConfig,
               endgame_oracle=None) -> SearchResult:
    """One-shot search from a state with a fresh engine."""
    engine = SearchEngine(env, evaluator, config, endgame_oracle=endgame_oracle)
    engine.reset(state)
    return engine.search()

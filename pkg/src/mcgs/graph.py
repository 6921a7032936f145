"""Graph store: transposition-keyed nodes with statistics on nodes and edges.

Edges are stored as parallel per-node lists (action, prior, Q, visit count,
virtual loss, child reference) rather than edge objects; at branching factors
of a dozen this keeps the selection loop allocation-free and cache-friendly.
EdgeView wraps one slot for code that wants an object.

Statistics are simple moving averages on both nodes and edges. Q-values start
at q_init (a first-play-urgency pessimism, not a sample): the first real
update replaces the initial value entirely because the SMA divides by the
post-increment count.

Memory accounting distinguishes the nodes actually allocated from
tree_equivalent_node_count, the nodes a pure tree would have allocated for
the same simulations: every first resolution of an edge onto a pre-existing
node is one join event, i.e. one allocation the tree could not have shared.
"""

from __future__ import annotations

from .envs import StateKey
from .solver import SolverStatus

NEG_INF = float("-inf")


class StoreFullError(RuntimeError):
    """Node capacity exhausted; the search aborts gracefully with best-so-far."""


class Node:
    __slots__ = (
        "key", "v", "n", "expanded", "is_terminal",
        "actions", "p", "q", "en", "evl", "child",
        "status", "end_in_ply", "unknown_children_count", "checks_expanded",
        "parents", "in_degree",
    )

    def __init__(self, key: StateKey) -> None:
        self.key = key
        self.v = 0.0
        self.n = 0
        self.expanded = False
        self.is_terminal = False
        self.actions: list[int] = []
        self.p: list[float] = []      # priors, one entry per edge
        self.q: list[float] = []      # edge Q (SMA); -inf marks a pruned edge
        self.en: list[int] = []       # edge visit counts
        self.evl: list[int] = []      # edge virtual-loss (in-flight) counts
        self.child: list = []         # child Node or None while unresolved
        self.status = SolverStatus.UNKNOWN
        self.end_in_ply = 0
        self.unknown_children_count = 0
        self.checks_expanded = False
        self.parents: list[tuple["Node", int]] = []
        self.in_degree = 0

    @property
    def priors(self) -> list[float]:
        return self.p

    def edge(self, idx: int) -> "EdgeView":
        return EdgeView(self, idx)

    @property
    def edges(self) -> list["EdgeView"]:
        return [EdgeView(self, i) for i in range(len(self.actions))]

    def edge_index(self, action: int) -> int:
        return self.actions.index(action)

    def __repr__(self) -> str:
        return (
            f"Node(key={self.key}, v={self.v:+.3f}, n={self.n}, "
            f"edges={len(self.actions)}, status={self.status.name})"
        )


class EdgeView:
    """Object view of one edge slot, for tests and non-hot-path code."""

    __slots__ = ("node", "idx")

    def __init__(self, node: Node, idx: int) -> None:
        self.node = node
        self.idx = idx

    @property
    def action(self) -> int:
        return self.node.actions[self.idx]

    @property
    def prior(self) -> float:
        return self.node.p[self.idx]

    @property
    def q(self) -> float:
        return self.node.q[self.idx]

    @property
    def n(self) -> int:
        return self.node.en[self.idx]

    @property
    def virtual_loss(self) -> int:
        return self.node.evl[self.idx]

    @property
    def child(self) -> Node | None:
        return self.node.child[self.idx]

    @property
    def pruned(self) -> bool:
        return self.node.q[self.idx] == NEG_INF

    def __repr__(self) -> str:
        return (
            f"Edge(a={self.action}, p={self.prior:.3f}, q={self.q:+.3f}, "
            f"n={self.n}, vl={self.virtual_loss})"
        )


def update_edge_sma(node: Node, idx: int, value: float) -> None:
    """Moving-average update of one edge: n += 1, q += (value - q) / n."""
    n1 = node.en[idx] + 1
    node.en[idx] = n1
    q = node.q[idx]
    if q != NEG_INF:
        node.q[idx] = q + (value - q) / n1


def update_node_value(node: Node, value: float) -> None:
    """Moving-average update of the node value: n += 1, v += (value - v) / n."""
    n1 = node.n + 1
    node.n = n1
    node.v += (value - node.v) / n1


class GraphStore:
    """Flat transposition table plus allocation accounting.

    With transpositions disabled every insert gets a fresh synthetic key, so
    the stored graph degenerates to the tree a path-keyed search would build.
    """

    def __init__(self, transpositions: bool = True, capacity: int = 2_000_000) -> None:
        self.transpositions = transpositions
        self.capacity = capacity
        self.nodes: dict[StateKey, Node] = {}
        self.join_count = 0
        self.edge_count = 0
        self.prior_entry_count = 0
        self.trajectory_buffer_peak = 0
        self._serial = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def get(self, key: StateKey) -> Node | None:
        return self.nodes.get(key)

    def lookup_or_insert(self, key: StateKey) -> tuple[Node, bool]:
        """Return (node, was_existing); insert a fresh node on miss."""
        if self.transpositions:
            node = self.nodes.get(key)
            if node is not None:
                return node, True
        else:
            self._serial += 1
            key = StateKey(self._serial, key.ply)
        if len(self.nodes) >= self.capacity:
            raise StoreFullError(f"graph store capacity {self.capacity} exhausted")
        node = Node(key)
        self.nodes[key] = node
        return node, False

    def attach_edges(self, node: Node, actions: list[int], priors: list[float],
                     q_init: float) -> None:
        """Create the edge slots of a freshly expanded node."""
        if node.expanded:
            raise ValueError(f"node {node.key} is already expanded")
        k = len(actions)
        node.actions = actions
        node.p = priors
        node.q = [q_init] * k
        node.en = [0] * k
        node.evl = [0] * k
        node.child = [None] * k
        node.unknown_children_count = k
        node.expanded = True
        self.edge_count += k
        self.prior_entry_count += k

    def link(self, parent: Node, idx: int, child: Node, was_existing: bool) -> None:
        """Resolve an edge to its child node and record the back-reference."""
        parent.child[idx] = child
        child.parents.append((parent, idx))
        child.in_degree += 1
        if was_existing:
            self.join_count += 1

    def memory_report(self) -> dict:
        """Live allocation counts plus the pure-tree counterfactual."""
        node_count = len(self.nodes)
        return {
            "node_count": node_count,
            "edge_count": self.edge_count,
            "prior_entry_count": self.prior_entry_count,
            "trajectory_buffer_size": self.trajectory_buffer_peak,
            "tree_equivalent_node_count": node_count + self.join_count,
            "transposition_join_count": self.join_count,
        }

"""Graph store: statistics updates, transposition joins, memory accounting."""

import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcgs.envs import StateKey, make_env
from mcgs.evaluators import UniformEvaluator
from mcgs.graph import (
    NEG_INF,
    GraphStore,
    Node,
    StoreFullError,
    update_edge_sma,
    update_node_value,
)
from mcgs.search import SearchConfig, SearchEngine, run_search

from helpers import attach_child, expanded_node, fresh_key


def test_first_edge_update_replaces_the_pessimistic_init():
    store = GraphStore()
    node = expanded_node(store, actions=[0, 1], q_init=-1.0)
    update_edge_sma(node, 0, 0.5)
    assert node.en[0] == 1
    assert node.q[0] == 0.5
    update_edge_sma(node, 0, 0.1)
    assert node.en[0] == 2
    assert node.q[0] == pytest.approx(0.3)
    assert node.q[1] == -1.0  # untouched sibling keeps its init


def test_edge_sma_worked_example():
    store = GraphStore()
    node = expanded_node(store, actions=[0])
    node.q[0] = 0.5
    node.en[0] = 3
    update_edge_sma(node, 0, -0.1)
    assert node.en[0] == 4
    assert node.q[0] == pytest.approx(0.35)


def test_pruned_edge_counts_visits_but_keeps_neg_inf():
    store = GraphStore()
    node = expanded_node(store, actions=[0])
    node.q[0] = NEG_INF
    update_edge_sma(node, 0, 0.9)
    assert node.en[0] == 1
    assert node.q[0] == NEG_INF
    assert node.edge(0).pruned


@given(st.lists(st.floats(min_value=-1.0, max_value=1.0), min_size=1, max_size=50))
def test_edge_sma_equals_the_running_mean(values):
    store = GraphStore()
    node = expanded_node(store, actions=[0])
    for v in values:
        update_edge_sma(node, 0, v)
    assert node.en[0] == len(values)
    assert node.q[0] == pytest.approx(statistics.fmean(values), abs=1e-12)


def test_node_value_sma():
    node = Node(fresh_key(0))
    update_node_value(node, 0.8)
    assert (node.n, node.v) == (1, 0.8)
    update_node_value(node, -0.2)
    assert node.n == 2
    assert node.v == pytest.approx(0.3)


def test_attach_edges_rejects_double_expansion():
    store = GraphStore()
    node = expanded_node(store, actions=[0, 1])
    with pytest.raises(ValueError):
        store.attach_edges(node, [2], [1.0], q_init=-1.0)


def test_lookup_is_shared_only_with_transpositions_on():
    key = StateKey(1234, 3)
    shared = GraphStore(transpositions=True)
    a, existed_a = shared.lookup_or_insert(key)
    b, existed_b = shared.lookup_or_insert(key)
    assert a is b
    assert (existed_a, existed_b) == (False, True)

    split = GraphStore(transpositions=False)
    c, existed_c = split.lookup_or_insert(key)
    d, existed_d = split.lookup_or_insert(key)
    assert c is not d
    assert (existed_c, existed_d) == (False, False)
    assert c.key != d.key
    assert c.key.ply == d.key.ply == 3  # synthetic keys keep the depth


def test_link_counts_joins_and_in_degree():
    store = GraphStore()
    p1 = expanded_node(store, actions=[0], ply=0)
    p2 = expanded_node(store, actions=[0], ply=0)
    child, _ = store.lookup_or_insert(fresh_key(1))
    store.link(p1, 0, child, was_existing=False)
    store.link(p2, 0, child, was_existing=True)
    assert child.in_degree == 2
    assert [(p, i) for p, i in child.parents] == [(p1, 0), (p2, 0)]
    assert store.join_count == 1
    report = store.memory_report()
    assert report["node_count"] == 3
    assert report["edge_count"] == 2
    assert report["prior_entry_count"] == 2
    assert report["tree_equivalent_node_count"] == 4
    assert report["transposition_join_count"] == 1


def test_store_capacity_is_enforced():
    store = GraphStore(capacity=2)
    store.lookup_or_insert(fresh_key(0))
    store.lookup_or_insert(fresh_key(1))
    with pytest.raises(StoreFullError):
        store.lookup_or_insert(fresh_key(2))


def test_edge_view_mirrors_the_slot_arrays():
    store = GraphStore()
    node = expanded_node(store, actions=[5, 7], priors=[0.75, 0.25])
    child = attach_child(store, node, 1)
    node.en[1] = 4
    node.evl[1] = 2
    edge = node.edge(1)
    assert edge.action == 7
    assert edge.prior == 0.25
    assert edge.n == 4
    assert edge.virtual_loss == 2
    assert edge.child is child
    assert not edge.pruned
    assert node.edge_index(7) == 1
    assert len(node.edges) == 2


def test_chain_game_allocates_no_joins():
    # Every position in the one-way chain is reached by exactly one line of
    # play, so the graph and its tree counterfactual coincide.
    env = make_env("leftright:16")
    config = SearchConfig(budget_amount=400, seed=3)
    result = run_search(env, UniformEvaluator(env), env.initial_state(), config)
    report = result.memory
    assert report["transposition_join_count"] == 0
    assert report["node_count"] == report["tree_equivalent_node_count"]
    assert report["node_count"] <= 2 * 16 + 1


def test_transpositions_shrink_the_tictactoe_graph(ttt):
    config = SearchConfig(budget_amount=2000, seed=5)
    result = run_search(ttt, UniformEvaluator(ttt), ttt.initial_state(), config)
    report = result.memory
    assert report["transposition_join_count"] > 0
    assert report["node_count"] < report["tree_equivalent_node_count"]


def test_edge_visits_never_exceed_child_visits(ttt):
    # N(s,a) counts trajectories through the edge; each of those also visited
    # the child, so the edge count is a lower bound on the child's count.
    config = SearchConfig(budget_amount=2000, seed=9)
    engine = SearchEngine(ttt, UniformEvaluator(ttt), config)
    engine.reset(ttt.initial_state())
    engine.search()
    for node in engine.store.nodes.values():
        for i, child in enumerate(node.child):
            if child is not None:
                assert node.en[i] <= child.n

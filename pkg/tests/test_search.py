"""Engine internals and end-to-end searches on the desk-scale games."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcgs.envs import make_env
from mcgs.evaluators import Evaluation, UniformEvaluator
from mcgs.graph import NEG_INF, GraphStore
from mcgs.search import (
    SearchConfig,
    SearchEngine,
    correction_value,
    cpuct,
    run_search,
)

from helpers import expanded_node

INF = float("inf")


def _engine(env, **overrides):
    config = SearchConfig(**overrides)
    return SearchEngine(env, UniformEvaluator(env), config)


# ----- exploration coefficient ------------------------------------------------


def test_cpuct_at_zero_visits_is_almost_c_init():
    assert cpuct(0) == pytest.approx(2.500051, abs=1e-6)


def test_cpuct_log_growth_hits_the_e_fold_point():
    total = 19652.0 * (math.e - 1.0) - 1.0
    assert cpuct(total) == pytest.approx(3.5, abs=1e-9)


def test_cpuct_is_monotone():
    assert cpuct(0) < cpuct(10_000) < cpuct(1_000_000)
    assert cpuct(0, c_base=1.0, c_init=0.0) == pytest.approx(math.log(2.0))


# ----- correction backups -----------------------------------------------------


def test_correction_value_worked_example_clips_to_the_floor():
    # Q = 0.8, V* = 0.2, N = 5: the exact landing sample is -2.8, far outside
    # the value range, so the backup saturates at -1.
    assert correction_value(0.8, 0.2, 5, -INF, INF) == pytest.approx(-2.8)
    assert correction_value(0.8, 0.2, 5) == -1.0


def test_correction_value_lands_the_average_exactly_when_unclipped():
    q, v_star, n = 0.8, 0.2, 5
    sample = correction_value(q, v_star, n, -INF, INF)
    assert q + (sample - q) / (n + 1) == pytest.approx(v_star, abs=1e-12)


def test_correction_value_edge_cases():
    assert correction_value(0.5, 0.25, 0) == 0.25  # no history: plain target
    assert correction_value(-0.9, 0.5, 5) == 1.0   # saturates upward


@given(
    st.floats(min_value=-1.0, max_value=1.0),
    st.floats(min_value=-1.0, max_value=1.0),
    st.integers(min_value=0, max_value=10_000),
)
def test_correction_value_fuzz(q, v_star, n):
    sample = correction_value(q, v_star, n, -INF, INF)
    assert q + (sample - q) / (n + 1) == pytest.approx(v_star, abs=1e-6)
    assert -1.0 <= correction_value(q, v_star, n) <= 1.0


# ----- configuration ----------------------------------------------------------


def test_default_configuration_values():
    cfg = SearchConfig()
    assert cfg.q_epsilon == 0.01
    assert cfg.q_weight == 2.0
    assert cfg.epsilon_greedy == 0.01
    assert cfg.epsilon_checks == 0.01
    assert cfg.c_puct_init == 2.5
    assert cfg.c_puct_base == 19652.0
    assert cfg.node_tau == 1.7
    assert cfg.tau == 0.0
    assert cfg.mini_batch_size == 16
    assert cfg.virtual_loss == 1.0
    assert cfg.q_init == -1.0
    assert (cfg.value_min, cfg.value_max) == (-1.0, 1.0)
    assert cfg.budget == "simulations"
    assert cfg.budget_amount == 800
    assert cfg.transpositions and cfg.terminal_solver and cfg.eps_greedy
    assert cfg.check_enhance and cfg.q_boost


def test_config_roundtrip_through_dict():
    cfg = SearchConfig(budget="evaluations", budget_amount=512, seed=9, tau=0.5)
    assert SearchConfig.from_dict(cfg.to_dict()) == cfg


def test_config_coerces_strings():
    cfg = SearchConfig.from_dict({
        "budget_amount": "400",
        "eps_greedy": "false",
        "q_boost": "ON",
        "c_puct_init": "3.0",
        "budget": "evaluations",
    })
    assert cfg.budget_amount == 400
    assert cfg.eps_greedy is False
    assert cfg.q_boost is True
    assert cfg.c_puct_init == 3.0


def test_config_rejects_unknown_keys_and_bad_bools():
    with pytest.raises(ValueError):
        SearchConfig.from_dict({"c_puct": 1.0})
    with pytest.raises(ValueError):
        SearchConfig.from_dict({"q_boost": "maybe"})


@pytest.mark.parametrize("field,value", [
    ("budget", "nodes"),
    ("budget_amount", 0),
    ("mini_batch_size", 0),
    ("node_tau", 0.0),
    ("tau", -0.1),
    ("epsilon_greedy", 1.5),
    ("epsilon_checks", -0.2),
    ("dirichlet_epsilon", 2.0),
    ("virtual_loss", -1.0),
    ("value_min", 1.0),
    ("q_init", -3.0),
    ("capacity", 0),
    ("threads", 0),
])
def test_config_validation_errors(field, value):
    cfg = SearchConfig(**{field: value})
    with pytest.raises(ValueError):
        cfg.validate()


# ----- selection --------------------------------------------------------------


def _reference_scores(node, cfg):
    total = sum(n + v for n, v in zip(node.en, node.evl))
    scale = cpuct(total, cfg.c_puct_base, cfg.c_puct_init) * math.sqrt(total)
    scores = []
    for j in range(len(node.actions)):
        q = node.q[j]
        if q == NEG_INF:
            scores.append(-INF)
            continue
        m = node.en[j] + node.evl[j]
        if node.evl[j]:
            q = (node.en[j] * q - node.evl[j] * cfg.virtual_loss) / m
        scores.append(q + scale * node.p[j] / (1.0 + m))
    return scores


def test_selection_matches_an_independent_puct_evaluation(ttt):
    import random

    engine = _engine(ttt, terminal_solver=False)
    rng = random.Random(23)
    for _ in range(500):
        k = rng.randrange(2, 7)
        node = expanded_node(engine.store, actions=list(range(k)))
        for j in range(k):
            node.p[j] = rng.random()
            node.q[j] = rng.uniform(-1, 1)
            node.en[j] = rng.randrange(0, 40)
            node.evl[j] = rng.randrange(0, 3)
        picked = engine._select_index(node)
        scores = _reference_scores(node, engine.config)
        assert scores[picked] == max(scores)


def test_selection_favors_the_unvisited_edge_at_low_totals(ttt):
    engine = _engine(ttt)
    node = expanded_node(engine.store, actions=[0, 1], priors=[0.5, 0.5])
    node.q[0] = 0.4
    node.en[0] = 10
    assert engine._select_index(node) == 1


def test_selection_breaks_exact_ties_toward_the_lower_action(ttt):
    engine = _engine(ttt)
    node = expanded_node(engine.store, actions=[7, 3], priors=[0.5, 0.5])
    assert node.actions[engine._select_index(node)] == 3


def test_fresh_node_ties_on_q_init_because_the_u_term_vanishes(ttt):
    # With zero total visits sqrt(N) kills the prior term, so the very first
    # pick falls through to the action-id tie-break.
    engine = _engine(ttt)
    node = expanded_node(engine.store, actions=[1, 2, 0], priors=[0.7, 0.2, 0.1])
    assert node.actions[engine._select_index(node)] == 0


def test_virtual_loss_diverts_parallel_simulations(ttt):
    engine = _engine(ttt)
    node = expanded_node(engine.store, actions=[0, 1], priors=[0.5, 0.5])
    node.q = [0.6, 0.6]
    node.en = [5, 5]
    assert node.actions[engine._select_index(node)] == 0  # tie -> lower action
    node.evl[0] = 3  # three simulations already in flight
    assert node.actions[engine._select_index(node)] == 1


# ----- expansion --------------------------------------------------------------


def test_expansion_orders_edges_by_descending_prior():
    env = make_env("nim:1,1,1")
    engine = _engine(env, node_tau=1.0)
    state = env.initial_state()
    engine.reset(state)
    root = engine._root
    engine._expand(root, state, Evaluation(0.25, [0.1, 0.7, 0.2]))
    assert root.actions == [1, 2, 0]
    assert root.p == [0.7, 0.2, 0.1]
    assert root.q == [-1.0] * 3
    assert (root.n, root.v) == (1, 0.25)
    assert root.expanded


def test_expansion_links_and_prunes_terminal_children(ttt):
    # X threatens 0-1-2: expanding this node immediately proves the win.
    engine = _engine(ttt)
    state = ttt.initial_state()
    for move in (0, 4, 1, 5):
        state = ttt.apply(state, move)
    engine.reset(state)
    root = engine._root
    engine._expand(root, state, UniformEvaluator(ttt).evaluate(state))
    idx = root.actions.index(2)
    assert root.child[idx] is not None
    assert root.child[idx].is_terminal
    assert root.status.name == "WIN"
    assert root.end_in_ply == 1
    assert root.q[idx] == NEG_INF  # the mating edge is a proven loss child


# ----- descent and early stops --------------------------------------------------


def _early_stop_probe(q_edge, edge_n, child_n, child_v, **overrides):
    env = make_env("leftright:8")
    engine = _engine(env, eps_greedy=False, check_enhance=False, **overrides)
    state = env.initial_state()
    engine.reset(state)
    root = engine._root
    engine._expand(root, state, Evaluation(0.0, [0.5, 0.5]))
    idx = root.actions.index(1)
    child = engine._resolve_child(root, idx, env.apply(state, 1))
    child.n = child_n
    child.v = child_v
    root.q[idx] = q_edge
    root.en[idx] = edge_n
    return engine._descend(root, state, [], forced_idx=idx)


def test_early_stop_fires_on_a_stale_edge():
    traj = _early_stop_probe(q_edge=0.2, edge_n=2, child_n=6, child_v=-0.5)
    assert traj.kind == "early_stop"
    # v* = 0.5 from the parent's perspective; 0.5 + 2 * 0.3 = 1.1 clips to 1
    assert traj.value == 1.0


def test_early_stop_clips_the_worked_example_to_minus_one():
    traj = _early_stop_probe(q_edge=0.8, edge_n=5, child_n=6, child_v=-0.2)
    assert traj.kind == "early_stop"
    assert traj.value == -1.0


def test_early_stop_value_inside_range_is_the_exact_landing_sample():
    traj = _early_stop_probe(q_edge=0.2, edge_n=1, child_n=6, child_v=-0.3)
    assert traj.kind == "early_stop"
    assert traj.value == pytest.approx(0.3 + 1 * (0.3 - 0.2))


def test_no_early_stop_inside_the_agreement_band():
    traj = _early_stop_probe(q_edge=0.495, edge_n=2, child_n=6, child_v=-0.5)
    assert traj.kind == "eval"  # |v* - q| <= q_epsilon: keep walking


def test_no_early_stop_without_extra_child_visits():
    traj = _early_stop_probe(q_edge=0.2, edge_n=6, child_n=6, child_v=-0.5)
    assert traj.kind == "eval"


def test_no_early_stop_with_transpositions_off():
    traj = _early_stop_probe(q_edge=0.2, edge_n=2, child_n=6, child_v=-0.5,
                             transpositions=False)
    assert traj.kind == "eval"


# ----- backpropagation ----------------------------------------------------------


def test_backprop_flips_the_leaf_value_once(ttt):
    engine = _engine(ttt)
    store = GraphStore()
    root = expanded_node(store, actions=[0])
    root.evl[0] = 1
    engine._backpropagate([(root, 0)], 0.6, early_stop=False)
    assert root.en[0] == 1
    assert root.q[0] == pytest.approx(-0.6)
    assert root.evl[0] == 0
    assert (root.n, root.v) == (1, pytest.approx(-0.6))


def test_backprop_takes_early_stop_values_unflipped(ttt):
    engine = _engine(ttt)
    store = GraphStore()
    root = expanded_node(store, actions=[0])
    root.evl[0] = 1
    engine._backpropagate([(root, 0)], 1.0, early_stop=True)
    assert root.q[0] == 1.0


def test_backprop_reanchors_above_a_join(ttt):
    engine = _engine(ttt)
    store = GraphStore()
    root = expanded_node(store, actions=[0])
    mid = expanded_node(store, actions=[0], ply=1)
    other = expanded_node(store, actions=[0])
    store.link(root, 0, mid, was_existing=False)
    store.link(other, 0, mid, was_existing=True)
    assert mid.in_degree == 2

    mid.n, mid.v = 3, -0.1
    root.q[0], root.en[0] = 0.3, 4
    root.evl[0] = mid.evl[0] = 1

    engine._backpropagate([(root, 0), (mid, 0)], 0.5, early_stop=False)
    # mid's value moved to -0.2, so the edge above re-anchors on +0.2 and the
    # correction sample lands root's average exactly there.
    assert mid.v == pytest.approx(-0.2)
    assert root.q[0] == pytest.approx(0.2)
    assert root.en[0] == 5


def test_backprop_correction_saturates_at_the_value_floor(ttt):
    engine = _engine(ttt)
    store = GraphStore()
    root = expanded_node(store, actions=[0])
    mid = expanded_node(store, actions=[0], ply=1)
    other = expanded_node(store, actions=[0])
    store.link(root, 0, mid, was_existing=False)
    store.link(other, 0, mid, was_existing=True)

    mid.n, mid.v = 0, 0.0
    root.q[0], root.en[0] = 0.9, 5
    root.evl[0] = mid.evl[0] = 1

    engine._backpropagate([(root, 0), (mid, 0)], -0.5, early_stop=False)
    assert mid.v == pytest.approx(0.5)
    # raw landing sample is -7.5; the clipped -1 moves Q as far as it can
    assert root.q[0] == pytest.approx(0.9 + (-1.0 - 0.9) / 6)


def test_backprop_counts_visits_on_pruned_edges_without_unpruning(ttt):
    engine = _engine(ttt)
    store = GraphStore()
    root = expanded_node(store, actions=[0])
    root.q[0] = NEG_INF
    root.evl[0] = 1
    engine._backpropagate([(root, 0)], 0.4, early_stop=False)
    assert root.en[0] == 1
    assert root.q[0] == NEG_INF


# ----- end-to-end searches ------------------------------------------------------


def test_search_at_a_terminal_root_returns_immediately(ttt):
    state = ttt.initial_state()
    for move in (4, 0, 1, 7, 6, 2, 3, 5, 8):
        state = ttt.apply(state, move)
    assert ttt.terminal_value(state) is not None
    engine = _engine(ttt)
    engine.reset(state)
    result = engine.search()
    assert result.stop_reason == "terminal_root"
    assert result.selected_action is None
    assert result.policy == [] and result.pv == []
    assert result.simulations == 0 and result.evaluations == 0
    assert result.root_status == "DRAW"


def test_single_simulation_budget_expands_only_the_root(ttt):
    result = run_search(ttt, UniformEvaluator(ttt), ttt.initial_state(),
                        SearchConfig(budget_amount=1))
    assert result.stop_reason == "budget"
    assert result.simulations == 1
    assert result.evaluations == 1
    assert result.selected_action in range(9)
    assert len(result.actions) == 9


def test_simulation_budget_is_exact_without_the_solver(ttt):
    result = run_search(ttt, UniformEvaluator(ttt), ttt.initial_state(),
                        SearchConfig(budget_amount=200, terminal_solver=False))
    assert result.simulations == 200
    assert result.stop_reason == "budget"


def test_evaluation_budget_is_exact(ttt):
    config = SearchConfig(budget="evaluations", budget_amount=150,
                          terminal_solver=False)
    result = run_search(ttt, UniformEvaluator(ttt), ttt.initial_state(), config)
    assert result.evaluations == 150
    assert result.stop_reason == "budget"
    assert result.simulations >= result.evaluations


def test_millisecond_budget_stops_on_the_clock(ttt):
    config = SearchConfig(budget="milliseconds", budget_amount=50)
    result = run_search(ttt, UniformEvaluator(ttt), ttt.initial_state(), config)
    assert result.stop_reason == "budget"
    assert result.wall_ms >= 40.0


def test_solver_stops_the_search_on_a_mate_in_one(ttt):
    state = ttt.initial_state()
    for move in (0, 4, 1, 5):
        state = ttt.apply(state, move)
    result = run_search(ttt, UniformEvaluator(ttt), state,
                        SearchConfig(budget_amount=10_000))
    assert result.stop_reason == "solved"
    assert result.root_status == "WIN"
    assert result.root_end_in_ply == 1
    assert result.selected_action == 2
    assert result.pv[0] == 2
    assert result.simulations < 10_000
    # the mating edge leads to a proven-loss child: pruned, policy overridden
    entry = next(a for a in result.actions if a["action"] == 2)
    assert entry["pruned"] is True
    assert entry["q"] is None
    assert entry["policy"] == 1.0


def test_stop_when_solved_off_spends_the_full_budget(ttt):
    state = ttt.initial_state()
    for move in (0, 4, 1, 5):
        state = ttt.apply(state, move)
    result = run_search(ttt, UniformEvaluator(ttt), state,
                        SearchConfig(budget_amount=300, stop_when_solved=False))
    assert result.stop_reason == "budget"
    assert result.simulations == 300
    assert result.root_status == "WIN"
    assert result.selected_action == 2


def test_chain_game_walks_right():
    env = make_env("leftright:16")
    config = SearchConfig(budget="evaluations", budget_amount=512)
    result = run_search(env, UniformEvaluator(env), env.initial_state(), config)
    assert result.selected_action == 1
    assert result.stop_reason == "solved"
    assert result.root_status == "WIN"


def test_search_is_deterministic_for_a_fixed_seed(ttt):
    config = SearchConfig(budget_amount=300, tau=0.7, seed=42)
    a = run_search(ttt, UniformEvaluator(ttt), ttt.initial_state(), config)
    b = run_search(ttt, UniformEvaluator(ttt), ttt.initial_state(), config)
    da, db = a.to_dict(), b.to_dict()
    da.pop("wall_ms"), db.pop("wall_ms")
    assert da == db


def test_advance_reuses_the_subtree(ttt):
    engine = _engine(ttt, budget_amount=400)
    engine.reset(ttt.initial_state())
    first = engine.search()
    root = engine._root
    idx = root.actions.index(first.selected_action)
    child = root.child[idx]
    assert child is not None and child.n > 0
    carried = child.n
    nodes_before = len(engine.store)

    engine.advance(first.selected_action)
    assert engine._root is child
    assert engine._root.n == carried
    assert len(engine.store) == nodes_before  # nothing was rebuilt

    second = engine.search()
    assert second.ply == 1
    assert second.simulations > 0


def test_advance_through_a_mate_reaches_a_terminal_root(ttt):
    state = ttt.initial_state()
    for move in (0, 4, 1, 5):
        state = ttt.apply(state, move)
    engine = _engine(ttt, budget_amount=10_000)
    engine.reset(state)
    result = engine.search()
    assert result.root_status == "WIN"
    engine.advance(result.selected_action)
    final = engine.search()
    assert final.stop_reason == "terminal_root"
    assert final.root_status == "LOSS"  # the side to move has been mated
    assert final.value == -1.0


def test_advance_keeps_solved_statuses_and_pruning(ttt):
    state = ttt.initial_state()
    for move in (0, 4):
        state = ttt.apply(state, move)
    engine = _engine(ttt, budget_amount=2000, stop_when_solved=False)
    engine.reset(state)
    engine.search()
    root = engine._root
    pruned_before = [(root.actions[j], root.q[j] == NEG_INF)
                     for j in range(len(root.actions))]
    engine.advance(root.actions[0])
    engine.advance(engine._root.actions[0] if engine._root.expanded else 5)
    # walking back to the same store must not resurrect pruned edges
    for action, was_pruned in pruned_before:
        j = root.actions.index(action)
        assert (root.q[j] == NEG_INF) == was_pruned


def test_store_full_stops_gracefully(ttt):
    config = SearchConfig(budget_amount=500, capacity=5)
    result = run_search(ttt, UniformEvaluator(ttt), ttt.initial_state(), config)
    assert result.stop_reason == "store_full"
    assert result.memory["node_count"] <= 5
    assert result.selected_action is not None  # best-so-far still reported


def test_search_stalls_when_the_game_is_exhausted():
    env = make_env("leftright:4")
    # batch size 1 so duplicate leaves never share a collection round
    config = SearchConfig(budget="evaluations", budget_amount=100,
                          terminal_solver=False, mini_batch_size=1)
    result = run_search(env, UniformEvaluator(env), env.initial_state(), config)
    assert result.stop_reason == "stalled"
    # exactly one evaluation per non-terminal position in the chain
    assert result.evaluations == 3


def test_dirichlet_noise_remixes_root_priors(ttt):
    engine = _engine(ttt, budget_amount=50, dirichlet_epsilon=0.25, seed=3)
    engine.reset(ttt.initial_state())
    engine.search()
    first = list(engine._root.p)
    engine.search()
    second = list(engine._root.p)
    assert first != second
    assert sum(second) == pytest.approx(1.0)
    assert all(p > 0 for p in second)


def test_search_before_reset_raises(ttt):
    engine = _engine(ttt)
    with pytest.raises(RuntimeError):
        engine.search()
    with pytest.raises(RuntimeError):
        engine.advance(0)


def test_result_serializes_to_plain_types(ttt):
    import json

    result = run_search(ttt, UniformEvaluator(ttt), ttt.initial_state(),
                        SearchConfig(budget_amount=100))
    text = json.dumps(result.to_dict())
    assert '"selected_action"' in text
    assert '"memory"' in text

import itertools
import math
import random

import pytest

from drivearb.arbitration import (
    Arbitrator,
    ArbitrationGraph,
    Behavior,
    NoApplicableBehavior,
)


class Stub(Behavior):
    """Scriptable block: signals and cost can be set per tick."""

    def __init__(self, name, invocation=True, commitment=False, cost=math.nan):
        super().__init__(name)
        self.inv = invocation
        self.com = commitment
        self.cost = cost
        self.commands = 0
        self.gains = 0
        self.losses = 0

    def invocation_condition(self, env):
        return self.inv

    def commitment_condition(self, env):
        return self.com

    def cost_estimate(self, env):
        return self.cost

    def command(self, env):
        self.commands += 1
        return f"cmd:{self.name}"

    def gain_control(self, env):
        self.gains += 1

    def lose_control(self, env):
        self.losses += 1


class Faulty(Stub):
    def invocation_condition(self, env):
        raise RuntimeError("sensor dropout")


class FaultyCost(Stub):
    def cost_estimate(self, env):
        raise RuntimeError("estimator crash")


class Env:
    def __init__(self, time=0.0):
        self.time = time


def first_applicable(invocations):
    for i, inv in enumerate(invocations):
        if inv:
            return i
    return None


# ---------------------------------------------------------------- priority


def test_priority_matches_first_applicable_oracle_for_all_patterns():
    for n in range(1, 7):
        for pattern in itertools.product([False, True], repeat=n):
            options = [Stub(f"b{i}", invocation=v) for i, v in enumerate(pattern)]
            arb = Arbitrator.priority("root", options)
            assert arb.select_option(Env()) == first_applicable(pattern)


def test_priority_keeps_committed_option_when_not_interruptible():
    a = Stub("a", invocation=False)
    b = Stub("b", invocation=True, commitment=True)
    arb = Arbitrator.priority("root", [a, b], interruptible=False)
    assert arb.select_option(Env()) == 1
    b.active = True
    a.inv = True
    assert arb.select_option(Env()) == 1
    # interruptible arbitrator hands control to the better option instead
    arb2 = Arbitrator.priority("root2", [Stub("a2", invocation=True), b])
    arb2._active_index = 1
    assert arb2.select_option(Env()) == 0


def test_priority_falls_back_to_committed_option_without_invocations():
    a = Stub("a", invocation=False)
    b = Stub("b", invocation=False, commitment=True)
    b.active = True
    arb = Arbitrator.priority("root", [a, b])
    arb._active_index = 1
    assert arb.select_option(Env()) == 1
    b.com = False
    assert arb.select_option(Env()) is None


# ---------------------------------------------------------------- sequence


def test_sequence_advances_on_commitment_falling_edge():
    phases = [Stub(f"p{i}", invocation=True, commitment=True) for i in range(3)]
    arb = Arbitrator.sequence("seq", phases)
    env = Env()

    assert arb.select_option(env) == 0
    phases[0].active = True
    assert arb.select_option(env) == 0

    phases[0].com = False  # phase complete
    assert arb.select_option(env) == 1
    phases[0].active = False
    phases[1].active = True

    phases[1].com = False
    assert arb.select_option(env) == 2
    phases[1].active = False
    phases[2].active = True

    phases[2].com = False  # last phase complete: exhausted, cursor resets
    assert arb.select_option(env) is None
    assert arb._cursor == 0


def test_sequence_reports_none_when_cursor_option_inapplicable():
    phases = [Stub("p0", invocation=False), Stub("p1", invocation=True)]
    arb = Arbitrator.sequence("seq", phases)
    assert arb.select_option(Env()) is None
    assert arb._cursor == 0


# ---------------------------------------------------------------- random


def test_random_frequencies_follow_weights():
    weights = [0.5, 0.3, 0.2]
    options = [Stub(f"r{i}") for i in range(3)]
    arb = Arbitrator.random_choice("rand", options, weights=weights, rng_seed=7)
    counts = [0, 0, 0]
    draws = 10000
    for _ in range(draws):
        idx = arb.select_option(Env())
        counts[idx] += 1
        arb.note_selected(None)
        arb._active_index = None
    for i, w in enumerate(weights):
        assert abs(counts[i] / draws - w) < 0.02


def test_random_renormalizes_over_applicable_subset():
    options = [Stub("r0", invocation=False), Stub("r1"), Stub("r2")]
    arb = Arbitrator.random_choice("rand", options, weights=[0.8, 0.1, 0.1], rng_seed=3)
    picks = {arb.select_option(Env()) for _ in range(200)}
    assert picks == {1, 2}


def test_random_is_deterministic_for_fixed_seed():
    def run(seed):
        options = [Stub(f"r{i}") for i in range(4)]
        arb = Arbitrator.random_choice("rand", options, rng_seed=seed)
        out = []
        for _ in range(50):
            out.append(arb.select_option(Env()))
            arb._active_index = None
        return out

    assert run(42) == run(42)
    assert run(42) != run(43)


def test_random_keeps_active_option_while_committed():
    options = [Stub("r0"), Stub("r1", commitment=True)]
    arb = Arbitrator.random_choice("rand", options, rng_seed=1)
    options[1].active = True
    arb._active_index = 1
    for _ in range(20):
        assert arb.select_option(Env()) == 1


# ---------------------------------------------------------------- cost


def test_cost_matches_argmin_oracle_with_zero_margin():
    rng = random.Random(99)
    for _ in range(1000):
        n = rng.randint(1, 6)
        costs = [rng.uniform(-50.0, 50.0) for _ in range(n)]
        options = [Stub(f"c{i}", cost=costs[i]) for i in range(n)]
        arb = Arbitrator.cost_based("cost", options)
        assert arb.select_option(Env()) == costs.index(min(costs))


def test_cost_ties_break_toward_lower_index():
    options = [Stub("c0", cost=5.0), Stub("c1", cost=5.0)]
    arb = Arbitrator.cost_based("cost", options)
    assert arb.select_option(Env()) == 0


def test_cost_hysteresis_blocks_small_improvements():
    a = Stub("a", cost=10.0)
    b = Stub("b", cost=20.0)
    arb = Arbitrator.cost_based("cost", [a, b], hysteresis_margin=1.0)
    assert arb.select_option(Env()) == 0
    a.active = True
    b.cost = 9.5  # better, but not by more than the margin
    assert arb.select_option(Env()) == 0
    b.cost = 8.9
    assert arb.select_option(Env()) == 1


def test_cost_alternating_costs_do_not_oscillate_with_margin():
    a = Stub("a", cost=0.0)
    b = Stub("b", cost=0.0)
    arb = Arbitrator.cost_based("cost", [a, b], hysteresis_margin=1.0)
    env = Env()
    idx = arb.select_option(env)
    a.active = idx == 0
    b.active = idx == 1
    for k in range(1000):
        sign = 1.0 if k % 2 == 0 else -1.0
        a.cost = 5.0 + 0.4 * sign
        b.cost = 5.0 - 0.4 * sign
        assert arb.select_option(env) == idx


def test_cost_alternating_costs_switch_every_tick_without_margin():
    a = Stub("a", cost=4.0)
    b = Stub("b", cost=6.0)
    arb = Arbitrator.cost_based("cost", [a, b], hysteresis_margin=0.0)
    env = Env()
    prev = arb.select_option(env)
    assert prev == 0
    a.active = True
    for k in range(100):
        sign = 1.0 if k % 2 == 0 else -1.0
        a.cost = 5.0 + 0.4 * sign
        b.cost = 5.0 - 0.4 * sign
        idx = arb.select_option(env)
        assert idx != prev
        a.active = idx == 0
        b.active = idx == 1
        prev = idx


def test_cost_nonfinite_option_treated_inapplicable_with_fault():
    a = Stub("a", cost=math.inf)
    b = Stub("b", cost=3.0)
    root = Arbitrator.cost_based("cost", [a, b])
    graph = ArbitrationGraph(root)
    cmd, trace = graph.step(Env())
    assert cmd == "cmd:b"
    assert trace.per_node["a"].fault
    assert trace.per_node["a"].cost is None


def test_cost_estimator_crash_is_contained():
    a = FaultyCost("a", cost=0.0)
    b = Stub("b", cost=3.0)
    graph = ArbitrationGraph(Arbitrator.cost_based("cost", [a, b]))
    cmd, trace = graph.step(Env())
    assert cmd == "cmd:b"
    assert trace.per_node["a"].fault


# ---------------------------------------------------------------- graph


def build_nested_graph():
    follow = Stub("follow", cost=-10.0)
    change = Stub("change", invocation=False, cost=-20.0)
    urban = Arbitrator.cost_based("urban", [follow, change], hysteresis_margin=0.5)
    stop = Stub("stop")
    root = Arbitrator.priority("root", [urban, stop])
    return ArbitrationGraph(root), follow, change, stop


def test_graph_step_selects_leaf_and_reports_path():
    graph, follow, change, stop = build_nested_graph()
    cmd, trace = graph.step(Env(time=1.5))
    assert cmd == "cmd:follow"
    assert trace.active_path == ["root", "urban", "follow"]
    assert trace.time == 1.5
    assert follow.commands == 1
    assert follow.gains == 1


def test_graph_arbitrator_signals_lift_from_children():
    graph, follow, change, stop = build_nested_graph()
    _, trace = graph.step(Env())
    assert trace.per_node["urban"].invocation
    # second tick: the active child commits, the arbitrator mirrors it
    follow.com = True
    _, trace = graph.step(Env())
    assert trace.per_node["urban"].commitment
    assert trace.per_node["urban"].activation == "committed"


def test_graph_hand_over_hooks_fire_on_path_change():
    graph, follow, change, stop = build_nested_graph()
    graph.step(Env())
    follow.inv = False
    change.inv = True
    cmd, trace = graph.step(Env())
    assert cmd == "cmd:change"
    assert follow.losses == 1
    assert change.gains == 1
    assert trace.per_node["follow"].activation == "inactive"
    assert trace.per_node["change"].activation == "active"


def test_graph_no_applicable_behavior_raises():
    graph, follow, change, stop = build_nested_graph()
    follow.inv = False
    stop.inv = False
    with pytest.raises(NoApplicableBehavior):
        graph.step(Env())


def test_graph_inactive_blocks_report_commitment_false():
    follow = Stub("follow", invocation=True, commitment=True)
    other = Stub("other", invocation=True, commitment=True)
    graph = ArbitrationGraph(Arbitrator.priority("root", [follow, other]))
    graph.step(Env())
    _, trace = graph.step(Env())
    assert trace.per_node["follow"].commitment  # active, may commit
    assert not trace.per_node["other"].commitment  # inactive, forced false


def test_graph_commitment_never_appears_from_cold_start():
    block = Stub("b", invocation=True, commitment=True)
    graph = ArbitrationGraph(Arbitrator.priority("root", [block]))
    _, trace = graph.step(Env())
    # first tick: activation happened this tick, commitment polled before
    assert trace.per_node["b"].activation == "active"
    _, trace = graph.step(Env())
    assert trace.per_node["b"].activation == "committed"


def test_graph_duplicate_names_rejected():
    with pytest.raises(ValueError):
        ArbitrationGraph(Arbitrator.priority("root", [Stub("x"), Stub("x")]))


def test_graph_single_leaf_active_per_tick():
    graph, follow, change, stop = build_nested_graph()
    change.inv = True
    for _ in range(5):
        graph.step(Env())
        active = [n for n, node in graph.nodes.items() if node.active and node.kind == "block"]
        assert len(active) == 1


def test_graph_command_fault_falls_through_to_next_option():
    class Exploding(Stub):
        def command(self, env):
            raise RuntimeError("planner died")

    bad = Exploding("bad", cost=-100.0)
    good = Stub("good", cost=0.0)
    graph = ArbitrationGraph(Arbitrator.cost_based("root", [bad, good]))
    cmd, trace = graph.step(Env())
    assert cmd == "cmd:good"
    assert trace.per_node["bad"].fault
    assert trace.active_path[-1] == "good"


def test_fault_containment_differential_traces_match():
    def build(with_faulty):
        follow = Stub("follow", cost=-10.0)
        change = Stub("change", invocation=True, cost=-5.0)
        options = [follow, change]
        if with_faulty:
            options.append(Faulty("broken", cost=-99.0))
        urban = Arbitrator.cost_based("urban", options)
        stop = Stub("stop")
        return ArbitrationGraph(Arbitrator.priority("root", [urban, stop]))

    g_ref = build(False)
    g_fault = build(True)
    for k in range(20):
        env = Env(time=k * 0.1)
        cmd_ref, tr_ref = g_ref.step(env)
        cmd_fault, tr_fault = g_fault.step(env)
        assert cmd_ref == cmd_fault
        assert tr_ref.active_path == tr_fault.active_path
        for name, entry in tr_ref.per_node.items():
            other = tr_fault.per_node[name]
            assert (entry.invocation, entry.commitment, entry.activation) == (
                other.invocation,
                other.commitment,
                other.activation,
            )
        assert tr_fault.per_node["broken"].fault
        assert tr_fault.per_node["broken"].activation == "inactive"


def test_render_tree_shows_schemes_and_activation():
    graph, follow, change, stop = build_nested_graph()
    _, trace = graph.step(Env())
    text = graph.render_tree(trace)
    assert "root [priority]" in text
    assert "urban [cost, margin=0.500]" in text
    assert "follow active" in text or "follow committed" in text

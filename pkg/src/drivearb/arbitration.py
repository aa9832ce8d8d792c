"""Hierarchical behavior arbitration.

A behavior block answers three questions each tick: does it want to run
(invocation condition), should it keep running once active (commitment
condition), and what should the vehicle do (command). Arbitrators pick
among options, which can be blocks or nested arbitrators, and are
themselves usable as options, so graphs of arbitrary depth compose from
the same small contract.

An option is selectable when its invocation condition holds, or when it
is the currently active option and its commitment condition holds.
Inactive options always report commitment false; the engine enforces
that, so blocks do not need to guard their own latch state.

Faults are contained at the evaluation boundary: an option whose
condition or cost computation raises is treated as not applicable this
tick and flagged in the trace, and the rest of the graph proceeds as if
the option were absent.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

PRIORITY = "priority"
SEQUENCE = "sequence"
RANDOM = "random"
COST = "cost"

INACTIVE = "inactive"
ACTIVE = "active"
COMMITTED = "committed"


class NoApplicableBehavior(RuntimeError):
    """Raised when not a single leaf in the graph is selectable."""


@dataclass(frozen=True)
class BehaviorSignals:
    invocation: bool
    commitment: bool


@dataclass
class NodeTrace:
    invocation: bool
    commitment: bool
    activation: str
    cost: float | None = None
    fault: bool = False


@dataclass
class SelectionTrace:
    time: float
    per_node: dict[str, NodeTrace]
    active_path: list[str]

    @property
    def active_leaf(self) -> str:
        return self.active_path[-1]


class BehaviorNode:
    kind = "block"

    def __init__(self, name: str):
        self.name = name
        self.active = False

    def gain_control(self, env) -> None:
        pass

    def lose_control(self, env) -> None:
        pass


class Behavior(BehaviorNode):
    """Base class for leaf behavior blocks."""

    def invocation_condition(self, env) -> bool:
        raise NotImplementedError

    def commitment_condition(self, env) -> bool:
        return False

    def command(self, env):
        raise NotImplementedError

    def cost_estimate(self, env) -> float:
        """Expected cost of running this option; lower is better.

        Only consulted under a cost arbitrator. The default makes the
        option unusable there, which is what you want for blocks that
        never sit under one.
        """
        return math.nan


class Arbitrator(BehaviorNode):
    """Selects one of its options each tick.

    Schemes:
      priority  lowest selectable index wins
      sequence  options run once, in order, advancing on completion
      random    weighted draw among invocable options
      cost      lowest cost estimate wins, with switching hysteresis

    ``interruptible`` controls whether a committed active option may be
    dropped in favor of a better one. With ``interruptible=False`` the
    active option keeps control for as long as its commitment holds.
    """

    kind = "arbitrator"

    def __init__(
        self,
        name: str,
        options: list[BehaviorNode],
        scheme: str,
        interruptible: bool = True,
        hysteresis_margin: float = 0.0,
        weights: list[float] | None = None,
        rng_seed: int = 0,
    ):
        super().__init__(name)
        if not options:
            raise ValueError(f"arbitrator {name!r} needs at least one option")
        if scheme not in (PRIORITY, SEQUENCE, RANDOM, COST):
            raise ValueError(f"unknown arbitration scheme {scheme!r}")
        if hysteresis_margin < 0.0:
            raise ValueError("hysteresis margin must be non-negative")
        if scheme == RANDOM:
            if weights is None:
                weights = [1.0 / len(options)] * len(options)
            if len(weights) != len(options):
                raise ValueError("need one weight per option")
            if any(w < 0.0 for w in weights):
                raise ValueError("weights must be non-negative")
            total = sum(weights)
            if abs(total - 1.0) > 1e-9:
                raise ValueError("weights must sum to one")
        self.options = list(options)
        self.scheme = scheme
        self.interruptible = interruptible
        self.hysteresis_margin = hysteresis_margin
        self.weights = weights
        self._rng = random.Random(rng_seed)
        self._active_index: int | None = None
        self._cursor = 0
        self._cursor_entered = False

    # -- convenience constructors ------------------------------------

    @classmethod
    def priority(cls, name, options, interruptible=True):
        return cls(name, options, PRIORITY, interruptible=interruptible)

    @classmethod
    def sequence(cls, name, options):
        return cls(name, options, SEQUENCE)

    @classmethod
    def random_choice(cls, name, options, weights=None, rng_seed=0):
        return cls(name, options, RANDOM, weights=weights, rng_seed=rng_seed)

    @classmethod
    def cost_based(cls, name, options, hysteresis_margin=0.0, interruptible=True):
        return cls(
            name, options, COST, interruptible=interruptible, hysteresis_margin=hysteresis_margin
        )

    # -- lifecycle ----------------------------------------------------

    @property
    def active_index(self) -> int | None:
        return self._active_index

    def lose_control(self, env) -> None:
        self._cursor = 0
        self._cursor_entered = False

    def note_selected(self, index: int | None) -> None:
        """Record the option the engine settled on this tick."""
        if index is None:
            self._active_index = None
            if self.scheme == SEQUENCE:
                self._cursor = 0
                self._cursor_entered = False
            return
        self._active_index = index
        if self.scheme == SEQUENCE:
            self._cursor = index
            self._cursor_entered = True

    # -- selection ----------------------------------------------------

    def select_option(self, env, ctx: "_TickContext | None" = None) -> int | None:
        """Pick an option index for this tick, or None.

        Standalone use (mostly tests) polls the options on the fly; inside
        a graph the engine provides the shared tick context.
        """
        if ctx is None:
            ctx = _TickContext(env)
            ctx.poll(self)
        idx = self._choose(env, ctx)
        self.note_selected(idx)
        return idx

    def _selectable(self, i: int, ctx) -> bool:
        sig = ctx.signals[self.options[i].name]
        return sig.invocation or (self.options[i].active and sig.commitment)

    def _committed(self, i: int, ctx) -> bool:
        return self.options[i].active and ctx.signals[self.options[i].name].commitment

    def _choose(self, env, ctx) -> int | None:
        if self.scheme == PRIORITY:
            return self._choose_priority(ctx)
        if self.scheme == SEQUENCE:
            return self._choose_sequence(ctx)
        if self.scheme == RANDOM:
            return self._choose_random(ctx)
        return self._choose_cost(env, ctx)

    def _choose_priority(self, ctx) -> int | None:
        act = self._active_index
        if act is not None and not self.interruptible and self._committed(act, ctx):
            return act
        selectable = [i for i in range(len(self.options)) if self._selectable(i, ctx)]
        return min(selectable) if selectable else None

    def _peek_sequence(self, ctx) -> int | None:
        idx = self._cursor
        if self._cursor_entered and not ctx.signals[self.options[idx].name].commitment:
            idx += 1
        if idx >= len(self.options):
            return None
        sig = ctx.signals[self.options[idx].name]
        opt = self.options[idx]
        if sig.invocation or (opt.active and sig.commitment):
            return idx
        return None

    def _choose_sequence(self, ctx) -> int | None:
        return self._peek_sequence(ctx)

    def _choose_random(self, ctx) -> int | None:
        act = self._active_index
        if act is not None and self._committed(act, ctx):
            return act
        invocable = [
            i for i in range(len(self.options)) if ctx.signals[self.options[i].name].invocation
        ]
        if not invocable:
            return None
        if len(invocable) == 1:
            return invocable[0]
        weights = [self.weights[i] for i in invocable]
        total = sum(weights)
        if total <= 0.0:
            return None
        draw = self._rng.random() * total
        acc = 0.0
        for i, w in zip(invocable, weights):
            acc += w
            if draw < acc:
                return i
        return invocable[-1]

    def _choose_cost(self, env, ctx) -> int | None:
        act = self._active_index
        if act is not None and not self.interruptible and self._committed(act, ctx):
            return act
        candidates: list[tuple[int, float]] = []
        for i in range(len(self.options)):
            if not self._selectable(i, ctx):
                continue
            cost = ctx.cost_of(self.options[i], env)
            if cost is None or not math.isfinite(cost):
                ctx.mark_fault(self.options[i].name)
                continue
            candidates.append((i, cost))
        if not candidates:
            return None
        best_i, best_cost = min(candidates, key=lambda ic: (ic[1], ic[0]))
        if act is not None:
            incumbent = next((c for i, c in candidates if i == act), None)
            if incumbent is not None and best_i != act:
                if best_cost < incumbent - self.hysteresis_margin:
                    return best_i
                return act
        return best_i

    # -- lifted signals and costs --------------------------------------

    def lifted_signals(self, ctx) -> BehaviorSignals:
        if self.scheme == SEQUENCE:
            idx = self._peek_sequence(ctx)
            if idx is None:
                return BehaviorSignals(False, False)
            sig = ctx.signals[self.options[idx].name]
            committed = self.options[idx].active and sig.commitment
            return BehaviorSignals(sig.invocation, committed)
        invocation = any(
            ctx.signals[opt.name].invocation for opt in self.options
        )
        commitment = (
            self._active_index is not None and self._committed(self._active_index, ctx)
        )
        return BehaviorSignals(invocation, commitment)

    def peek_cost(self, env, ctx) -> float:
        """Cost estimate of this arbitrator as seen by a cost arbitrator above."""
        if self.scheme == SEQUENCE:
            idx = self._peek_sequence(ctx)
            if idx is None:
                return math.nan
            cost = ctx.cost_of(self.options[idx], env)
            return math.nan if cost is None else cost
        if self.scheme == RANDOM:
            invocable = [
                i for i in range(len(self.options)) if ctx.signals[self.options[i].name].invocation
            ]
            if not invocable:
                return math.nan
            weights = [self.weights[i] for i in invocable]
            total = sum(weights)
            if total <= 0.0:
                return math.nan
            acc = 0.0
            for i, w in zip(invocable, weights):
                cost = ctx.cost_of(self.options[i], env)
                if cost is None or not math.isfinite(cost):
                    return math.nan
                acc += w / total * cost
            return acc
        # priority and cost schemes: cost of the option they would pick
        idx = self._choose(env, ctx)
        if idx is None:
            return math.nan
        cost = ctx.cost_of(self.options[idx], env)
        return math.nan if cost is None else cost


class _TickContext:
    """Per-tick evaluation cache shared across the graph."""

    def __init__(self, env):
        self.env = env
        self.signals: dict[str, BehaviorSignals] = {}
        self.costs: dict[str, float | None] = {}
        self.faults: set[str] = set()
        self.excluded: set[str] = set()

    def mark_fault(self, name: str) -> None:
        self.faults.add(name)

    def poll(self, node: BehaviorNode) -> BehaviorSignals:
        if node.name in self.signals:
            return self.signals[node.name]
        if node.name in self.excluded:
            sig = BehaviorSignals(False, False)
        elif isinstance(node, Arbitrator):
            for opt in node.options:
                self.poll(opt)
            sig = node.lifted_signals(self)
        else:
            try:
                invocation = bool(node.invocation_condition(self.env))
                commitment = bool(node.active and node.commitment_condition(self.env))
                sig = BehaviorSignals(invocation, commitment)
            except Exception:
                sig = BehaviorSignals(False, False)
                self.faults.add(node.name)
        self.signals[node.name] = sig
        return sig

    def cost_of(self, node: BehaviorNode, env) -> float | None:
        if node.name in self.costs:
            return self.costs[node.name]
        if node.name in self.excluded:
            cost = None
        elif isinstance(node, Arbitrator):
            cost = node.peek_cost(env, self)
        else:
            try:
                cost = float(node.cost_estimate(env))
            except Exception:
                cost = None
                self.faults.add(node.name)
        self.costs[node.name] = cost
        return cost


class ArbitrationGraph:
    """A rooted graph of arbitrators and behavior blocks.

    ``step`` runs one tick: evaluate signals over the whole graph, select
    a root-to-leaf path, fire the control hand-over hooks along the way,
    ask the selected leaf for its command, and return the command with a
    full selection trace.
    """

    def __init__(self, root: Arbitrator):
        self.root = root
        self.nodes: dict[str, BehaviorNode] = {}
        self._index(root)
        self._active_path: list[BehaviorNode] = []

    def _index(self, node: BehaviorNode) -> None:
        if node.name in self.nodes:
            raise ValueError(f"duplicate node name {node.name!r}")
        self.nodes[node.name] = node
        if isinstance(node, Arbitrator):
            for opt in node.options:
                self._index(opt)

    @property
    def active_path(self) -> list[str]:
        return [n.name for n in self._active_path]

    def leaves(self) -> list[str]:
        out = []

        def walk(node):
            if isinstance(node, Arbitrator):
                for opt in node.options:
                    walk(opt)
            else:
                out.append(node.name)

        walk(self.root)
        return out

    def step(self, env) -> tuple[object, SelectionTrace]:
        ctx = _TickContext(env)
        for _ in range(len(self.nodes) + 1):
            ctx.signals.clear()
            ctx.costs.clear()
            ctx.poll(self.root)
            path = self._descend(env, ctx)
            if path is None:
                raise NoApplicableBehavior(
                    "no selectable behavior option anywhere in the graph"
                )
            self._hand_over(path, env)
            leaf = path[-1]
            try:
                command = leaf.command(env)
            except Exception:
                ctx.mark_fault(leaf.name)
                ctx.excluded.add(leaf.name)
                leaf.active = False
                leaf.lose_control(env)
                self._active_path = path[:-1]
                continue
            return command, self._build_trace(env, ctx)
        raise NoApplicableBehavior("every selectable option failed to produce a command")

    def _descend(self, env, ctx) -> list[BehaviorNode] | None:
        path: list[BehaviorNode] = [self.root]
        node: BehaviorNode = self.root
        while isinstance(node, Arbitrator):
            idx = node._choose(env, ctx)
            if idx is None:
                if node is self.root:
                    return None
                # a nested arbitrator that looked selectable but cannot
                # deliver; drop it for this tick and start over
                ctx.excluded.add(node.name)
                ctx.mark_fault(node.name)
                return self._restart(env, ctx)
            node = node.options[idx]
            path.append(node)
        return path

    def _restart(self, env, ctx) -> list[BehaviorNode] | None:
        ctx.signals.clear()
        ctx.costs.clear()
        ctx.poll(self.root)
        return self._descend(env, ctx)

    def _hand_over(self, path: list[BehaviorNode], env) -> None:
        old = self._active_path
        split = 0
        while split < len(old) and split < len(path) and old[split] is path[split]:
            split += 1
        for node in reversed(old[split:]):
            node.active = False
            node.lose_control(env)
            if isinstance(node, Arbitrator):
                node._active_index = None
        for node in path[split:]:
            node.active = True
            node.gain_control(env)
        for parent, child in zip(path, path[1:]):
            parent.note_selected(parent.options.index(child))
        self._active_path = path

    def _build_trace(self, env, ctx) -> SelectionTrace:
        per_node: dict[str, NodeTrace] = {}
        for name, node in self.nodes.items():
            sig = ctx.signals.get(name, BehaviorSignals(False, False))
            if not node.active:
                activation = INACTIVE
            elif sig.commitment:
                activation = COMMITTED
            else:
                activation = ACTIVE
            cost = ctx.costs.get(name)
            if cost is not None and not math.isfinite(cost):
                cost = None
            per_node[name] = NodeTrace(
                invocation=sig.invocation,
                commitment=sig.commitment,
                activation=activation,
                cost=cost,
                fault=name in ctx.faults,
            )
        return SelectionTrace(
            time=getattr(env, "time", 0.0),
            per_node=per_node,
            active_path=self.active_path,
        )

    def render_tree(self, trace: SelectionTrace | None = None) -> str:
        """Plain-text tree of the graph, optionally annotated from a trace."""
        lines: list[str] = []

        def describe(node: BehaviorNode) -> str:
            bits = []
            if isinstance(node, Arbitrator):
                tag = node.scheme
                if node.scheme == COST and node.hysteresis_margin > 0.0:
                    tag += f", margin={node.hysteresis_margin:.3f}"
                if not node.interruptible:
                    tag += ", non-interruptible"
                bits.append(f"[{tag}]")
            if trace is not None and node.name in trace.per_node:
                entry = trace.per_node[node.name]
                bits.append(entry.activation)
                if entry.cost is not None:
                    bits.append(f"cost={entry.cost:.3f}")
                if entry.fault:
                    bits.append("fault")
            return " ".join([node.name] + bits)

        def walk(node: BehaviorNode, prefix: str, tail: bool, top: bool) -> None:
            if top:
                lines.append(describe(node))
            else:
                lines.append(prefix + ("`- " if tail else "|- ") + describe(node))
            if isinstance(node, Arbitrator):
                child_prefix = "" if top else prefix + ("   " if tail else "|  ")
                for i, opt in enumerate(node.options):
                    walk(opt, child_prefix, i == len(node.options) - 1, False)

        walk(self.root, "", True, True)
        return "\n".join(lines)

"""Explicit-state CTLK checking over bundle systems.

A bundle system is a set of strategy components over one environment. Each
component is state-determined, so the runs through a point are exactly the
infinite paths from its state inside that component, and the usual CTL
fixpoint algorithms are exact for the bundle semantics. Knowledge compares
only observations, so K cuts across components.
"""

from collections import defaultdict, deque
from collections.abc import Mapping

from errors import UsageError
from logic import (
    AR,
    AU,
    AX,
    EU,
    ER,
    EX,
    FALSE,
    And,
    Atom,
    Const,
    Iff,
    Implies,
    K,
    Not,
    Or,
    TVar,
    agents_of,
    compile_boolean,
    template_vars,
    to_text,
)

VACUOUS = 'vacuous'


class StrategyComponent:
    """One strategy's transition graph: state -> nonempty successor tuple.

    The constructor trusts successor_fn to be serial on reachable states and
    to follow environment transitions; from_map checks both when given env.

    Args:
        cid: identifier used in reports
        initial: initial state ids
        successor_fn: fn(sid) -> iterable of sids, called once per state
    """

    def __init__(self, cid, initial, successor_fn, label=None):
        self.id = cid
        self.label = label if label is not None else str(cid)
        self.initial = tuple(initial)
        self._successor_fn = successor_fn
        self._successors = {}
        self._reachable = None

    @classmethod
    def from_map(cls, cid, initial, mapping, label=None, env=None):
        """Component from {sid: targets}; with env, every reachable state must
        have successors and each edge must be an environment transition."""
        table = {sid: tuple(sorted(targets)) for sid, targets in mapping.items()}
        component = cls(cid, initial, lambda sid: table.get(sid, ()), label=label)
        if env is not None:
            for sid in component.reachable():
                targets = component.successors(sid)
                if not targets:
                    raise UsageError(f"component {cid}: state {env.state_text(sid)} has no successor")
                stray = sorted(set(targets) - env.post(sid))
                if stray:
                    raise UsageError(
                        f"component {cid}: {env.state_text(sid)} -> {env.state_text(stray[0])} "
                        f"is not an environment transition")
        return component

    def successors(self, sid):
        result = self._successors.get(sid)
        if result is None:
            result = tuple(sorted(set(self._successor_fn(sid))))
            self._successors[sid] = result
        return result

    def reachable(self):
        if self._reachable is None:
            seen = set(self.initial)
            queue = deque(self.initial)
            while queue:
                sid = queue.popleft()
                for target in self.successors(sid):
                    if target not in seen:
                        seen.add(target)
                        queue.append(target)
            self._reachable = sorted(seen)
        return self._reachable

    def successor_map(self):
        return {sid: self.successors(sid) for sid in self.reachable()}


class BundleSystem:
    """Components sharing one environment; points are (component index, state)."""

    def __init__(self, env, components, name='system'):
        if not components:
            raise UsageError('a system needs at least one component')
        self.env = env
        self.components = list(components)
        self.name = name
        self._points = None
        self._predecessors = None
        self._labels = {}

    def points(self):
        if self._points is None:
            self._points = [(ci, sid)
                            for ci, component in enumerate(self.components)
                            for sid in component.reachable()]
        return self._points

    def initial_points(self):
        return [(ci, sid) for ci, component in enumerate(self.components)
                for sid in component.initial]

    def successors(self, point):
        ci, sid = point
        return [(ci, target) for target in self.components[ci].successors(sid)]

    def predecessors(self):
        if self._predecessors is None:
            pre = defaultdict(list)
            for point in self.points():
                for target in self.successors(point):
                    pre[target].append(point)
            self._predecessors = pre
        return self._predecessors

    def reachable_states(self):
        return sorted({sid for _, sid in self.points()})

    def __repr__(self):
        return (f"BundleSystem({self.name!r}, components={len(self.components)}, "
                f"points={len(self.points())})")


def reachable(sys):
    """Reachable (component index, state) points."""
    return set(sys.points())


class Labeling(Mapping):
    """Truth value of one formula at every reachable point."""

    def __init__(self, sys, formula, true_points):
        self.sys = sys
        self.formula = formula
        self.true_points = frozenset(true_points)
        self._domain = frozenset(sys.points())

    def __getitem__(self, point):
        if point not in self._domain:
            raise KeyError(point)
        return point in self.true_points

    def __iter__(self):
        return iter(self.sys.points())

    def __len__(self):
        return len(self.sys.points())

    def true_states(self):
        return sorted({sid for _, sid in self.true_points})

    def false_points(self):
        return [p for p in self.sys.points() if p not in self.true_points]


class _Checker:
    """Bottom-up labeling; results are sets of true points, memoized on the system."""

    def __init__(self, sys):
        self.sys = sys
        self.env = sys.env
        self.points = sys.points()
        self.all = frozenset(self.points)
        self.memo = sys._labels

    def label(self, node):
        result = self.memo.get(node)
        if result is None:
            result = frozenset(self._compute(node))
            self.memo[node] = result
        return result

    def _compute(self, node):
        if isinstance(node, Const):
            return self.all if node.value else ()
        if isinstance(node, Atom):
            test = compile_boolean(node, self.env.index)
            return {p for p in self.points if test(self.env.decode(p[1]), None)}
        if isinstance(node, TVar):
            raise UsageError(f"template variable '{node.name}' is unbound")
        if isinstance(node, Not):
            return self.all - self.label(node.arg)
        if isinstance(node, And):
            return self.label(node.left) & self.label(node.right)
        if isinstance(node, Or):
            return self.label(node.left) | self.label(node.right)
        if isinstance(node, Implies):
            return (self.all - self.label(node.left)) | self.label(node.right)
        if isinstance(node, Iff):
            left, right = self.label(node.left), self.label(node.right)
            return (left & right) | (self.all - left - right)
        if isinstance(node, EX):
            inner = self.label(node.arg)
            return {p for p in self.points if any(q in inner for q in self.sys.successors(p))}
        if isinstance(node, AX):
            inner = self.label(node.arg)
            return {p for p in self.points if all(q in inner for q in self.sys.successors(p))}
        if isinstance(node, EU):
            return self._exists_until(self.label(node.left), self.label(node.right))
        if isinstance(node, AU):
            return self._all_until(self.label(node.left), self.label(node.right))
        if isinstance(node, AR):
            # A[p R q] = !E[!p U !q]
            left, right = self.label(node.left), self.label(node.right)
            return self.all - self._exists_until(self.all - left, self.all - right)
        if isinstance(node, ER):
            left, right = self.label(node.left), self.label(node.right)
            return self.all - self._all_until(self.all - left, self.all - right)
        if isinstance(node, K):
            return self._knows(node.agent, self.label(node.arg))
        raise UsageError(f"cannot check {node!r}")

    def _exists_until(self, left, right):
        result = set(right)
        queue = deque(result)
        pre = self.sys.predecessors()
        while queue:
            point = queue.popleft()
            for source in pre.get(point, ()):
                if source not in result and source in left:
                    result.add(source)
                    queue.append(source)
        return result

    def _all_until(self, left, right):
        # a point joins once every successor is in the set
        remaining = {p: len(self.sys.successors(p)) for p in self.points}
        result = set(right)
        queue = deque(result)
        pre = self.sys.predecessors()
        while queue:
            point = queue.popleft()
            for source in pre.get(point, ()):
                if source in result or source not in left:
                    continue
                remaining[source] -= 1
                if remaining[source] == 0:
                    result.add(source)
                    queue.append(source)
        return result

    def _knows(self, agent, inner):
        classes = defaultdict(list)
        for point in self.points:
            classes[self.env.obs_key(agent, point[1])].append(point)
        result = set()
        for members in classes.values():
            if all(p in inner for p in members):
                result.update(members)
        return result


def _require_checkable(sys, formula):
    names = template_vars(formula)
    if names:
        raise UsageError(f"template variable '{sorted(names)[0]}' is unbound")
    for agent in agents_of(formula):
        sys.env.require_agent(agent)


def check(sys, formula):
    """Label every reachable point of sys with the truth of formula."""
    _require_checkable(sys, formula)
    return Labeling(sys, formula, _Checker(sys).label(formula))


def models(sys, formula):
    """True iff formula holds at every component's initial states."""
    labeling = check(sys, formula)
    return all(point in labeling.true_points for point in sys.initial_points())


def knowledge_table(sys, agent, knowledge):
    """{observation key: truth of K_i psi} over the agent's reachable observations."""
    if not isinstance(knowledge, K) or knowledge.agent != agent:
        raise UsageError(f"'{to_text(knowledge)}' is not a knowledge formula of {agent}")
    sys.env.require_agent(agent)
    labeling = check(sys, knowledge)
    table = {}
    for point in sys.points():
        key = sys.env.obs_key(agent, point[1])
        if key not in table:
            table[key] = point in labeling.true_points
    return dict(sorted(table.items()))


def holds_at_observation(sys, agent, obs, knowledge):
    """Shared truth of K_i psi at the points where the agent sees obs.

    Returns VACUOUS when no reachable point carries that observation.
    """
    key = obs.key if hasattr(obs, 'key') else tuple(obs)
    return knowledge_table(sys, agent, knowledge).get(key, VACUOUS)


def find_witness(sys, formula):
    """Counterexample for formula, or None when sys satisfies it.

    For AG psi this is a shortest path of points from an initial point to one
    violating psi; otherwise it is the first failing initial point.
    """
    labeling = check(sys, formula)
    failing = [p for p in sys.initial_points() if p not in labeling.true_points]
    if not failing:
        return None
    if isinstance(formula, AR) and formula.left == FALSE:
        good = check(sys, formula.right).true_points
        parent = {}
        queue = deque()
        for point in sys.initial_points():
            if point not in parent:
                parent[point] = None
                queue.append(point)
        while queue:
            point = queue.popleft()
            if point not in good:
                path = []
                while point is not None:
                    path.append(point)
                    point = parent[point]
                return list(reversed(path))
            for target in sys.successors(point):
                if target not in parent:
                    parent[target] = point
                    queue.append(target)
    return [failing[0]]

"""Approximation systems: concrete, top, and imperfect-recall strategy classes.

Class schemes are named `<info>-<recall>-<consistency>`: info pi (choice per
state) or ii (choice per observation), recall ir, consistency sc (successor
set must match the template under some completion of the substitution) or nsc.
Perfect-recall classes are parsed but refused.
"""

import itertools
from dataclasses import dataclass, fields

from config import (
    BUDGET_KEYS,
    BUDGET_OVERRIDE,
    MAX_ACTIONS_PER_AGENT,
    MAX_KBP_CANDIDATES,
    MAX_OBSERVATIONS_PER_AGENT,
    MAX_REACHABLE_STATES,
    MAX_STRATEGIES,
)
from errors import RefusalError, UnsupportedSchemeError, UsageError
from kernel import (
    SKIP,
    Substitution,
    all_template_vars,
    completions,
    guard_satisfiable,
    joint_enabled,
)
from logic import apply_substitution, is_ctlk_plus, template_vars, to_text
from mck import BundleSystem, StrategyComponent, knowledge_table

INFO_MODES = ('pi', 'ii')
RECALL_MODES = ('ir', 'pr')
CONSISTENCY_MODES = ('sc', 'nsc')

# (smaller, larger): truth of CTLK+ formulas in the larger system carries down
LATTICE = [
    ('concrete', 'ii-ir-sc'),
    ('ii-ir-sc', 'ii-ir-nsc'),
    ('pi-ir-sc', 'pi-ir-nsc'),
    ('ii-ir-sc', 'pi-ir-sc'),
    ('ii-ir-nsc', 'pi-ir-nsc'),
    ('top', 'ii-ir-nsc'),
]
# claimed to agree everywhere; disagreements are reported, not treated as faults
EQUIVALENT = [('top', 'ii-ir-nsc')]


@dataclass(frozen=True)
class SchemeId:
    kind: str  # 'concrete' | 'top' | 'class'
    info: str = None
    recall: str = None
    consistency: str = None

    def __str__(self):
        if self.kind != 'class':
            return self.kind
        return f"{self.info}-{self.recall}-{self.consistency}"


def parse_scheme(text):
    """'top', 'concrete' or '<pi|ii>-<ir|pr>-<sc|nsc>'."""
    name = text.strip().lower()
    if name in ('top', 'concrete'):
        return SchemeId(name)
    parts = name.split('-')
    if len(parts) == 3 and parts[0] in INFO_MODES and parts[1] in RECALL_MODES \
            and parts[2] in CONSISTENCY_MODES:
        return SchemeId('class', *parts)
    raise UsageError(f"unknown scheme '{text}' (use top, concrete or e.g. ii-ir-sc)")


@dataclass(frozen=True)
class Budget:
    """Enumeration limits; strategy classes beyond them are refused."""
    max_states: int = MAX_REACHABLE_STATES
    max_observations: int = MAX_OBSERVATIONS_PER_AGENT
    max_actions: int = MAX_ACTIONS_PER_AGENT
    max_strategies: int = MAX_STRATEGIES
    max_kbp_candidates: int = MAX_KBP_CANDIDATES

    @classmethod
    def from_text(cls, text, base=None):
        """Parse 'states=128,obs=8,...' on top of base (default: built-in limits)."""
        values = {f.name: getattr(base or cls(), f.name) for f in fields(cls)}
        for item in filter(None, (part.strip() for part in text.split(','))):
            key, sep, value = item.partition('=')
            key = key.strip()
            if not sep or key not in BUDGET_KEYS:
                raise UsageError(f"bad budget entry '{item}' (keys: {', '.join(BUDGET_KEYS)})")
            try:
                number = int(value)
            except ValueError:
                raise UsageError(f"budget '{key}' needs an integer, got '{value.strip()}'")
            if number <= 0:
                raise UsageError(f"budget '{key}' must be positive")
            values[BUDGET_KEYS[key]] = number
        return cls(**values)

    @classmethod
    def from_config(cls):
        return cls.from_text(BUDGET_OVERRIDE) if BUDGET_OVERRIDE else cls()

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


# ===== CONCRETE AND TOP =====

def build_concrete(env, templates, theta):
    """Single-component system of the protocols obtained from a total theta."""
    missing = [name for name in all_template_vars(templates) if name not in theta]
    if missing:
        raise UsageError(f"substitution is not total, unbound: {', '.join(missing)}")

    def successors(sid):
        return env.post(sid, joint_enabled(env, templates, theta, sid))

    return BundleSystem(env, [StrategyComponent(0, env.initial, successors, label='concrete')],
                        name='concrete')


class TopChoices:
    """Per-agent actions the top strategy allows, cached by observation."""

    def __init__(self, env, templates, theta):
        self.env = env
        self.templates = templates
        self.theta = theta
        self._cache = {}

    def allowed(self, agent, sid):
        key = (agent, self.env.obs_key(agent, sid))
        result = self._cache.get(key)
        if result is None:
            template = self.templates.get(agent)
            if template is None:
                result = (SKIP,)
            else:
                actions = [clause.action for clause in template.clauses
                           if guard_satisfiable(self.env, clause.guard, sid, self.theta)]
                if guard_satisfiable(self.env, template.skip_guard(), sid, self.theta) \
                        and SKIP not in actions:
                    actions.append(SKIP)
                result = tuple(actions)
            self._cache[key] = result
        return result

    def joint(self, sid):
        return list(itertools.product(*(self.allowed(agent, sid) for agent in self.env.agents)))


def build_top(env, templates, theta):
    """Single-component system of the top strategy for a partial theta."""
    top = TopChoices(env, templates, theta)

    def successors(sid):
        return env.post(sid, top.joint(sid))

    return BundleSystem(env, [StrategyComponent(0, env.initial, successors, label='top')], name='top')


# ===== IMPERFECT-RECALL STRATEGIES =====

class IRStrategy:
    """Memoryless strategy profile with its successor map on reachable states.

    choices maps (agent, key) to the chosen action set; key is the agent's
    observation for ii and the state id for pi.
    """

    def __init__(self, info, consistency, choices, successors, initial):
        self.info = info
        self.consistency = consistency
        self.choices = dict(choices)
        self.successors = dict(successors)
        self.initial = tuple(initial)

    def __repr__(self):
        return f"IRStrategy({self.info}-ir-{self.consistency}, states={len(self.successors)})"


def strategy_signature(strategy):
    """Hashable reachable successor map; equal signatures give equal components."""
    return tuple(sorted((sid, tuple(targets)) for sid, targets in strategy.successors.items()))


def _nonempty_subsets(actions):
    actions = list(actions)
    subsets = []
    for size in range(1, len(actions) + 1):
        subsets.extend(frozenset(combo) for combo in itertools.combinations(actions, size))
    return subsets


def _distinct_choices(env, agent, states):
    """One nonempty action subset per group with equal successors at every state.

    Two subsets are grouped when, against each single action of every other
    agent, they lead to the same successors from each of the states.
    """
    position = env.agents.index(agent)
    others = list(itertools.product(*(env.actions[a] for a in env.agents if a != agent)))

    def joint(action, rest):
        return rest[:position] + (action,) + rest[position:]

    chosen = {}
    for subset in _nonempty_subsets(env.actions[agent]):
        effect = tuple(
            frozenset(t for action in subset for t in env.successors(sid, joint(action, rest)))
            for sid in states for rest in others)
        chosen.setdefault(effect, subset)
    return list(chosen.values())


def class_universe(env, templates, theta, consistency):
    """States an ir strategy of the class can reach.

    sc successors are always top successors, so top reachability bounds them;
    nsc strategies may use any action.
    """
    if consistency == 'sc':
        return build_top(env, templates, theta).reachable_states()
    return env.reachable_states()


def check_budget(env, templates, theta, budget, consistency='sc'):
    """Refuse when the part of env the class can reach exceeds the enumeration budget."""
    states = class_universe(env, templates, theta, consistency)
    if len(states) > budget.max_states:
        raise RefusalError(
            f"{len(states)} reachable states exceed the enumeration budget of {budget.max_states}")
    for agent in env.agents:
        observations = {env.obs_key(agent, sid) for sid in states}
        if len(observations) > budget.max_observations:
            raise RefusalError(
                f"agent {agent} has {len(observations)} reachable observations, "
                f"budget is {budget.max_observations}")
        if len(env.actions[agent]) > budget.max_actions:
            raise RefusalError(
                f"agent {agent} has {len(env.actions[agent])} actions, budget is {budget.max_actions}")
    return states


def enumerate_ir_strategies(env, templates, theta, info, consistency, budget=None):
    """All imperfect-recall strategy profiles of the class, explored lazily.

    Choices are only made for keys met on the way from the initial states, so
    two profiles differing only at unreachable keys are not told apart. Action
    options at a key range over the nonempty subsets of all the agent's
    actions, template or not; subsets with the same successors at every state
    of the key are tried once. sc then keeps a profile only when each reached
    state's successor set is the one some completion of theta enables there.
    """
    if info not in INFO_MODES or consistency not in CONSISTENCY_MODES:
        raise UsageError(f"unknown strategy class {info}-ir-{consistency}")
    budget = budget or Budget.from_config()
    theta = theta if isinstance(theta, Substitution) else Substitution(theta)
    universe = check_budget(env, templates, theta, budget, consistency)

    options = {}
    targets_cache = {}

    def key_of(agent, sid):
        return env.obs_key(agent, sid) if info == 'ii' else sid

    def options_at(agent, sid):
        key = (agent, key_of(agent, sid))
        if key not in options:
            members = [s for s in universe if key_of(agent, s) == key[1]] if info == 'ii' else [sid]
            options[key] = _distinct_choices(env, agent, members)
        return options[key]

    def consistent_targets(sid):
        if sid not in targets_cache:
            targets_cache[sid] = {
                frozenset(env.post(sid, joint_enabled(env, templates, full, sid)))
                for full in completions(templates, theta)
            }
        return targets_cache[sid]

    found = []

    def search(pending, visited, choices, successors):
        while pending:
            sid = pending[0]
            for agent in env.agents:
                key = (agent, key_of(agent, sid))
                if key not in choices:
                    for option in options_at(agent, sid):
                        search(pending, visited, {**choices, key: option}, successors)
                    return
            joints = itertools.product(*(sorted(choices[(agent, key_of(agent, sid))])
                                         for agent in env.agents))
            targets = frozenset(env.post(sid, joints))
            if not targets:
                return
            if consistency == 'sc' and targets not in consistent_targets(sid):
                return
            successors = {**successors, sid: tuple(sorted(targets))}
            fresh = [t for t in sorted(targets) if t not in visited]
            visited = visited | set(fresh)
            pending = pending[1:] + tuple(fresh)
        if len(found) >= budget.max_strategies:
            raise RefusalError(
                f"more than {budget.max_strategies} strategies in {info}-ir-{consistency}")
        found.append(IRStrategy(info, consistency, choices, successors, env.initial))

    search(tuple(env.initial), frozenset(env.initial), {}, {})
    return found


def build_union_system(env, strategies, dedupe=False, name='union'):
    """One component per strategy; dedupe drops strategies with equal successor maps."""
    if not strategies:
        raise UsageError('no strategies to build a system from')
    components = []
    seen = set()
    for strategy in strategies:
        if dedupe:
            signature = strategy_signature(strategy)
            if signature in seen:
                continue
            seen.add(signature)
        components.append(StrategyComponent.from_map(
            len(components), strategy.initial, strategy.successors,
            label=f"{strategy.info}-ir-{strategy.consistency}#{len(components)}", env=env))
    return BundleSystem(env, components, name=name)


def build_scheme(spec, theta, scheme, budget=None):
    """System of the given scheme for spec (anything with .env and .templates)."""
    if isinstance(scheme, str):
        scheme = parse_scheme(scheme)
    theta = theta if isinstance(theta, Substitution) else Substitution(theta)
    if scheme.kind == 'concrete':
        return build_concrete(spec.env, spec.templates, theta)
    if scheme.kind == 'top':
        return build_top(spec.env, spec.templates, theta)
    if scheme.recall == 'pr':
        raise UnsupportedSchemeError(
            f"{scheme} is a perfect-recall class; its strategy space is infinite and "
            f"needs tree-automaton checking, which is not supported (use top or an ir class)")
    strategies = enumerate_ir_strategies(
        spec.env, spec.templates, theta, scheme.info, scheme.consistency, budget)
    return build_union_system(spec.env, strategies, dedupe=True, name=str(scheme))


# ===== ORACLE =====

def scheme_oracle(spec, theta, schemes, budget=None):
    """Compare the knowledge truth tables of several schemes.

    Returns per-scheme tables {variable: {observation text: bool}}, a pairwise
    agreement matrix, containment violations along the class lattice (a CTLK+
    knowledge formula true in the larger system but false in the smaller one
    at a shared observation), and discrepancies between top and ii-ir-nsc,
    which only agree when the templates leave the strategies little freedom.
    """
    theta = theta if isinstance(theta, Substitution) else Substitution(theta)
    names = [str(parse_scheme(s)) if isinstance(s, str) else str(s) for s in schemes]
    env = spec.env
    raw_tables = {}
    components = {}
    for name in names:
        system = build_scheme(spec, theta, name, budget)
        components[name] = len(system.components)
        raw_tables[name] = {}
        for variable, knowledge in sorted(spec.knowledge.items()):
            instantiated = apply_substitution(knowledge, theta)
            if template_vars(instantiated):
                continue
            raw_tables[name][variable] = knowledge_table(system, knowledge.agent, instantiated)

    def disagreements(a, b, variable):
        left, right = raw_tables[a].get(variable, {}), raw_tables[b].get(variable, {})
        return [key for key in left if key in right and left[key] != right[key]]

    agreement = {a: {b: all(not disagreements(a, b, v) for v in raw_tables[a]) for b in names}
                 for a in names}

    violations = []
    discrepancies = []
    skipped = []
    relations = [(small, large, 'contained', violations) for small, large in LATTICE] + \
                [(a, b, 'equivalent', discrepancies) for a, b in EQUIVALENT]
    for small, large, relation, found in relations:
        if small not in raw_tables or large not in raw_tables:
            continue
        for variable, knowledge in sorted(spec.knowledge.items()):
            if variable not in raw_tables[small]:
                continue
            if not is_ctlk_plus(knowledge):
                skipped.append(f"{variable}: '{to_text(knowledge)}' is outside CTLK+")
                continue
            agent = knowledge.agent
            left, right = raw_tables[small][variable], raw_tables[large][variable]
            for key in sorted(set(left) & set(right)):
                broken = (right[key] and not left[key]) if relation == 'contained' \
                    else left[key] != right[key]
                if broken:
                    found.append({
                        'relation': f"{small} {'<=' if relation == 'contained' else '=='} {large}",
                        'variable': variable,
                        'observation': str(env.make_observation(agent, key)),
                        small: left[key],
                        large: right[key],
                    })

    tables = {
        name: {
            variable: {str(env.make_observation(spec.knowledge[variable].agent, key)): value
                       for key, value in table.items()}
            for variable, table in per_var.items()
        }
        for name, per_var in raw_tables.items()
    }
    return {
        'schemes': names,
        'components': components,
        'tables': tables,
        'agreement': agreement,
        'violations': violations,
        'discrepancies': discrepancies,
        'skipped': sorted(set(skipped)),
    }


def successor_map(system):
    """{state: successors} of a single-component system, for comparisons."""
    return system.components[0].successor_map()

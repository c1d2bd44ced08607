"""Environments, observations, protocol templates and substitutions.

A state is interned as the mixed-radix index of its valuation in declaration
order (first variable most significant), so state ids are deterministic for a
given environment and iteration in id order is canonical.
"""

import itertools
from collections import deque
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import lru_cache

from errors import UsageError
from logic import (
    FALSE,
    Atom,
    Const,
    Not,
    TVar,
    apply_substitution,
    compile_boolean,
    conjoin,
    is_boolean,
    subformulas,
    template_vars,
    to_text,
    unbound_template_vars,
    variables_of,
)

SKIP = 'skip'


@dataclass(frozen=True)
class Variable:
    name: str
    lo: int
    hi: int

    @property
    def size(self):
        return self.hi - self.lo + 1

    def __contains__(self, value):
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class Observation:
    """What one agent sees: its observable variables and their values."""
    agent: str
    valuation: tuple  # ((var, value), ...) in declaration order

    @property
    def key(self):
        return tuple(value for _, value in self.valuation)

    def as_dict(self):
        return dict(self.valuation)

    def __str__(self):
        if not self.valuation:
            return '(nothing)'
        return ', '.join(f"{var}={value}" for var, value in self.valuation)


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    state: int = None
    joint_action: tuple = None

    def as_dict(self):
        return {
            'kind': self.kind,
            'message': self.message,
            'state': self.state,
            'joint_action': list(self.joint_action) if self.joint_action else None,
        }


class Environment:
    """Finite multi-agent environment with joint-action transitions.

    Args:
        agents: ordered agent names
        variables: list of Variable, in canonical order
        initial: iterable of value tuples (one value per variable)
        actions: {agent: [action, ...]}; 'skip' is added when missing
        obs_vars: {agent: [variable name, ...]}
        step: fn(values, joint_action) -> iterable of successor value tuples
    """

    def __init__(self, agents, variables, initial, actions, obs_vars, step, name='env'):
        self.name = name
        self.agents = tuple(agents)
        self.variables = tuple(variables)
        self.var_names = tuple(v.name for v in self.variables)
        self.index = {name: i for i, name in enumerate(self.var_names)}
        self.actions = {}
        for agent in self.agents:
            acts = list(actions.get(agent, []))
            if SKIP not in acts:
                acts.append(SKIP)
            self.actions[agent] = tuple(acts)
        self.obs_vars = {agent: tuple(obs_vars.get(agent, ())) for agent in self.agents}
        for agent, names in self.obs_vars.items():
            for var in names:
                if var not in self.index:
                    raise UsageError(f"agent {agent} observes undeclared variable '{var}'")
        self._obs_positions = {
            agent: tuple(self.index[v] for v in names) for agent, names in self.obs_vars.items()
        }
        self._step = step

        # mixed radix weights, last variable least significant
        weights = []
        weight = 1
        for var in reversed(self.variables):
            weights.append(weight)
            weight *= var.size
        self._weights = tuple(reversed(weights))
        self.state_count = weight

        self._decoded = {}
        self._successors = {}
        self._obs_keys = {}
        self.domain_faults = {}

        self.initial = tuple(sorted({self.encode(values) for values in initial}))
        self.skip_all = tuple(SKIP for _ in self.agents)
        self._joint_actions = tuple(itertools.product(*(self.actions[a] for a in self.agents)))

    @classmethod
    def from_table(cls, agents, variables, initial, actions, obs_vars, transitions, name='table'):
        """Environment given by an explicit {(values, joint_action): [values, ...]} table.

        Missing entries have no successor; nothing is added implicitly.
        """
        table = {key: tuple(targets) for key, targets in transitions.items()}
        return cls(agents, variables, initial, actions, obs_vars,
                   lambda values, joint: table.get((values, joint), ()), name=name)

    # ----- states -----

    def in_domain(self, values):
        return len(values) == len(self.variables) and all(
            value in var for value, var in zip(values, self.variables))

    def encode(self, values):
        if not self.in_domain(values):
            raise UsageError(f"valuation {values} is outside the declared domains")
        sid = 0
        for value, var, weight in zip(values, self.variables, self._weights):
            sid += (value - var.lo) * weight
        return sid

    def decode(self, sid):
        values = self._decoded.get(sid)
        if values is None:
            self.require_state(sid)
            rest = sid
            out = []
            for var, weight in zip(self.variables, self._weights):
                digit, rest = divmod(rest, weight)
                out.append(var.lo + digit)
            values = tuple(out)
            self._decoded[sid] = values
        return values

    def require_state(self, sid):
        if not isinstance(sid, int) or not 0 <= sid < self.state_count:
            raise UsageError(f"unknown state {sid!r}")

    def require_agent(self, agent):
        if agent not in self.actions:
            raise UsageError(f"unknown agent '{agent}'")

    def valuation(self, sid):
        return dict(zip(self.var_names, self.decode(sid)))

    def state_text(self, sid):
        return ' '.join(f"{name}={value}" for name, value in zip(self.var_names, self.decode(sid)))

    def value(self, sid, var):
        return self.decode(sid)[self.index[var]]

    def states(self):
        return range(self.state_count)

    # ----- transitions -----

    def joint_actions(self):
        return self._joint_actions

    def successors(self, sid, joint):
        """Successor states of sid under one joint action, sorted by id."""
        key = (sid, joint)
        result = self._successors.get(key)
        if result is None:
            values = self.decode(sid)
            targets = set()
            for target in self._step(values, joint):
                target = tuple(target)
                if self.in_domain(target):
                    targets.add(self.encode(target))
                else:
                    self.domain_faults.setdefault(key, target)
            result = tuple(sorted(targets))
            self._successors[key] = result
        return result

    def post(self, sid, joints=None):
        """Union of successors over the given joint actions (default: all)."""
        targets = set()
        for joint in (self._joint_actions if joints is None else joints):
            targets.update(self.successors(sid, joint))
        return targets

    def reachable_states(self):
        """States reachable from the initial states under any joint actions."""
        seen = set(self.initial)
        queue = deque(self.initial)
        while queue:
            sid = queue.popleft()
            for target in self.post(sid):
                if target not in seen:
                    seen.add(target)
                    queue.append(target)
        return sorted(seen)

    # ----- observations -----

    def obs_key(self, agent, sid):
        key = (agent, sid)
        obs = self._obs_keys.get(key)
        if obs is None:
            values = self.decode(sid)
            obs = tuple(values[i] for i in self._obs_positions[agent])
            self._obs_keys[key] = obs
        return obs

    def obs_index(self, agent):
        """{observable variable: position in the agent's observation key}"""
        return {var: i for i, var in enumerate(self.obs_vars[agent])}

    def observation_space(self, agent):
        """Every observation key the agent's observable domains allow."""
        domains = [range(self.variables[self.index[v]].lo, self.variables[self.index[v]].hi + 1)
                   for v in self.obs_vars[agent]]
        return list(itertools.product(*domains))

    def make_observation(self, agent, key):
        return Observation(agent, tuple(zip(self.obs_vars[agent], key)))

    def __repr__(self):
        return f"Environment({self.name!r}, agents={list(self.agents)}, states={self.state_count})"


def observation(env, agent, sid):
    """Restriction of the state's valuation to the agent's observable variables."""
    env.require_agent(agent)
    env.require_state(sid)
    return env.make_observation(agent, env.obs_key(agent, sid))


def characteristic(env, agent, key):
    """Conjunction of var = value atoms that holds exactly at observation `key`."""
    return conjoin(Atom(var, '=', value) for var, value in zip(env.obs_vars[agent], key))


def validate_environment(env, scope='all', limit=50):
    """Structural diagnostics: seriality, skip identity, domains, initial states.

    Args:
        env: Environment
        scope: 'all' checks every state, 'reachable' only states reachable
            from the initial states
        limit: stop collecting after this many diagnostics
    """
    diagnostics = []
    if not env.initial:
        diagnostics.append(Diagnostic('initial', 'no initial state'))
        return diagnostics
    for agent in env.agents:
        if SKIP not in env.actions[agent]:
            diagnostics.append(Diagnostic('actions', f"agent {agent} has no skip action"))

    states = env.states() if scope == 'all' else env.reachable_states()
    for sid in states:
        for joint in env.joint_actions():
            targets = env.successors(sid, joint)
            fault = env.domain_faults.get((sid, joint))
            if fault is not None:
                diagnostics.append(Diagnostic(
                    'domain', f"successor {fault} of {env.state_text(sid)} leaves the declared domains",
                    sid, joint))
            if joint == env.skip_all:
                if targets != (sid,):
                    diagnostics.append(Diagnostic(
                        'skip-identity', f"skip-identity violated at {env.state_text(sid)}", sid, joint))
            elif not targets:
                diagnostics.append(Diagnostic(
                    'seriality',
                    f"no successor for [{', '.join(joint)}] at {env.state_text(sid)}", sid, joint))
            if len(diagnostics) >= limit:
                return diagnostics
    return diagnostics


def check_completeness(env, agent):
    """True iff each observation is pinned down by its characteristic conjunction."""
    env.require_agent(agent)
    keys = env.observation_space(agent)
    index = env.obs_index(agent)
    for key in keys:
        test = compile_boolean(characteristic(env, agent, key), index)
        for other in keys:
            if test(other, None) != (other == key):
                return False
    return True


def locality_check(formula, agent, env):
    """True iff every atom of the formula mentions only the agent's observables."""
    env.require_agent(agent)
    names = variables_of(formula)
    unknown = sorted(n for n in names if n not in env.index)
    if unknown:
        raise UsageError(f"unknown variable '{unknown[0]}'")
    return all(name in env.obs_vars[agent] for name in names)


# ===== TEMPLATES AND SUBSTITUTIONS =====

@dataclass(frozen=True)
class Clause:
    guard: object
    action: str

    def __str__(self):
        return f"{to_text(self.guard)} -> {self.action}"


@dataclass(frozen=True)
class ProtocolTemplate:
    """do guard_1 -> a_1 [] ... [] guard_n -> a_n od for one agent.

    The implicit `!guard_1 & ... & !guard_n -> skip` clause is not stored.
    """
    agent: str
    clauses: tuple = field(default_factory=tuple)

    def variables(self):
        names = set()
        for clause in self.clauses:
            names.update(template_vars(clause.guard))
        return frozenset(names)

    def actions(self):
        return [clause.action for clause in self.clauses]

    def skip_guard(self):
        return conjoin(Not(clause.guard) for clause in self.clauses)


class Substitution(Mapping):
    """Immutable partial map from template variables to local formulas."""

    def __init__(self, bindings=None):
        self._bindings = dict(bindings or {})
        self._hash = None

    def __getitem__(self, name):
        return self._bindings[name]

    def __iter__(self):
        return iter(sorted(self._bindings))

    def __len__(self):
        return len(self._bindings)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._bindings.items()))
        return self._hash

    def __eq__(self, other):
        if isinstance(other, Substitution):
            return self._bindings == other._bindings
        return NotImplemented

    def extend(self, bindings):
        merged = dict(self._bindings)
        merged.update(bindings)
        return Substitution(merged)

    def is_total(self, templates):
        return all(name in self._bindings for name in all_template_vars(templates))

    def text(self):
        return {name: to_text(self._bindings[name]) for name in self}

    def __repr__(self):
        inner = ', '.join(f"{name} := {to_text(self._bindings[name])}" for name in self)
        return f"Substitution({inner})"


def all_template_vars(templates):
    names = set()
    for template in templates.values():
        names.update(template.variables())
    return sorted(names)


def variable_owner(templates):
    """{template variable: agent whose template mentions it}"""
    owners = {}
    for agent, template in templates.items():
        for name in template.variables():
            owners[name] = agent
    return owners


def bottom_substitution(templates):
    """Every template variable bound to false."""
    return Substitution({name: FALSE for name in all_template_vars(templates)})


def completions(templates, theta, names=None):
    """All extensions of theta binding the unbound template variables to constants."""
    free = [n for n in (names if names is not None else all_template_vars(templates))
            if n not in theta]
    for bits in itertools.product((False, True), repeat=len(free)):
        yield theta.extend({name: Const(bit) for name, bit in zip(free, bits)})


def validate_templates(env, templates):
    """Template diagnostics: actions, locality, shapes and variable disjointness."""
    diagnostics = []
    seen_vars = {}
    for agent, template in templates.items():
        if agent not in env.actions:
            diagnostics.append(Diagnostic('template', f"template for unknown agent '{agent}'"))
            continue
        actions = template.actions()
        for action in sorted({a for a in actions if actions.count(a) > 1}):
            diagnostics.append(Diagnostic('template', f"{agent}: action '{action}' appears in several clauses"))
        for clause in template.clauses:
            if clause.action not in env.actions[agent]:
                diagnostics.append(Diagnostic(
                    'template', f"{agent}: action '{clause.action}' is not declared for {agent}"))
            if not is_boolean(clause.guard):
                diagnostics.append(Diagnostic(
                    'template', f"{agent}: guard '{to_text(clause.guard)}' is not a boolean formula"))
                continue
            try:
                local = locality_check(clause.guard, agent, env)
            except UsageError as e:
                diagnostics.append(Diagnostic('template', f"{agent}: {e}"))
                continue
            if not local:
                diagnostics.append(Diagnostic(
                    'locality', f"{agent}: guard '{to_text(clause.guard)}' is not local to {agent}"))
        for name in sorted(template.variables()):
            if name in seen_vars and seen_vars[name] != agent:
                diagnostics.append(Diagnostic(
                    'template', f"template variable '{name}' is shared by {seen_vars[name]} and {agent}"))
            seen_vars.setdefault(name, agent)
    return diagnostics


def validate_substitution(env, templates, theta):
    """Raise UsageError unless every binding is local to its owner."""
    owners = variable_owner(templates)
    for name in theta:
        if name not in owners:
            raise UsageError(f"'{name}' is not a template variable")
        formula = theta[name]
        if not is_boolean(formula) or any(isinstance(n, TVar) for n in subformulas(formula)):
            raise UsageError(f"binding of '{name}' must be a boolean formula over observables")
        if not locality_check(formula, owners[name], env):
            raise UsageError(f"binding '{to_text(formula)}' of '{name}' is not local to {owners[name]}")


# ===== ENABLEDNESS =====

@lru_cache(maxsize=4096)
def _compiled_clauses(env, template, theta):
    for clause in template.clauses:
        unbound = unbound_template_vars(clause.guard, theta)
        if unbound:
            raise UsageError(f"template variable '{unbound[0]}' is unbound")
    return tuple(
        (compile_boolean(apply_substitution(clause.guard, theta), env.index), clause.action)
        for clause in template.clauses
    )


def enabled_actions(env, template, theta, sid):
    """Actions whose guards hold at sid under theta, or {skip} when none does."""
    values = env.decode(sid)
    enabled = {action for guard, action in _compiled_clauses(env, template, theta)
               if guard(values, None)}
    return enabled or {SKIP}


def joint_enabled(env, templates, theta, sid):
    """Cartesian product of the agents' enabled actions, in agent order."""
    per_agent = []
    for agent in env.agents:
        template = templates.get(agent)
        if template is None:
            per_agent.append([SKIP])
        else:
            per_agent.append(sorted(enabled_actions(env, template, theta, sid)))
    return set(itertools.product(*per_agent))


@lru_cache(maxsize=8192)
def _satisfiability_test(env, guard, theta):
    instantiated = apply_substitution(guard, theta)
    free = sorted(template_vars(instantiated))
    test = compile_boolean(instantiated, env.index)
    assignments = [dict(zip(free, bits)) for bits in itertools.product((False, True), repeat=len(free))]
    return test, assignments


def guard_satisfiable(env, guard, sid, theta):
    """True iff some truth assignment to the unbound template variables makes guard true at sid."""
    test, assignments = _satisfiability_test(env, guard, theta)
    values = env.decode(sid)
    return any(test(values, assignment) for assignment in assignments)

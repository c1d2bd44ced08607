"""Ordered synthesis of sound local proposition specifications, plus the KBP finder.

Template variables are processed in the classes of a total pre-order. Each
class is bound against the approximation system of the substitution built so
far: the new binding of x is the disjunction of the observations of x's owner
at which the knowledge condition of x holds in that system.
"""

import itertools
import time
from dataclasses import dataclass, field

from approx import Budget, build_concrete, build_scheme, parse_scheme
from config import MAX_TABLE_OBSERVATIONS, SIMPLIFY_FORMULAS
from errors import ClassificationError, RefusalError, UsageError
from kernel import (
    SKIP,
    Substitution,
    all_template_vars,
    characteristic,
    variable_owner,
)
from logic import (
    TRUE,
    AG,
    Atom,
    Iff,
    Implies,
    K,
    TVar,
    And,
    apply_substitution,
    compile_boolean,
    conjoin,
    disjoin,
    is_ctlk_plus,
    template_vars,
    to_text,
)
from mck import VACUOUS, find_witness, knowledge_table, models


@dataclass
class EpistemicSpec:
    """Environment, templates and specification formulas of one model.

    knowledge maps each template variable x to its condition K_i psi; kinds
    records whether x came from an implication ('slp-sound') or a
    biconditional ('kbp'); extra holds the remaining formulas.
    """
    env: object
    templates: dict
    knowledge: dict = field(default_factory=dict)
    extra: list = field(default_factory=list)
    order: list = field(default_factory=list)
    kinds: dict = field(default_factory=dict)
    name: str = 'model'

    def variables(self):
        return all_template_vars(self.templates)

    def owner(self, variable):
        return variable_owner(self.templates)[variable]


@dataclass
class Extraction:
    variable: str
    agent: str
    knowledge: object
    table: dict            # observation key -> True | False | VACUOUS
    raw: object
    simplified: object
    holds_in_stage: bool = None

    def table_text(self, env):
        return {str(env.make_observation(self.agent, key)): value for key, value in self.table.items()}


@dataclass
class StageReport:
    index: int
    variables: list
    scheme: str
    components: int
    reachable_states: int
    extractions: dict = field(default_factory=dict)
    seconds: float = 0.0


@dataclass
class Verdict:
    name: str
    kind: str
    formula: str
    holds: bool
    witness: list = None

    def as_dict(self):
        return {'name': self.name, 'kind': self.kind, 'formula': self.formula,
                'holds': self.holds, 'witness': self.witness}


@dataclass
class SynthesisReport:
    scheme: str
    stages: list = field(default_factory=list)
    theta: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    soundness_violation: bool = False
    reachable_final: int = 0

    @property
    def verified(self):
        return all(v.holds for v in self.verdicts)


# ===== ORDER =====

def partition_order(variables, declarations):
    """Split the variables into the classes X_1 < ... < X_k of a total pre-order.

    Args:
        variables: template variable names
        declarations: list of (x, op, y) with op one of '<', '<=', '='
    """
    names = sorted(variables)
    known = set(names)
    le = {(x, x) for x in names}
    strict = []
    for x, op, y in declarations:
        for name in (x, y):
            if name not in known:
                raise UsageError(f"order mentions unknown template variable '{name}'")
        if op not in ('<', '<=', '='):
            raise UsageError(f"unknown order relation '{op}'")
        le.add((x, y))
        if op == '=':
            le.add((y, x))
        if op == '<':
            strict.append((x, y))

    for mid in names:
        for a in names:
            if (a, mid) not in le:
                continue
            for b in names:
                if (mid, b) in le:
                    le.add((a, b))

    for x, y in strict:
        if (y, x) in le:
            raise UsageError(f"order is inconsistent: {x} < {y} but also {y} <= {x}")
    for i, x in enumerate(names):
        for y in names[i + 1:]:
            if (x, y) not in le and (y, x) not in le:
                raise UsageError(f"order is not total: {x} and {y} are unrelated")

    classes = []
    placed = set()
    for x in names:
        if x in placed:
            continue
        group = {y for y in names if (x, y) in le and (y, x) in le}
        placed |= group
        classes.append(group)
    classes.sort(key=lambda group: sum(1 for y in names if (y, next(iter(group))) in le))
    return classes


# ===== EXTRACTION =====

def _interval(var, lo, hi, a, b):
    if a == lo and b == hi:
        return TRUE
    if a == b:
        return Atom(var, '=', a)
    if a == lo:
        return Atom(var, '<=', b)
    if b == hi:
        return Atom(var, '>=', a)
    return And(Atom(var, '>=', a), Atom(var, '<=', b))


def _box_cells(box):
    return itertools.product(*(range(lo, hi + 1) for lo, hi in box))


def _grow(box, dim, step, limit, truth):
    # widen one side of the box while the new slice stays entirely true
    while True:
        edge = box[dim][1] + 1 if step > 0 else box[dim][0] - 1
        if (step > 0 and edge > limit) or (step < 0 and edge < limit):
            return
        slab = [list(bounds) for bounds in box]
        slab[dim] = [edge, edge]
        if not all(truth(cell) for cell in _box_cells(slab)):
            return
        box[dim][1 if step > 0 else 0] = edge


def simplify_table(env, agent, table):
    """A local formula true exactly at the table's True observations.

    Vacuous and missing observations count as false. The true cells are
    covered greedily by maximal boxes over the observable domains, and each
    box becomes a conjunction of intervals.
    """
    obs_vars = env.obs_vars[agent]
    domains = [env.variables[env.index[var]] for var in obs_vars]

    def truth(key):
        return table.get(key) is True

    covered = set()
    boxes = []
    for key in sorted(k for k in table if truth(k)):
        if key in covered:
            continue
        box = [[value, value] for value in key]
        for dim, domain in enumerate(domains):
            _grow(box, dim, 1, domain.hi, truth)
            _grow(box, dim, -1, domain.lo, truth)
        covered.update(_box_cells(box))
        boxes.append(box)
    return disjoin(
        conjoin(_interval(var, domain.lo, domain.hi, lo, hi)
                for var, domain, (lo, hi) in zip(obs_vars, domains, box)
                if (lo, hi) != (domain.lo, domain.hi))
        for box in boxes)


def extract_local_formula(sys, agent, knowledge, variable=None):
    """Local formula for agent that holds exactly where knowledge holds in sys.

    Observations no reachable point carries are vacuous and map to false.
    """
    env = sys.env
    reached = knowledge_table(sys, agent, knowledge)
    space = env.observation_space(agent)
    full = len(space) <= MAX_TABLE_OBSERVATIONS
    if full:
        table = {key: reached.get(key, VACUOUS) for key in space}
    else:
        table = dict(reached)
    raw = disjoin(characteristic(env, agent, key) for key, value in table.items() if value is True)
    simplified = raw
    if full:
        candidate = simplify_table(env, agent, table)
        if _agrees(env, agent, candidate, table):
            simplified = candidate
    return Extraction(variable, agent, knowledge, table, raw, simplified)


def _agrees(env, agent, formula, table):
    test = compile_boolean(formula, env.obs_index(agent))
    return all(test(key, None) == (value is True) for key, value in table.items())


# ===== SYNTHESIS =====

def check_knowledge(spec, variables=None):
    """Raise unless every variable has an owned CTLK+ knowledge condition."""
    owners = variable_owner(spec.templates)
    for variable in (variables if variables is not None else spec.variables()):
        knowledge = spec.knowledge.get(variable)
        if knowledge is None:
            raise UsageError(f"template variable '{variable}' has no knowledge condition")
        if not isinstance(knowledge, K):
            raise UsageError(f"condition of '{variable}' must have the form K[i] psi")
        if owners.get(variable) != knowledge.agent:
            raise ClassificationError(
                f"'{variable}' belongs to {owners.get(variable)} but its condition is "
                f"knowledge of {knowledge.agent}")
        if not is_ctlk_plus(knowledge):
            raise RefusalError(
                f"condition of '{variable}' ({to_text(knowledge)}) has K or A under negation; "
                f"ordered synthesis needs positive formulas")


def synthesize(spec, scheme='top', budget=None, verbose=False):
    """Bind every template variable stage by stage and verify the result.

    Returns:
        (theta, SynthesisReport); a failed soundness check is flagged in the
        report, never raised
    """
    scheme = parse_scheme(scheme) if isinstance(scheme, str) else scheme
    budget = budget or Budget.from_config()
    check_knowledge(spec)
    classes = partition_order(spec.variables(), spec.order)
    report = SynthesisReport(str(scheme))
    theta = Substitution()

    for index, group in enumerate(classes, start=1):
        started = time.time()
        system = build_scheme(spec, theta, scheme, budget)
        stage = StageReport(index, sorted(group), str(scheme), len(system.components),
                            len(system.reachable_states()))
        bindings = {}
        for variable in sorted(group):
            knowledge = apply_substitution(spec.knowledge[variable], theta)
            unbound = sorted(template_vars(knowledge))
            if unbound:
                raise UsageError(
                    f"condition of '{variable}' uses {', '.join(unbound)}, which is not "
                    f"bound before it in the order")
            extraction = extract_local_formula(system, knowledge.agent, knowledge, variable)
            binding = extraction.simplified if SIMPLIFY_FORMULAS else extraction.raw
            extraction.holds_in_stage = models(system, AG(Iff(binding, knowledge)))
            bindings[variable] = binding
            stage.extractions[variable] = extraction
        theta = theta.extend(bindings)
        stage.seconds = time.time() - started
        report.stages.append(stage)
        if verbose:
            print(f"  ✓ Stage {index}: {', '.join(stage.variables)} "
                  f"({stage.reachable_states} reachable states)")
            for variable in stage.variables:
                print(f"      {variable} := {to_text(bindings[variable])}")

    report.theta = dict(theta.items())
    report.verdicts = verify_implementation(spec, theta)
    report.reachable_final = len(build_concrete(spec.env, spec.templates, theta).reachable_states())
    report.soundness_violation = not all(v.holds for v in report.verdicts if v.kind == 'soundness')
    if verbose and report.soundness_violation:
        print("  ❌ Soundness violation: a knowledge condition fails in the final system")
    return theta, report


def verify_implementation(spec, theta, kbp=False):
    """Check AG(x => kappa(x)) (and AG(x <=> kappa(x)) with kbp) plus the extra formulas."""
    missing = [name for name in spec.variables() if name not in theta]
    if missing:
        raise UsageError(f"substitution is not total, unbound: {', '.join(missing)}")
    system = build_concrete(spec.env, spec.templates, theta)
    checks = []
    for variable in sorted(spec.knowledge):
        knowledge = spec.knowledge[variable]
        checks.append((variable, 'soundness', AG(Implies(TVar(variable), knowledge))))
        if kbp:
            checks.append((variable, 'kbp', AG(Iff(TVar(variable), knowledge))))
    for number, formula in enumerate(spec.extra, start=1):
        checks.append((f"spec{number}", 'extra', formula))

    verdicts = []
    for name, kind, formula in checks:
        instantiated = apply_substitution(formula, theta)
        witness = find_witness(system, instantiated)
        verdicts.append(Verdict(
            name, kind, to_text(instantiated), witness is None,
            [spec.env.state_text(sid) for _, sid in witness] if witness else None))
    return verdicts


# ===== KBP =====

@dataclass
class KBPImplementation:
    theta: Substitution
    tables: dict  # variable -> {observation key: bool}


def substitution_from_tables(env, templates, tables):
    """Bind each variable to the disjunction of the observations its table marks true."""
    owners = variable_owner(templates)
    bindings = {}
    for variable, table in tables.items():
        if variable not in owners:
            raise UsageError(f"'{variable}' is not a template variable")
        agent = owners[variable]
        bindings[variable] = disjoin(
            characteristic(env, agent, key) for key, value in sorted(table.items()) if value is True)
    return Substitution(bindings)


def kbp_find(spec, budget=None):
    """All implementations of the knowledge-based program, as observation tables.

    Candidates are built lazily: the value of a variable is guessed only at the
    observations its owner actually meets in the candidate's own system, so
    each candidate is one table per variable over its reachable observations.
    """
    budget = budget or Budget.from_config()
    env = spec.env
    check_knowledge_shape(spec)
    variables = spec.variables()
    per_agent = {agent: sorted(spec.templates[agent].variables()) if agent in spec.templates else []
                 for agent in env.agents}
    guards = {
        agent: [(compile_boolean(clause.guard, env.index), clause.action)
                for clause in spec.templates[agent].clauses] if agent in spec.templates else []
        for agent in env.agents
    }
    candidates = [0]
    found = []

    def enabled(agent, sid, values):
        obs = env.obs_key(agent, sid)
        assignment = {name: values[(name, obs)] for name in per_agent[agent]}
        decoded = env.decode(sid)
        actions = sorted({action for guard, action in guards[agent] if guard(decoded, assignment)})
        return actions or [SKIP]

    def leaf(values):
        candidates[0] += 1
        if candidates[0] > budget.max_kbp_candidates:
            raise RefusalError(
                f"more than {budget.max_kbp_candidates} candidate substitutions; raise the kbp budget")
        tables = {name: {} for name in variables}
        for (name, obs), value in values.items():
            tables[name][obs] = value
        theta = substitution_from_tables(env, spec.templates, tables)
        system = build_concrete(env, spec.templates, theta)
        for variable in variables:
            condition = apply_substitution(AG(Iff(TVar(variable), spec.knowledge[variable])), theta)
            if not models(system, condition):
                return
        found.append(KBPImplementation(theta, {name: dict(sorted(t.items())) for name, t in tables.items()}))

    def search(pending, visited, values):
        while pending:
            sid = pending[0]
            for agent in env.agents:
                obs = env.obs_key(agent, sid)
                for name in per_agent[agent]:
                    if (name, obs) not in values:
                        for guess in (False, True):
                            search(pending, visited, {**values, (name, obs): guess})
                        return
            joints = itertools.product(*(enabled(agent, sid, values) for agent in env.agents))
            fresh = [t for t in sorted(env.post(sid, joints)) if t not in visited]
            visited = visited | set(fresh)
            pending = pending[1:] + tuple(fresh)
        leaf(values)

    search(tuple(env.initial), frozenset(env.initial), {})
    return found


def check_knowledge_shape(spec):
    """Like check_knowledge, without the positivity requirement (KBPs may be negative)."""
    owners = variable_owner(spec.templates)
    for variable in spec.variables():
        knowledge = spec.knowledge.get(variable)
        if knowledge is None:
            raise UsageError(f"template variable '{variable}' has no knowledge condition")
        if not isinstance(knowledge, K) or owners.get(variable) != knowledge.agent:
            raise ClassificationError(f"condition of '{variable}' is not knowledge of its owner")

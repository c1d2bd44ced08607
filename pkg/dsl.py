"""Model files (.eps): grammar, name resolution, expansion and generators.

A model is a list of line statements:

    agents A B
    var posA : 0..10
    obs A : sensA haltA
    actions A : Move Halt
    stutter A : Move Halt
    init: posA = 0 & ...
    rule [Move, _] when haltA = 0 : posA' in {posA, posA + 1}, sensA' in {posA' - 1, posA'}
    template A { !x -> Move ; x -> Halt }
    know x := K[A] (posA >= 2)
    spec AG (x => K[A] (posA >= 2))
    order x < y

Rules never match the all-skip joint action, which always loops. All rules
matching a joint action fire together; a variable updated by several of them
takes a value every one of them allows. When nothing fires the state loops
if every chosen action is skip or declared `stutter`, and has no successor
otherwise.
"""

import itertools
from dataclasses import dataclass, field
from pathlib import Path

from lark import Lark, Token, Tree
from lark.exceptions import UnexpectedInput

from config import ROBOT_LENGTH
from errors import ModelError, UsageError
from kernel import (
    SKIP,
    Clause,
    Environment,
    ProtocolTemplate,
    Variable,
    validate_environment,
    validate_templates,
)
from logic import (
    FORMULA_RULES,
    TRUE,
    FormulaBuilder,
    agents_of,
    classify_spec,
    compile_boolean,
    describe_parse_error,
    is_boolean,
    resolve_names,
    template_vars,
    to_text,
    variables_of,
)
from synth import EpistemicSpec

MODEL_RULES = r"""
start: statement*

?statement: agents_decl
    | var_decl
    | obs_decl
    | actions_decl
    | stutter_decl
    | init_decl
    | rule_decl
    | template_decl
    | know_decl
    | spec_decl
    | order_decl

agents_decl: "agents" NAME*
var_decl: "var" NAME ":" SIGNED_INT ".." SIGNED_INT
obs_decl: "obs" NAME ":" NAME*
actions_decl: "actions" NAME ":" NAME+
stutter_decl: "stutter" NAME ":" NAME+
init_decl: "init" ":" formula
rule_decl: "rule" "[" pattern ("," pattern)* "]" rule_guard ":" updates
rule_guard: ("when" formula)?
pattern: NAME | WILDCARD
updates: update ("," update)*
update: NAME PRIME "in" "{" value ("," value)* "}" update_condition
update_condition: ("if" formula)?
value: SIGNED_INT                 -> const_value
    | NAME                        -> ref_value
    | NAME PRIME                  -> primed_value
    | NAME ADD_OP INT             -> ref_offset_value
    | NAME PRIME ADD_OP INT       -> primed_offset_value
template_decl: "template" NAME "{" [clause (_SEP clause)* _SEP?] "}"
clause: formula "->" NAME
know_decl: "know" NAME ":=" formula
spec_decl: "spec" formula
order_decl: "order" NAME (ORDER_OP NAME)+

WILDCARD: "_"
PRIME: "'"
_SEP: ";" | "[]"
ORDER_OP: "<=" | "<" | "="
"""

_model_parser = Lark(MODEL_RULES + FORMULA_RULES, start='start', parser='lalr',
                     propagate_positions=True)


@dataclass(frozen=True)
class ValueExpr:
    """Constant (ref None, value in offset) or var / var' plus offset."""
    ref: str = None
    primed: bool = False
    offset: int = 0

    def text(self):
        if self.ref is None:
            return str(self.offset)
        name = self.ref + ("'" if self.primed else '')
        if self.offset > 0:
            return f"{name} + {self.offset}"
        if self.offset < 0:
            return f"{name} - {-self.offset}"
        return name


@dataclass(frozen=True)
class Update:
    var: str
    values: tuple
    condition: object = None


@dataclass(frozen=True)
class TransitionRule:
    pattern: tuple
    guard: object
    updates: tuple
    line: int = field(default=None, compare=False)

    def matches(self, joint):
        return all(p == '_' or p == a for p, a in zip(self.pattern, joint))


@dataclass
class ModelFile:
    agents: list
    variables: list
    obs: dict
    actions: dict
    stutter: dict
    init: object
    rules: list
    templates: dict
    knows: list
    specs: list
    order: list
    name: str = field(default='model', compare=False)
    spans: dict = field(default_factory=dict, compare=False)


# ===== PARSING =====

def _tokens(node):
    return [str(child) for child in node.children if isinstance(child, Token)]


def _line(node):
    return getattr(node.meta, 'line', None) if isinstance(node, Tree) else None


class _ModelBuilder:
    """Collects statements, then resolves names and reports every problem at once."""

    def __init__(self, name):
        self.name = name
        self.problems = []
        self.agents = []
        self.agents_line = None
        self.variables = []
        self.obs = {}
        self.actions = {}
        self.stutter = {}
        self.init = None
        self.rules = []
        self.templates = {}
        self.knows = []
        self.specs = []
        self.order = []
        self.spans = {}

    def problem(self, line, message):
        self.problems.append(f"line {line}: {message}" if line else message)

    def add(self, node):
        getattr(self, '_' + node.data)(node, _line(node))

    # ----- statements -----

    def _agents_decl(self, node, line):
        names = _tokens(node)
        if not names:
            self.problem(line, 'at least one agent must be declared')
        for name in names:
            if name in self.agents:
                self.problem(line, f"agent '{name}' declared twice")
            else:
                self.agents.append(name)
        self.agents_line = line

    def _var_decl(self, node, line):
        name, lo, hi = node.children
        lo, hi = int(lo), int(hi)
        if any(v.name == str(name) for v in self.variables):
            self.problem(line, f"variable '{name}' declared twice")
            return
        if lo > hi:
            self.problem(line, f"empty domain {lo}..{hi} for '{name}'")
            return
        self.variables.append(Variable(str(name), lo, hi))

    def _obs_decl(self, node, line):
        agent, *names = _tokens(node)
        if self._require_agent(agent, line):
            declared = {v.name for v in self.variables}
            for name in names:
                if name not in declared:
                    self.problem(line, f"unknown variable '{name}'")
            self.obs[agent] = names

    def _actions_decl(self, node, line):
        agent, *names = _tokens(node)
        if self._require_agent(agent, line):
            if len(set(names)) != len(names):
                self.problem(line, f"repeated action for {agent}")
            self.actions[agent] = names

    def _stutter_decl(self, node, line):
        agent, *names = _tokens(node)
        if self._require_agent(agent, line):
            for name in names:
                if name != SKIP and name not in self.actions.get(agent, []):
                    self.problem(line, f"unknown action '{name}' of {agent}")
            self.stutter[agent] = names

    def _init_decl(self, node, line):
        self.init = (node.children[0], line)

    def _rule_decl(self, node, line):
        patterns = [str(child.children[0]) for child in node.children
                    if isinstance(child, Tree) and child.data == 'pattern']
        guard_node = next(c for c in node.children if isinstance(c, Tree) and c.data == 'rule_guard')
        guard = guard_node.children[0] if guard_node.children else TRUE
        updates = []
        update_list = next(c for c in node.children if isinstance(c, Tree) and c.data == 'updates')
        for update in update_list.children:
            var = str(update.children[0])
            values = tuple(self._value(v) for v in update.children
                           if isinstance(v, Tree) and v.data.endswith('_value'))
            condition_node = update.children[-1]
            condition = condition_node.children[0] if condition_node.children else None
            updates.append(Update(var, values, condition))
        self.rules.append(TransitionRule(tuple(patterns), guard, tuple(updates), line))

    def _value(self, node):
        tokens = _tokens(node)
        if node.data == 'const_value':
            return ValueExpr(None, False, int(tokens[0]))
        primed = node.data.startswith('primed')
        offset = 0
        if node.data.endswith('offset_value'):
            amount = int(tokens[-1])
            offset = amount if tokens[-2] == '+' else -amount
        return ValueExpr(tokens[0], primed, offset)

    def _template_decl(self, node, line):
        agent = str(node.children[0])
        clauses = [Clause(child.children[0], str(child.children[1]))
                   for child in node.children[1:] if isinstance(child, Tree)]
        if self._require_agent(agent, line):
            if agent in self.templates:
                self.problem(line, f"second template for {agent}")
            self.templates[agent] = ProtocolTemplate(agent, tuple(clauses))
            self.spans[('template', agent)] = line

    def _know_decl(self, node, line):
        self.knows.append((str(node.children[0]), node.children[1], line))

    def _spec_decl(self, node, line):
        self.specs.append((node.children[0], line))

    def _order_decl(self, node, line):
        tokens = _tokens(node)
        for i in range(0, len(tokens) - 2, 2):
            self.order.append((tokens[i], tokens[i + 1], tokens[i + 2], line))

    def _require_agent(self, agent, line):
        if agent not in self.agents:
            self.problem(line, f"unknown agent '{agent}'")
            return False
        return True

    # ----- resolution -----

    def _resolve(self, formula, line, template_names=None, boolean=True):
        domains = {v.name: (v.lo, v.hi) for v in self.variables}
        try:
            resolved = resolve_names(formula, domains, template_names)
        except ModelError as e:
            for message in e.messages:
                self.problem(line, message)
            return formula
        for agent in sorted(agents_of(resolved)):
            if agent not in self.agents:
                self.problem(line, f"unknown agent '{agent}'")
        if boolean and not is_boolean(resolved):
            self.problem(line, f"'{to_text(resolved)}' must be a boolean formula")
        return resolved

    def finish(self):
        if self.agents_line is None:
            self.problem(None, 'at least one agent must be declared')
        for agent in self.agents:
            self.obs.setdefault(agent, [])
            self.actions.setdefault(agent, [])
            self.stutter.setdefault(agent, [])

        init = TRUE
        if self.init is not None:
            init = self._resolve(self.init[0], self.init[1], set())

        rules = []
        for rule in self.rules:
            if len(rule.pattern) != len(self.agents):
                self.problem(rule.line, f"rule pattern has {len(rule.pattern)} entries "
                                        f"for {len(self.agents)} agents")
            for agent, action in zip(self.agents, rule.pattern):
                if action not in ('_', SKIP) and action not in self.actions[agent]:
                    self.problem(rule.line, f"unknown action '{action}' of {agent}")
            guard = self._resolve(rule.guard, rule.line, set())
            updates = []
            declared = {v.name for v in self.variables}
            for update in rule.updates:
                for name in [update.var] + [v.ref for v in update.values if v.ref]:
                    if name not in declared:
                        self.problem(rule.line, f"unknown variable '{name}'")
                condition = None
                if update.condition is not None:
                    condition = self._resolve(update.condition, rule.line, set())
                updates.append(Update(update.var, update.values, condition))
            rules.append(TransitionRule(rule.pattern, guard, tuple(updates), rule.line))

        templates = {}
        for agent, template in self.templates.items():
            line = self.spans.get(('template', agent))
            clauses = []
            for clause in template.clauses:
                guard = self._resolve(clause.guard, line, None)
                outside = sorted(v for v in variables_of(guard) if v not in self.obs[agent])
                if outside:
                    self.problem(line, f"guard '{to_text(guard)}' of {agent} is not local: "
                                       f"{agent} does not observe {', '.join(outside)}")
                if clause.action != SKIP and clause.action not in self.actions[agent]:
                    self.problem(line, f"unknown action '{clause.action}' of {agent}")
                clauses.append(Clause(guard, clause.action))
            templates[agent] = ProtocolTemplate(agent, tuple(clauses))
        if templates:
            for agent in self.agents:
                if agent not in templates:
                    self.problem(self.agents_line, f"agent {agent} has no template")

        owners = {}
        for agent, template in templates.items():
            for name in template.variables():
                if name in owners:
                    self.problem(self.spans.get(('template', agent)),
                                 f"template variable '{name}' used by {owners[name]} and {agent}")
                owners.setdefault(name, agent)

        knows = []
        for name, formula, line in self.knows:
            if name not in owners:
                self.problem(line, f"'{name}' is not a template variable")
            knows.append((name, self._resolve(formula, line, set(owners), boolean=False)))
        specs = [self._resolve(formula, line, set(owners), boolean=False) for formula, line in self.specs]
        order = []
        for x, op, y, line in self.order:
            for name in (x, y):
                if name not in owners:
                    self.problem(line, f"'{name}' is not a template variable")
            order.append((x, op, y))

        if self.problems:
            raise ModelError(self.problems)
        return ModelFile(list(self.agents), list(self.variables), dict(self.obs), dict(self.actions),
                         dict(self.stutter), init, rules, templates, knows, specs, order,
                         name=self.name, spans=dict(self.spans))


def parse_model(text, name='model'):
    """Parse and resolve model text; all name errors are reported together."""
    try:
        tree = _model_parser.parse(text)
    except UnexpectedInput as e:
        raise ModelError(describe_parse_error(e))
    tree = FormulaBuilder().transform(tree)
    builder = _ModelBuilder(name)
    for statement in tree.children:
        builder.add(statement)
    return builder.finish()


def load_model(path):
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise UsageError(f"cannot read model {path}: {e.strerror}")
    return parse_model(text, name=path.stem)


# ===== PRINTING =====

def print_model(model):
    """Model text that parses back to an equal ModelFile."""
    lines = [f"agents {' '.join(model.agents)}"]
    for var in model.variables:
        lines.append(f"var {var.name} : {var.lo}..{var.hi}")
    for agent in model.agents:
        lines.append(f"obs {agent} : {' '.join(model.obs.get(agent, []))}".rstrip())
    for agent in model.agents:
        if model.actions.get(agent):
            lines.append(f"actions {agent} : {' '.join(model.actions[agent])}")
    for agent in model.agents:
        if model.stutter.get(agent):
            lines.append(f"stutter {agent} : {' '.join(model.stutter[agent])}")
    lines.append(f"init: {to_text(model.init)}")
    for rule in model.rules:
        head = f"rule [{', '.join(rule.pattern)}]"
        if rule.guard != TRUE:
            head += f" when {to_text(rule.guard)}"
        parts = []
        for update in rule.updates:
            text = f"{update.var}' in {{{', '.join(v.text() for v in update.values)}}}"
            if update.condition is not None:
                text += f" if {to_text(update.condition)}"
            parts.append(text)
        lines.append(f"{head} : {', '.join(parts)}")
    for agent in model.agents:
        template = model.templates.get(agent)
        if template is not None:
            body = ' ; '.join(str(clause) for clause in template.clauses)
            lines.append(f"template {agent} {{ {body} }}" if body else f"template {agent} {{ }}")
    for name, formula in model.knows:
        lines.append(f"know {name} := {to_text(formula)}")
    for formula in model.specs:
        lines.append(f"spec {to_text(formula)}")
    for x, op, y in model.order:
        lines.append(f"order {x} {op} {y}")
    return '\n'.join(lines) + '\n'


# ===== EXPANSION =====

class _CompiledRule:
    def __init__(self, rule, index):
        self.rule = rule
        self.guard = compile_boolean(rule.guard, index)
        self.updates = []
        for update in rule.updates:
            condition = compile_boolean(update.condition, index) if update.condition is not None else None
            self.updates.append((index[update.var], [_value_fn(v, index) for v in update.values], condition))


def _value_fn(expr, index):
    if expr.ref is None:
        constant = expr.offset
        return lambda values, new: constant
    position, offset = index[expr.ref], expr.offset
    if expr.primed:
        return lambda values, new: new.get(position, values[position]) + offset
    return lambda values, new: values[position] + offset


def make_step(model, variables, agents):
    """Transition function values x joint action -> successor valuations."""
    index = {var.name: i for i, var in enumerate(variables)}
    rules = [_CompiledRule(rule, index) for rule in model.rules]
    skip_all = tuple(SKIP for _ in agents)
    idle = {agent: set(model.stutter.get(agent, [])) | {SKIP} for agent in agents}

    def step(values, joint):
        if joint == skip_all:
            return [values]
        firing = [r for r in rules if r.rule.matches(joint) and r.guard(values, None)]
        if not firing:
            if all(action in idle[agent] for agent, action in zip(agents, joint)):
                return [values]
            return []
        updates = [u for r in firing for u in r.updates]
        results = []

        def assign(k, new):
            if k == len(updates):
                out = list(values)
                for position, value in new.items():
                    out[position] = value
                results.append(tuple(out))
                return
            position, fns, condition = updates[k]
            if condition is not None and not condition(values, None):
                assign(k + 1, new)
                return
            domain = variables[position]
            candidates = sorted({fn(values, new) for fn in fns} & set(range(domain.lo, domain.hi + 1)))
            if position in new:
                if new[position] in candidates:
                    assign(k + 1, new)
                return
            for value in candidates:
                assign(k + 1, {**new, position: value})

        assign(0, {})
        return results

    return step


def initial_valuations(model):
    """Every valuation of the declared domains satisfying init."""
    index = {var.name: i for i, var in enumerate(model.variables)}
    test = compile_boolean(model.init, index)
    domains = [range(var.lo, var.hi + 1) for var in model.variables]
    return [values for values in itertools.product(*domains) if test(values, None)]


def build_environment(model):
    """Environment of a parsed model, not yet validated."""
    variables = list(model.variables)
    return Environment(model.agents, variables, initial_valuations(model), model.actions,
                       model.obs, make_step(model, variables, model.agents), name=model.name)


def model_diagnostics(model, env=None, scope='reachable'):
    env = env or build_environment(model)
    return validate_environment(env, scope) + validate_templates(env, dict(model.templates))


def expand(model, scope='reachable'):
    """Environment, templates and specification of a parsed model.

    Args:
        model: ModelFile from parse_model
        scope: validation scope passed to validate_environment
    """
    env = build_environment(model)
    templates = dict(model.templates)
    problems = [d.message for d in model_diagnostics(model, env, scope)]
    if problems:
        raise ModelError(problems)

    knowledge = {}
    kinds = {}
    for name, formula in model.knows:
        knowledge[name] = formula
    extra = []
    for formula in model.specs:
        classified = classify_spec(formula, templates)
        if classified.kind == 'general':
            extra.append(formula)
            continue
        variable = classified.variable
        kinds[variable] = classified.kind
        if variable not in knowledge:
            knowledge[variable] = classified.knowledge
        elif knowledge[variable] != classified.knowledge:
            raise ModelError(f"spec for '{variable}' disagrees with its know binding")
    for variable, formula in knowledge.items():
        kinds.setdefault(variable, 'slp-sound')
        if variable in template_vars(formula):
            raise ModelError(f"condition of '{variable}' mentions '{variable}' itself")
    return EpistemicSpec(env, templates, knowledge, extra, list(model.order), kinds, model.name)


# ===== GENERATORS =====

PICNIC_TEXT = """\
# Alice (A) and Bob (B) each bring wine (w) or cheese (c) to a picnic
agents A B
var start : 0..1
var w : 0..1
var c : 0..1
obs A : start w c
obs B : start w c
actions A : w c p
actions B : w c p
stutter A : w c p
stutter B : w c p
init: start & !w & !c
rule [w, w] when start : start' in {0}, w' in {1}
rule [w, c] when start : start' in {0}, w' in {1}, c' in {1}
rule [c, w] when start : start' in {0}, w' in {1}, c' in {1}
rule [c, c] when start : start' in {0}, c' in {1}
template A { start & x_A -> c ; start & !x_A -> w ; !start -> p }
template B { start & x_B -> c ; start & !x_B -> w ; !start -> p }
know x_A := K[A] AX w
know x_B := K[B] AX w
spec AG (x_A => K[A] AX w)
spec AG (x_B => K[B] AX w)
spec AG (start => AX (w & c))
order x_A < x_B
"""


def gen_picnic():
    return parse_model(PICNIC_TEXT, name='picnic')


def robot_text(error=1, length=ROBOT_LENGTH):
    if error not in (0, 1):
        raise UsageError('sensor error must be 0 or 1')
    if length < 4:
        raise UsageError('track length must be at least 4')
    if error:
        sens_a = "{posA' - 1, posA', posA' + 1}"
        sens_b = "{posB' - 1, posB', posB' + 1}"
    else:
        sens_a, sens_b = "{posA'}", "{posB'}"
    arrow = '=>' if error else '<=>'
    safe = ' & '.join(f"(posB = {p} => AG (posA <= {p - 2}))" for p in range(length + 1))
    lines = [
        f"# Two robots on a track 0..{length}, sensors within {error} of the position",
        "agents A B",
        f"var posA : 0..{length}",
        f"var sensA : 0..{length}",
        "var haltA : 0..1",
        f"var posB : 0..{length}",
        f"var sensB : 0..{length}",
        "var haltB : 0..1",
        "obs A : sensA haltA",
        "obs B : sensB haltB",
        "actions A : Move Halt",
        "actions B : Move Halt",
        "stutter A : Move Halt",
        "stutter B : Move Halt",
        f"init: posA = 0 & sensA <= {error} & !haltA & posB = {length} "
        f"& sensB >= {length - error} & !haltB",
        f"rule [Move, _] when !haltA : posA' in {{posA, posA + 1}}, sensA' in {sens_a}",
        "rule [Halt, _] when !haltA : haltA' in {1}",
        f"rule [_, Move] when !haltB : posB' in {{posB, posB - 1}}, sensB' in {sens_b}",
        "rule [_, Halt] when !haltB : haltB' in {1}",
        "template A { !x -> Move ; x -> Halt }",
        "template B { y -> Move ; !y -> Halt }",
        "know x := K[A] (posA >= 2)",
        f"know y := K[B] ({safe})",
        f"spec AG (x {arrow} K[A] (posA >= 2))",
        f"spec AG (y {arrow} K[B] ({safe}))",
    ]
    # halting bands below hold once B starts at 8 or beyond
    if error and length >= 8:
        lines += [
            "spec AG (posA <= 4)",
            "spec AG (haltA = 1 => posA >= 2)",
            "spec AG (posA < posB)",
            "spec AG (haltB = 1 => posB >= 5 & posB <= 7)",
            "spec EF (haltA = 1 & posA = 2)",
            "spec EF (haltB = 1 & posB = 5)",
        ]
    lines.append("order x < y")
    return '\n'.join(lines) + '\n'


def gen_robot(error=1, length=ROBOT_LENGTH):
    return parse_model(robot_text(error, length), name=f"robot{'' if error else '0'}")


TOP_NSC_TEXT = """\
# One blind agent; the top strategy offers both a and b at s = 0
agents A
var s : 0..2
obs A :
actions A : a b
stutter A : a b
init: s = 0
rule [a] when s = 0 : s' in {1}
rule [b] when s = 0 : s' in {2}
template A { x -> a ; !x -> b }
know x := K[A] AX (s = 1)
spec AG (x => K[A] AX (s = 1))
"""


def gen_top_nsc():
    return parse_model(TOP_NSC_TEXT, name='topnsc')


BLIND_TEXT = """\
# A blind agent that acts exactly when it knows nothing will ever change
agents A
var p : 0..1
obs A :
actions A : a
stutter A : a
init: !p
rule [a] when !p : p' in {1}
template A { x -> a }
know x := K[A] AG !p
spec AG (x <=> K[A] AG !p)
"""


def gen_blind():
    return parse_model(BLIND_TEXT, name='blind')

"""CTLK formulas: syntax tree, text grammar, printer, polarity and substitution.

Bare names in formula text parse as template variables; `resolve_names` turns
names of declared 0..1 variables into `v = 1` atoms once the model is known.
F and G are stored as their until/release forms (AF p is A[true U p]).
"""

import operator
from dataclasses import dataclass
from typing import Union

from lark import Lark, Transformer
from lark.exceptions import UnexpectedInput

from errors import ClassificationError, ModelError, UsageError


class Formula:
    """Base class of all formula nodes."""

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Const(Formula):
    value: bool


@dataclass(frozen=True)
class Atom(Formula):
    """Comparison `var op rhs (+ offset)`; rhs is an int or a variable name."""
    var: str
    op: str
    rhs: Union[int, str]
    offset: int = 0


@dataclass(frozen=True)
class TVar(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Iff(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class AX(Formula):
    arg: Formula


@dataclass(frozen=True)
class EX(Formula):
    arg: Formula


@dataclass(frozen=True)
class AU(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class EU(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class AR(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class ER(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class K(Formula):
    agent: str
    arg: Formula


TRUE = Const(True)
FALSE = Const(False)

BOOLEAN_NODES = (Const, Atom, TVar, Not, And, Or, Implies, Iff)
UNARY_NODES = (Not, AX, EX, K)
BINARY_NODES = (And, Or, Implies, Iff, AU, EU, AR, ER)


def AF(arg):
    return AU(TRUE, arg)


def EF(arg):
    return EU(TRUE, arg)


def AG(arg):
    return AR(FALSE, arg)


def EG(arg):
    return ER(FALSE, arg)


def conjoin(parts):
    """Left-nested conjunction; the empty conjunction is true."""
    parts = list(parts)
    if not parts:
        return TRUE
    result = parts[0]
    for part in parts[1:]:
        result = And(result, part)
    return result


def disjoin(parts):
    parts = list(parts)
    if not parts:
        return FALSE
    result = parts[0]
    for part in parts[1:]:
        result = Or(result, part)
    return result


@dataclass(frozen=True)
class SpecFormula:
    """A specification formula with its recognised shape.

    kind is 'slp-sound' for AG(x => K_i psi), 'kbp' for AG(x <=> K_i psi),
    'general' otherwise; knowledge is the K_i psi part when there is one.
    """
    kind: str
    body: Formula
    variable: str = None
    knowledge: Formula = None

    @property
    def agent(self):
        return self.knowledge.agent if self.knowledge is not None else None


# ===== TEXT GRAMMAR =====

# Shared with the model grammar in dsl.py
FORMULA_RULES = r"""
?formula: iff

?iff: implies
    | implies _IFF iff                          -> iff
?implies: disj
    | disj _IMP implies                         -> implies
?disj: conj
    | disj "|" conj                             -> or_
?conj: unary
    | conj "&" unary                            -> and_
?unary: primary
    | "!" unary                                 -> not_
    | TEMPORAL unary                            -> temporal
    | _KNOW "[" NAME "]" unary                  -> know
?primary: "(" formula ")"
    | _ALL "[" formula _UNTIL formula "]"       -> all_until
    | _ALL "[" formula _RELEASE formula "]"     -> all_release
    | _EXISTS "[" formula _UNTIL formula "]"    -> exists_until
    | _EXISTS "[" formula _RELEASE formula "]"  -> exists_release
    | _TRUE                                     -> true
    | _FALSE                                    -> false
    | NAME CMP term                             -> atom
    | NAME                                      -> name
term: SIGNED_INT                                -> const_term
    | NAME                                      -> var_term
    | NAME ADD_OP INT                           -> offset_term

_IFF.2: "<=>"
_IMP.2: "=>"
CMP: "<=" | ">=" | "!=" | "=" | "<" | ">"
ADD_OP: "+" | "-"
_ALL.3: /A(?=\s*\[)/
_EXISTS.3: /E(?=\s*\[)/
_KNOW.3: /K(?=\s*\[)/
TEMPORAL.2: /(AX|EX|AF|EF|AG|EG)\b/
_UNTIL.2: /U\b/
_RELEASE.2: /R\b/
_TRUE.2: /true\b/
_FALSE.2: /false\b/
NAME: /(?!(?:AX|EX|AF|EF|AG|EG|U|R|true|false)\b)[A-Za-z][A-Za-z0-9_]*/
COMMENT: /#[^\n]*/

%import common.INT
%import common.SIGNED_INT
%import common.WS
%ignore WS
%ignore COMMENT
"""

_TEMPORAL = {'AX': AX, 'EX': EX, 'AF': AF, 'EF': EF, 'AG': AG, 'EG': EG}


class FormulaBuilder(Transformer):
    """Turns parse trees of the formula rules into Formula nodes."""

    def iff(self, items):
        return Iff(items[0], items[1])

    def implies(self, items):
        return Implies(items[0], items[1])

    def or_(self, items):
        return Or(items[0], items[1])

    def and_(self, items):
        return And(items[0], items[1])

    def not_(self, items):
        return Not(items[0])

    def temporal(self, items):
        return _TEMPORAL[str(items[0])](items[1])

    def know(self, items):
        return K(str(items[0]), items[1])

    def all_until(self, items):
        return AU(items[0], items[1])

    def all_release(self, items):
        return AR(items[0], items[1])

    def exists_until(self, items):
        return EU(items[0], items[1])

    def exists_release(self, items):
        return ER(items[0], items[1])

    def true(self, items):
        return TRUE

    def false(self, items):
        return FALSE

    def atom(self, items):
        name, cmp, (rhs, offset) = items
        return Atom(str(name), str(cmp), rhs, offset)

    def name(self, items):
        return TVar(str(items[0]))

    def const_term(self, items):
        return int(items[0]), 0

    def var_term(self, items):
        return str(items[0]), 0

    def offset_term(self, items):
        name, op, value = items
        amount = int(value)
        return str(name), (amount if str(op) == '+' else -amount)


_parser = Lark(FORMULA_RULES, start='formula', parser='lalr')


def describe_parse_error(error):
    """One positioned message for a lark parse failure."""
    line = getattr(error, 'line', -1)
    column = getattr(error, 'column', -1)
    token = getattr(error, 'token', None)
    if token is not None and str(token):
        found = f"unexpected '{token}'"
    elif getattr(error, 'char', None):
        found = f"unexpected character '{error.char}'"
    else:
        found = 'unexpected end of input'
    if line is None or line < 0:
        return f"syntax error: {found}"
    return f"line {line}, column {column}: syntax error: {found}"


def parse_formula(text, variables=None, template_vars=None):
    """Parse formula text into a Formula.

    Args:
        text: formula in the CTLK text grammar
        variables: optional {name: (lo, hi)} of environment variables; when
            given, names are resolved (see resolve_names)
        template_vars: optional set of template variable names used for resolution
    """
    try:
        tree = _parser.parse(text)
    except UnexpectedInput as e:
        raise ModelError(describe_parse_error(e))
    formula = FormulaBuilder().transform(tree)
    if variables is not None:
        formula = resolve_names(formula, variables, template_vars)
    return formula


def resolve_names(formula, variables, template_vars=None):
    """Resolve bare names against declared variables and template variables.

    A bare name of a declared 0..1 variable becomes `v = 1`; a declared
    template variable stays a TVar. Atoms must mention declared variables.
    When template_vars is None every undeclared bare name is kept as a TVar.
    """
    problems = []

    def visit(node):
        if isinstance(node, TVar):
            if node.name in variables:
                lo, hi = variables[node.name]
                if (lo, hi) != (0, 1):
                    problems.append(f"'{node.name}' is not boolean; compare it with a value")
                    return node
                return Atom(node.name, '=', 1)
            if template_vars is not None and node.name not in template_vars:
                problems.append(f"unknown name '{node.name}'")
            return node
        if isinstance(node, Atom):
            for name in atom_variables(node):
                if name not in variables:
                    problems.append(f"unknown variable '{name}'")
            return node
        return map_children(node, visit)

    resolved = visit(formula)
    if problems:
        raise ModelError(sorted(set(problems)))
    return resolved


# ===== PRINTER =====

_PREC = {Iff: 1, Implies: 2, Or: 3, And: 4}
_SYMBOL = {Iff: '<=>', Implies: '=>', Or: '|', And: '&'}
_RIGHT_ASSOC = (Iff, Implies)
_UNARY_PREC = 5


def _term_text(atom):
    if isinstance(atom.rhs, int):
        return str(atom.rhs)
    if atom.offset > 0:
        return f"{atom.rhs} + {atom.offset}"
    if atom.offset < 0:
        return f"{atom.rhs} - {-atom.offset}"
    return atom.rhs


def to_text(formula, context=0):
    """Render a formula in the concrete grammar (parses back to the same tree)."""
    node = formula
    if isinstance(node, Const):
        return 'true' if node.value else 'false'
    if isinstance(node, TVar):
        return node.name
    if isinstance(node, Atom):
        return f"{node.var} {node.op} {_term_text(node)}"
    if isinstance(node, (And, Or, Implies, Iff)):
        prec = _PREC[type(node)]
        if isinstance(node, _RIGHT_ASSOC):
            left = to_text(node.left, prec + 1)
            right = to_text(node.right, prec)
        else:
            left = to_text(node.left, prec)
            right = to_text(node.right, prec + 1)
        text = f"{left} {_SYMBOL[type(node)]} {right}"
        return f"({text})" if prec < context else text
    if isinstance(node, Not):
        text = '!' + to_text(node.arg, _UNARY_PREC)
    elif isinstance(node, K):
        text = f"K[{node.agent}] " + to_text(node.arg, _UNARY_PREC)
    elif isinstance(node, (AX, EX)):
        text = f"{type(node).__name__} " + to_text(node.arg, _UNARY_PREC)
    elif isinstance(node, (AU, EU)) and node.left == TRUE:
        text = f"{type(node).__name__[0]}F " + to_text(node.right, _UNARY_PREC)
    elif isinstance(node, (AR, ER)) and node.left == FALSE:
        text = f"{type(node).__name__[0]}G " + to_text(node.right, _UNARY_PREC)
    elif isinstance(node, (AU, EU, AR, ER)):
        quantifier, operator_ = type(node).__name__
        # bracketed forms are atomic, no parentheses needed around them
        return f"{quantifier}[{to_text(node.left)} {operator_} {to_text(node.right)}]"
    else:
        raise UsageError(f"cannot print {node!r}")
    return f"({text})" if _UNARY_PREC < context else text


# ===== TREE UTILITIES =====

def map_children(node, fn):
    """Rebuild a node with fn applied to its direct subformulas."""
    if isinstance(node, (Const, Atom, TVar)):
        return node
    if isinstance(node, K):
        return K(node.agent, fn(node.arg))
    if isinstance(node, UNARY_NODES):
        return type(node)(fn(node.arg))
    return type(node)(fn(node.left), fn(node.right))


def children(node):
    if isinstance(node, (Const, Atom, TVar)):
        return ()
    if isinstance(node, UNARY_NODES):
        return (node.arg,)
    return (node.left, node.right)


def subformulas(formula):
    """All subformulas, children before parents."""
    seen = []
    stack = [(formula, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            seen.append(node)
            continue
        stack.append((node, True))
        for child in reversed(children(node)):
            stack.append((child, False))
    return seen


def atom_variables(atom):
    names = [atom.var]
    if isinstance(atom.rhs, str):
        names.append(atom.rhs)
    return names


def variables_of(formula):
    names = set()
    for node in subformulas(formula):
        if isinstance(node, Atom):
            names.update(atom_variables(node))
    return names


def template_vars(formula):
    return {node.name for node in subformulas(formula) if isinstance(node, TVar)}


def agents_of(formula):
    return {node.agent for node in subformulas(formula) if isinstance(node, K)}


def is_boolean(formula):
    return all(isinstance(node, BOOLEAN_NODES) for node in subformulas(formula))


def desugar(formula):
    """Remove Implies and Iff, leaving Not/And/Or."""
    def visit(node):
        if isinstance(node, Implies):
            return Or(Not(visit(node.left)), visit(node.right))
        if isinstance(node, Iff):
            left, right = visit(node.left), visit(node.right)
            return And(Or(Not(left), right), Or(left, Not(right)))
        return map_children(node, visit)
    return visit(formula)


def is_ctlk_plus(formula):
    """True iff every A-modality and K occurs positively (E only negatively).

    Polarity is tracked on the desugared tree, so `p => AG q` qualifies while
    `!K[i] p` and `x <=> K[i] p` do not.
    """
    def positive(node, polarity):
        if isinstance(node, (Const, Atom, TVar)):
            return True
        if isinstance(node, Not):
            return positive(node.arg, not polarity)
        if isinstance(node, (AX, AU, AR, K)) and not polarity:
            return False
        if isinstance(node, (EX, EU, ER)) and polarity:
            return False
        return all(positive(child, polarity) for child in children(node))
    return positive(desugar(formula), True)


def apply_substitution(formula, theta):
    """Replace every bound template variable by its formula.

    Unbound template variables stay in place; see unbound_template_vars.
    """
    if not theta:
        return formula

    def visit(node):
        if isinstance(node, TVar):
            return theta.get(node.name, node)
        return map_children(node, visit)
    return visit(formula)


def unbound_template_vars(formula, theta):
    return sorted(name for name in template_vars(formula) if name not in theta)


def classify_spec(formula, templates):
    """Recognise AG(x => K_i psi) and AG(x <=> K_i psi) specification shapes.

    Args:
        formula: parsed specification formula
        templates: {agent: ProtocolTemplate}, used to find the owner of x
    """
    owners = {}
    for agent, template in templates.items():
        for name in template.variables():
            owners[name] = agent

    if isinstance(formula, AR) and formula.left == FALSE:
        body = formula.right
        if isinstance(body, (Implies, Iff)) and isinstance(body.left, TVar) \
                and isinstance(body.right, K):
            variable = body.left.name
            knowledge = body.right
            if variable not in owners:
                raise ClassificationError(f"'{variable}' is not a template variable")
            if owners[variable] != knowledge.agent:
                raise ClassificationError(
                    f"'{variable}' belongs to {owners[variable]} but is bound to "
                    f"knowledge of {knowledge.agent}")
            kind = 'slp-sound' if isinstance(body, Implies) else 'kbp'
            return SpecFormula(kind, formula, variable, knowledge)
    return SpecFormula('general', formula)


# ===== EVALUATION =====

_OPS = {
    '=': operator.eq,
    '!=': operator.ne,
    '<': operator.lt,
    '<=': operator.le,
    '>': operator.gt,
    '>=': operator.ge,
}


def compile_boolean(formula, index):
    """Compile a boolean formula to fn(values, assignment) -> bool.

    Args:
        formula: formula made of Const/Atom/TVar and connectives only
        index: {variable name: position in the values tuple}
    """
    node = formula
    if isinstance(node, Const):
        value = node.value
        return lambda values, assignment: value
    if isinstance(node, Atom):
        op = _OPS[node.op]
        try:
            left = index[node.var]
            if isinstance(node.rhs, str):
                right, offset = index[node.rhs], node.offset
                return lambda values, assignment: op(values[left], values[right] + offset)
        except KeyError as e:
            raise UsageError(f"unknown variable {e.args[0]!r}")
        constant = node.rhs + node.offset
        return lambda values, assignment: op(values[left], constant)
    if isinstance(node, TVar):
        name = node.name

        def lookup(values, assignment):
            try:
                return assignment[name]
            except (KeyError, TypeError):
                raise UsageError(f"template variable '{name}' is unbound")
        return lookup
    if isinstance(node, Not):
        inner = compile_boolean(node.arg, index)
        return lambda values, assignment: not inner(values, assignment)
    if isinstance(node, (And, Or, Implies, Iff)):
        left = compile_boolean(node.left, index)
        right = compile_boolean(node.right, index)
        if isinstance(node, And):
            return lambda values, assignment: left(values, assignment) and right(values, assignment)
        if isinstance(node, Or):
            return lambda values, assignment: left(values, assignment) or right(values, assignment)
        if isinstance(node, Implies):
            return lambda values, assignment: (not left(values, assignment)) or right(values, assignment)
        return lambda values, assignment: left(values, assignment) == right(values, assignment)
    raise UsageError(f"'{to_text(formula)}' is not a boolean formula")

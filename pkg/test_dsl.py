"""Model files: parsing, positioned errors, transition rules and expansion."""

import pytest

from conftest import MODELS
from dsl import (
    build_environment,
    expand,
    gen_blind,
    gen_picnic,
    gen_robot,
    gen_top_nsc,
    load_model,
    make_step,
    model_diagnostics,
    parse_model,
    print_model,
    robot_text,
)
from errors import ModelError, UsageError
from kernel import SKIP, validate_environment

GENERATORS = {
    'picnic': gen_picnic,
    'robot': lambda: gen_robot(1),
    'robot0': lambda: gen_robot(0),
    'topnsc': gen_top_nsc,
    'blind': gen_blind,
}


def problems_of(text):
    with pytest.raises(ModelError) as info:
        parse_model(text)
    return info.value.messages


class TestShippedModels:
    @pytest.mark.parametrize('name', sorted(GENERATORS))
    def test_file_matches_generator(self, name):
        assert load_model(MODELS / f'{name}.eps') == GENERATORS[name]()

    @pytest.mark.parametrize('name', sorted(GENERATORS))
    def test_printed_model_parses_back(self, name):
        model = GENERATORS[name]()
        assert parse_model(print_model(model)) == model

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError):
            load_model(tmp_path / 'nowhere.eps')

    def test_template_separators(self):
        semicolons = parse_model('agents A\nactions A : a b\ntemplate A { x -> a ; !x -> b }\n')
        boxes = parse_model('agents A\nactions A : a b\ntemplate A { x -> a [] !x -> b }\n')
        assert semicolons == boxes


class TestRobotText:
    def test_arguments(self):
        with pytest.raises(UsageError):
            robot_text(2)
        with pytest.raises(UsageError):
            robot_text(1, 3)

    def test_short_track_has_no_band_specs(self):
        assert len(gen_robot(1, 6).specs) == 2
        assert len(gen_robot(1).specs) == 8

    def test_exact_sensors_use_biconditionals(self):
        assert 'x <=> K[A]' in robot_text(0)
        assert 'x => K[A]' in robot_text(1)

    @pytest.mark.parametrize('error', [0, 1])
    @pytest.mark.parametrize('length', [4, 5, 7, 10])
    def test_every_track_is_well_formed(self, error, length):
        env = build_environment(gen_robot(error, length))
        assert validate_environment(env, scope='reachable') == []


class TestErrors:
    def test_unknown_agent(self):
        assert problems_of('agents A\nvar n : 0..1\nobs B : n\n') == ["line 3: unknown agent 'B'"]

    def test_unknown_variable(self):
        assert problems_of('agents A\nobs A : m\n') == ["line 2: unknown variable 'm'"]

    def test_all_problems_are_reported(self):
        messages = problems_of('agents A\nobs A : m\nactions B : a\n')
        assert messages == ["line 2: unknown variable 'm'", "line 3: unknown agent 'B'"]

    def test_guard_must_be_local(self):
        text = 'agents A\nvar n : 0..1\nvar h : 0..1\nobs A : n\nactions A : a\ntemplate A { h = 1 -> a }\n'
        (message,) = problems_of(text)
        assert message.startswith('line 6:') and 'not local' in message

    def test_every_agent_needs_a_template(self):
        text = 'agents A B\nactions A : a\ntemplate A { x -> a }\n'
        assert problems_of(text) == ['line 1: agent B has no template']

    def test_template_variable_is_not_shared(self):
        text = 'agents A B\nactions A : a\nactions B : b\ntemplate A { x -> a }\ntemplate B { x -> b }\n'
        (message,) = problems_of(text)
        assert "'x' used by A and B" in message

    def test_rule_arity(self):
        text = "agents A B\nvar n : 0..1\nactions A : a\nrule [a] : n' in {1}\n"
        assert problems_of(text) == ['line 4: rule pattern has 1 entries for 2 agents']

    def test_syntax_error_is_positioned(self):
        (message,) = problems_of('agents A\nvar n 0..1\n')
        assert message.startswith('line 2')

    def test_no_agents(self):
        assert problems_of('var n : 0..1\n') == ['at least one agent must be declared']


RULES = """\
agents A B
var n : 0..3
var m : 0..1
obs A : n m
obs B : n m
actions A : inc
actions B : inc set
stutter A : inc
init: n = 0 & m = 0
rule [inc, _] when n <= 1 : n' in {n + 1, n + 2}
rule [_, inc] when n <= 2 : n' in {n + 1}
rule [_, set] : m' in {1} if n = 0
"""


class TestRules:
    @pytest.fixture
    def step(self):
        model = parse_model(RULES)
        return make_step(model, model.variables, model.agents)

    def test_single_rule_is_nondeterministic(self, step):
        assert step((0, 0), ('inc', SKIP)) == [(1, 0), (2, 0)]

    def test_matching_rules_intersect(self, step):
        assert step((0, 0), ('inc', 'inc')) == [(1, 0)]
        assert step((2, 0), ('inc', 'inc')) == [(3, 0)]

    def test_independent_updates_combine(self, step):
        assert step((0, 0), ('inc', 'set')) == [(1, 1), (2, 1)]

    def test_update_condition(self, step):
        assert step((0, 0), (SKIP, 'set')) == [(0, 1)]
        assert step((1, 0), (SKIP, 'set')) == [(1, 0)]

    def test_stutter_and_stuck(self, step):
        assert step((3, 0), ('inc', SKIP)) == [(3, 0)]
        assert step((3, 0), (SKIP, 'inc')) == []
        assert step((3, 1), (SKIP, SKIP)) == [(3, 1)]

    def test_offsets_from_current_value(self, step):
        assert step((1, 0), ('inc', SKIP)) == [(2, 0), (3, 0)]


LEAKY = """\
agents A
var n : 0..1
obs A : n
actions A : go
init: n = 0
rule [go] : n' in {n + 1}
template A { x -> go }
know x := K[A] (n = 1)
"""


class TestExpand:
    def test_picnic(self):
        spec = expand(gen_picnic())
        assert spec.kinds == {'x_A': 'slp-sound', 'x_B': 'slp-sound'}
        assert len(spec.extra) == 1
        assert spec.order == [('x_A', '<', 'x_B')]
        assert spec.owner('x_B') == 'B'

    def test_biconditional_is_a_kbp(self):
        assert expand(gen_blind()).kinds == {'x': 'kbp'}

    def test_diagnostics_stop_expansion(self):
        model = parse_model(LEAKY)
        assert [d.kind for d in model_diagnostics(model)] == ['seriality']
        with pytest.raises(ModelError):
            expand(model)

    def test_spec_must_agree_with_know(self):
        model = parse_model(LEAKY.replace("n' in {n + 1}", "n' in {1}") + 'spec AG (x => K[A] (n = 0))\n')
        with pytest.raises(ModelError) as info:
            expand(model)
        assert 'disagrees' in str(info.value)

    def test_condition_cannot_mention_itself(self):
        model = parse_model(LEAKY.replace("n' in {n + 1}", "n' in {1}").replace('K[A] (n = 1)', 'K[A] x'))
        with pytest.raises(ModelError):
            expand(model)

    @pytest.mark.parametrize('name', ['picnic', 'robot0', 'topnsc', 'blind'])
    def test_expansion_is_deterministic(self, name):
        first, second = expand(GENERATORS[name]()), expand(GENERATORS[name]())
        assert first.env.initial == second.env.initial
        assert first.env.reachable_states() == second.env.reachable_states()
        assert first.templates == second.templates
        assert first.knowledge == second.knowledge
        for sid in first.env.reachable_states():
            for joint in first.env.joint_actions():
                assert first.env.successors(sid, joint) == second.env.successors(sid, joint)

"""Environments, observations, templates and substitutions."""

import pytest

from errors import UsageError
from kernel import (
    SKIP,
    Clause,
    Environment,
    ProtocolTemplate,
    Substitution,
    Variable,
    bottom_substitution,
    characteristic,
    check_completeness,
    completions,
    enabled_actions,
    guard_satisfiable,
    joint_enabled,
    locality_check,
    observation,
    validate_environment,
    validate_substitution,
    validate_templates,
    variable_owner,
)
from logic import FALSE, TRUE, And, Atom, TVar, parse_formula


class TestEnvironment:
    def test_encoding_is_mixed_radix(self, picnic):
        env = picnic.env
        assert env.var_names == ('start', 'w', 'c')
        assert env.state_count == 8
        assert env.encode((1, 0, 0)) == 4
        assert env.decode(6) == (1, 1, 0)
        assert env.initial == (4,)
        for sid in env.states():
            assert env.encode(env.decode(sid)) == sid

    def test_skip_is_added(self, counter_env):
        assert counter_env.actions['A'] == ('inc', 'reset', SKIP)

    def test_successors(self, counter_env):
        assert counter_env.successors(0, ('inc',)) == (1,)
        assert counter_env.successors(2, ('inc',)) == (2,)
        assert counter_env.successors(2, ('reset',)) == (0,)
        assert counter_env.post(1) == {0, 1, 2}
        assert counter_env.reachable_states() == [0, 1, 2]

    def test_unknown_state_and_agent(self, counter_env):
        with pytest.raises(UsageError):
            counter_env.decode(3)
        with pytest.raises(UsageError):
            counter_env.require_agent('Z')
        with pytest.raises(UsageError):
            counter_env.encode((5,))

    def test_observes_undeclared_variable(self):
        with pytest.raises(UsageError):
            Environment(['A'], [Variable('n', 0, 1)], [(0,)], {}, {'A': ['m']}, lambda v, j: [v])

    def test_from_table(self):
        env = Environment.from_table(
            ['A'], [Variable('s', 0, 1)], [(0,)], {'A': ['go']}, {'A': []},
            {((0,), ('go',)): [(1,)], ((0,), (SKIP,)): [(0,)],
             ((1,), ('go',)): [(1,)], ((1,), (SKIP,)): [(1,)]})
        assert env.post(0) == {0, 1}
        assert validate_environment(env) == []


class TestObservations:
    def test_observation_restricts_valuation(self, robot):
        env = robot.env
        sid = env.encode((3, 2, 0, 9, 10, 1))
        obs = observation(env, 'A', sid)
        assert obs.key == (2, 0)
        assert obs.as_dict() == {'sensA': 2, 'haltA': 0}
        assert str(obs) == 'sensA=2, haltA=0'
        assert observation(env, 'B', sid).key == (10, 1)

    def test_blind_observation(self, counter_env):
        assert str(observation(counter_env, 'A', 2)) == '(nothing)'

    def test_characteristic(self, picnic):
        env = picnic.env
        formula = characteristic(env, 'A', (1, 0, 0))
        assert formula == parse_formula('start = 1 & w = 0 & c = 0')

    def test_completeness(self, picnic, counter_env):
        assert check_completeness(picnic.env, 'A')
        assert check_completeness(counter_env, 'A')

    def test_locality(self, robot):
        assert locality_check(parse_formula('sensA >= 3 & haltA = 0'), 'A', robot.env)
        assert not locality_check(parse_formula('posA >= 3'), 'A', robot.env)
        with pytest.raises(UsageError):
            locality_check(parse_formula('speed >= 3'), 'A', robot.env)


def bad_step(values, joint):
    (n,) = values
    if joint == (SKIP,):
        return [(0,)]          # skip moves state 1 and 2 back to 0
    if n == 1:
        return []              # 'go' is stuck at 1
    return [(n + 1,)]          # leaves the domain at 2


class TestValidation:
    def test_clean_environment(self, counter_env, picnic):
        assert validate_environment(counter_env) == []
        assert validate_environment(picnic.env) == []

    def test_reported_kinds(self):
        env = Environment(['A'], [Variable('n', 0, 2)], [(0,)], {'A': ['go']}, {'A': []}, bad_step)
        kinds = {d.kind for d in validate_environment(env)}
        assert kinds == {'skip-identity', 'seriality', 'domain'}
        diagnostic = next(d for d in validate_environment(env) if d.kind == 'seriality')
        assert diagnostic.state == 1 and diagnostic.joint_action == ('go',)
        assert diagnostic.as_dict()['joint_action'] == ['go']

    def test_reachable_scope_skips_unreachable(self):
        def step(values, joint):
            (n,) = values
            if n == 2 and joint != (SKIP,):
                return []
            return [values]
        env = Environment(['A'], [Variable('n', 0, 2)], [(0,)], {'A': ['go']}, {'A': []}, step)
        assert validate_environment(env, 'reachable') == []
        assert [d.kind for d in validate_environment(env, 'all')] == ['seriality']

    def test_no_initial_state(self):
        env = Environment(['A'], [Variable('n', 0, 1)], [], {}, {'A': []}, lambda v, j: [v])
        assert [d.kind for d in validate_environment(env)] == ['initial']

    def test_templates(self, counter_env):
        templates = {'A': ProtocolTemplate('A', (
            Clause(TVar('x'), 'jump'),
            Clause(Atom('n', '=', 0), 'inc'),
            Clause(TVar('y'), 'inc'),
        ))}
        kinds = sorted(d.kind for d in validate_templates(counter_env, templates))
        assert kinds == ['locality', 'template', 'template']

    def test_shared_template_variable(self, picnic):
        templates = {
            'A': ProtocolTemplate('A', (Clause(TVar('x'), 'w'),)),
            'B': ProtocolTemplate('B', (Clause(TVar('x'), 'c'),)),
        }
        messages = [d.message for d in validate_templates(picnic.env, templates)]
        assert any('shared' in m for m in messages)


class TestSubstitution:
    def test_immutable_and_hashable(self):
        theta = Substitution({'x': TRUE})
        bigger = theta.extend({'y': FALSE})
        assert 'y' not in theta
        assert bigger == Substitution({'y': FALSE, 'x': TRUE})
        assert hash(bigger) == hash(Substitution({'x': TRUE, 'y': FALSE}))
        assert list(bigger) == ['x', 'y']
        assert bigger.text() == {'x': 'true', 'y': 'false'}

    def test_totality(self, counter_spec):
        assert not Substitution({'x': TRUE}).is_total(counter_spec.templates)
        assert bottom_substitution(counter_spec.templates).is_total(counter_spec.templates)

    def test_completions(self, counter_spec):
        found = list(completions(counter_spec.templates, Substitution({'x': TRUE})))
        assert len(found) == 2
        assert all(theta['x'] == TRUE for theta in found)
        assert len(list(completions(counter_spec.templates, Substitution()))) == 4

    def test_owner(self, picnic):
        assert variable_owner(picnic.templates) == {'x_A': 'A', 'x_B': 'B'}

    def test_validate_substitution(self, robot):
        validate_substitution(robot.env, robot.templates, Substitution({'x': parse_formula('sensA >= 3')}))
        with pytest.raises(UsageError):
            validate_substitution(robot.env, robot.templates, Substitution({'x': parse_formula('posA >= 3')}))
        with pytest.raises(UsageError):
            validate_substitution(robot.env, robot.templates, Substitution({'z': TRUE}))
        with pytest.raises(UsageError):
            validate_substitution(robot.env, robot.templates, Substitution({'x': TVar('y')}))


class TestEnabledness:
    def test_enabled_actions(self, counter_spec):
        env, template = counter_spec.env, counter_spec.templates['A']
        assert enabled_actions(env, template, Substitution({'x': TRUE, 'y': FALSE}), 0) == {'inc'}
        assert enabled_actions(env, template, Substitution({'x': TRUE, 'y': TRUE}), 0) == {'inc', 'reset'}
        assert enabled_actions(env, template, Substitution({'x': FALSE, 'y': FALSE}), 0) == {SKIP}

    def test_unbound_guard_is_an_error(self, counter_spec):
        with pytest.raises(UsageError):
            enabled_actions(counter_spec.env, counter_spec.templates['A'], Substitution({'x': TRUE}), 0)

    def test_unbound_guard_behind_a_false_conjunct(self, counter_env):
        template = ProtocolTemplate('A', (Clause(And(Atom('n', '=', 1), TVar('y')), 'reset'),))
        with pytest.raises(UsageError, match="'y' is unbound"):
            enabled_actions(counter_env, template, Substitution(), 0)

    def test_enabled_actions_follow_the_observation(self, robot):
        env = robot.env
        theta = Substitution({'x': parse_formula('sensA >= 3'), 'y': parse_formula('sensB >= 7')})
        seen = {}
        for sid in range(0, env.state_count, 37):
            for agent in env.agents:
                actions = enabled_actions(env, robot.templates[agent], theta, sid)
                assert seen.setdefault((agent, env.obs_key(agent, sid)), actions) == actions
        assert len(seen) > len(env.agents)

    def test_joint_enabled(self, picnic):
        theta = Substitution({'x_A': FALSE, 'x_B': TRUE})
        assert joint_enabled(picnic.env, picnic.templates, theta, 4) == {('w', 'c')}
        assert joint_enabled(picnic.env, picnic.templates, theta, 3) == {('p', 'p')}

    def test_guard_satisfiable(self, counter_spec):
        env = counter_spec.env
        template = counter_spec.templates['A']
        assert guard_satisfiable(env, TVar('x'), 0, Substitution())
        assert not guard_satisfiable(env, TVar('x'), 0, Substitution({'x': FALSE}))
        assert guard_satisfiable(env, template.skip_guard(), 0, Substitution({'x': FALSE}))
        assert not guard_satisfiable(env, template.skip_guard(), 0, Substitution({'x': TRUE}))

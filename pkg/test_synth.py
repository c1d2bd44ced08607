"""Ordered synthesis, extraction and the KBP finder on the shipped models."""

import pytest

from approx import build_concrete, build_top
from errors import ClassificationError, RefusalError, UsageError
from kernel import Substitution
from logic import FALSE, TRUE, And, Atom, K, Not, Or, TVar, compile_boolean, parse_formula
from mck import VACUOUS, models
from synth import (
    EpistemicSpec,
    check_knowledge,
    extract_local_formula,
    kbp_find,
    partition_order,
    simplify_table,
    substitution_from_tables,
    synthesize,
    verify_implementation,
)


def formula_for(spec, text):
    domains = {v.name: (v.lo, v.hi) for v in spec.env.variables}
    return parse_formula(text, domains, set(spec.variables()))


class TestOrder:
    def test_classes_follow_the_pre_order(self):
        order = [('a', '<', 'b'), ('b', '<=', 'c'), ('c', '<=', 'b')]
        assert partition_order({'a', 'b', 'c'}, order) == [{'a'}, {'b', 'c'}]

    def test_equal_variables_share_a_class(self):
        assert partition_order({'a', 'b'}, [('a', '=', 'b')]) == [{'a', 'b'}]
        assert partition_order({'a'}, []) == [{'a'}]

    def test_declaration_order_does_not_matter(self):
        assert partition_order({'x', 'y', 'z'}, [('z', '<', 'y'), ('y', '<', 'x')]) == [{'z'}, {'y'}, {'x'}]

    @pytest.mark.parametrize('variables, order', [
        ({'a', 'b'}, [('a', '<', 'b'), ('b', '<=', 'a')]),
        ({'a', 'b'}, []),
        ({'a', 'b'}, [('a', '<', 'ghost')]),
        ({'a', 'b'}, [('a', '>', 'b')]),
    ])
    def test_rejected(self, variables, order):
        with pytest.raises(UsageError):
            partition_order(variables, order)


def holds_on(env, agent, formula, key):
    return compile_boolean(formula, env.obs_index(agent))(key, None)


class TestSimplify:
    def test_threshold(self, robot):
        table = {(s, h): s >= 3 for s in range(11) for h in (0, 1)}
        assert simplify_table(robot.env, 'A', table) == Atom('sensA', '>=', 3)

    def test_vacuous_values_are_false(self, robot):
        table = {(s, 0): 3 <= s <= 5 for s in range(11)}
        table[(6, 0)] = VACUOUS
        assert simplify_table(robot.env, 'A', table) == And(
            And(Atom('sensA', '>=', 3), Atom('sensA', '<=', 5)), Atom('haltA', '=', 0))

    def test_constants(self, robot):
        assert simplify_table(robot.env, 'A', {(0, 0): False, (1, 0): VACUOUS}) == FALSE
        assert simplify_table(robot.env, 'A', {(0, 0): VACUOUS}) == FALSE
        assert simplify_table(robot.env, 'A', {(0, 0): True, (1, 0): VACUOUS}) == And(
            Atom('sensA', '=', 0), Atom('haltA', '=', 0))
        everywhere = {key: True for key in robot.env.observation_space('A')}
        assert simplify_table(robot.env, 'A', everywhere) == TRUE

    def test_two_boxes(self, robot):
        table = {(0, 0): True, (0, 1): False, (1, 0): False, (1, 1): True}
        assert simplify_table(robot.env, 'A', table) == Or(
            And(Atom('sensA', '=', 0), Atom('haltA', '=', 0)),
            And(Atom('sensA', '=', 1), Atom('haltA', '=', 1)))

    @pytest.mark.parametrize('pattern', [
        lambda s, h: s % 3 == 0,
        lambda s, h: (s + h) % 2 == 0,
        lambda s, h: 2 <= s <= 8 and h == 1 or s == 0,
        lambda s, h: VACUOUS if s > 6 else s < 2,
    ])
    def test_agrees_with_table_everywhere(self, robot, pattern):
        env = robot.env
        table = {key: pattern(*key) for key in env.observation_space('A')}
        formula = simplify_table(env, 'A', table)
        for key, value in table.items():
            assert holds_on(env, 'A', formula, key) == (value is True)


class TestPicnic:
    def test_bindings(self, picnic):
        theta, report = synthesize(picnic)
        assert theta['x_A'] == And(Atom('start', '=', 0), Atom('w', '=', 1))
        chosen = [key for key in picnic.env.observation_space('B') if holds_on(picnic.env, 'B', theta['x_B'], key)]
        assert chosen == [(0, 1, 0), (0, 1, 1), (1, 0, 0)]
        assert [stage.variables for stage in report.stages] == [['x_A'], ['x_B']]
        assert report.stages[0].reachable_states == 4
        assert report.reachable_final == 2

    def test_vacuous_observations_bind_false(self, picnic):
        _, report = synthesize(picnic)
        for stage in report.stages:
            for extraction in stage.extractions.values():
                vacuous = [key for key, value in extraction.table.items() if value == VACUOUS]
                assert vacuous
                for key in vacuous:
                    assert not holds_on(picnic.env, extraction.agent, extraction.simplified, key)
                    assert not holds_on(picnic.env, extraction.agent, extraction.raw, key)

    def test_verdicts(self, picnic):
        _, report = synthesize(picnic)
        assert [(v.name, v.kind) for v in report.verdicts] == [
            ('x_A', 'soundness'), ('x_B', 'soundness'), ('spec1', 'extra')]
        assert report.verified
        assert not report.soundness_violation

    def test_extraction_table(self, picnic):
        _, report = synthesize(picnic)
        extraction = report.stages[0].extractions['x_A']
        assert extraction.agent == 'A'
        assert extraction.holds_in_stage
        text = extraction.table_text(picnic.env)
        assert text['start=1, w=0, c=0'] is False
        assert text['start=0, w=1, c=1'] is True
        assert text['start=1, w=1, c=1'] == VACUOUS
        assert extraction.raw != extraction.simplified

    @pytest.mark.parametrize('scheme', ['ii-ir-sc', 'pi-ir-sc'])
    def test_small_classes_agree_with_top(self, picnic, scheme):
        theta, _ = synthesize(picnic)
        assert synthesize(picnic, scheme)[0] == theta

    def test_unconstrained_strategies_are_sound_but_weaker(self, picnic):
        theta, report = synthesize(picnic, 'ii-ir-nsc')
        assert theta['x_B'] == And(Atom('start', '=', 0), Atom('w', '=', 1))
        assert not report.soundness_violation
        assert {v.name: v.holds for v in report.verdicts} == {'x_A': True, 'x_B': True, 'spec1': False}

    def test_later_stages_only_weaken_the_approximation(self, picnic):
        knowledge = picnic.knowledge['x_B']
        before = build_top(picnic.env, picnic.templates, Substitution())
        after = build_top(picnic.env, picnic.templates,
                          Substitution({'x_A': And(Atom('start', '=', 0), Atom('w', '=', 1))}))
        assert set(after.reachable_states()) <= set(before.reachable_states())
        early = extract_local_formula(before, 'B', knowledge).table
        late = extract_local_formula(after, 'B', knowledge).table
        assert all(late[key] is True for key, value in early.items() if value is True)
        assert sum(v is True for v in late.values()) > sum(v is True for v in early.values())

    def test_kbp_reading_is_not_implemented(self, picnic):
        theta = Substitution({'x_A': Atom('w', '=', 1), 'x_B': TRUE})
        verdicts = verify_implementation(picnic, theta, kbp=True)
        holds = {(v.name, v.kind): v.holds for v in verdicts}
        assert holds == {
            ('x_A', 'soundness'): True, ('x_A', 'kbp'): False,
            ('x_B', 'soundness'): True, ('x_B', 'kbp'): True,
            ('spec1', 'extra'): True,
        }
        failed = next(v for v in verdicts if not v.holds)
        assert failed.witness == [picnic.env.state_text(4)]

    def test_verification_needs_total_theta(self, picnic):
        with pytest.raises(UsageError):
            verify_implementation(picnic, Substitution({'x_A': TRUE}))

    def test_no_kbp_implementation(self, picnic):
        assert kbp_find(picnic) == []


class TestRobot:
    @pytest.fixture(scope='class')
    def synthesized(self, robot):
        return synthesize(robot)

    def test_bindings_match_sensor_thresholds(self, synthesized):
        _, report = synthesized
        x_table = report.stages[0].extractions['x'].table
        y_table = report.stages[1].extractions['y'].table
        assert all(value == (key[0] >= 3) for key, value in x_table.items() if value is not VACUOUS)
        assert all(value == (key[0] >= 7) for key, value in y_table.items() if value is not VACUOUS)

    def test_extra_specifications_hold(self, synthesized):
        _, report = synthesized
        assert report.verified
        assert len([v for v in report.verdicts if v.kind == 'extra']) == 6

    def test_b_halts_in_its_band(self, robot, synthesized):
        theta, _ = synthesized
        system = build_concrete(robot.env, robot.templates, theta)
        assert models(system, formula_for(robot, 'AG (haltB = 1 => posB >= 5 & posB <= 7)'))
        assert not models(system, formula_for(robot, 'AG (haltB = 1 => posB = 5)'))

    def test_class_schemes_are_out_of_budget(self, robot):
        with pytest.raises(RefusalError):
            synthesize(robot, 'ii-ir-sc')

    def test_exact_sensors_have_one_kbp_implementation(self, robot0):
        found = kbp_find(robot0)
        assert len(found) == 1
        system = build_concrete(robot0.env, robot0.templates, found[0].theta)
        assert models(system, formula_for(robot0, 'AG (haltA = 1 => posA = 2)'))
        assert models(system, formula_for(robot0, 'AG (haltB = 1 => posB = 3)'))

    @pytest.mark.parametrize('kbp', [False, True])
    def test_kbp_implementations_verify(self, robot0, kbp):
        found = kbp_find(robot0)
        assert found
        for implementation in found:
            verdicts = verify_implementation(robot0, implementation.theta, kbp=kbp)
            assert all(v.holds for v in verdicts if v.kind != 'extra')


class TestTopIsNotConsistent:
    def test_top_gives_false(self, topnsc):
        theta, report = synthesize(topnsc)
        assert theta['x'] == FALSE
        assert report.verified

    def test_sc_class_gives_false_too(self, topnsc):
        theta, report = synthesize(topnsc, 'ii-ir-sc')
        assert theta['x'] == FALSE
        assert report.stages[0].components == 2


class TestKnowledgeConditions:
    def test_negative_condition_is_refused(self, counter_spec):
        counter_spec.knowledge = {
            'x': K('A', Not(K('A', Atom('n', '=', 0)))),
            'y': K('A', TRUE),
        }
        with pytest.raises(RefusalError):
            check_knowledge(counter_spec)

    def test_missing_or_malformed(self, counter_spec):
        counter_spec.knowledge = {'x': K('A', TRUE)}
        with pytest.raises(UsageError):
            check_knowledge(counter_spec)
        counter_spec.knowledge = {'x': K('A', TRUE), 'y': Atom('n', '=', 0)}
        with pytest.raises(UsageError):
            check_knowledge(counter_spec)

    def test_wrong_agent(self, counter_spec):
        counter_spec.knowledge = {'x': K('A', TRUE), 'y': K('B', TRUE)}
        with pytest.raises(ClassificationError):
            check_knowledge(counter_spec)

    def test_condition_must_only_use_earlier_variables(self, counter_env, counter_spec):
        spec = EpistemicSpec(counter_env, counter_spec.templates,
                             {'x': K('A', TVar('y')), 'y': K('A', TRUE)}, order=[('x', '<', 'y')])
        with pytest.raises(UsageError):
            synthesize(spec)

    def test_blind_agent_has_no_kbp_implementation(self, blind):
        assert kbp_find(blind) == []


class TestTables:
    def test_substitution_from_tables(self, counter_spec):
        theta = substitution_from_tables(counter_spec.env, counter_spec.templates,
                                         {'x': {(): True}, 'y': {(): False}})
        assert theta == Substitution({'x': TRUE, 'y': FALSE})

    def test_unknown_variable(self, counter_spec):
        with pytest.raises(UsageError):
            substitution_from_tables(counter_spec.env, counter_spec.templates, {'z': {}})

"""Shared fixtures: the shipped models, a small hand-built environment, a scratch data dir."""

from pathlib import Path

import pytest

from config import MODELS_DIR, REPORT_SCHEMA
from dsl import expand, gen_blind, gen_picnic, gen_robot, gen_top_nsc
from kernel import Clause, Environment, ProtocolTemplate, Variable
from logic import Not, TVar
from synth import EpistemicSpec

MODELS = Path(__file__).parent / MODELS_DIR
REPORT_SCHEMA_PATH = Path(__file__).parent / REPORT_SCHEMA


@pytest.fixture
def picnic():
    return expand(gen_picnic())


@pytest.fixture(scope='session')
def robot():
    return expand(gen_robot(1))


@pytest.fixture(scope='session')
def robot0():
    return expand(gen_robot(0))


@pytest.fixture
def topnsc():
    return expand(gen_top_nsc())


@pytest.fixture
def blind():
    return expand(gen_blind())


def counter_step(values, joint):
    """n counts up to 2 on 'inc' and resets to 0 on 'reset'; skip loops."""
    (n,) = values
    action = joint[0]
    if action == 'inc':
        return [(min(n + 1, 2),)]
    if action == 'reset':
        return [(0,)]
    return [values]


@pytest.fixture
def counter_env():
    """One agent who sees nothing, one variable n in 0..2."""
    return Environment(['A'], [Variable('n', 0, 2)], [(0,)], {'A': ['inc', 'reset']},
                       {'A': []}, counter_step, name='counter')


@pytest.fixture
def counter_spec(counter_env):
    template = ProtocolTemplate('A', (Clause(TVar('x'), 'inc'), Clause(TVar('y'), 'reset')))
    return EpistemicSpec(counter_env, {'A': template}, name='counter')


def shared_start_step(values, joint):
    """From s = 0 and s = 1: a goes to 2, b to 3, d to 2 and 3 respectively."""
    (s,) = values
    action = joint[0]
    if s >= 2 or action == 'skip':
        return [values]
    if action == 'd':
        return [(2 + s,)]
    return [(2,)] if action == 'a' else [(3,)]


@pytest.fixture
def shared_start():
    """Blind agent with two initial states and template x -> a ; !x -> b."""
    env = Environment(['A'], [Variable('s', 0, 3)], [(0,), (1,)], {'A': ['a', 'b', 'd']},
                      {'A': []}, shared_start_step, name='shared-start')
    template = ProtocolTemplate('A', (Clause(TVar('x'), 'a'), Clause(Not(TVar('x')), 'b')))
    return EpistemicSpec(env, {'A': template}, name='shared-start')


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    """Run in a scratch directory so run logs land there."""
    monkeypatch.chdir(tmp_path)
    return tmp_path

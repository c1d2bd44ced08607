"""Seeded trace sampling of the concrete system of a total substitution."""

import random

from config import SIMULATE_STEPS
from errors import UsageError
from kernel import Substitution, joint_enabled, validate_substitution


def simulate(env, templates, theta, steps=SIMULATE_STEPS, seed=0, start=None):
    """Sample a run prefix of `steps` states.

    At each state a joint action is drawn uniformly from the enabled ones,
    then a successor uniformly from its targets. The last entry carries no
    action. Equal seeds give equal traces.
    """
    if steps < 1:
        raise UsageError('a trace needs at least one step')
    theta = theta if isinstance(theta, Substitution) else Substitution(theta)
    missing = [name for template in templates.values() for name in sorted(template.variables())
               if name not in theta]
    if missing:
        raise UsageError(f"substitution is not total, unbound: {', '.join(missing)}")
    validate_substitution(env, templates, theta)

    rng = random.Random(seed)
    if start is None:
        sid = rng.choice(env.initial)
    else:
        env.require_state(start)
        sid = start

    trace = []
    for index in range(steps):
        entry = {'step': index, 'state': env.state_text(sid), 'values': env.valuation(sid),
                 'action': None}
        trace.append(entry)
        if index == steps - 1:
            break
        joints = [j for j in sorted(joint_enabled(env, templates, theta, sid))
                  if env.successors(sid, j)]
        if not joints:
            raise UsageError(f"no enabled joint action has a successor at {env.state_text(sid)}")
        joint = rng.choice(joints)
        entry['action'] = list(joint)
        sid = rng.choice(env.successors(sid, joint))
    return trace

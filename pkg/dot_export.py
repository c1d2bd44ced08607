"""Graphviz export of a system's reachable graph, grouped by observation."""

from collections import defaultdict


def _quote(text):
    return '"' + str(text).replace('\\', '\\\\').replace('"', '\\"') + '"'


def to_dot(sys, agent=None, title=None):
    """DOT text of sys; with an agent, states sharing its observation form one cluster.

    Nodes are states (merged across components), edges the union of the
    components' successor relations. Initial states are drawn as double
    octagons.
    """
    env = sys.env
    if agent is not None:
        env.require_agent(agent)
    states = sys.reachable_states()
    initial = {sid for _, sid in sys.initial_points()}
    edges = set()
    for point in sys.points():
        for _, target in sys.successors(point):
            edges.add((point[1], target))

    def node(sid):
        shape = 'doubleoctagon' if sid in initial else 'box'
        return f"s{sid} [label={_quote(env.state_text(sid))}, shape={shape}];"

    lines = [f"digraph {_quote(title or sys.name)} {{", '\trankdir=LR;']
    if agent is None:
        lines.extend(f"\t{node(sid)}" for sid in states)
    else:
        classes = defaultdict(list)
        for sid in states:
            classes[env.obs_key(agent, sid)].append(sid)
        for number, key in enumerate(sorted(classes)):
            lines.append(f"\tsubgraph cluster_{number} {{")
            lines.append(f"\t\tlabel={_quote(f'{agent}: {env.make_observation(agent, key)}')};")
            lines.append('\t\tstyle=filled; color=lightgrey;')
            lines.extend(f"\t\t{node(sid)}" for sid in classes[key])
            lines.append('\t}')
    lines.extend(f"\ts{source} -> s{target};" for source, target in sorted(edges))
    lines.append('}')
    return '\n'.join(lines) + '\n'

#!/usr/bin/env python3
"""
episynth - Epistemic Protocol Synthesis
Model checking and ordered synthesis of knowledge-based protocol templates
"""

import argparse
import json
import re
import sys
import time
from pathlib import Path

from approx import Budget, build_scheme, parse_scheme, scheme_oracle
from config import *
from dot_export import to_dot
from dsl import build_environment, expand, model_diagnostics, parse_model
from errors import EpisynthError, UsageError
from kernel import Substitution, check_completeness, validate_substitution
from logger import RunLogger
from logic import K, apply_substitution, parse_formula, to_text
from mck import check, find_witness, knowledge_table
from reporter import Reporter, build_report
from simulator import simulate
from synth import kbp_find, synthesize

COMMANDS = ('validate', 'check', 'synth', 'kbp', 'oracle', 'simulate', 'dot')


def parse_order(text):
    """'x < y <= z, u = v' -> [(x, '<', y), (y, '<=', z), (u, '=', v)]"""
    declarations = []
    for chain in filter(None, (part.strip() for part in text.split(','))):
        tokens = re.split(r'\s*(<=|<|=)\s*', chain)
        if len(tokens) < 3 or any(not re.fullmatch(r'\w+', t) for t in tokens[::2]):
            raise UsageError(f"bad order '{chain}' (use e.g. x_A<x_B)")
        for i in range(0, len(tokens) - 2, 2):
            declarations.append((tokens[i], tokens[i + 1], tokens[i + 2]))
    return declarations


def domains(env):
    return {var.name: (var.lo, var.hi) for var in env.variables}


class EpisynthRunner:
    def __init__(self, quiet=False, budget=None, out=None):
        """Runs one command per process

        Args:
            quiet: print only errors
            budget: budget string on top of EPISYNTH_BUDGET / built-in limits
            out: JSON report path for the file channel
        """
        self.quiet = quiet
        self.out = out
        self.budget = Budget.from_text(budget, Budget.from_config()) if budget else None
        self.reporter = Reporter(quiet=quiet)
        self.logger = RunLogger()
        self.timings = {}
        self.model_text = None
        self.scheme = None

    def say(self, message):
        if not self.quiet:
            print(message)

    def lap(self, phase, started):
        self.timings[phase] = self.timings.get(phase, 0.0) + time.time() - started

    # ----- inputs -----

    def read_model(self, path):
        started = time.time()
        try:
            self.model_text = Path(path).read_text(encoding='utf-8')
        except OSError as e:
            raise UsageError(f"cannot read model {path}: {e.strerror}")
        model = parse_model(self.model_text, name=Path(path).stem)
        self.lap('parse', started)
        return model

    def load(self, path, order=None):
        """Parsed, expanded and validated model"""
        model = self.read_model(path)
        started = time.time()
        spec = expand(model)
        if order:
            spec.order = parse_order(order)
        self.lap('expand', started)
        self.say(f"  ✓ {spec.name}: {len(spec.env.agents)} agents, "
                 f"{len(spec.env.reachable_states())} reachable states")
        return spec

    def parse_theta(self, spec, text):
        """Substitution from 'x := phi; y := psi', '@file' or '@report.json'"""
        if not text:
            return Substitution()
        if text.startswith('@'):
            path = Path(text[1:])
            try:
                content = path.read_text(encoding='utf-8')
            except OSError as e:
                raise UsageError(f"cannot read substitution {path}: {e.strerror}")
            if path.suffix == '.json':
                try:
                    data = json.loads(content)
                except ValueError as e:
                    raise UsageError(f"{path} is not valid JSON: {e}")
                data = data.get('result', data).get('theta', data) if isinstance(data, dict) else data
                if not isinstance(data, dict):
                    raise UsageError(f"{path} holds no substitution")
                text = '\n'.join(f"{name} := {formula}" for name, formula in data.items())
            else:
                text = content

        known = set(spec.variables())
        bindings = {}
        for item in re.split(r'[;\n]', text):
            item = item.split('#', 1)[0].strip()
            if not item:
                continue
            name, sep, body = item.partition(':=')
            name = name.strip()
            if not sep:
                raise UsageError(f"binding '{item}' needs the form name := formula")
            if name not in known:
                raise UsageError(f"'{name}' is not a template variable")
            bindings[name] = parse_formula(body, domains(spec.env), template_vars=set())
        theta = Substitution(bindings)
        validate_substitution(spec.env, spec.templates, theta)
        return theta

    def build(self, spec, theta, scheme):
        started = time.time()
        self.scheme = str(parse_scheme(scheme))
        system = build_scheme(spec, theta, self.scheme, self.budget)
        self.lap('build', started)
        self.say(f"  ✓ {self.scheme}: {len(system.components)} component(s), "
                 f"{len(system.reachable_states())} reachable states")
        return system

    # ----- commands -----

    def cmd_validate(self, path, all_states=False):
        self.say("\n[1/2] Parsing model...")
        model = self.read_model(path)
        self.say("  ✓ Parsed")

        self.say("\n[2/2] Checking environment and templates...")
        started = time.time()
        env = build_environment(model)
        diagnostics = model_diagnostics(model, env, 'all' if all_states else 'reachable')
        result = {
            'agents': list(env.agents),
            'states': env.state_count,
            'reachable': len(env.reachable_states()),
            'scope': 'all' if all_states else 'reachable',
            'diagnostics': [d.as_dict() for d in diagnostics],
            'templates': {agent: [str(clause) for clause in template.clauses]
                          for agent, template in model.templates.items()},
            'complete_observations': {agent: check_completeness(env, agent) for agent in env.agents},
        }
        self.lap('validate', started)
        self.say(f"  {'✓' if not diagnostics else '❌'} {len(diagnostics)} diagnostic(s)")
        return result, 0 if not diagnostics else 1

    def cmd_check(self, path, formula_text, theta_text=None, scheme=DEFAULT_SCHEME, agent=None):
        self.say("\n[1/3] Parsing model and formula...")
        spec = self.load(path)
        theta = self.parse_theta(spec, theta_text)
        formula = parse_formula(formula_text, domains(spec.env), set(spec.variables()))
        formula = apply_substitution(formula, theta)

        self.say("\n[2/3] Building system...")
        system = self.build(spec, theta, scheme)

        self.say("\n[3/3] Checking...")
        started = time.time()
        labeling = check(system, formula)
        holds = all(point in labeling.true_points for point in system.initial_points())
        witness = find_witness(system, formula) if not holds else None
        table = None
        if agent is not None:
            table = knowledge_table(system, agent, K(agent, formula))
        elif isinstance(formula, K):
            agent = formula.agent
            table = knowledge_table(system, agent, formula)
        self.lap('check', started)

        result = {
            'formula': to_text(formula),
            'theta': theta.text(),
            'satisfying_states': len(labeling.true_states()),
            'reachable_states': len(system.reachable_states()),
            'holds_initially': holds,
            'witness': [spec.env.state_text(sid) for _, sid in witness] if witness else None,
            'agent': agent,
            'observation_table': {str(spec.env.make_observation(agent, key)): value
                                  for key, value in table.items()} if table is not None else None,
        }
        self.say(f"  {'✓' if holds else '❌'} {'holds' if holds else 'fails'} at the initial states")
        return result, 0 if holds else 1

    def cmd_synth(self, path, scheme=DEFAULT_SCHEME, order=None):
        self.say("\n[1/3] Parsing model...")
        spec = self.load(path, order)
        self.scheme = str(parse_scheme(scheme))

        self.say(f"\n[2/3] Synthesizing with {self.scheme}...")
        started = time.time()
        theta, report = synthesize(spec, self.scheme, self.budget, verbose=not self.quiet)
        self.lap('synthesize', started)

        self.say("\n[3/3] Verifying final system...")
        for verdict in report.verdicts:
            self.say(f"  {'✓' if verdict.holds else '❌'} {verdict.name} ({verdict.kind})")

        result = {
            'order': [list(item) for item in spec.order],
            'theta': theta.text(),
            'stages': [{
                'index': stage.index,
                'variables': stage.variables,
                'scheme': stage.scheme,
                'components': stage.components,
                'reachable_states': stage.reachable_states,
                'seconds': round(stage.seconds, 4),
                'extractions': {
                    variable: {
                        'agent': extraction.agent,
                        'knowledge': to_text(extraction.knowledge),
                        'raw': to_text(extraction.raw),
                        'simplified': to_text(extraction.simplified),
                        'holds_in_stage': extraction.holds_in_stage,
                        'table': extraction.table_text(spec.env),
                    }
                    for variable, extraction in stage.extractions.items()
                },
            } for stage in report.stages],
            'verdicts': [verdict.as_dict() for verdict in report.verdicts],
            'verified': report.verified,
            'soundness_violation': report.soundness_violation,
            'reachable_final': report.reachable_final,
        }
        return result, 0 if report.verified else 1

    def cmd_kbp(self, path):
        self.say("\n[1/2] Parsing model...")
        spec = self.load(path)

        self.say("\n[2/2] Searching implementations...")
        started = time.time()
        found = kbp_find(spec, self.budget)
        self.lap('search', started)
        self.say(f"  ✓ {len(found)} implementation(s)")

        result = {
            'count': len(found),
            'implementations': [{
                'theta': implementation.theta.text(),
                'tables': {
                    variable: {str(spec.env.make_observation(spec.owner(variable), key)): value
                               for key, value in table.items()}
                    for variable, table in implementation.tables.items()
                },
            } for implementation in found],
        }
        return result, 0

    def cmd_oracle(self, path, classes=ORACLE_CLASSES, theta_text=None):
        self.say("\n[1/2] Parsing model...")
        spec = self.load(path)
        theta = self.parse_theta(spec, theta_text)
        schemes = [s.strip() for s in classes.split(',') if s.strip()]
        if not schemes:
            raise UsageError('no classes to compare')

        self.say(f"\n[2/2] Comparing {', '.join(schemes)}...")
        started = time.time()
        result = scheme_oracle(spec, theta, schemes, self.budget)
        self.lap('oracle', started)
        result['theta'] = theta.text()
        self.say(f"  {'✓' if not result['violations'] else '❌'} "
                 f"{len(result['violations'])} containment violation(s)")
        if result['discrepancies']:
            self.say(f"  ⚠️ {len(result['discrepancies'])} disagreement(s) between top and ii-ir-nsc")
        return result, 0 if not result['violations'] else 1

    def cmd_simulate(self, path, theta_text=None, steps=SIMULATE_STEPS, seed=0, scheme=DEFAULT_SCHEME):
        self.say("\n[1/2] Parsing model...")
        spec = self.load(path)
        if theta_text:
            theta = self.parse_theta(spec, theta_text)
        else:
            self.say(f"  Synthesizing a substitution with {scheme}...")
            started = time.time()
            theta, _ = synthesize(spec, scheme, self.budget)
            self.lap('synthesize', started)
        self.scheme = 'concrete'

        self.say(f"\n[2/2] Sampling {steps} steps (seed {seed})...")
        started = time.time()
        trace = simulate(spec.env, spec.templates, theta, steps, seed)
        self.lap('simulate', started)
        return {'theta': theta.text(), 'seed': seed, 'steps': steps, 'trace': trace}, 0

    def cmd_dot(self, path, theta_text=None, scheme=DEFAULT_SCHEME, agent=None):
        self.say("\n[1/2] Parsing model...")
        spec = self.load(path)
        theta = self.parse_theta(spec, theta_text)

        self.say("\n[2/2] Exporting graph...")
        system = self.build(spec, theta, scheme)
        started = time.time()
        dot = to_dot(system, agent, title=f"{spec.name} {self.scheme}")
        self.lap('export', started)
        return {'agent': agent, 'states': len(system.reachable_states()), 'dot': dot}, 0

    # ----- driver -----

    def run(self, command, model=None, **options):
        """Run one command, report and log it; returns the exit code"""
        if command not in COMMANDS:
            raise UsageError(f"unknown command '{command}'")
        try:
            result, exit_code = getattr(self, f"cmd_{command}")(model, **options)
        except EpisynthError as e:
            print(f"❌ {e}")
            result = {'error': str(e), 'messages': list(getattr(e, 'messages', [str(e)]))}
            exit_code = e.exit_code

        report = build_report(command, model, self.model_text, self.scheme, self.timings,
                              result, exit_code)
        self.reporter.deliver(report, self.out)
        if LOG_ALL_RUNS or exit_code != 0:
            self.logger.log_run(report)
        return exit_code


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('model', help='model file (.eps)')
    common.add_argument('--budget', help='e.g. states=128,obs=8,actions=4,strategies=50000,kbp=65536')
    common.add_argument('--out', help='write the JSON report here')
    common.add_argument('--quiet', action='store_true', help='print errors only')
    common.add_argument('--stats', action='store_true', help='print run-log statistics afterwards')

    parser = argparse.ArgumentParser(prog=TOOL_NAME, description=__doc__.strip())
    parser.add_argument('--version', action='version', version=f"{TOOL_NAME} {TOOL_VERSION}")
    verbs = parser.add_subparsers(dest='command', required=True)

    validate = verbs.add_parser('validate', parents=[common], help='environment and template diagnostics')
    validate.add_argument('--all-states', action='store_true', help='check every state, not only reachable ones')

    check_verb = verbs.add_parser('check', parents=[common], help='check a formula')
    check_verb.add_argument('--formula', required=True)
    check_verb.add_argument('--theta', help="'x := phi; y := psi' or @file")
    check_verb.add_argument('--scheme', default=DEFAULT_SCHEME)
    check_verb.add_argument('--agent', help='also tabulate what this agent knows of the formula')

    synth = verbs.add_parser('synth', parents=[common], help='ordered synthesis')
    synth.add_argument('--scheme', default=DEFAULT_SCHEME)
    synth.add_argument('--order', help='overrides the model order, e.g. x_A<x_B')

    verbs.add_parser('kbp', parents=[common], help='all implementations of the knowledge-based program')

    oracle = verbs.add_parser('oracle', parents=[common], help='compare approximation schemes')
    oracle.add_argument('--classes', default=ORACLE_CLASSES)
    oracle.add_argument('--theta')

    simulate_verb = verbs.add_parser('simulate', parents=[common], help='sample a trace')
    simulate_verb.add_argument('--theta', help='default: synthesize one first')
    simulate_verb.add_argument('--scheme', default=DEFAULT_SCHEME)
    simulate_verb.add_argument('--steps', type=int, default=SIMULATE_STEPS)
    simulate_verb.add_argument('--seed', type=int, default=0)

    dot = verbs.add_parser('dot', parents=[common], help='Graphviz export')
    dot.add_argument('--theta')
    dot.add_argument('--scheme', default=DEFAULT_SCHEME)
    dot.add_argument('--agent', help='group states by this agent\'s observation')
    return parser


def command_options(args):
    names = {
        'validate': ['all_states'],
        'check': [('formula_text', 'formula'), ('theta_text', 'theta'), 'scheme', 'agent'],
        'synth': ['scheme', 'order'],
        'kbp': [],
        'oracle': ['classes', ('theta_text', 'theta')],
        'simulate': [('theta_text', 'theta'), 'steps', 'seed', 'scheme'],
        'dot': [('theta_text', 'theta'), 'scheme', 'agent'],
    }[args.command]
    options = {}
    for name in names:
        target, source = name if isinstance(name, tuple) else (name, name)
        options[target] = getattr(args, source)
    return options


def main(argv=None):
    """Main entry point"""
    args = build_parser().parse_args(argv)
    try:
        runner = EpisynthRunner(quiet=args.quiet, budget=args.budget, out=args.out)
    except EpisynthError as e:
        print(f"❌ {e}")
        return e.exit_code
    exit_code = runner.run(args.command, args.model, **command_options(args))
    if args.stats:
        runner.logger.print_statistics()
    return exit_code


if __name__ == "__main__":
    sys.exit(main())

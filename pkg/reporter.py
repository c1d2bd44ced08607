import hashlib
import json
import os
from datetime import datetime

import pytz

from config import *

REPORT_FIELDS = ('command', 'tool', 'tool_version', 'timestamp', 'model', 'model_hash',
                 'scheme', 'timings', 'exit_code', 'result')


def model_hash(text):
    """sha256 of the model text, or None when there is no model."""
    if text is None:
        return None
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def timestamp():
    return datetime.now(pytz.timezone(REPORT_TIMEZONE)).isoformat()


def build_report(command, model=None, model_text=None, scheme=None, timings=None,
                 result=None, exit_code=0):
    """RunReport dict with a fixed key order

    Args:
        command: CLI verb
        model: model file path (or None)
        model_text: model source used for the hash
        timings: {phase: seconds}
        result: command-specific payload
    """
    values = {
        'command': command,
        'tool': TOOL_NAME,
        'tool_version': TOOL_VERSION,
        'timestamp': timestamp(),
        'model': str(model) if model is not None else None,
        'model_hash': model_hash(model_text),
        'scheme': scheme,
        'timings': {phase: round(seconds, 4) for phase, seconds in (timings or {}).items()},
        'exit_code': exit_code,
        'result': result if result is not None else {},
    }
    return {key: values[key] for key in REPORT_FIELDS}


class Reporter:
    def __init__(self, methods=None, quiet=False):
        """Output channels for finished reports

        Args:
            methods: channel names, default OUTPUT_METHODS ('console', 'file')
            quiet: suppress the console channel
        """
        self.report_count = 0
        self.enabled_methods = list(methods if methods is not None else OUTPUT_METHODS)
        for method in list(self.enabled_methods):
            if method not in ('console', 'file'):
                print(f"Warning: unknown output method '{method}' ignored")
                self.enabled_methods.remove(method)
        if quiet and 'console' in self.enabled_methods:
            self.enabled_methods.remove('console')

    def deliver(self, report, out=None):
        """Send report through all enabled channels

        Returns:
            {channel: success}
        """
        self.report_count += 1
        results = {}

        if 'console' in self.enabled_methods:
            results['console'] = self.send_console(self.format_summary(report))

        if 'file' in self.enabled_methods and out:
            results['file'] = self.send_file(report, out)

        return results

    def format_summary(self, report):
        """Human summary of a report"""
        command = report['command']
        result = report['result']
        header = f"{'='*60}\n{command.upper()}"
        if report.get('model'):
            header += f" {report['model']}"
        if report.get('scheme'):
            header += f" (scheme {report['scheme']})"
        header += f"\n{'='*60}\n"

        if 'error' in result:
            body = self.format_error(result)
        else:
            formatter = getattr(self, f"format_{command}", None)
            body = formatter(result) if formatter else json.dumps(result, indent=2)

        footer = f"\nExit code: {report['exit_code']}"
        if report['timings']:
            footer += '\nTimings: ' + ', '.join(f"{k} {v:.3f}s" for k, v in report['timings'].items())
        return header + body + footer

    def format_validate(self, result):
        message = f"States: {result['states']} declared, {result['reachable']} reachable\n"
        message += f"Agents: {', '.join(result['agents'])}\n"
        if not result['diagnostics']:
            return message + "No diagnostics\n"
        message += f"\n--- DIAGNOSTICS ({len(result['diagnostics'])}) ---\n"
        for diagnostic in result['diagnostics']:
            message += f"• [{diagnostic['kind']}] {diagnostic['message']}\n"
        return message

    def format_check(self, result):
        message = f"Formula: {result['formula']}\n"
        message += f"Satisfying states: {result['satisfying_states']}/{result['reachable_states']}\n"
        message += f"Holds initially: {result['holds_initially']}\n"
        if result.get('witness'):
            message += "\n--- WITNESS ---\n"
            for state in result['witness']:
                message += f"  {state}\n"
        if result.get('observation_table'):
            message += f"\n--- OBSERVATIONS OF {result['agent']} ---\n"
            for obs, value in result['observation_table'].items():
                message += f"  {obs}: {value}\n"
        return message

    def format_synth(self, result):
        message = "--- SUBSTITUTION ---\n"
        for variable, formula in result['theta'].items():
            message += f"  {variable} := {formula}\n"
        message += "\n--- STAGES ---\n"
        for stage in result['stages']:
            message += (f"  {stage['index']}. {', '.join(stage['variables'])}: "
                        f"{stage['components']} component(s), {stage['reachable_states']} states\n")
        message += "\n" + self.format_verdicts(result['verdicts'])
        message += f"\nVerified: {result['verified']}\n"
        return message

    def format_verdicts(self, verdicts):
        message = "--- VERDICTS ---\n"
        for verdict in verdicts:
            mark = '✓' if verdict['holds'] else '✗'
            message += f"  {mark} {verdict['name']} ({verdict['kind']}): {verdict['formula'][:120]}\n"
        return message

    def format_kbp(self, result):
        if not result['implementations']:
            return "Implementations: none\n"
        message = f"Implementations: {result['count']}\n"
        for number, implementation in enumerate(result['implementations'], start=1):
            message += f"\n--- IMPLEMENTATION {number} ---\n"
            for variable, formula in implementation['theta'].items():
                message += f"  {variable} := {formula}\n"
        return message

    def format_oracle(self, result):
        names = result['schemes']
        message = "--- AGREEMENT ---\n"
        for a in names:
            row = ' '.join('=' if result['agreement'][a][b] else 'x' for b in names)
            message += f"  {a:>10}  {row}\n"
        message += f"\nContainment violations: {len(result['violations'])}\n"
        for violation in result['violations']:
            message += f"• {violation['relation']} {violation['variable']} at {violation['observation']}\n"
        if result.get('discrepancies'):
            message += f"\nDisagreements: {len(result['discrepancies'])}\n"
            for entry in result['discrepancies']:
                message += f"• {entry['relation']} {entry['variable']} at {entry['observation']}\n"
        for note in result['skipped']:
            message += f"  skipped {note}\n"
        return message

    def format_simulate(self, result):
        message = f"Seed: {result['seed']}  Steps: {result['steps']}\n\n"
        for entry in result['trace']:
            action = f"  --[{', '.join(entry['action'])}]-->" if entry['action'] else ''
            message += f"  {entry['step']:>3}: {entry['state']}{action}\n"
        return message

    def format_dot(self, result):
        return result['dot']

    def format_error(self, result):
        message = f"Error: {result['error']}\n"
        for detail in result.get('messages', [])[1:]:
            message += f"  {detail}\n"
        return message

    def send_console(self, message):
        """Print summary to console"""
        try:
            print(message)
            return True
        except Exception as e:
            print(f"Console output error: {e}")
            return False

    def send_file(self, report, path):
        """Write the JSON report, or the bare graph for a .dot path"""
        try:
            directory = os.path.dirname(str(path))
            if directory and not os.path.exists(directory):
                os.makedirs(directory)
            with open(path, 'w') as f:
                if str(path).endswith('.dot') and 'dot' in report['result']:
                    f.write(report['result']['dot'])
                else:
                    json.dump(report, f, indent=2)
                    f.write('\n')
            return True
        except Exception as e:
            print(f"File output error: {e}")
            return False

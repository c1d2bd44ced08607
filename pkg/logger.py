import json
import os
from datetime import datetime

import pytz

from config import *


class RunLogger:
    def __init__(self, log_file=None):
        """Initialize the run log

        Args:
            log_file: JSON log path, default RUN_LOG
        """
        self.log_file = log_file or RUN_LOG
        self.ensure_data_directory()
        self.session_start = datetime.now(pytz.timezone(REPORT_TIMEZONE)).isoformat()

    def ensure_data_directory(self):
        """Create the log directory if it doesn't exist"""
        directory = os.path.dirname(self.log_file)
        try:
            if directory and not os.path.exists(directory):
                os.makedirs(directory)
        except OSError as e:
            print(f"Error creating {directory}: {e}")

    def log_run(self, report):
        """Append a compact entry for one CLI run

        Args:
            report: RunReport dict from reporter.build_report
        """
        try:
            log_data = self.load_json(self.log_file, default=[])

            log_entry = {
                'timestamp': report.get('timestamp'),
                'command': report.get('command'),
                'model': report.get('model'),
                'model_hash': report.get('model_hash'),
                'scheme': report.get('scheme'),
                'exit_code': report.get('exit_code'),
                'timings': report.get('timings', {}),
                'summary': self.summarize(report),
            }

            log_data.append(log_entry)

            # Keep only the most recent entries
            if len(log_data) > MAX_LOG_ENTRIES:
                log_data = log_data[-MAX_LOG_ENTRIES:]

            return self.save_json(self.log_file, log_data)

        except Exception as e:
            print(f"Error logging run: {e}")
            return False

    def summarize(self, report):
        """One-line verdict summary of a report's result"""
        result = report.get('result') or {}
        if 'error' in result:
            return f"error: {result['error']}"
        command = report.get('command')
        if command == 'synth':
            failed = [v['name'] for v in result.get('verdicts', []) if not v['holds']]
            return 'verified' if not failed else f"failed: {', '.join(failed)}"
        if command == 'check':
            return f"holds initially: {result.get('holds_initially')}"
        if command == 'kbp':
            return f"implementations: {result.get('count', 0)}"
        if command == 'oracle':
            return f"violations: {len(result.get('violations', []))}"
        if command == 'validate':
            return f"diagnostics: {len(result.get('diagnostics', []))}"
        if command == 'simulate':
            return f"steps: {len(result.get('trace', []))}"
        return command or ''

    def get_statistics(self):
        """Run counts per command and exit code"""
        try:
            log_data = self.load_json(self.log_file, default=[])

            if not log_data:
                return None

            total = len(log_data)
            by_command = {}
            by_exit = {}
            for entry in log_data:
                by_command[entry.get('command')] = by_command.get(entry.get('command'), 0) + 1
                code = str(entry.get('exit_code'))
                by_exit[code] = by_exit.get(code, 0) + 1

            seconds = [sum(entry.get('timings', {}).values()) for entry in log_data]

            return {
                'total_runs': total,
                'by_command': dict(sorted(by_command.items(), key=lambda item: str(item[0]))),
                'by_exit_code': dict(sorted(by_exit.items())),
                'success_rate': round(by_exit.get('0', 0) / total * 100, 1),
                'average_seconds': round(sum(seconds) / total, 3),
            }

        except Exception as e:
            print(f"Error calculating statistics: {e}")
            return None

    def get_recent_runs(self, count=10):
        """Get most recent runs"""
        try:
            log_data = self.load_json(self.log_file, default=[])
            return log_data[-count:] if log_data else []
        except Exception as e:
            print(f"Error getting recent runs: {e}")
            return []

    def load_json(self, filepath, default=None):
        """Safely load JSON file"""
        try:
            if os.path.exists(filepath):
                with open(filepath, 'r') as f:
                    return json.load(f)
            return default if default is not None else {}
        except Exception as e:
            print(f"Error loading {filepath}: {e}")
            return default if default is not None else {}

    def save_json(self, filepath, data):
        """Safely save JSON file"""
        try:
            with open(filepath, 'w') as f:
                json.dump(data, f, indent=2)
            return True
        except Exception as e:
            print(f"Error saving {filepath}: {e}")
            return False

    def print_statistics(self):
        """Print run statistics to console"""
        stats = self.get_statistics()

        if not stats:
            print("\nNo runs logged yet.")
            return

        print("\n" + "="*60)
        print("RUN STATISTICS")
        print("="*60)
        print(f"Total Runs: {stats['total_runs']}")
        print(f"Success Rate: {stats['success_rate']}%")
        print(f"Average Time: {stats['average_seconds']}s")
        print("\nBy Command:")
        for command, count in stats['by_command'].items():
            print(f"  {command}: {count}")
        print("\nBy Exit Code:")
        for code, count in stats['by_exit_code'].items():
            print(f"  {code}: {count}")
        print("="*60 + "\n")

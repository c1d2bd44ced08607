import os
from dotenv import load_dotenv

load_dotenv()

TOOL_NAME = 'episynth'
TOOL_VERSION = '0.4.0'

# File paths
DATA_DIR = os.getenv('EPISYNTH_DATA_DIR', 'data')
RUN_LOG = f'{DATA_DIR}/run_log.json'
MODELS_DIR = 'models'
REPORT_SCHEMA = 'report_schema.json'

# === LOGGING SETTINGS ===
LOG_ALL_RUNS = True  # Log every CLI run (not just failures)
MAX_LOG_ENTRIES = 500
REPORT_TIMEZONE = 'UTC'

# === OUTPUT SETTINGS ===
# Options: 'console', 'file'
_output_env = os.getenv('EPISYNTH_OUTPUT', '')
OUTPUT_METHODS = [m.strip() for m in _output_env.split(',') if m.strip()] or ['console', 'file']

# === SYNTHESIS SETTINGS ===
DEFAULT_SCHEME = 'top'
ROBOT_LENGTH = 10
SIMULATE_STEPS = 20
SIMPLIFY_FORMULAS = True

# Schemes compared by the oracle command when --classes is not given
ORACLE_CLASSES = 'top,ii-ir-nsc,ii-ir-sc'

# Observation tables bigger than this are reported for reachable observations only
MAX_TABLE_OBSERVATIONS = 4096

# === ENUMERATION BUDGETS ===
# Strategy counts are exponential in these, so the defaults stay at desk scale.
MAX_REACHABLE_STATES = 64
MAX_OBSERVATIONS_PER_AGENT = 8
MAX_ACTIONS_PER_AGENT = 4
MAX_STRATEGIES = 20000
MAX_KBP_CANDIDATES = 2 ** 16

# e.g. EPISYNTH_BUDGET="states=128,obs=8,actions=4,strategies=50000,kbp=65536"
BUDGET_OVERRIDE = os.getenv('EPISYNTH_BUDGET', '')

# Keys accepted in budget strings
BUDGET_KEYS = {
    'states': 'max_states',
    'obs': 'max_observations',
    'actions': 'max_actions',
    'strategies': 'max_strategies',
    'kbp': 'max_kbp_candidates',
}

"""Full scheme sweep on an E2E-format corpus; forwards all flags to ``dualsl reproduce-table1``.

Example:
    python scripts/reproduce_table1.py --data-dir data/e2e --out-dir runs/table1 \
        --show-paper-reference
"""
import sys

from dualsl.harness.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce-table1", *sys.argv[1:]]))

import sys

from dualsl.harness.cli import main

sys.exit(main())

import sys

from dfa.harness.cli import main

sys.exit(main())

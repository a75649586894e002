import sys

from infoseek.scenario.cli import main

sys.exit(main())

import sys

from bayesattack.cli import main

sys.exit(main())

import sys

from hyperaod.cli import main

sys.exit(main())

import sys

from oreal.cli import main

sys.exit(main())

import sys

from nestgp.cli import main

sys.exit(main())

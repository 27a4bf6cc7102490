import sys

from routeswarm.cli import main

sys.exit(main())

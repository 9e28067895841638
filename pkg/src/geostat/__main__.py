import sys

from geostat.cli import main

sys.exit(main())

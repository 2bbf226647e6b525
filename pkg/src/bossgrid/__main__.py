import sys

from bossgrid.cli import main

sys.exit(main())

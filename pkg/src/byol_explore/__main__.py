import sys

from byol_explore.cli import main

sys.exit(main())

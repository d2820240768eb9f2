import sys

from fracalc.cli import main

sys.exit(main())

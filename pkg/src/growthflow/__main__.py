import sys

from growthflow.cli import main

sys.exit(main())

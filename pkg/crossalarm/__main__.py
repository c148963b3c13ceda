"""crossalarm - Entry point for python -m crossalarm"""

import sys

from crossalarm.cli import main

sys.exit(main())

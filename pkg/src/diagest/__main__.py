import sys

from diagest.cli import main

sys.exit(main())

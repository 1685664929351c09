import sys

from hmala.harness.cli import main

sys.exit(main())

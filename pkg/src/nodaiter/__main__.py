import sys

from nodaiter.cli import main

sys.exit(main())

import sys

from rwsem.cli import main

sys.exit(main())

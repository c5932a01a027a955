import sys

from wavesep.cli import main

sys.exit(main())

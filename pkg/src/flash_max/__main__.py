import sys

from flash_max.cli import main

sys.exit(main())

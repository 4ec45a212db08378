import sys

from hsunmix.cli import main

sys.exit(main())

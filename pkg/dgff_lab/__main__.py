import sys

from dgff_lab.cli import main

sys.exit(main())

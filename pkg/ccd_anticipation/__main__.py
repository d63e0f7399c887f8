import sys

from ccd_anticipation.cli import main

sys.exit(main())

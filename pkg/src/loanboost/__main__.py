import sys

from loanboost.cli import main

sys.exit(main())

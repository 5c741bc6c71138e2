import sys

from facematch.cli import main

sys.exit(main())

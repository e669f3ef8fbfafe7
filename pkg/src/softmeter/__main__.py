import sys

from softmeter.cli import main

sys.exit(main())

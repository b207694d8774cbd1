import sys

from habitcontrol.cli import main

sys.exit(main())

import sys

from vms_solid.cli import main

sys.exit(main())

# uavplan/__main__.py
import sys

from uavplan.main import main

sys.exit(main())

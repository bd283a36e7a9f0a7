import sys

from thermomem.cli.runner import main

sys.exit(main())
